//! Byte-pair encoding: frequency-greedy pair merging and merge-rule replay.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rustc_hash::FxHashMap;

use crate::corpus::Mode;
use crate::error::{Error, Result};
use crate::merges::{learn_merges, Criterion, MergeConfig};
use crate::tokenizer::{specials_for, Payload, PieceEncoder, PreToken, TokenizerKind, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeRule {
    pub left: String,
    pub right: String,
    pub rank: usize,
}

#[derive(Debug, Clone)]
pub struct BpeConfig {
    /// Number of non-special tokens to learn.
    pub vocab_size: usize,
    pub mode: Mode,
    /// Merged tokens longer than this are never created.
    pub max_token_length: Option<usize>,
}

impl BpeConfig {
    pub fn new(vocab_size: usize, mode: Mode) -> Self {
        Self {
            vocab_size,
            mode,
            max_token_length: None,
        }
    }
}

/// Learn merges until `vocab_size` tokens exist. Ties on the pair count go
/// to the lexicographically smallest (left, right) pair. Training stops early
/// (with a warning) once no pair occurs at least twice.
pub fn train_bpe(pretokens: &[PreToken], config: &BpeConfig) -> Result<Vocabulary> {
    let words: Vec<(&str, u64)> = pretokens.iter().map(|p| (p.text.as_str(), p.count)).collect();
    let learned = learn_merges(
        &words,
        &MergeConfig {
            target: config.vocab_size,
            criterion: Criterion::Frequency,
            marker: None,
            max_token_length: config.max_token_length,
        },
    )?;
    log::debug!("bpe: {} merges, exhausted: {}", learned.merges.len(), learned.exhausted);
    let specials = specials_for(TokenizerKind::Bpe, config.mode);
    let merges = learned
        .merges
        .iter()
        .map(|&(l, r)| (learned.symbols[l as usize].clone(), learned.symbols[r as usize].clone()))
        .collect();
    let tokens = specials.iter().cloned().chain(learned.symbols).collect();
    Vocabulary::new(config.mode, tokens, specials, Payload::Bpe { merges })
}

pub fn merge_rules(vocab: &Vocabulary) -> Vec<MergeRule> {
    match vocab.payload() {
        Payload::Bpe { merges } => merges
            .iter()
            .enumerate()
            .map(|(rank, (l, r))| MergeRule {
                left: l.clone(),
                right: r.clone(),
                rank,
            })
            .collect(),
        _ => Vec::new(),
    }
}

/// The vocabulary training would have produced with a smaller target: the
/// first `size` learned tokens and the merges up to the one creating the
/// last of them.
pub fn truncate_bpe(vocab: &Vocabulary, size: usize) -> Result<Vocabulary> {
    let Payload::Bpe { merges } = vocab.payload() else {
        return Err(Error::Config(format!(
            "expected a bpe vocabulary, got {}",
            vocab.kind()
        )));
    };
    let symbols: Vec<&String> = vocab.non_special_ids().map(|id| &vocab.tokens()[id as usize]).collect();
    if size >= symbols.len() {
        return Ok(vocab.clone());
    }
    let alphabet = symbols.iter().filter(|s| s.chars().count() == 1).count();
    if size < alphabet {
        return Err(Error::Config(format!(
            "size {size} is smaller than the alphabet ({alphabet})"
        )));
    }
    let position: std::collections::HashMap<&str, usize> =
        symbols.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let keep = if size == alphabet {
        0
    } else {
        merges
            .iter()
            .position(|(l, r)| position.get(format!("{l}{r}").as_str()) == Some(&(size - 1)))
            .map_or(merges.len(), |m| m + 1)
    };
    let specials = vocab.specials().to_vec();
    let tokens = specials
        .iter()
        .cloned()
        .chain(symbols[..size].iter().map(|s| s.to_string()))
        .collect();
    Vocabulary::new(
        vocab.mode(),
        tokens,
        specials,
        Payload::Bpe {
            merges: merges[..keep].to_vec(),
        },
    )
}

/// Merge-rule replay encoder.
pub struct BpeEncoder {
    chars: FxHashMap<char, u32>,
    merges: FxHashMap<(u32, u32), (u32, u32)>,
    unk: u32,
}

impl BpeEncoder {
    pub fn new(vocab: &Vocabulary) -> Self {
        let chars = vocab
            .non_special_ids()
            .filter_map(|id| {
                let mut it = vocab.token(id).chars();
                match (it.next(), it.next()) {
                    (Some(c), None) => Some((c, id)),
                    _ => None,
                }
            })
            .collect();
        let mut merges = FxHashMap::default();
        if let Payload::Bpe { merges: rules } = vocab.payload() {
            for (rank, (l, r)) in rules.iter().enumerate() {
                let (Some(a), Some(b)) = (vocab.id(l), vocab.id(r)) else {
                    continue;
                };
                let Some(ab) = vocab.id(&format!("{l}{r}")) else {
                    continue;
                };
                merges.entry((a, b)).or_insert((rank as u32, ab));
            }
        }
        Self {
            chars,
            merges,
            unk: vocab.unk_id(),
        }
    }

    /// Token ids and character lengths for one pre-token. The lowest-rank
    /// applicable rule is applied first, at its leftmost position.
    pub fn encode_word(&self, word: &str) -> Vec<(u32, u32)> {
        let mut sym: Vec<u32> = word.chars().map(|c| *self.chars.get(&c).unwrap_or(&self.unk)).collect();
        let n = sym.len();
        if n < 2 {
            return sym.into_iter().map(|id| (id, 1)).collect();
        }
        let mut len = vec![1u32; n];
        let mut next: Vec<usize> = (1..=n).collect();
        let mut prev: Vec<usize> = (0..n).map(|i| i.wrapping_sub(1)).collect();
        let mut alive = vec![true; n];

        let mut heap = BinaryHeap::new();
        for i in 0..n - 1 {
            if let Some(&(rank, _)) = self.merges.get(&(sym[i], sym[i + 1])) {
                heap.push(Reverse((rank, i)));
            }
        }
        while let Some(Reverse((rank, i))) = heap.pop() {
            if !alive[i] || next[i] >= n {
                continue;
            }
            let j = next[i];
            match self.merges.get(&(sym[i], sym[j])) {
                Some(&(r, merged)) if r == rank => {
                    sym[i] = merged;
                    len[i] += len[j];
                    alive[j] = false;
                    next[i] = next[j];
                    if next[i] < n {
                        prev[next[i]] = i;
                    }
                    let p = prev[i];
                    if p < n {
                        if let Some(&(r, _)) = self.merges.get(&(sym[p], sym[i])) {
                            heap.push(Reverse((r, p)));
                        }
                    }
                    if next[i] < n {
                        if let Some(&(r, _)) = self.merges.get(&(sym[i], sym[next[i]])) {
                            heap.push(Reverse((r, i)));
                        }
                    }
                }
                _ => continue,
            }
        }
        (0..n).filter(|&i| alive[i]).map(|i| (sym[i], len[i])).collect()
    }
}

impl PieceEncoder for BpeEncoder {
    fn encode_piece(&self, piece: &str, out: &mut Vec<(u32, u32)>) {
        out.extend(self.encode_word(piece));
    }
}

/// Encode one pre-token into token surfaces.
pub fn encode_bpe(vocab: &Vocabulary, pretoken: &str) -> Result<Vec<String>> {
    if vocab.kind() != TokenizerKind::Bpe {
        return Err(Error::Config(format!(
            "expected a bpe vocabulary, got {}",
            vocab.kind()
        )));
    }
    let encoder = BpeEncoder::new(vocab);
    Ok(encoder
        .encode_word(pretoken)
        .into_iter()
        .map(|(id, _)| vocab.token(id).to_string())
        .collect())
}
