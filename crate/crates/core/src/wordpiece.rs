//! WordPiece: likelihood-scored pair merging and greedy longest-match
//! (MaxMatch) encoding.

use rustc_hash::FxHashMap;

use crate::corpus::Mode;
use crate::error::{Error, Result};
use crate::merges::{learn_merges, Criterion, MergeConfig, MergeResult};
use crate::tokenizer::{specials_for, Payload, PieceEncoder, PreToken, TokenizerKind, Vocabulary, WORDPIECE_MARKER};

/// Merge score of an adjacent pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairScore {
    pub pair_count: u64,
    pub left_count: u64,
    pub right_count: u64,
}

impl PairScore {
    pub fn value(&self) -> f64 {
        self.pair_count as f64 / (self.left_count as f64 * self.right_count as f64)
    }
}

#[derive(Debug, Clone)]
pub struct WordPieceConfig {
    pub vocab_size: usize,
    pub mode: Mode,
    pub max_token_length: Option<usize>,
    /// Defaults to none for proteins and `##` for text.
    pub continuation_marker: Option<String>,
}

impl WordPieceConfig {
    pub fn new(vocab_size: usize, mode: Mode) -> Self {
        Self {
            vocab_size,
            mode,
            max_token_length: None,
            continuation_marker: match mode {
                Mode::Protein => None,
                Mode::Text => Some(WORDPIECE_MARKER.to_string()),
            },
        }
    }
}

fn learn(pretokens: &[PreToken], config: &WordPieceConfig) -> Result<MergeResult> {
    let words: Vec<(&str, u64)> = pretokens.iter().map(|p| (p.text.as_str(), p.count)).collect();
    learn_merges(
        &words,
        &MergeConfig {
            target: config.vocab_size,
            criterion: Criterion::Likelihood,
            marker: config.continuation_marker.as_deref(),
            max_token_length: config.max_token_length,
        },
    )
}

/// The (left, right) surface pairs training merges, in order. The vocabulary
/// itself does not keep them.
pub fn wordpiece_merges(pretokens: &[PreToken], config: &WordPieceConfig) -> Result<Vec<(String, String)>> {
    let learned = learn(pretokens, config)?;
    Ok(learned
        .merges
        .iter()
        .map(|&(l, r)| (learned.symbols[l as usize].clone(), learned.symbols[r as usize].clone()))
        .collect())
}

/// Learn merges maximizing count(pair) / (count(left) * count(right)), ties
/// to the lexicographically smallest pair; same stopping rules as BPE.
pub fn train_wordpiece(pretokens: &[PreToken], config: &WordPieceConfig) -> Result<Vocabulary> {
    let learned = learn(pretokens, config)?;
    log::debug!(
        "wordpiece: {} merges, exhausted: {}",
        learned.merges.len(),
        learned.exhausted
    );
    let specials = specials_for(TokenizerKind::WordPiece, config.mode);
    let tokens = specials.iter().cloned().chain(learned.symbols).collect();
    Vocabulary::new(
        config.mode,
        tokens,
        specials,
        Payload::WordPiece {
            continuation_marker: config.continuation_marker.clone(),
        },
    )
}

/// The vocabulary training would have produced with a smaller target.
pub fn truncate_wordpiece(vocab: &Vocabulary, size: usize) -> Result<Vocabulary> {
    if vocab.kind() != TokenizerKind::WordPiece {
        return Err(Error::Config(format!(
            "expected a wordpiece vocabulary, got {}",
            vocab.kind()
        )));
    }
    let specials = vocab.specials().to_vec();
    let tokens = specials
        .iter()
        .cloned()
        .chain(vocab.non_special_ids().take(size).map(|id| vocab.token(id).to_string()))
        .collect();
    Vocabulary::new(vocab.mode(), tokens, specials, vocab.payload().clone())
}

pub struct WordPieceEncoder {
    initial: FxHashMap<String, u32>,
    continuation: FxHashMap<String, u32>,
    max_len: usize,
    unk: u32,
    whole_word_unk: bool,
}

impl WordPieceEncoder {
    pub fn new(vocab: &Vocabulary) -> Self {
        let marker = vocab.continuation_marker();
        let mut initial = FxHashMap::default();
        let mut continuation = FxHashMap::default();
        let mut max_len = 1;
        for id in vocab.non_special_ids() {
            let t = vocab.token(id);
            match marker {
                Some(m) => match t.strip_prefix(m) {
                    Some(rest) if !rest.is_empty() => {
                        continuation.insert(rest.to_string(), id);
                    }
                    _ => {
                        initial.insert(t.to_string(), id);
                    }
                },
                None => {
                    initial.insert(t.to_string(), id);
                }
            }
            max_len = max_len.max(vocab.stripped_len(id));
        }
        if marker.is_none() {
            continuation = initial.clone();
        }
        Self {
            initial,
            continuation,
            max_len,
            unk: vocab.unk_id(),
            whole_word_unk: vocab.mode() == Mode::Text,
        }
    }

    pub fn encode_word(&self, word: &str) -> Vec<(u32, u32)> {
        let bounds: Vec<usize> = word
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(word.len()))
            .collect();
        let n = bounds.len() - 1;
        let mut out = Vec::new();
        let mut i = 0;
        while i < n {
            let table = if i == 0 { &self.initial } else { &self.continuation };
            let longest = (i + 1..=n.min(i + self.max_len))
                .rev()
                .find_map(|j| table.get(&word[bounds[i]..bounds[j]]).map(|&id| (id, j)));
            match longest {
                Some((id, j)) => {
                    out.push((id, (j - i) as u32));
                    i = j;
                }
                None if self.whole_word_unk => return vec![(self.unk, n as u32)],
                None => {
                    out.push((self.unk, 1));
                    i += 1;
                }
            }
        }
        out
    }
}

impl PieceEncoder for WordPieceEncoder {
    fn encode_piece(&self, piece: &str, out: &mut Vec<(u32, u32)>) {
        out.extend(self.encode_word(piece));
    }
}

pub fn encode_wordpiece(vocab: &Vocabulary, pretoken: &str) -> Result<Vec<String>> {
    if vocab.kind() != TokenizerKind::WordPiece {
        return Err(Error::Config(format!(
            "expected a wordpiece vocabulary, got {}",
            vocab.kind()
        )));
    }
    let encoder = WordPieceEncoder::new(vocab);
    Ok(encoder
        .encode_word(pretoken)
        .into_iter()
        .map(|(id, _)| vocab.token(id).to_string())
        .collect())
}
