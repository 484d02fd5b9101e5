//! Unigram language-model tokenizer: seed, EM, pruning and Viterbi decoding.

mod trainer;
mod trie;

use std::cmp::Ordering;

pub use trainer::{
    corpus_log_likelihood, em_step, prune, seed_vocabulary, train_unigram, training_texts, EmStep, SeedPiece,
    UnigramConfig,
};
pub(crate) use trie::Trie;

use crate::error::{Error, Result};
use crate::tokenizer::{Payload, PieceEncoder, Vocabulary, UNK_TOKEN};

/// Gap between the least likely token and an unknown-character edge.
const UNK_PENALTY: f64 = 10.0;

/// Non-special tokens with natural-log probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct UnigramModel {
    pub tokens: Vec<String>,
    pub log_probs: Vec<f64>,
}

impl UnigramModel {
    pub fn new(tokens: Vec<String>, log_probs: Vec<f64>) -> Result<Self> {
        if tokens.len() != log_probs.len() {
            return Err(Error::model(
                "log_probs",
                format!("{} probabilities for {} tokens", log_probs.len(), tokens.len()),
            ));
        }
        Ok(Self { tokens, log_probs })
    }

    pub fn from_vocabulary(vocab: &Vocabulary) -> Result<Self> {
        let Payload::Unigram { log_probs } = vocab.payload() else {
            return Err(Error::Config(format!(
                "expected a unigram vocabulary, got {}",
                vocab.kind()
            )));
        };
        let ids: Vec<u32> = vocab.non_special_ids().collect();
        Ok(Self {
            tokens: ids.iter().map(|&id| vocab.token(id).to_string()).collect(),
            log_probs: ids.iter().map(|&id| log_probs[id as usize]).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Trie over tokens with a finite probability.
    pub(crate) fn trie(&self) -> Trie {
        let mut trie = Trie::default();
        for (i, (t, lp)) in self.tokens.iter().zip(&self.log_probs).enumerate() {
            if lp.is_finite() {
                trie.insert(t, i as u32);
            }
        }
        trie
    }

    pub(crate) fn unk_score(&self) -> f64 {
        unk_score(&self.log_probs)
    }
}

fn unk_score(log_probs: &[f64]) -> f64 {
    log_probs
        .iter()
        .copied()
        .filter(|x| x.is_finite())
        .fold(0.0f64, f64::min)
        - UNK_PENALTY
}

/// Best-path search over the token lattice of one string.
pub(crate) struct Lattice<'a> {
    pub trie: &'a Trie,
    pub log_probs: &'a [f64],
    pub surfaces: &'a [String],
    pub unk_score: f64,
}

#[derive(Clone, Copy)]
struct Cell {
    score: f64,
    tokens: u32,
    from: u32,
    piece: Option<u32>,
}

impl Lattice<'_> {
    /// Highest-probability segmentation as (token or unknown, char length)
    /// pairs plus its total log-probability. Ties prefer fewer tokens, then
    /// the lexicographically smallest token sequence. `exclude` removes one
    /// token from the lattice.
    pub fn viterbi(&self, chars: &[char], exclude: Option<u32>) -> (Vec<(Option<u32>, u32)>, f64) {
        let n = chars.len();
        let empty = Cell {
            score: f64::NEG_INFINITY,
            tokens: u32::MAX,
            from: u32::MAX,
            piece: None,
        };
        let mut best = vec![empty; n + 1];
        best[0] = Cell {
            score: 0.0,
            tokens: 0,
            from: 0,
            piece: None,
        };
        let mut edges: Vec<(u32, usize)> = Vec::new();
        for i in 0..n {
            if best[i].tokens == u32::MAX {
                continue;
            }
            edges.clear();
            let mut single = false;
            self.trie.prefixes(chars, i, |tok, end| {
                if Some(tok) != exclude {
                    single |= end == i + 1;
                    edges.push((tok, end));
                }
            });
            let base = best[i];
            let relax = |piece: Option<u32>, end: usize, score: f64, best: &mut Vec<Cell>| {
                let cand = Cell {
                    score: base.score + score,
                    tokens: base.tokens + 1,
                    from: i as u32,
                    piece,
                };
                let cur = best[end];
                let better = match cand.score.partial_cmp(&cur.score) {
                    _ if cur.tokens == u32::MAX => true,
                    Some(Ordering::Greater) => true,
                    Some(Ordering::Less) | None => false,
                    Some(Ordering::Equal) => match cand.tokens.cmp(&cur.tokens) {
                        Ordering::Less => true,
                        Ordering::Greater => false,
                        Ordering::Equal => {
                            let mut a = backtrack(best, i);
                            a.push(piece);
                            let mut b = backtrack(best, cur.from as usize);
                            b.push(cur.piece);
                            self.compare_paths(&a, &b) == Ordering::Less
                        }
                    },
                };
                if better {
                    best[end] = cand;
                }
            };
            for &(tok, end) in &edges {
                relax(Some(tok), end, self.log_probs[tok as usize], &mut best);
            }
            if !single {
                relax(None, i + 1, self.unk_score, &mut best);
            }
        }
        let score = best[n].score;
        let mut pieces = Vec::new();
        let mut end = n;
        while end > 0 {
            let c = best[end];
            pieces.push((c.piece, (end - c.from as usize) as u32));
            end = c.from as usize;
        }
        pieces.reverse();
        (pieces, score)
    }

    fn surface(&self, piece: Option<u32>) -> &str {
        match piece {
            Some(t) => &self.surfaces[t as usize],
            None => UNK_TOKEN,
        }
    }

    fn compare_paths(&self, a: &[Option<u32>], b: &[Option<u32>]) -> Ordering {
        a.iter()
            .map(|&p| self.surface(p))
            .cmp(b.iter().map(|&p| self.surface(p)))
    }
}

fn backtrack(best: &[Cell], mut end: usize) -> Vec<Option<u32>> {
    let mut out = Vec::new();
    while end > 0 {
        out.push(best[end].piece);
        end = best[end].from as usize;
    }
    out.reverse();
    out
}

/// Highest-probability segmentation of `text` under `model`, as token
/// surfaces and total log-probability.
pub fn viterbi_encode(model: &UnigramModel, text: &str) -> (Vec<String>, f64) {
    let trie = model.trie();
    let lattice = Lattice {
        trie: &trie,
        log_probs: &model.log_probs,
        surfaces: &model.tokens,
        unk_score: model.unk_score(),
    };
    let chars: Vec<char> = text.chars().collect();
    let (pieces, score) = lattice.viterbi(&chars, None);
    let surfaces = pieces.iter().map(|&(p, _)| lattice.surface(p).to_string()).collect();
    (surfaces, score)
}

pub struct UnigramEncoder {
    trie: Trie,
    log_probs: Vec<f64>,
    surfaces: Vec<String>,
    unk: u32,
    unk_score: f64,
}

impl UnigramEncoder {
    pub fn new(vocab: &Vocabulary) -> Self {
        let mut log_probs = vec![f64::NEG_INFINITY; vocab.len()];
        if let Payload::Unigram { log_probs: lp } = vocab.payload() {
            for id in vocab.non_special_ids() {
                log_probs[id as usize] = lp[id as usize];
            }
        }
        let mut trie = Trie::default();
        for id in vocab.non_special_ids() {
            if log_probs[id as usize].is_finite() {
                trie.insert(vocab.token(id), id);
            }
        }
        Self {
            trie,
            unk_score: unk_score(&log_probs),
            log_probs,
            surfaces: vocab.tokens().to_vec(),
            unk: vocab.unk_id(),
        }
    }
}

impl PieceEncoder for UnigramEncoder {
    fn encode_piece(&self, piece: &str, out: &mut Vec<(u32, u32)>) {
        let lattice = Lattice {
            trie: &self.trie,
            log_probs: &self.log_probs,
            surfaces: &self.surfaces,
            unk_score: self.unk_score,
        };
        let chars: Vec<char> = piece.chars().collect();
        let (pieces, _) = lattice.viterbi(&chars, None);
        out.extend(pieces.into_iter().map(|(p, len)| (p.unwrap_or(self.unk), len)));
    }
}
