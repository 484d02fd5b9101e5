//! Shared tokenizer data model: vocabularies, segmentations, pre-tokenization
//! and dispatch to the per-method encoders.

mod model_file;

use std::borrow::Cow;
use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bpe::BpeEncoder;
use crate::corpus::{Mode, SequenceRecord};
use crate::error::{Error, Result};
use crate::unigram::UnigramEncoder;
use crate::wordpiece::WordPieceEncoder;

pub use model_file::{load_model, parse_model, render_model, save_model, FORMAT_VERSION};

pub const UNK_TOKEN: &str = "<unk>";
/// Stands in for a whitespace run between pre-tokens in text mode.
pub const WHITESPACE_TOKEN: &str = "<ws>";
pub const WORDPIECE_MARKER: &str = "##";
/// Word-boundary symbol used by the raw-stream Unigram tokenizer in text mode.
pub const META_SPACE: char = '\u{2581}';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerKind {
    Bpe,
    #[serde(rename = "wordpiece")]
    WordPiece,
    Unigram,
}

impl TokenizerKind {
    pub const ALL: [TokenizerKind; 3] = [TokenizerKind::Bpe, TokenizerKind::WordPiece, TokenizerKind::Unigram];

    pub fn as_str(self) -> &'static str {
        match self {
            TokenizerKind::Bpe => "bpe",
            TokenizerKind::WordPiece => "wordpiece",
            TokenizerKind::Unigram => "unigram",
        }
    }
}

impl std::fmt::Display for TokenizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TokenizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bpe" => Ok(TokenizerKind::Bpe),
            "wordpiece" => Ok(TokenizerKind::WordPiece),
            "unigram" => Ok(TokenizerKind::Unigram),
            other => Err(Error::Config(format!("unknown tokenizer `{other}`"))),
        }
    }
}

/// Kind-specific part of a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Merge rules in application order.
    Bpe {
        merges: Vec<(String, String)>,
    },
    WordPiece {
        continuation_marker: Option<String>,
    },
    /// Natural-log probabilities, parallel to the token list.
    Unigram {
        log_probs: Vec<f64>,
    },
}

impl Payload {
    pub fn kind(&self) -> TokenizerKind {
        match self {
            Payload::Bpe { .. } => TokenizerKind::Bpe,
            Payload::WordPiece { .. } => TokenizerKind::WordPiece,
            Payload::Unigram { .. } => TokenizerKind::Unigram,
        }
    }
}

/// An immutable token inventory. Token ids are indices into `tokens`;
/// special tokens are part of the inventory and listed in `specials`.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    mode: Mode,
    tokens: Vec<String>,
    specials: Vec<String>,
    payload: Payload,
    index: HashMap<String, u32>,
    special_mask: Vec<bool>,
    stripped: Vec<String>,
    stripped_len: Vec<usize>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.mode == other.mode
            && self.tokens == other.tokens
            && self.specials == other.specials
            && match (&self.payload, &other.payload) {
                (Payload::Unigram { log_probs: a }, Payload::Unigram { log_probs: b }) => {
                    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
                }
                (a, b) => a == b,
            }
    }
}

impl Vocabulary {
    pub fn new(mode: Mode, tokens: Vec<String>, specials: Vec<String>, payload: Payload) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::model("tokens", format!("token {i} is empty")));
            }
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::model("tokens", format!("duplicate token `{t}`")));
            }
        }
        let mut special_mask = vec![false; tokens.len()];
        for s in &specials {
            match index.get(s) {
                Some(&id) => special_mask[id as usize] = true,
                None => return Err(Error::model("specials", format!("special `{s}` is not a token"))),
            }
        }
        if !specials.iter().any(|s| s == UNK_TOKEN) {
            return Err(Error::model("specials", format!("missing unknown token `{UNK_TOKEN}`")));
        }
        match &payload {
            Payload::Bpe { merges } => {
                for (l, r) in merges {
                    let merged = format!("{l}{r}");
                    if !index.contains_key(l) || !index.contains_key(r) || !index.contains_key(&merged) {
                        return Err(Error::model(
                            "merges",
                            format!("rule ({l}, {r}) references unknown tokens"),
                        ));
                    }
                }
            }
            Payload::WordPiece { continuation_marker } => {
                if continuation_marker.as_deref() == Some("") {
                    return Err(Error::model("continuation_marker", "marker must be non-empty or null"));
                }
            }
            Payload::Unigram { log_probs } => {
                if log_probs.len() != tokens.len() {
                    return Err(Error::model(
                        "log_probs",
                        format!("{} values for {} tokens", log_probs.len(), tokens.len()),
                    ));
                }
                if let Some(i) = log_probs.iter().position(|p| !p.is_finite() || *p > 0.0) {
                    return Err(Error::model(
                        "log_probs",
                        format!("value {i} is not a finite log-probability"),
                    ));
                }
                let mass: f64 = log_probs
                    .iter()
                    .zip(&special_mask)
                    .filter(|(_, s)| !**s)
                    .map(|(p, _)| p.exp())
                    .sum();
                if (mass - 1.0).abs() > 1e-6 {
                    return Err(Error::model(
                        "log_probs",
                        format!("probabilities sum to {mass}, expected 1"),
                    ));
                }
            }
        }

        let marker = match &payload {
            Payload::WordPiece { continuation_marker } => continuation_marker.clone(),
            _ => None,
        };
        let stripped: Vec<String> = tokens
            .iter()
            .zip(&special_mask)
            .map(|(t, &special)| {
                if special {
                    t.clone()
                } else {
                    strip_markers(t, payload.kind(), marker.as_deref()).into_owned()
                }
            })
            .collect();
        let stripped_len = stripped.iter().map(|s| s.chars().count()).collect();
        Ok(Self {
            mode,
            tokens,
            specials,
            payload,
            index,
            special_mask,
            stripped,
            stripped_len,
        })
    }

    pub fn kind(&self) -> TokenizerKind {
        self.payload.kind()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn specials(&self) -> &[String] {
        &self.specials
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of non-special tokens; this is what "vocabulary size" means
    /// throughout the crate.
    pub fn size(&self) -> usize {
        self.tokens.len() - self.specials.len()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn unk_id(&self) -> u32 {
        self.index[UNK_TOKEN]
    }

    pub fn whitespace_id(&self) -> Option<u32> {
        self.index.get(WHITESPACE_TOKEN).copied()
    }

    pub fn is_special(&self, id: u32) -> bool {
        self.special_mask[id as usize]
    }

    pub fn continuation_marker(&self) -> Option<&str> {
        match &self.payload {
            Payload::WordPiece { continuation_marker } => continuation_marker.as_deref(),
            _ => None,
        }
    }

    /// Surface with continuation markers and word-boundary symbols removed.
    pub fn stripped(&self, id: u32) -> &str {
        &self.stripped[id as usize]
    }

    /// Character length of [`Vocabulary::stripped`].
    pub fn stripped_len(&self, id: u32) -> usize {
        self.stripped_len[id as usize]
    }

    /// The source text a non-special token stands for.
    pub fn decoded(&self, id: u32) -> Cow<'_, str> {
        let t = self.token(id);
        match &self.payload {
            Payload::Unigram { .. } if t.contains(META_SPACE) => Cow::Owned(t.replace(META_SPACE, " ")),
            Payload::WordPiece {
                continuation_marker: Some(m),
            } => Cow::Borrowed(t.strip_prefix(m.as_str()).unwrap_or(t)),
            _ => Cow::Borrowed(t),
        }
    }

    pub fn non_special_ids(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.tokens.len() as u32).filter(|&id| !self.is_special(id))
    }

    /// Single-character non-special tokens (marker-stripped).
    pub fn alphabet(&self) -> Vec<char> {
        let mut chars: Vec<char> = self
            .non_special_ids()
            .filter(|&id| self.stripped_len(id) == 1)
            .filter_map(|id| self.stripped(id).chars().next())
            .collect();
        chars.sort_unstable();
        chars.dedup();
        chars
    }
}

pub(crate) fn strip_markers<'a>(token: &'a str, kind: TokenizerKind, marker: Option<&str>) -> Cow<'a, str> {
    match kind {
        TokenizerKind::WordPiece => match marker {
            Some(m) => Cow::Borrowed(token.strip_prefix(m).unwrap_or(token)),
            None => Cow::Borrowed(token),
        },
        TokenizerKind::Unigram if token.contains(META_SPACE) => {
            Cow::Owned(token.chars().filter(|&c| c != META_SPACE).collect())
        }
        _ => Cow::Borrowed(token),
    }
}

/// The special token list for a trainer output.
pub(crate) fn specials_for(kind: TokenizerKind, mode: Mode) -> Vec<String> {
    match (kind, mode) {
        (TokenizerKind::Unigram, _) | (_, Mode::Protein) => vec![UNK_TOKEN.to_string()],
        (_, Mode::Text) => vec![UNK_TOKEN.to_string(), WHITESPACE_TOKEN.to_string()],
    }
}

/// A tokenized record: token ids plus contiguous half-open character spans.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    pub sequence_id: String,
    pub token_ids: Vec<u32>,
    pub offsets: Vec<(u32, u32)>,
}

impl Segmentation {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Check the offset and surface invariants against the source text.
    pub fn validate(&self, vocab: &Vocabulary, source: &str) -> std::result::Result<(), String> {
        if self.token_ids.len() != self.offsets.len() {
            return Err("token and offset counts differ".into());
        }
        let chars: Vec<char> = source.chars().collect();
        let mut cursor = 0u32;
        for (i, (&id, &(start, end))) in self.token_ids.iter().zip(&self.offsets).enumerate() {
            if start != cursor || end <= start {
                return Err(format!("token {i} span {start}..{end} is not contiguous at {cursor}"));
            }
            if end as usize > chars.len() {
                return Err(format!(
                    "token {i} span {start}..{end} exceeds source length {}",
                    chars.len()
                ));
            }
            let piece: String = chars[start as usize..end as usize].iter().collect();
            if id == vocab.unk_id() {
                // covers whatever could not be encoded
            } else if Some(id) == vocab.whitespace_id() {
                if !piece.chars().all(char::is_whitespace) {
                    return Err(format!("whitespace token {i} covers `{piece}`"));
                }
            } else if vocab.decoded(id) != piece.as_str() {
                return Err(format!(
                    "token {i} `{}` does not match source `{piece}`",
                    vocab.token(id)
                ));
            }
            cursor = end;
        }
        if cursor as usize != chars.len() {
            return Err(format!(
                "segmentation ends at {cursor}, source has {} characters",
                chars.len()
            ));
        }
        Ok(())
    }

    /// Concatenate the covered source substrings.
    pub fn reassemble(&self, source: &str) -> String {
        let chars: Vec<char> = source.chars().collect();
        self.offsets
            .iter()
            .flat_map(|&(s, e)| chars[s as usize..e as usize].iter())
            .collect()
    }
}

/// A distinct pre-token and its corpus count.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct PreToken {
    pub text: String,
    pub count: u64,
}

impl PreToken {
    pub fn new(text: impl Into<String>, count: u64) -> Self {
        Self {
            text: text.into(),
            count,
        }
    }
}

/// Protein sequences are a single pre-token; text splits on whitespace runs.
pub fn pretokenize(record: &SequenceRecord, mode: Mode) -> Vec<&str> {
    match mode {
        Mode::Protein if record.residues.is_empty() => Vec::new(),
        Mode::Protein => vec![record.residues.as_str()],
        Mode::Text => record.residues.split_whitespace().collect(),
    }
}

/// Distinct pre-tokens with counts, sorted by text.
pub fn count_pretokens(records: &[SequenceRecord], mode: Mode) -> Vec<PreToken> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for r in records {
        for p in pretokenize(r, mode) {
            *counts.entry(p).or_default() += 1;
        }
    }
    let mut out: Vec<PreToken> = counts.into_iter().map(|(t, c)| PreToken::new(t, c)).collect();
    out.sort_unstable();
    out
}

/// Per-method encoders turn one piece of text into (token id, char length)
/// pairs that cover it exactly.
pub(crate) trait PieceEncoder: Send + Sync {
    fn encode_piece(&self, piece: &str, out: &mut Vec<(u32, u32)>);
}

enum Inner {
    Bpe(BpeEncoder),
    WordPiece(WordPieceEncoder),
    Unigram(UnigramEncoder),
}

/// A vocabulary bundled with its encoder state.
pub struct Tokenizer {
    vocab: Vocabulary,
    inner: Inner,
}

impl Tokenizer {
    pub fn new(vocab: Vocabulary) -> Self {
        let inner = match vocab.kind() {
            TokenizerKind::Bpe => Inner::Bpe(BpeEncoder::new(&vocab)),
            TokenizerKind::WordPiece => Inner::WordPiece(WordPieceEncoder::new(&vocab)),
            TokenizerKind::Unigram => Inner::Unigram(UnigramEncoder::new(&vocab)),
        };
        Self { vocab, inner }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn piece_encoder(&self) -> &dyn PieceEncoder {
        match &self.inner {
            Inner::Bpe(e) => e,
            Inner::WordPiece(e) => e,
            Inner::Unigram(e) => e,
        }
    }

    /// Encode raw text into (token id, char length) pairs.
    pub fn encode_spans(&self, text: &str) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        let encoder = self.piece_encoder();
        match (self.vocab.mode(), &self.inner) {
            (Mode::Protein, _) => {
                if !text.is_empty() {
                    encoder.encode_piece(text, &mut out)
                }
            }
            (Mode::Text, Inner::Unigram(_)) => {
                let replaced: String = text.chars().map(|c| if c == ' ' { META_SPACE } else { c }).collect();
                if !replaced.is_empty() {
                    encoder.encode_piece(&replaced, &mut out)
                }
            }
            (Mode::Text, _) => {
                let ws = self.vocab.whitespace_id().unwrap_or_else(|| self.vocab.unk_id());
                for (is_ws, piece) in whitespace_runs(text) {
                    if is_ws {
                        out.push((ws, piece.chars().count() as u32));
                    } else {
                        encoder.encode_piece(piece, &mut out);
                    }
                }
            }
        }
        out
    }

    pub fn encode_text(&self, sequence_id: &str, text: &str) -> Segmentation {
        let spans = self.encode_spans(text);
        let mut token_ids = Vec::with_capacity(spans.len());
        let mut offsets = Vec::with_capacity(spans.len());
        let mut cursor = 0u32;
        for (id, len) in spans {
            token_ids.push(id);
            offsets.push((cursor, cursor + len));
            cursor += len;
        }
        Segmentation {
            sequence_id: sequence_id.to_string(),
            token_ids,
            offsets,
        }
    }

    pub fn encode(&self, record: &SequenceRecord) -> Segmentation {
        self.encode_text(&record.id, &record.residues)
    }

    /// Encode every record; output order matches input order.
    pub fn encode_corpus(&self, records: &[SequenceRecord]) -> Vec<Segmentation> {
        records.par_iter().map(|r| self.encode(r)).collect()
    }

    /// Token surfaces for a single piece of text.
    pub fn encode_to_surfaces(&self, text: &str) -> Vec<String> {
        self.encode_spans(text)
            .into_iter()
            .map(|(id, _)| self.vocab.token(id).to_string())
            .collect()
    }
}

pub fn encode_corpus(vocab: &Vocabulary, records: &[SequenceRecord]) -> Vec<Segmentation> {
    Tokenizer::new(vocab.clone()).encode_corpus(records)
}

/// Split into alternating whitespace / non-whitespace runs.
fn whitespace_runs(text: &str) -> impl Iterator<Item = (bool, &str)> {
    let mut rest = text;
    std::iter::from_fn(move || {
        let first = rest.chars().next()?;
        let ws = first.is_whitespace();
        let end = rest
            .char_indices()
            .find(|(_, c)| c.is_whitespace() != ws)
            .map(|(i, _)| i)
            .unwrap_or(rest.len());
        let (piece, tail) = rest.split_at(end);
        rest = tail;
        Some((ws, piece))
    })
}
