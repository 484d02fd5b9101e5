//! Versioned JSON model file.

use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use super::{Payload, TokenizerKind, Vocabulary};
use crate::corpus::Mode;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Serialize)]
struct ModelFileOut<'a> {
    format_version: u64,
    kind: &'static str,
    mode: &'static str,
    tokens: &'a [String],
    specials: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    merges: Option<Vec<[&'a str; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    continuation_marker: Option<Option<&'a str>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    log_probs: Option<Vec<String>>,
}

/// 17 significant digits, enough for an exact f64 round trip.
pub(crate) fn format_log_prob(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn render_model(vocab: &Vocabulary) -> String {
    let mut out = ModelFileOut {
        format_version: FORMAT_VERSION,
        kind: vocab.kind().as_str(),
        mode: vocab.mode().as_str(),
        tokens: vocab.tokens(),
        specials: vocab.specials(),
        merges: None,
        continuation_marker: None,
        log_probs: None,
    };
    match vocab.payload() {
        Payload::Bpe { merges } => {
            out.merges = Some(merges.iter().map(|(l, r)| [l.as_str(), r.as_str()]).collect());
        }
        Payload::WordPiece { continuation_marker } => {
            out.continuation_marker = Some(continuation_marker.as_deref());
        }
        Payload::Unigram { log_probs } => {
            out.log_probs = Some(log_probs.iter().copied().map(format_log_prob).collect());
        }
    }
    let mut text = serde_json::to_string_pretty(&out).expect("model serialization cannot fail");
    text.push('\n');
    text
}

pub fn save_model(vocab: &Vocabulary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render_model(vocab)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Vocabulary> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text)
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a Value> {
    obj.get(name).ok_or_else(|| Error::model(name, "missing"))
}

fn string_array(value: &Value, name: &str) -> Result<Vec<String>> {
    let items = value
        .as_array()
        .ok_or_else(|| Error::model(name, "expected an array of strings"))?;
    items
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| Error::model(name, format!("element {i} is not a string")))
        })
        .collect()
}

pub fn parse_model(text: &str) -> Result<Vocabulary> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::model("<document>", e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::model("<document>", "expected a JSON object"))?;

    let version = field(obj, "format_version")?
        .as_u64()
        .ok_or_else(|| Error::model("format_version", "expected an integer"))?;
    if version != FORMAT_VERSION {
        return Err(Error::model(
            "format_version",
            format!("unsupported version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    let kind: TokenizerKind = field(obj, "kind")?
        .as_str()
        .ok_or_else(|| Error::model("kind", "expected a string"))?
        .parse()
        .map_err(|_| Error::model("kind", "expected one of bpe, wordpiece, unigram"))?;
    let mode: Mode = field(obj, "mode")?
        .as_str()
        .ok_or_else(|| Error::model("mode", "expected a string"))?
        .parse()
        .map_err(|_| Error::model("mode", "expected protein or text"))?;
    let tokens = string_array(field(obj, "tokens")?, "tokens")?;
    let specials = string_array(field(obj, "specials")?, "specials")?;

    let allowed: &[&str] = match kind {
        TokenizerKind::Bpe => &["merges"],
        TokenizerKind::WordPiece => &["continuation_marker"],
        TokenizerKind::Unigram => &["log_probs"],
    };
    for key in obj.keys() {
        let common = ["format_version", "kind", "mode", "tokens", "specials"];
        if !common.contains(&key.as_str()) && !allowed.contains(&key.as_str()) {
            return Err(Error::model(key, format!("not valid for kind {kind}")));
        }
    }

    let payload = match kind {
        TokenizerKind::Bpe => {
            let raw = field(obj, "merges")?
                .as_array()
                .ok_or_else(|| Error::model("merges", "expected an array of pairs"))?;
            let merges = raw
                .iter()
                .enumerate()
                .map(|(i, pair)| match pair.as_array().map(Vec::as_slice) {
                    Some([Value::String(l), Value::String(r)]) => Ok((l.clone(), r.clone())),
                    _ => Err(Error::model(
                        "merges",
                        format!("element {i} is not a [left, right] pair"),
                    )),
                })
                .collect::<Result<Vec<_>>>()?;
            Payload::Bpe { merges }
        }
        TokenizerKind::WordPiece => {
            let continuation_marker = match field(obj, "continuation_marker")? {
                Value::Null => None,
                Value::String(s) => Some(s.clone()),
                _ => return Err(Error::model("continuation_marker", "expected a string or null")),
            };
            Payload::WordPiece { continuation_marker }
        }
        TokenizerKind::Unigram => {
            let log_probs = string_array(field(obj, "log_probs")?, "log_probs")?
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    s.parse::<f64>()
                        .map_err(|_| Error::model("log_probs", format!("element {i} `{s}` is not a decimal")))
                })
                .collect::<Result<Vec<_>>>()?;
            Payload::Unigram { log_probs }
        }
    };
    Vocabulary::new(mode, tokens, specials, payload)
}
