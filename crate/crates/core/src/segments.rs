//! Line-oriented segmentation stream: `id<TAB>surface:start-end ...`.
//!
//! Surfaces escape backslash, tab, newline and space as `\\`, `\t`, `\n`
//! and `\s`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::tokenizer::{Segmentation, Vocabulary, META_SPACE, UNK_TOKEN, WHITESPACE_TOKEN};

fn escape(surface: &str, out: &mut String) {
    for c in surface.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            ' ' => out.push_str("\\s"),
            c => out.push(c),
        }
    }
}

fn unescape(s: &str) -> std::result::Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut it = s.chars();
    while let Some(c) = it.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match it.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('s') => out.push(' '),
            other => {
                return Err(format!(
                    "bad escape `\\{}`",
                    other.map(String::from).unwrap_or_default()
                ))
            }
        }
    }
    Ok(out)
}

pub fn format_segmentation(vocab: &Vocabulary, seg: &Segmentation) -> String {
    let mut line = String::new();
    line.push_str(&seg.sequence_id);
    line.push('\t');
    for (i, (&id, &(s, e))) in seg.token_ids.iter().zip(&seg.offsets).enumerate() {
        if i > 0 {
            line.push(' ');
        }
        escape(vocab.token(id), &mut line);
        line.push_str(&format!(":{s}-{e}"));
    }
    line
}

pub fn write_segmentations<W: Write>(mut out: W, vocab: &Vocabulary, segs: &[Segmentation]) -> std::io::Result<()> {
    for seg in segs {
        writeln!(out, "{}", format_segmentation(vocab, seg))?;
    }
    out.flush()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentLine {
    pub sequence_id: String,
    pub pieces: Vec<(String, u32, u32)>,
}

pub fn parse_segment_line(line: &str) -> std::result::Result<SegmentLine, String> {
    let (id, rest) = line.split_once('\t').ok_or("missing tab after sequence id")?;
    let mut pieces = Vec::new();
    for item in rest.split(' ').filter(|s| !s.is_empty()) {
        let (surface, span) = item.rsplit_once(':').ok_or_else(|| format!("`{item}` lacks a span"))?;
        let (s, e) = span
            .split_once('-')
            .ok_or_else(|| format!("`{span}` is not start-end"))?;
        let s: u32 = s.parse().map_err(|_| format!("bad start in `{item}`"))?;
        let e: u32 = e.parse().map_err(|_| format!("bad end in `{item}`"))?;
        if e < s {
            return Err(format!("span `{span}` ends before it starts"));
        }
        pieces.push((unescape(surface)?, s, e));
    }
    Ok(SegmentLine {
        sequence_id: id.to_string(),
        pieces,
    })
}

/// Source text a piece stands for: markers removed, word-boundary symbols
/// turned back into spaces, whitespace runs as spaces of the span length.
/// Unknown pieces cannot be recovered and yield `None`.
pub fn decode_piece(surface: &str, start: u32, end: u32, marker: Option<&str>) -> Option<String> {
    let len = (end - start) as usize;
    if surface == WHITESPACE_TOKEN {
        return Some(" ".repeat(len));
    }
    if surface == UNK_TOKEN {
        return None;
    }
    let s = marker
        .and_then(|m| surface.strip_prefix(m))
        .filter(|s| !s.is_empty())
        .unwrap_or(surface);
    Some(s.replace(META_SPACE, " "))
}

pub fn decode_line(line: &SegmentLine, marker: Option<&str>) -> Result<String> {
    let mut out = String::new();
    let mut cursor = 0;
    for (surface, s, e) in &line.pieces {
        if *s != cursor {
            return Err(Error::Analysis(format!(
                "{}: spans are not contiguous at {s}",
                line.sequence_id
            )));
        }
        cursor = *e;
        let text = decode_piece(surface, *s, *e, marker)
            .ok_or_else(|| Error::Analysis(format!("{}: unknown token at {s}-{e}", line.sequence_id)))?;
        out.push_str(&text);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escape_round_trip() {
        let mut s = String::new();
        escape("a b\\c\td", &mut s);
        assert_eq!(s, "a\\sb\\\\c\\td");
        assert_eq!(unescape(&s).unwrap(), "a b\\c\td");
    }

    #[test]
    fn parse_and_decode() {
        let line = parse_segment_line("s1\tMK:0-2 V:2-3 a:b:3-6").unwrap();
        assert_eq!(line.pieces[2], ("a:b".to_string(), 3, 6));
        let line = parse_segment_line("s1\tMK:0-2 V:2-3").unwrap();
        assert_eq!(decode_line(&line, None).unwrap(), "MKV");
        let text = parse_segment_line("t\t\u{2581}the:0-4 \u{2581}cat:4-8").unwrap();
        assert_eq!(decode_line(&text, None).unwrap(), " the cat");
    }
}
