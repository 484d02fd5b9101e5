//! Reference implementations used as oracles by the integration and
//! acceptance tests. They favour obviousness over speed.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use protoken::tokenizer::{Payload, PreToken};
use protoken::{Mode, Vocabulary};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Score {
    Frequency,
    Likelihood,
}

pub struct NaiveMerges {
    pub symbols: Vec<String>,
    pub merges: Vec<(String, String)>,
}

fn strip<'a>(s: &'a str, marker: Option<&str>) -> &'a str {
    marker.and_then(|m| s.strip_prefix(m)).unwrap_or(s)
}

/// Recount every adjacent pair from scratch before each merge.
pub fn naive_merges(
    words: &[(String, u64)],
    target: usize,
    score: Score,
    marker: Option<&str>,
    cap: Option<usize>,
) -> NaiveMerges {
    let mut segs: Vec<(Vec<String>, u64)> = words
        .iter()
        .filter(|(_, c)| *c > 0)
        .map(|(w, c)| {
            let syms = w
                .chars()
                .enumerate()
                .map(|(i, ch)| match marker {
                    Some(m) if i > 0 => format!("{m}{ch}"),
                    _ => ch.to_string(),
                })
                .collect();
            (syms, *c)
        })
        .collect();
    let alphabet: BTreeSet<String> = segs.iter().flat_map(|(s, _)| s.iter().cloned()).collect();
    let mut symbols: Vec<String> = alphabet.into_iter().collect();
    let mut merges = Vec::new();

    while symbols.len() < target {
        let mut pairs: HashMap<(String, String), u64> = HashMap::new();
        let mut units: HashMap<String, u64> = HashMap::new();
        for (s, c) in &segs {
            for x in s {
                *units.entry(x.clone()).or_default() += c;
            }
            for w in s.windows(2) {
                *pairs.entry((w[0].clone(), w[1].clone())).or_default() += c;
            }
        }
        let mut best: Option<((String, String), u64, u128)> = None;
        for (pair, &count) in &pairs {
            if count < 2 {
                continue;
            }
            let len = strip(&pair.0, marker).chars().count() + strip(&pair.1, marker).chars().count();
            if cap.is_some_and(|c| len > c) {
                continue;
            }
            let den = match score {
                Score::Frequency => 1,
                Score::Likelihood => units[&pair.0] as u128 * units[&pair.1] as u128,
            };
            let better = match &best {
                None => true,
                Some((bp, bc, bd)) => {
                    let lhs = count as u128 * bd;
                    let rhs = *bc as u128 * den;
                    lhs > rhs || (lhs == rhs && pair < bp)
                }
            };
            if better {
                best = Some((pair.clone(), count, den));
            }
        }
        let Some(((l, r), _, _)) = best else { break };
        let merged = format!("{l}{}", strip(&r, marker));
        for (s, _) in segs.iter_mut() {
            let mut out = Vec::with_capacity(s.len());
            let mut i = 0;
            while i < s.len() {
                if i + 1 < s.len() && s[i] == l && s[i + 1] == r {
                    out.push(merged.clone());
                    i += 2;
                } else {
                    out.push(s[i].clone());
                    i += 1;
                }
            }
            *s = out;
        }
        if !symbols.contains(&merged) {
            symbols.push(merged);
        }
        merges.push((l, r));
    }
    NaiveMerges { symbols, merges }
}

/// Apply the lowest-rank rule at its leftmost site until none applies.
pub fn naive_bpe_encode(alphabet: &BTreeSet<String>, merges: &[(String, String)], word: &str) -> Vec<String> {
    let mut s: Vec<String> = word
        .chars()
        .map(|c| {
            if alphabet.contains(&c.to_string()) {
                c.to_string()
            } else {
                "<unk>".into()
            }
        })
        .collect();
    loop {
        let mut best: Option<(usize, usize)> = None;
        for i in 0..s.len().saturating_sub(1) {
            if s[i] == "<unk>" || s[i + 1] == "<unk>" {
                continue;
            }
            if let Some(rank) = merges.iter().position(|(l, r)| *l == s[i] && *r == s[i + 1]) {
                if best.is_none_or(|(br, _)| rank < br) {
                    best = Some((rank, i));
                }
            }
        }
        let Some((_, i)) = best else { return s };
        let right = s.remove(i + 1);
        s[i].push_str(&right);
    }
}

/// Greedy longest match. Text mode collapses a failing word into one
/// unknown token; protein mode emits one unknown token per unmatched char.
pub fn naive_maxmatch(vocab: &BTreeSet<String>, marker: Option<&str>, whole_word_unk: bool, word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let mut found = None;
        for j in (i + 1..=chars.len()).rev() {
            let piece: String = chars[i..j].iter().collect();
            let key = match marker {
                Some(m) if i > 0 => format!("{m}{piece}"),
                _ => piece,
            };
            if vocab.contains(&key) {
                found = Some((key, j));
                break;
            }
        }
        match found {
            Some((key, j)) => {
                out.push(key);
                i = j;
            }
            None if whole_word_unk => return vec!["<unk>".into()],
            None => {
                out.push("<unk>".into());
                i += 1;
            }
        }
    }
    out
}

/// Best total log-probability over every segmentation of `text` into model
/// tokens.
pub fn exhaustive_best(tokens: &[String], log_probs: &[f64], text: &str) -> f64 {
    let lp: HashMap<&str, f64> = tokens
        .iter()
        .map(String::as_str)
        .zip(log_probs.iter().copied())
        .collect();
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut best = f64::NEG_INFINITY;
    // Bit i set: a boundary after char i.
    for mask in 0u32..(1 << (n - 1)) {
        let mut total = 0.0;
        let mut start = 0;
        for end in 1..=n {
            if end == n || mask & (1 << (end - 1)) != 0 {
                let piece: String = chars[start..end].iter().collect();
                match lp.get(piece.as_str()) {
                    Some(&p) => total += p,
                    None => {
                        total = f64::NEG_INFINITY;
                        break;
                    }
                }
                start = end;
            }
        }
        best = best.max(total);
    }
    best
}

pub fn random_word(rng: &mut ChaCha8Rng, alphabet: &[char], min: usize, max: usize) -> String {
    let len = rng.random_range(min..=max);
    (0..len)
        .map(|_| alphabet[rng.random_range(0..alphabet.len())])
        .collect()
}

/// Small corpus of repeated, overlapping words so that many pairs recur.
pub fn random_tiny_corpus(rng: &mut ChaCha8Rng, alphabet: &[char]) -> Vec<(String, u64)> {
    let distinct = rng.random_range(1..=20);
    let mut words: Vec<(String, u64)> = Vec::new();
    for _ in 0..distinct {
        let w = random_word(rng, alphabet, 1, 30);
        let c = rng.random_range(1..=6);
        match words.iter_mut().find(|(x, _)| *x == w) {
            Some(e) => e.1 += c,
            None => words.push((w, c)),
        }
    }
    words
}

pub fn pretokens(words: &[(String, u64)]) -> Vec<PreToken> {
    words.iter().map(|(w, c)| PreToken::new(w.clone(), *c)).collect()
}

pub fn wordpiece_vocab(mode: Mode, tokens: &[String], marker: Option<&str>) -> Vocabulary {
    let specials = vec!["<unk>".to_string()];
    let all = specials.iter().chain(tokens).cloned().collect();
    Vocabulary::new(
        mode,
        all,
        specials,
        Payload::WordPiece {
            continuation_marker: marker.map(str::to_string),
        },
    )
    .expect("valid wordpiece vocabulary")
}

/// Frequencies exactly proportional to 1/rank.
pub fn exact_zipf(ranks: usize) -> Vec<f64> {
    (1..=ranks).map(|r| 1.0e6 / r as f64).collect()
}

/// A token stream whose vocabulary after n tokens is floor(k · n^beta):
/// a fresh type whenever that target grows, otherwise a repeat.
pub fn heaps_stream(k: f64, beta: f64, n: u64) -> Vec<u32> {
    let mut out = Vec::with_capacity(n as usize);
    let mut v = 0u32;
    for i in 1..=n {
        if (k * (i as f64).powf(beta)).floor() as u32 > v || v == 0 {
            v += 1;
            out.push(v - 1);
        } else {
            out.push((i % v as u64) as u32);
        }
    }
    out
}

/// (length, frequency) points with mean frequency halving per extra residue.
pub fn geometric_brevity_points() -> Vec<(usize, f64)> {
    (1..=12)
        .flat_map(|l| {
            let f = 2f64.powi(20 - l as i32);
            // Spread around the mean so the per-length average is exact.
            [(l, f * 0.5), (l, f), (l, f * 1.5)]
        })
        .collect()
}
