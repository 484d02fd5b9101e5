//! Vocabulary overlap, token length, fertility and contextual exponence.
//!
//! Corpus-side metrics read the stream of non-special tokens; token lengths
//! are marker-stripped character counts.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::table::AnalysisTable;
use crate::tokenizer::{Segmentation, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OverlapMeasure {
    /// |A ∩ B| / |A| for equal-size vocabularies.
    #[default]
    Shared,
    /// |A ∩ B| / |A ∪ B|, defined for any sizes.
    Jaccard,
}

fn surface_set(v: &Vocabulary) -> BTreeSet<&str> {
    v.non_special_ids().map(|id| v.stripped(id)).collect()
}

/// Fraction of marker-stripped, non-special token surfaces shared by two
/// vocabularies of equal size.
pub fn compare_vocabularies(a: &Vocabulary, b: &Vocabulary) -> Result<f64> {
    if a.size() != b.size() {
        return Err(Error::Analysis(format!(
            "vocabulary sizes differ ({} vs {}); use the jaccard overlap measure",
            a.size(),
            b.size()
        )));
    }
    let (sa, sb) = (surface_set(a), surface_set(b));
    let denom = sa.len().max(sb.len());
    if denom == 0 {
        return Ok(1.0);
    }
    Ok(sa.intersection(&sb).count() as f64 / denom as f64)
}

pub fn jaccard_vocabularies(a: &Vocabulary, b: &Vocabulary) -> f64 {
    let (sa, sb) = (surface_set(a), surface_set(b));
    let union = sa.union(&sb).count();
    if union == 0 {
        return 1.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

pub fn overlap(a: &Vocabulary, b: &Vocabulary, measure: OverlapMeasure) -> Result<f64> {
    match measure {
        OverlapMeasure::Shared => compare_vocabularies(a, b),
        OverlapMeasure::Jaccard => Ok(jaccard_vocabularies(a, b)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LengthStats {
    pub mean: f64,
    pub median: f64,
    /// Length to number of tokens.
    pub histogram: BTreeMap<usize, u64>,
}

impl LengthStats {
    pub fn from_histogram(histogram: BTreeMap<usize, u64>) -> Option<Self> {
        let total: u64 = histogram.values().sum();
        if total == 0 {
            return None;
        }
        let sum: u128 = histogram.iter().map(|(&l, &c)| l as u128 * c as u128).sum();
        let nth = |k: u64| {
            let mut seen = 0;
            for (&l, &c) in &histogram {
                seen += c;
                if seen > k {
                    return l;
                }
            }
            unreachable!("k below total")
        };
        let median = if total % 2 == 1 {
            nth(total / 2) as f64
        } else {
            (nth(total / 2 - 1) + nth(total / 2)) as f64 / 2.0
        };
        Some(Self {
            mean: sum as f64 / total as f64,
            median,
            histogram,
        })
    }

    pub fn count(&self) -> u64 {
        self.histogram.values().sum()
    }
}

/// Unweighted length statistics over the vocabulary's non-special tokens.
pub fn vocab_length_stats(v: &Vocabulary) -> LengthStats {
    let mut histogram = BTreeMap::new();
    for id in v.non_special_ids() {
        *histogram.entry(v.stripped_len(id)).or_insert(0) += 1;
    }
    LengthStats::from_histogram(histogram).unwrap_or(LengthStats {
        mean: 0.0,
        median: 0.0,
        histogram: BTreeMap::new(),
    })
}

/// Non-special token ids of one segmentation.
pub fn content_tokens<'a>(vocab: &'a Vocabulary, seg: &'a Segmentation) -> impl Iterator<Item = u32> + 'a {
    seg.token_ids.iter().copied().filter(|&id| !vocab.is_special(id))
}

/// Frequency-weighted length statistics over emitted tokens.
pub fn corpus_length_stats(vocab: &Vocabulary, segmentations: &[Segmentation]) -> Result<LengthStats> {
    let histogram = segmentations
        .par_iter()
        .fold(BTreeMap::new, |mut h, seg| {
            for id in content_tokens(vocab, seg) {
                *h.entry(vocab.stripped_len(id)).or_insert(0u64) += 1;
            }
            h
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (l, c) in b {
                *a.entry(l).or_insert(0) += c;
            }
            a
        });
    LengthStats::from_histogram(histogram).ok_or_else(|| Error::Analysis("no tokens to measure".into()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fertility {
    pub tokens_per_sequence: f64,
    pub tokens_per_residue: f64,
    pub sequences: usize,
    pub tokens: u64,
    /// Sum of stripped token lengths.
    pub residues: u64,
}

impl Fertility {
    pub fn mean_token_length(&self) -> f64 {
        self.residues as f64 / self.tokens as f64
    }

    pub fn mean_sequence_length(&self) -> f64 {
        self.residues as f64 / self.sequences as f64
    }
}

pub fn fertility(vocab: &Vocabulary, segmentations: &[Segmentation]) -> Result<Fertility> {
    let (tokens, residues) = segmentations
        .par_iter()
        .map(|seg| {
            content_tokens(vocab, seg).fold((0u64, 0u64), |(t, r), id| (t + 1, r + vocab.stripped_len(id) as u64))
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if segmentations.is_empty() || tokens == 0 {
        return Err(Error::Analysis(
            "fertility needs at least one non-empty sequence".into(),
        ));
    }
    Ok(Fertility {
        tokens_per_sequence: tokens as f64 / segmentations.len() as f64,
        tokens_per_residue: tokens as f64 / residues as f64,
        sequences: segmentations.len(),
        tokens,
        residues,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExponenceOptions {
    pub window_radius: usize,
    pub top_k: usize,
    pub include_self: bool,
}

impl Default for ExponenceOptions {
    fn default() -> Self {
        Self {
            window_radius: 2,
            top_k: 350,
            include_self: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExponenceRow {
    pub token: String,
    pub distinct_neighbors: u64,
}

/// Per token type, the number of distinct types seen within the window
/// around any of its occurrences. Sorted by count descending then surface,
/// truncated to `top_k`.
pub fn contextual_exponence(
    vocab: &Vocabulary,
    segmentations: &[Segmentation],
    options: &ExponenceOptions,
) -> Result<Vec<ExponenceRow>> {
    if options.window_radius == 0 {
        return Err(Error::Analysis("window radius must be at least 1".into()));
    }
    let r = options.window_radius;
    let mut pairs: Vec<u64> = segmentations
        .par_iter()
        .flat_map_iter(|seg| {
            let stream: Vec<u32> = content_tokens(vocab, seg).collect();
            let mut local = Vec::with_capacity(stream.len() * 2 * r);
            for (i, &center) in stream.iter().enumerate() {
                let lo = i.saturating_sub(r);
                let hi = (i + r).min(stream.len().saturating_sub(1));
                for (j, &other) in stream.iter().enumerate().take(hi + 1).skip(lo) {
                    if j != i && (options.include_self || other != center) {
                        local.push(((center as u64) << 32) | other as u64);
                    }
                }
            }
            local.sort_unstable();
            local.dedup();
            local
        })
        .collect();
    pairs.par_sort_unstable();
    pairs.dedup();

    let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
    for p in pairs {
        *counts.entry((p >> 32) as u32).or_insert(0) += 1;
    }
    let mut rows: Vec<ExponenceRow> = counts
        .into_iter()
        .map(|(id, n)| ExponenceRow {
            token: vocab.token(id).to_string(),
            distinct_neighbors: n,
        })
        .collect();
    rows.sort_by(|a, b| {
        b.distinct_neighbors
            .cmp(&a.distinct_neighbors)
            .then_with(|| a.token.cmp(&b.token))
    });
    rows.truncate(options.top_k);
    Ok(rows)
}

pub fn overlap_table(rows: &[(usize, String, String, f64)]) -> AnalysisTable {
    let mut t = AnalysisTable::new(
        "overlap",
        &["vocab_size", "tokenizer_a", "tokenizer_b", "shared_fraction"],
    );
    for (size, a, b, f) in rows {
        t.push(vec![(*size).into(), a.as_str().into(), b.as_str().into(), (*f).into()]);
    }
    t
}

/// Summary rows (`scope,mean,median`) and histogram rows (`scope,length,count`).
pub fn length_tables(vocab_stats: &LengthStats, corpus_stats: &LengthStats) -> (AnalysisTable, AnalysisTable) {
    let mut summary = AnalysisTable::new("lengths", &["scope", "mean", "median"]);
    let mut histogram = AnalysisTable::new("lengths_histogram", &["scope", "length", "count"]);
    for (scope, stats) in [("vocabulary", vocab_stats), ("corpus", corpus_stats)] {
        summary.push(vec![scope.into(), stats.mean.into(), stats.median.into()]);
        for (&l, &c) in &stats.histogram {
            histogram.push(vec![scope.into(), l.into(), c.into()]);
        }
    }
    (summary, histogram)
}

pub fn fertility_table(f: &Fertility) -> AnalysisTable {
    let mut t = AnalysisTable::new("fertility", &["tokens_per_sequence", "tokens_per_residue"]);
    t.push(vec![f.tokens_per_sequence.into(), f.tokens_per_residue.into()]);
    t
}

pub fn exponence_table(rows: &[ExponenceRow]) -> AnalysisTable {
    let mut t = AnalysisTable::new("exponence", &["rank", "token", "distinct_neighbors"]);
    for (i, r) in rows.iter().enumerate() {
        t.push(vec![
            (i + 1).into(),
            r.token.as_str().into(),
            r.distinct_neighbors.into(),
        ]);
    }
    t
}
