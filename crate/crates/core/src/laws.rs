//! Zipf, Brevity, Heaps and Menzerath law tables and least-squares fits.
//! Natural logarithms throughout; tables carry raw values.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::content_tokens;
use crate::table::AnalysisTable;
use crate::tokenizer::{Segmentation, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FitSpace {
    LogLog,
    SemiLog,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LawFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
    pub space: FitSpace,
}

impl LawFit {
    pub fn table(&self, name: &str) -> AnalysisTable {
        let mut t = AnalysisTable::new(name, &["slope", "intercept", "r_squared", "n_points"]);
        t.push(vec![
            self.slope.into(),
            self.intercept.into(),
            self.r_squared.into(),
            self.n_points.into(),
        ]);
        t
    }
}

/// Ordinary least squares of y on x. A constant x is an error; a constant y
/// fits exactly with slope 0.
pub fn ols(x: &[f64], y: &[f64], space: FitSpace) -> Result<LawFit> {
    if x.len() != y.len() {
        return Err(Error::Analysis(format!(
            "fit needs paired data ({} x, {} y)",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::Analysis(format!("fit needs at least 2 points, got {n}")));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::Analysis("fit is undefined: all x values are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        let ss_res: f64 = x
            .iter()
            .zip(y)
            .map(|(&a, &b)| {
                let e = b - (intercept + slope * a);
                e * e
            })
            .sum();
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(LawFit {
        slope,
        intercept,
        r_squared,
        n_points: n,
        space,
    })
}

/// Non-special token frequencies in the stream, indexed by token id.
pub fn token_frequencies(vocab: &Vocabulary, segmentations: &[Segmentation]) -> Vec<u64> {
    segmentations
        .par_iter()
        .fold(
            || vec![0u64; vocab.len()],
            |mut f, seg| {
                for id in content_tokens(vocab, seg) {
                    f[id as usize] += 1;
                }
                f
            },
        )
        .reduce(
            || vec![0u64; vocab.len()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankFrequencyRow {
    pub rank: usize,
    pub token: String,
    pub frequency: u64,
}

/// Restricts the Zipf fit to ranks in `min_rank..=max_rank`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZipfOptions {
    pub min_rank: usize,
    pub max_rank: Option<usize>,
}

impl Default for ZipfOptions {
    fn default() -> Self {
        Self {
            min_rank: 1,
            max_rank: None,
        }
    }
}

/// Tokens with frequency ≥ 1, by frequency descending then surface.
pub fn rank_frequency(vocab: &Vocabulary, segmentations: &[Segmentation]) -> Vec<RankFrequencyRow> {
    let freq = token_frequencies(vocab, segmentations);
    let mut rows: Vec<(u64, &str)> = freq
        .iter()
        .enumerate()
        .filter(|&(_, &f)| f > 0)
        .map(|(id, &f)| (f, vocab.token(id as u32)))
        .collect();
    rows.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    rows.into_iter()
        .enumerate()
        .map(|(i, (f, t))| RankFrequencyRow {
            rank: i + 1,
            token: t.to_string(),
            frequency: f,
        })
        .collect()
}

/// Log-log fit of frequency against rank for frequencies already sorted
/// descending (rank = position + 1).
pub fn zipf_from_frequencies(frequencies: &[f64], options: &ZipfOptions) -> Result<LawFit> {
    let lo = options.min_rank.max(1);
    let hi = options.max_rank.unwrap_or(frequencies.len()).min(frequencies.len());
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for rank in lo..=hi {
        let f = frequencies[rank - 1];
        if f > 0.0 {
            x.push((rank as f64).ln());
            y.push(f.ln());
        }
    }
    if x.len() < 2 {
        return Err(Error::Analysis("zipf fit needs at least 2 distinct tokens".into()));
    }
    ols(&x, &y, FitSpace::LogLog)
}

pub fn zipf_fit(
    vocab: &Vocabulary,
    segmentations: &[Segmentation],
    options: &ZipfOptions,
) -> Result<(Vec<RankFrequencyRow>, LawFit)> {
    let rows = rank_frequency(vocab, segmentations);
    let freqs: Vec<f64> = rows.iter().map(|r| r.frequency as f64).collect();
    let fit = zipf_from_frequencies(&freqs, options)?;
    Ok((rows, fit))
}

pub fn zipf_table(rows: &[RankFrequencyRow]) -> AnalysisTable {
    let mut t = AnalysisTable::new("zipf", &["rank", "token", "frequency"]);
    for r in rows {
        t.push(vec![r.rank.into(), r.token.as_str().into(), r.frequency.into()]);
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrevityToken {
    pub token: String,
    pub length: usize,
    pub frequency: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrevityLength {
    pub length: usize,
    pub tokens: usize,
    pub mean_frequency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrevityTables {
    pub tokens: Vec<BrevityToken>,
    pub lengths: Vec<BrevityLength>,
    pub fit: LawFit,
}

/// Semilog fit of ln(mean frequency) against length over (length,
/// frequency) points with frequency ≥ 1.
pub fn brevity_from_points(points: &[(usize, f64)]) -> Result<(Vec<BrevityLength>, LawFit)> {
    let mut by_len: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for &(l, f) in points {
        let e = by_len.entry(l).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += f;
    }
    let lengths: Vec<BrevityLength> = by_len
        .into_iter()
        .map(|(length, (n, sum))| BrevityLength {
            length,
            tokens: n,
            mean_frequency: sum / n as f64,
        })
        .collect();
    if lengths.len() < 2 {
        return Err(Error::Analysis(
            "brevity fit needs at least 2 distinct token lengths".into(),
        ));
    }
    let x: Vec<f64> = lengths.iter().map(|l| l.length as f64).collect();
    let y: Vec<f64> = lengths.iter().map(|l| l.mean_frequency.ln()).collect();
    let fit = ols(&x, &y, FitSpace::SemiLog)?;
    Ok((lengths, fit))
}

pub fn brevity_tables(vocab: &Vocabulary, segmentations: &[Segmentation]) -> Result<BrevityTables> {
    let tokens: Vec<BrevityToken> = rank_frequency(vocab, segmentations)
        .into_iter()
        .map(|r| BrevityToken {
            length: vocab.id(&r.token).map_or(0, |id| vocab.stripped_len(id)),
            token: r.token,
            frequency: r.frequency,
        })
        .collect();
    let points: Vec<(usize, f64)> = tokens.iter().map(|t| (t.length, t.frequency as f64)).collect();
    let (lengths, fit) = brevity_from_points(&points)?;
    Ok(BrevityTables { tokens, lengths, fit })
}

impl BrevityTables {
    pub fn token_table(&self) -> AnalysisTable {
        let mut t = AnalysisTable::new("brevity", &["token", "length", "frequency"]);
        for r in &self.tokens {
            t.push(vec![r.token.as_str().into(), r.length.into(), r.frequency.into()]);
        }
        t
    }

    pub fn length_table(&self) -> AnalysisTable {
        let mut t = AnalysisTable::new("brevity_lengths", &["length", "tokens", "mean_frequency"]);
        for r in &self.lengths {
            t.push(vec![r.length.into(), r.tokens.into(), r.mean_frequency.into()]);
        }
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Checkpoints {
    /// Whenever n has grown by a factor of 1.1, plus the final point.
    #[default]
    Geometric,
    /// After every sequence.
    PerSequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeapsPoint {
    pub n: u64,
    pub v: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeapsFit {
    pub k: f64,
    pub beta: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

impl HeapsFit {
    pub fn table(&self) -> AnalysisTable {
        let mut t = AnalysisTable::new("heaps_fit", &["K", "beta", "r_squared", "n_points"]);
        t.push(vec![
            self.k.into(),
            self.beta.into(),
            self.r_squared.into(),
            self.n_points.into(),
        ]);
        t
    }
}

const GEOMETRIC_STEP: f64 = 1.1;

/// Cumulative distinct-type counts over a stream given as per-sequence
/// token id lists.
pub fn heaps_curve<S: AsRef<[u32]>>(sequences: &[S], checkpoints: Checkpoints) -> Vec<HeapsPoint> {
    let mut seen = rustc_hash::FxHashSet::default();
    let mut out = Vec::new();
    let (mut n, mut next) = (0u64, 1u64);
    for seq in sequences {
        for &id in seq.as_ref() {
            n += 1;
            seen.insert(id);
            if checkpoints == Checkpoints::Geometric && n == next {
                out.push(HeapsPoint {
                    n,
                    v: seen.len() as u64,
                });
                next = (n + 1).max((n as f64 * GEOMETRIC_STEP).ceil() as u64);
            }
        }
        if checkpoints == Checkpoints::PerSequence && out.last().is_none_or(|p| p.n != n) && n > 0 {
            out.push(HeapsPoint {
                n,
                v: seen.len() as u64,
            });
        }
    }
    if n > 0 && out.last().is_none_or(|p| p.n != n) {
        out.push(HeapsPoint {
            n,
            v: seen.len() as u64,
        });
    }
    out
}

/// Log-log fit of v against n over checkpoints with n ≥ `min_n`;
/// K = exp(intercept), β = slope.
pub fn fit_heaps(curve: &[HeapsPoint], min_n: u64) -> Result<HeapsFit> {
    let pts: Vec<&HeapsPoint> = curve.iter().filter(|p| p.n >= min_n.max(1)).collect();
    let x: Vec<f64> = pts.iter().map(|p| (p.n as f64).ln()).collect();
    let y: Vec<f64> = pts.iter().map(|p| (p.v as f64).ln()).collect();
    let fit = ols(&x, &y, FitSpace::LogLog)?;
    Ok(HeapsFit {
        k: fit.intercept.exp(),
        beta: fit.slope,
        r_squared: fit.r_squared,
        n_points: fit.n_points,
    })
}

pub fn heaps_fit(
    vocab: &Vocabulary,
    segmentations: &[Segmentation],
    checkpoints: Checkpoints,
    min_n: u64,
) -> Result<(Vec<HeapsPoint>, HeapsFit)> {
    let streams: Vec<Vec<u32>> = segmentations
        .iter()
        .map(|s| content_tokens(vocab, s).collect())
        .collect();
    let total: usize = streams.iter().map(Vec::len).sum();
    if total < 2 {
        return Err(Error::Analysis("heaps fit needs a stream of at least 2 tokens".into()));
    }
    let curve = heaps_curve(&streams, checkpoints);
    let fit = fit_heaps(&curve, min_n)?;
    Ok((curve, fit))
}

pub fn heaps_table(curve: &[HeapsPoint]) -> AnalysisTable {
    let mut t = AnalysisTable::new("heaps", &["n", "v"]);
    for p in curve {
        t.push(vec![p.n.into(), p.v.into()]);
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MenzerathAxis {
    #[default]
    Residues,
    Tokens,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MenzerathRow {
    pub sequence_id: String,
    pub residues: u64,
    pub tokens: u64,
    pub mean_token_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MenzerathBin {
    pub lower: f64,
    pub upper: f64,
    pub sequences: usize,
    pub mean_x: f64,
    pub mean_token_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MenzerathTables {
    pub rows: Vec<MenzerathRow>,
    pub bins: Vec<MenzerathBin>,
    pub fit: LawFit,
}

const BINS_PER_DECADE: f64 = 10.0;

pub fn menzerath_from_rows(rows: Vec<MenzerathRow>, axis: MenzerathAxis) -> Result<MenzerathTables> {
    if rows.len() < 2 {
        return Err(Error::Analysis("menzerath analysis needs at least 2 sequences".into()));
    }
    let xval = |r: &MenzerathRow| match axis {
        MenzerathAxis::Residues => r.residues as f64,
        MenzerathAxis::Tokens => r.tokens as f64,
    };
    let mut bins: BTreeMap<i64, (usize, f64, f64)> = BTreeMap::new();
    for r in &rows {
        // Nudge before flooring so exact powers of ten land in their own bin.
        let b = (xval(r).log10() * BINS_PER_DECADE + 1e-9).floor() as i64;
        let e = bins.entry(b).or_insert((0, 0.0, 0.0));
        e.0 += 1;
        e.1 += xval(r);
        e.2 += r.mean_token_length;
    }
    let bins = bins
        .into_iter()
        .map(|(b, (n, sx, sy))| MenzerathBin {
            lower: 10f64.powf(b as f64 / BINS_PER_DECADE),
            upper: 10f64.powf((b + 1) as f64 / BINS_PER_DECADE),
            sequences: n,
            mean_x: sx / n as f64,
            mean_token_length: sy / n as f64,
        })
        .collect();
    let x: Vec<f64> = rows.iter().map(|r| xval(r).ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.mean_token_length).collect();
    let fit = ols(&x, &y, FitSpace::SemiLog)?;
    Ok(MenzerathTables { rows, bins, fit })
}

pub fn menzerath_tables(
    vocab: &Vocabulary,
    segmentations: &[Segmentation],
    axis: MenzerathAxis,
) -> Result<MenzerathTables> {
    let rows: Vec<MenzerathRow> = segmentations
        .iter()
        .filter_map(|seg| {
            let (tokens, residues) =
                content_tokens(vocab, seg).fold((0u64, 0u64), |(t, r), id| (t + 1, r + vocab.stripped_len(id) as u64));
            (tokens > 0).then(|| MenzerathRow {
                sequence_id: seg.sequence_id.clone(),
                residues,
                tokens,
                mean_token_length: residues as f64 / tokens as f64,
            })
        })
        .collect();
    menzerath_from_rows(rows, axis)
}

impl MenzerathTables {
    pub fn sequence_table(&self) -> AnalysisTable {
        let mut t = AnalysisTable::new("menzerath", &["sequence_id", "residues", "tokens", "mean_token_length"]);
        for r in &self.rows {
            t.push(vec![
                r.sequence_id.as_str().into(),
                r.residues.into(),
                r.tokens.into(),
                r.mean_token_length.into(),
            ]);
        }
        t
    }

    pub fn bin_table(&self) -> AnalysisTable {
        let mut t = AnalysisTable::new(
            "menzerath_bins",
            &["bin_lower", "bin_upper", "sequences", "mean_x", "mean_token_length"],
        );
        for b in &self.bins {
            t.push(vec![
                b.lower.into(),
                b.upper.into(),
                b.sequences.into(),
                b.mean_x.into(),
                b.mean_token_length.into(),
            ]);
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_recovers_a_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 2.0 * v).collect();
        let f = ols(&x, &y, FitSpace::Linear).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-12 && (f.intercept - 3.0).abs() < 1e-12);
        assert_eq!(f.r_squared, 1.0);
        assert!(ols(&[1.0, 1.0], &[1.0, 2.0], FitSpace::Linear).is_err());
        let flat = ols(&x, &[5.0; 4], FitSpace::Linear).unwrap();
        assert_eq!((flat.slope, flat.r_squared), (0.0, 1.0));
    }

    #[test]
    fn exact_zipf() {
        let f: Vec<f64> = (1..=100).map(|r| 1000.0 / r as f64).collect();
        let fit = zipf_from_frequencies(&f, &ZipfOptions::default()).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-9);
        let uniform = zipf_from_frequencies(&[7.0; 10], &ZipfOptions::default()).unwrap();
        assert!(uniform.slope.abs() < 1e-12);
        assert!(zipf_from_frequencies(&[3.0], &ZipfOptions::default()).is_err());
    }

    #[test]
    fn geometric_brevity() {
        let pts: Vec<(usize, f64)> = (1..=8).map(|l| (l, 1024.0 / 2f64.powi(l as i32))).collect();
        let (_, fit) = brevity_from_points(&pts).unwrap();
        assert!((fit.slope + 2f64.ln()).abs() < 1e-12);
        assert!(brevity_from_points(&[(2, 1.0), (2, 3.0)]).is_err());
    }

    #[test]
    fn heaps_curve_checkpoints() {
        let seqs = vec![vec![0u32, 1, 0, 2], vec![2, 3]];
        let per_seq = heaps_curve(&seqs, Checkpoints::PerSequence);
        assert_eq!(per_seq, vec![HeapsPoint { n: 4, v: 3 }, HeapsPoint { n: 6, v: 4 }]);
        let geo = heaps_curve(&seqs, Checkpoints::Geometric);
        assert_eq!(geo.iter().map(|p| p.n).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5, 6]);
        assert!(geo.windows(2).all(|w| w[0].v <= w[1].v));
    }

    #[test]
    fn menzerath_constant_lengths() {
        let rows = (1..=20)
            .map(|i| MenzerathRow {
                sequence_id: i.to_string(),
                residues: 2 * i,
                tokens: i,
                mean_token_length: 2.0,
            })
            .collect();
        let t = menzerath_from_rows(rows, MenzerathAxis::Residues).unwrap();
        assert_eq!(t.fit.slope, 0.0);
        assert_eq!(t.bins.iter().map(|b| b.sequences).sum::<usize>(), 20);
    }
}
