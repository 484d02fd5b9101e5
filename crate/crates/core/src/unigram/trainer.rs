use std::cmp::Ordering;

use rustc_hash::FxHashMap;

use super::{Lattice, Trie, UnigramModel};
use crate::corpus::{Mode, SequenceRecord};
use crate::error::{Error, Result};
use crate::tokenizer::{specials_for, Payload, TokenizerKind, Vocabulary, META_SPACE};

/// Records per work unit in parallel passes. Fixed so that floating-point
/// reductions do not depend on the thread count.
const CHUNK: usize = 64;

#[derive(Debug, Clone)]
pub struct UnigramConfig {
    pub vocab_size: usize,
    pub mode: Mode,
    /// Seed inventory size; defaults to 25 times `vocab_size`.
    pub seed_size: Option<usize>,
    pub max_piece_length: usize,
    pub shrink_factor: f64,
    pub em_substeps: usize,
}

impl UnigramConfig {
    pub fn new(vocab_size: usize, mode: Mode) -> Self {
        Self {
            vocab_size,
            mode,
            seed_size: None,
            max_piece_length: 16,
            shrink_factor: 0.75,
            em_substeps: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedPiece {
    pub surface: String,
    pub count: u64,
}

#[derive(Debug, Clone)]
pub struct EmStep {
    pub model: UnigramModel,
    /// Corpus log-likelihood under the input model.
    pub log_likelihood: f64,
}

/// Training strings: residues as-is for proteins, spaces replaced by the
/// word-boundary symbol for text.
pub fn training_texts(records: &[SequenceRecord], mode: Mode) -> Vec<String> {
    records
        .iter()
        .filter(|r| !r.residues.is_empty())
        .map(|r| match mode {
            Mode::Protein => r.residues.clone(),
            Mode::Text => r.residues.replace(' ', &META_SPACE.to_string()),
        })
        .collect()
}

fn to_chars(texts: &[String]) -> Vec<Vec<char>> {
    texts.iter().map(|t| t.chars().collect()).collect()
}

/// Deterministic parallel map-reduce over fixed chunks with a fixed
/// pairwise reduction tree.
fn tree_reduce<T, A, M, R>(items: &[T], map: &M, merge: &R) -> Option<A>
where
    T: Sync,
    A: Send,
    M: Fn(&[T]) -> A + Sync,
    R: Fn(A, A) -> A + Sync,
{
    fn go<T, A, M, R>(items: &[T], chunks: usize, map: &M, merge: &R) -> A
    where
        T: Sync,
        A: Send,
        M: Fn(&[T]) -> A + Sync,
        R: Fn(A, A) -> A + Sync,
    {
        if chunks <= 1 {
            return map(items);
        }
        let left = chunks / 2;
        let (a, b) = items.split_at((left * CHUNK).min(items.len()));
        let (x, y) = rayon::join(|| go(a, left, map, merge), || go(b, chunks - left, map, merge));
        merge(x, y)
    }
    if items.is_empty() {
        return None;
    }
    Some(go(items, items.len().div_ceil(CHUNK), map, merge))
}

fn add_vectors<V: Copy + std::ops::AddAssign>(mut a: Vec<V>, b: Vec<V>) -> Vec<V> {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
    a
}

/// Candidate ordering: count times length descending, then surface.
fn seed_order(text: &[char], a: &(u64, u32, u32), b: &(u64, u32, u32)) -> Ordering {
    let sa = &text[a.1 as usize..(a.1 + a.2) as usize];
    let sb = &text[b.1 as usize..(b.1 + b.2) as usize];
    b.0.cmp(&a.0).then_with(|| sa.cmp(sb))
}

/// All single characters plus the highest-scoring substrings of length
/// 2..=`max_len` occurring at least twice (overlaps counted), up to
/// `seed_size` pieces in total. Singles come first, sorted.
pub fn seed_vocabulary(texts: &[String], seed_size: usize, max_len: usize) -> Result<Vec<SeedPiece>> {
    seed_from_chars(&to_chars(texts), seed_size, max_len)
}

fn seed_from_chars(texts: &[Vec<char>], seed_size: usize, max_len: usize) -> Result<Vec<SeedPiece>> {
    use rayon::prelude::*;

    let mut singles: FxHashMap<char, u64> = FxHashMap::default();
    for t in texts {
        for &c in t {
            *singles.entry(c).or_default() += 1;
        }
    }
    let mut out: Vec<SeedPiece> = singles
        .into_iter()
        .map(|(c, n)| SeedPiece {
            surface: c.to_string(),
            count: n,
        })
        .collect();
    out.sort_unstable_by(|a, b| a.surface.cmp(&b.surface));
    if seed_size < out.len() {
        return Err(Error::Config(format!(
            "seed size {seed_size} is smaller than the alphabet ({})",
            out.len()
        )));
    }
    let keep = seed_size - out.len();
    if keep == 0 || max_len < 2 {
        return Ok(out);
    }

    let total: usize = texts.iter().map(Vec::len).sum();
    let mut text = Vec::with_capacity(total);
    let mut limit = Vec::with_capacity(total);
    for t in texts {
        let base = text.len();
        let end = base + t.len();
        text.extend_from_slice(t);
        limit.extend((base..end).map(|p| (p + max_len).min(end) as u32));
    }
    let key = |p: u32| &text[p as usize..limit[p as usize] as usize];
    let mut order: Vec<u32> = (0..total as u32).collect();
    order.par_sort_unstable_by(|&a, &b| key(a).cmp(key(b)));
    let lcp: Vec<u32> = (0..order.len())
        .into_par_iter()
        .map(|i| {
            if i == 0 {
                return 0;
            }
            let (a, b) = (key(order[i - 1]), key(order[i]));
            a.iter().zip(b).take_while(|(x, y)| x == y).count() as u32
        })
        .collect();

    // (count * length, start, length)
    let mut best: Vec<(u64, u32, u32)> = Vec::new();
    let trim = |best: &mut Vec<(u64, u32, u32)>| {
        if best.len() > keep {
            best.select_nth_unstable_by(keep - 1, |a, b| seed_order(&text, a, b));
            best.truncate(keep);
        }
    };
    for len in 2..=max_len as u32 {
        let mut start = 0;
        for i in 1..=order.len() {
            if i < order.len() && lcp[i] >= len {
                continue;
            }
            let n = (i - start) as u64;
            if n >= 2 {
                best.push((n * len as u64, order[start], len));
            }
            start = i;
        }
        if best.len() > 2 * keep + 4096 {
            trim(&mut best);
        }
    }
    trim(&mut best);
    best.sort_unstable_by(|a, b| seed_order(&text, a, b));
    for &(score, pos, len) in &best {
        let surface: String = text[pos as usize..(pos + len) as usize].iter().collect();
        out.push(SeedPiece {
            count: score / len as u64,
            surface,
        });
    }
    Ok(out)
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Forward-backward over one string: adds posterior token counts into
/// `counts` and returns the log partition (negative infinity when the
/// string cannot be covered).
fn accumulate(
    trie: &Trie,
    log_probs: &[f64],
    chars: &[char],
    counts: &mut [f64],
    edges: &mut Vec<(u32, u32, u32)>,
) -> f64 {
    let n = chars.len();
    edges.clear();
    for i in 0..n {
        trie.prefixes(chars, i, |tok, end| edges.push((i as u32, end as u32, tok)));
    }
    let mut alpha = vec![f64::NEG_INFINITY; n + 1];
    alpha[0] = 0.0;
    for &(s, e, t) in edges.iter() {
        alpha[e as usize] = log_add(alpha[e as usize], alpha[s as usize] + log_probs[t as usize]);
    }
    let z = alpha[n];
    if z == f64::NEG_INFINITY {
        return z;
    }
    let mut beta = vec![f64::NEG_INFINITY; n + 1];
    beta[n] = 0.0;
    for &(s, e, t) in edges.iter().rev() {
        beta[s as usize] = log_add(beta[s as usize], log_probs[t as usize] + beta[e as usize]);
    }
    for &(s, e, t) in edges.iter() {
        let post = alpha[s as usize] + log_probs[t as usize] + beta[e as usize] - z;
        if post > f64::NEG_INFINITY {
            counts[t as usize] += post.exp();
        }
    }
    z
}

/// Expected token counts and corpus log-likelihood.
fn expected_counts(model: &UnigramModel, texts: &[Vec<char>]) -> (Vec<f64>, f64) {
    let trie = model.trie();
    let v = model.len();
    let map = |chunk: &[Vec<char>]| {
        let mut counts = vec![0.0; v];
        let mut edges = Vec::new();
        let mut ll = 0.0;
        for t in chunk {
            let z = accumulate(&trie, &model.log_probs, t, &mut counts, &mut edges);
            if z.is_finite() {
                ll += z;
            }
        }
        (counts, ll)
    };
    let merge = |(a, x): (Vec<f64>, f64), (b, y): (Vec<f64>, f64)| (add_vectors(a, b), x + y);
    tree_reduce(texts, &map, &merge).unwrap_or_else(|| (vec![0.0; v], 0.0))
}

/// Sum over strings of the log marginal probability (all segmentations).
pub fn corpus_log_likelihood(model: &UnigramModel, texts: &[String]) -> f64 {
    log_likelihood_chars(model, &to_chars(texts))
}

fn log_likelihood_chars(model: &UnigramModel, texts: &[Vec<char>]) -> f64 {
    let trie = model.trie();
    let map = |chunk: &[Vec<char>]| {
        let mut scratch = vec![0.0; model.len()];
        let mut edges = Vec::new();
        chunk
            .iter()
            .map(|t| accumulate(&trie, &model.log_probs, t, &mut scratch, &mut edges))
            .filter(|z| z.is_finite())
            .sum::<f64>()
    };
    tree_reduce(texts, &map, &|a, b| a + b).unwrap_or(0.0)
}

fn renormalize(counts: &[f64]) -> Vec<f64> {
    let total: f64 = counts.iter().sum();
    counts
        .iter()
        .map(|&c| {
            if c > 0.0 {
                c.ln() - total.ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}

/// One EM iteration: posterior counts, then plain renormalization. Tokens
/// with zero expected count get probability zero.
pub fn em_step(model: &UnigramModel, texts: &[String]) -> EmStep {
    em_chars(model, &to_chars(texts))
}

fn em_chars(model: &UnigramModel, texts: &[Vec<char>]) -> EmStep {
    let (counts, log_likelihood) = expected_counts(model, texts);
    EmStep {
        model: UnigramModel {
            tokens: model.tokens.clone(),
            log_probs: renormalize(&counts),
        },
        log_likelihood,
    }
}

fn viterbi_frequencies(model: &UnigramModel, texts: &[Vec<char>]) -> Vec<u64> {
    let trie = model.trie();
    let unk_score = model.unk_score();
    let map = |chunk: &[Vec<char>]| {
        let lattice = Lattice {
            trie: &trie,
            log_probs: &model.log_probs,
            surfaces: &model.tokens,
            unk_score,
        };
        let mut freq = vec![0u64; model.len()];
        for t in chunk {
            for (p, _) in lattice.viterbi(t, None).0 {
                if let Some(p) = p {
                    freq[p as usize] += 1;
                }
            }
        }
        freq
    };
    tree_reduce(texts, &map, &add_vectors).unwrap_or_else(|| vec![0; model.len()])
}

/// Drop the multi-character tokens whose removal costs the least Viterbi
/// likelihood, down to max(`target`, floor(`shrink` * size)).
/// Single characters are always kept.
pub fn prune(model: &UnigramModel, texts: &[String], target: usize, shrink: f64) -> UnigramModel {
    prune_chars(model, &to_chars(texts), target, shrink)
}

fn prune_chars(model: &UnigramModel, texts: &[Vec<char>], target: usize, shrink: f64) -> UnigramModel {
    use rayon::prelude::*;

    let freq = viterbi_frequencies(model, texts);
    let trie = model.trie();
    let lattice = Lattice {
        trie: &trie,
        log_probs: &model.log_probs,
        surfaces: &model.tokens,
        unk_score: model.unk_score(),
    };
    let total: f64 = freq.iter().map(|&f| f as f64).sum();
    let is_char: Vec<bool> = model.tokens.iter().map(|t| t.chars().count() == 1).collect();

    let candidates: Vec<(usize, f64)> = (0..model.len())
        .into_par_iter()
        .filter(|&i| !is_char[i] && model.log_probs[i].is_finite())
        .map(|i| {
            if freq[i] == 0 || total == 0.0 {
                return (i, f64::NEG_INFINITY);
            }
            let chars: Vec<char> = model.tokens[i].chars().collect();
            let alt: Vec<u32> = lattice
                .viterbi(&chars, Some(i as u32))
                .0
                .into_iter()
                .filter_map(|(p, _)| p)
                .collect();
            let f = freq[i] as f64;
            let logsum = total.ln();
            let logprob_sp = f.ln() - logsum;
            let logsum_alt = (total + f * (alt.len() as f64 - 1.0)).ln();
            let logprob_alt: f64 = alt
                .iter()
                .map(|&a| (freq[a as usize] as f64 + f).ln() - logsum_alt)
                .sum();
            (i, f / total * (logprob_sp - logprob_alt))
        })
        .collect();

    let mut candidates = candidates;
    candidates.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| model.tokens[a.0].cmp(&model.tokens[b.0]))
    });
    let new_size = target.max((shrink * model.len() as f64).floor() as usize);
    let chars = is_char.iter().filter(|&&c| c).count();
    let mut keep: Vec<usize> = (0..model.len()).filter(|&i| is_char[i]).collect();
    keep.extend(candidates.iter().take(new_size.saturating_sub(chars)).map(|&(i, _)| i));
    keep.sort_unstable();

    let kept_mass = keep
        .iter()
        .map(|&i| model.log_probs[i])
        .fold(f64::NEG_INFINITY, log_add);
    UnigramModel {
        tokens: keep.iter().map(|&i| model.tokens[i].clone()).collect(),
        log_probs: keep.iter().map(|&i| model.log_probs[i] - kept_mass).collect(),
    }
}

fn initial_model(seed: &[SeedPiece]) -> UnigramModel {
    let counts: Vec<f64> = seed.iter().map(|p| p.count as f64).collect();
    UnigramModel {
        tokens: seed.iter().map(|p| p.surface.clone()).collect(),
        log_probs: renormalize(&counts),
    }
}

/// Floors zero-probability characters, drops zero-probability multi-character
/// tokens and renormalizes.
fn finalize(model: UnigramModel) -> UnigramModel {
    let floor = model.unk_score();
    let mut tokens = Vec::new();
    let mut log_probs = Vec::new();
    for (t, lp) in model.tokens.into_iter().zip(model.log_probs) {
        let single = t.chars().count() == 1;
        if lp.is_finite() || single {
            tokens.push(t);
            log_probs.push(if lp.is_finite() { lp } else { floor });
        }
    }
    let mass = log_probs.iter().copied().fold(f64::NEG_INFINITY, log_add);
    for lp in &mut log_probs {
        *lp -= mass;
    }
    UnigramModel { tokens, log_probs }
}

pub fn train_unigram(records: &[SequenceRecord], config: &UnigramConfig) -> Result<Vocabulary> {
    let texts = to_chars(&training_texts(records, config.mode));
    let mut alphabet: Vec<char> = texts.iter().flatten().copied().collect();
    alphabet.sort_unstable();
    alphabet.dedup();
    if config.vocab_size < alphabet.len() {
        return Err(Error::Config(format!(
            "vocabulary size {} is smaller than the alphabet ({})",
            config.vocab_size,
            alphabet.len()
        )));
    }
    if !(config.shrink_factor > 0.0 && config.shrink_factor < 1.0) {
        return Err(Error::Config(format!(
            "shrink factor {} must lie in (0, 1)",
            config.shrink_factor
        )));
    }
    let seed_size = config.seed_size.unwrap_or(config.vocab_size.saturating_mul(25));
    let seed = seed_from_chars(&texts, seed_size, config.max_piece_length)?;
    let mut model = initial_model(&seed);
    log::info!("unigram seed: {} pieces", model.len());
    loop {
        for _ in 0..config.em_substeps.max(1) {
            let step = em_chars(&model, &texts);
            log::debug!("em: size {} log-likelihood {:.6}", model.len(), step.log_likelihood);
            model = step.model;
        }
        if model.len() <= config.vocab_size {
            break;
        }
        model = prune_chars(&model, &texts, config.vocab_size, config.shrink_factor);
    }
    let model = finalize(model);
    to_vocabulary(model, config.mode)
}

/// Specials, then characters in order, then longer tokens by probability.
fn to_vocabulary(model: UnigramModel, mode: Mode) -> Result<Vocabulary> {
    let specials = specials_for(TokenizerKind::Unigram, mode);
    let unk_lp = model.unk_score();
    let mut order: Vec<usize> = (0..model.len()).collect();
    let single = |i: usize| model.tokens[i].chars().count() == 1;
    order.sort_by(|&a, &b| {
        single(b).cmp(&single(a)).then_with(|| {
            if single(a) {
                model.tokens[a].cmp(&model.tokens[b])
            } else {
                model.log_probs[b]
                    .partial_cmp(&model.log_probs[a])
                    .unwrap_or(Ordering::Equal)
                    .then_with(|| model.tokens[a].cmp(&model.tokens[b]))
            }
        })
    });
    let mut tokens = specials.clone();
    let mut log_probs = vec![unk_lp; specials.len()];
    for i in order {
        tokens.push(model.tokens[i].clone());
        log_probs.push(model.log_probs[i]);
    }
    Vocabulary::new(mode, tokens, specials, Payload::Unigram { log_probs })
}
