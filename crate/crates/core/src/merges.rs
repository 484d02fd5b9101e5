//! Pair-merge learning shared by the BPE and WordPiece trainers.
//!
//! The corpus is kept as one doubly linked symbol list per distinct
//! pre-token. Pair counts, pair occurrence lists and per-symbol counts are
//! maintained incrementally; a lazily invalidated max-heap yields the best
//! pair. The result is identical to recounting every adjacent pair from
//! scratch before each merge.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;

use rustc_hash::{FxHashMap, FxHashSet};

use crate::error::{Error, Result};

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Criterion {
    /// Pair count.
    Frequency,
    /// count(pair) / (count(left) * count(right)).
    Likelihood,
}

pub(crate) struct MergeConfig<'a> {
    pub target: usize,
    pub criterion: Criterion,
    pub marker: Option<&'a str>,
    pub max_token_length: Option<usize>,
}

#[derive(Debug)]
pub(crate) struct MergeResult {
    /// Symbol surfaces by id; the sorted initial symbols come first.
    pub symbols: Vec<String>,
    pub merges: Vec<(u32, u32)>,
    pub exhausted: bool,
}

/// Exact rational score `num / den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Score {
    num: u64,
    den: u128,
}

impl Ord for Score {
    fn cmp(&self, other: &Self) -> Ordering {
        match (
            (self.num as u128).checked_mul(other.den),
            (other.num as u128).checked_mul(self.den),
        ) {
            (Some(a), Some(b)) => a.cmp(&b),
            _ => {
                let a = self.num as f64 / self.den as f64;
                let b = other.num as f64 / other.den as f64;
                a.total_cmp(&b)
            }
        }
    }
}

impl PartialOrd for Score {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Entry {
    score: Score,
    left: Rc<str>,
    right: Rc<str>,
    pair: (u32, u32),
}

impl Ord for Entry {
    // Max-heap: best score first, then the lexicographically smallest pair.
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .cmp(&other.score)
            .then_with(|| other.left.cmp(&self.left))
            .then_with(|| other.right.cmp(&self.right))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

struct State<'a> {
    config: &'a MergeConfig<'a>,
    surfaces: Vec<Rc<str>>,
    stripped_len: Vec<usize>,
    lookup: FxHashMap<Rc<str>, u32>,
    sym: Vec<u32>,
    prev: Vec<u32>,
    next: Vec<u32>,
    weight: Vec<u64>,
    pair_count: FxHashMap<(u32, u32), u64>,
    occurrences: FxHashMap<(u32, u32), Vec<u32>>,
    sym_count: Vec<u64>,
    right_of: Vec<FxHashSet<u32>>,
    left_of: Vec<FxHashSet<u32>>,
    heap: BinaryHeap<Entry>,
}

impl<'a> State<'a> {
    fn score(&self, pair: (u32, u32), count: u64) -> Score {
        match self.config.criterion {
            Criterion::Frequency => Score { num: count, den: 1 },
            Criterion::Likelihood => Score {
                num: count,
                den: self.sym_count[pair.0 as usize] as u128 * self.sym_count[pair.1 as usize] as u128,
            },
        }
    }

    fn within_cap(&self, pair: (u32, u32)) -> bool {
        self.config
            .max_token_length
            .is_none_or(|cap| self.stripped_len[pair.0 as usize] + self.stripped_len[pair.1 as usize] <= cap)
    }

    fn push(&mut self, pair: (u32, u32)) {
        let count = self.pair_count.get(&pair).copied().unwrap_or(0);
        if count < 2 || !self.within_cap(pair) {
            return;
        }
        let entry = Entry {
            score: self.score(pair, count),
            left: self.surfaces[pair.0 as usize].clone(),
            right: self.surfaces[pair.1 as usize].clone(),
            pair,
        };
        self.heap.push(entry);
    }

    fn is_current(&self, entry: &Entry) -> bool {
        let count = self.pair_count.get(&entry.pair).copied().unwrap_or(0);
        count >= 2 && self.score(entry.pair, count) == entry.score
    }

    fn add(&mut self, pair: (u32, u32), w: u64) {
        let c = self.pair_count.entry(pair).or_insert(0);
        if *c == 0 {
            self.right_of[pair.0 as usize].insert(pair.1);
            self.left_of[pair.1 as usize].insert(pair.0);
        }
        *c += w;
    }

    fn remove(&mut self, pair: (u32, u32), w: u64) {
        let c = self.pair_count.get_mut(&pair).expect("pair count underflow");
        *c -= w;
        if *c == 0 {
            self.pair_count.remove(&pair);
            self.right_of[pair.0 as usize].remove(&pair.1);
            self.left_of[pair.1 as usize].remove(&pair.0);
        }
    }

    fn intern(&mut self, surface: String) -> u32 {
        if let Some(&id) = self.lookup.get(surface.as_str()) {
            return id;
        }
        let id = self.surfaces.len() as u32;
        let rc: Rc<str> = surface.into();
        let len = strip(&rc, self.config.marker).chars().count();
        self.lookup.insert(rc.clone(), id);
        self.surfaces.push(rc);
        self.stripped_len.push(len);
        self.sym_count.push(0);
        self.right_of.push(FxHashSet::default());
        self.left_of.push(FxHashSet::default());
        id
    }

    fn pop_best(&mut self) -> Option<(u32, u32)> {
        while let Some(entry) = self.heap.pop() {
            if self.is_current(&entry) {
                return Some(entry.pair);
            }
        }
        None
    }

    fn apply(&mut self, (a, b): (u32, u32)) {
        let surface = format!(
            "{}{}",
            self.surfaces[a as usize],
            strip(&self.surfaces[b as usize], self.config.marker)
        );
        let ab = self.intern(surface);

        let mut positions = self.occurrences.remove(&(a, b)).unwrap_or_default();
        positions.sort_unstable();
        positions.dedup();

        let mut touched: FxHashSet<(u32, u32)> = FxHashSet::default();
        for p in positions {
            let p = p as usize;
            if self.sym[p] != a {
                continue;
            }
            let q = self.next[p];
            if q == NONE || self.sym[q as usize] != b {
                continue;
            }
            let q = q as usize;
            let w = self.weight[p];

            self.remove((a, b), w);
            touched.insert((a, b));
            let r = self.prev[p];
            if r != NONE {
                let left = self.sym[r as usize];
                self.remove((left, a), w);
                self.add((left, ab), w);
                self.occurrences.entry((left, ab)).or_default().push(r);
                touched.insert((left, a));
                touched.insert((left, ab));
            }
            let s = self.next[q];
            if s != NONE {
                let right = self.sym[s as usize];
                self.remove((b, right), w);
                self.add((ab, right), w);
                self.occurrences.entry((ab, right)).or_default().push(p as u32);
                touched.insert((b, right));
                touched.insert((ab, right));
            }
            self.sym_count[a as usize] -= w;
            self.sym_count[b as usize] -= w;
            self.sym_count[ab as usize] += w;

            self.sym[p] = ab;
            self.sym[q] = NONE;
            self.next[p] = s;
            if s != NONE {
                self.prev[s as usize] = p as u32;
            }
        }

        if self.config.criterion == Criterion::Likelihood {
            // Symbol counts of a, b and ab changed, which re-scores every live
            // pair that contains them.
            for x in [a, b, ab] {
                touched.extend(self.right_of[x as usize].iter().map(|&r| (x, r)));
                touched.extend(self.left_of[x as usize].iter().map(|&l| (l, x)));
            }
        }
        let mut touched: Vec<(u32, u32)> = touched.into_iter().collect();
        touched.sort_unstable();
        for pair in touched {
            self.push(pair);
        }

        if self.heap.len() > 4 * self.pair_count.len() + 4096 {
            self.rebuild_heap();
        }
    }

    fn rebuild_heap(&mut self) {
        let mut live: Vec<(u32, u32)> = self.pair_count.keys().copied().collect();
        live.sort_unstable();
        self.heap.clear();
        for pair in live {
            self.push(pair);
        }
    }
}

pub(crate) fn strip<'s>(surface: &'s str, marker: Option<&str>) -> &'s str {
    match marker {
        Some(m) => surface.strip_prefix(m).unwrap_or(surface),
        None => surface,
    }
}

/// Initial symbol surfaces of a pre-token.
pub(crate) fn initial_symbols(word: &str, marker: Option<&str>) -> Vec<String> {
    word.chars()
        .enumerate()
        .map(|(i, c)| match marker {
            Some(m) if i > 0 => format!("{m}{c}"),
            _ => c.to_string(),
        })
        .collect()
}

pub(crate) fn learn_merges(words: &[(&str, u64)], config: &MergeConfig<'_>) -> Result<MergeResult> {
    let mut alphabet: Vec<String> = words
        .iter()
        .flat_map(|(w, _)| initial_symbols(w, config.marker))
        .collect::<FxHashSet<_>>()
        .into_iter()
        .collect();
    alphabet.sort_unstable();
    if config.target < alphabet.len() {
        return Err(Error::Config(format!(
            "target vocabulary {} is smaller than the alphabet ({} symbols)",
            config.target,
            alphabet.len()
        )));
    }

    let total: usize = words.iter().map(|(w, _)| w.chars().count()).sum();
    let mut state = State {
        config,
        surfaces: Vec::new(),
        stripped_len: Vec::new(),
        lookup: FxHashMap::default(),
        sym: Vec::with_capacity(total),
        prev: Vec::with_capacity(total),
        next: Vec::with_capacity(total),
        weight: Vec::with_capacity(total),
        pair_count: FxHashMap::default(),
        occurrences: FxHashMap::default(),
        sym_count: Vec::new(),
        right_of: Vec::new(),
        left_of: Vec::new(),
        heap: BinaryHeap::new(),
    };
    for s in &alphabet {
        state.intern(s.clone());
    }

    for &(word, w) in words {
        if w == 0 {
            continue;
        }
        let start = state.sym.len();
        for (i, s) in initial_symbols(word, config.marker).into_iter().enumerate() {
            let id = state.lookup[s.as_str()];
            let pos = (start + i) as u32;
            state.sym.push(id);
            state.prev.push(if i == 0 { NONE } else { pos - 1 });
            state.next.push(NONE);
            state.weight.push(w);
            state.sym_count[id as usize] += w;
            if i > 0 {
                state.next[pos as usize - 1] = pos;
                let pair = (state.sym[pos as usize - 1], id);
                state.add(pair, w);
                state.occurrences.entry(pair).or_default().push(pos - 1);
            }
        }
    }
    state.rebuild_heap();

    let mut merges = Vec::new();
    let mut exhausted = false;
    while state.surfaces.len() < config.target {
        match state.pop_best() {
            Some(pair) => {
                merges.push(pair);
                state.apply(pair);
            }
            None => {
                exhausted = true;
                log::warn!(
                    "no pair with count >= 2 remains; stopping at {} of {} symbols",
                    state.surfaces.len(),
                    config.target
                );
                break;
            }
        }
    }

    Ok(MergeResult {
        symbols: state.surfaces.iter().map(|s| s.to_string()).collect(),
        merges,
        exhausted,
    })
}
