//! Deterministic synthetic corpora for desk-scale experiments: proteins
//! assembled from mutated domain-family templates, and pseudo-word text
//! with Zipfian word frequencies.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::LogNormal;

use crate::corpus::{write_domains, write_fasta, DomainAnnotation, SequenceRecord};
use crate::error::{Error, Result};

/// Background amino-acid composition (percent).
const BACKGROUND: [(char, f64); 20] = [
    ('A', 8.25),
    ('R', 5.53),
    ('N', 4.06),
    ('D', 5.45),
    ('C', 1.37),
    ('Q', 3.93),
    ('E', 6.75),
    ('G', 7.07),
    ('H', 2.27),
    ('I', 5.96),
    ('L', 9.66),
    ('K', 5.84),
    ('M', 2.42),
    ('F', 3.86),
    ('P', 4.70),
    ('S', 6.56),
    ('T', 5.34),
    ('W', 1.08),
    ('Y', 2.92),
    ('V', 6.87),
];

const LOW_COMPLEXITY: [&str; 6] = ["Q", "P", "S", "G", "PS", "EK"];

#[derive(Debug, Clone, PartialEq)]
pub struct DeskConfig {
    pub seed: u64,
    pub train_proteins: usize,
    pub test_proteins: usize,
    pub families: usize,
    pub text_train: usize,
    pub text_test: usize,
    pub lexicon: usize,
}

impl Default for DeskConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            train_proteins: 15_000,
            test_proteins: 5_000,
            families: 400,
            text_train: 40_000,
            text_test: 10_000,
            lexicon: 30_000,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct DeskCorpus {
    pub train: Vec<SequenceRecord>,
    pub test: Vec<SequenceRecord>,
    /// Domains of the test split.
    pub domains: Vec<DomainAnnotation>,
    pub text_train: Vec<String>,
    pub text_test: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct DeskPaths {
    pub train_fasta: PathBuf,
    pub test_fasta: PathBuf,
    pub domains: PathBuf,
    pub text_train: PathBuf,
    pub text_test: PathBuf,
}

impl DeskPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            train_fasta: dir.join("train.fasta"),
            test_fasta: dir.join("test.fasta"),
            domains: dir.join("domains.tsv"),
            text_train: dir.join("text_train.txt"),
            text_test: dir.join("text_test.txt"),
        }
    }
}

struct ProteinSampler {
    residues: Vec<char>,
    background: WeightedIndex<f64>,
    families: Vec<Vec<char>>,
    family_weights: WeightedIndex<f64>,
    length: LogNormal<f64>,
}

impl ProteinSampler {
    fn new(rng: &mut ChaCha8Rng, families: usize) -> Self {
        let residues: Vec<char> = BACKGROUND.iter().map(|&(c, _)| c).collect();
        let background = WeightedIndex::new(BACKGROUND.iter().map(|&(_, w)| w)).expect("positive weights");
        let families: Vec<Vec<char>> = (0..families.max(1))
            .map(|_| {
                let len = rng.random_range(40..=150);
                (0..len).map(|_| residues[background.sample(rng)]).collect()
            })
            .collect();
        let family_weights = WeightedIndex::new((0..families.len()).map(|r| 1.0 / (r as f64 + 1.0).powf(0.8)))
            .expect("positive weights");
        Self {
            residues,
            background,
            families,
            family_weights,
            length: LogNormal::new(280f64.ln(), 0.75).expect("valid lognormal"),
        }
    }

    fn residue(&self, rng: &mut ChaCha8Rng) -> char {
        self.residues[self.background.sample(rng)]
    }

    fn instance(&self, rng: &mut ChaCha8Rng, family: usize) -> Vec<char> {
        let mut out = Vec::with_capacity(self.families[family].len() + 8);
        for &c in &self.families[family] {
            let u: f64 = rng.random();
            if u < 0.02 {
                continue;
            }
            if u < 0.04 {
                out.push(self.residue(rng));
            }
            out.push(if rng.random_bool(0.15) { self.residue(rng) } else { c });
        }
        out
    }

    fn sequence(&self, rng: &mut ChaCha8Rng) -> (String, Vec<(usize, usize, usize)>) {
        let target = (self.length.sample(rng).round() as usize).clamp(30, 3400);
        let k = match rng.random_range(0..20) {
            0..=4 => 0,
            5..=12 => 1,
            13..=17 => 2,
            _ => 3,
        };
        let mut domains: Vec<(usize, Vec<char>)> = Vec::new();
        let mut used = 0;
        for _ in 0..k {
            let fam = self.family_weights.sample(rng);
            let inst = self.instance(rng, fam);
            if used + inst.len() + 10 > target {
                break;
            }
            used += inst.len();
            domains.push((fam, inst));
        }
        let free = target - used;
        let mut cuts: Vec<usize> = (0..domains.len()).map(|_| rng.random_range(0..=free)).collect();
        cuts.sort_unstable();
        let mut linkers = Vec::with_capacity(domains.len() + 1);
        let mut prev = 0;
        for &c in &cuts {
            linkers.push(c - prev);
            prev = c;
        }
        linkers.push(free - prev);

        let mut seq: Vec<char> = Vec::with_capacity(target);
        let mut spans = Vec::new();
        let low_complexity = rng.random_bool(0.12).then(|| rng.random_range(0..linkers.len()));
        for (i, &len) in linkers.iter().enumerate() {
            let mut linker: Vec<char> = (0..len).map(|_| self.residue(rng)).collect();
            if low_complexity == Some(i) && len >= 12 {
                let unit: Vec<char> = LOW_COMPLEXITY[rng.random_range(0..LOW_COMPLEXITY.len())]
                    .chars()
                    .collect();
                let run = rng.random_range(10..=len.min(40));
                let at = rng.random_range(0..=len - run);
                for j in 0..run {
                    linker[at + j] = unit[j % unit.len()];
                }
            }
            seq.extend(linker);
            if let Some((fam, inst)) = domains.get(i) {
                let start = seq.len() + 1;
                seq.extend(inst);
                spans.push((*fam, start, seq.len()));
            }
        }
        (seq.into_iter().collect(), spans)
    }
}

const ONSETS: [&str; 24] = [
    "", "", "b", "c", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "st", "tr", "ch", "sh",
    "pl", "gr",
];
const NUCLEI: [&str; 9] = ["a", "e", "i", "o", "u", "a", "e", "ai", "ou"];
const CODAS: [&str; 12] = ["", "", "", "n", "r", "s", "t", "l", "m", "nd", "st", "ng"];

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    let syllables = match rng.random_range(0..10) {
        0..=2 => 1,
        3..=6 => 2,
        7..=8 => 3,
        _ => 4,
    };
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS[rng.random_range(0..ONSETS.len())]);
        w.push_str(NUCLEI[rng.random_range(0..NUCLEI.len())]);
        w.push_str(CODAS[rng.random_range(0..CODAS.len())]);
    }
    w
}

fn lexicon(rng: &mut ChaCha8Rng, size: usize) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    let mut words = Vec::with_capacity(size);
    let mut attempts = 0;
    while words.len() < size && attempts < size * 50 {
        attempts += 1;
        let w = pseudo_word(rng);
        if seen.insert(w.clone()) {
            words.push(w);
        }
    }
    // Shorter words take the frequent ranks, with some jitter.
    let mut keyed: Vec<(f64, String)> = words
        .into_iter()
        .map(|w| (w.len() as f64 + rng.random_range(0.0..4.0), w))
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, w)| w).collect()
}

fn sentence(rng: &mut ChaCha8Rng, words: &[String], weights: &WeightedIndex<f64>) -> String {
    let n = rng.random_range(4..=22);
    let mut out = String::new();
    for i in 0..n {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&words[weights.sample(rng)]);
        if i + 1 < n && rng.random_bool(0.06) {
            out.push(',');
        }
    }
    out.push('.');
    out
}

pub fn generate(config: &DeskConfig) -> DeskCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sampler = ProteinSampler::new(&mut rng, config.families);
    let mut corpus = DeskCorpus::default();
    for i in 0..config.train_proteins + config.test_proteins {
        let (residues, spans) = sampler.sequence(&mut rng);
        if i < config.train_proteins {
            corpus
                .train
                .push(SequenceRecord::new(format!("desk_tr_{:06}", i + 1), residues));
        } else {
            let id = format!("desk_te_{:06}", i + 1 - config.train_proteins);
            for (fam, start, end) in spans {
                corpus.domains.push(DomainAnnotation {
                    sequence_id: id.clone(),
                    name: format!("PF{:05}", fam + 1),
                    start,
                    end,
                });
            }
            corpus.test.push(SequenceRecord::new(id, residues));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7465_7874);
    let words = lexicon(&mut rng, config.lexicon.max(1));
    let weights = WeightedIndex::new((0..words.len()).map(|r| 1.0 / (r as f64 + 2.7))).expect("positive weights");
    corpus.text_train = (0..config.text_train)
        .map(|_| sentence(&mut rng, &words, &weights))
        .collect();
    corpus.text_test = (0..config.text_test)
        .map(|_| sentence(&mut rng, &words, &weights))
        .collect();
    corpus
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut w = create(path)?;
    for l in lines {
        writeln!(w, "{l}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_desk(dir: impl AsRef<Path>, corpus: &DeskCorpus) -> Result<DeskPaths> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = DeskPaths::in_dir(dir);
    for (path, records) in [(&paths.train_fasta, &corpus.train), (&paths.test_fasta, &corpus.test)] {
        let mut w = create(path)?;
        write_fasta(&mut w, records, 60).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    let mut w = create(&paths.domains)?;
    write_domains(&mut w, &corpus.domains).map_err(|e| Error::io(&paths.domains, e))?;
    w.flush().map_err(|e| Error::io(&paths.domains, e))?;
    write_lines(&paths.text_train, &corpus.text_train)?;
    write_lines(&paths.text_test, &corpus.text_test)?;
    Ok(paths)
}
