//! Tokenizer × vocabulary-size experiment grids written as CSV tables plus a
//! manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bpe::{train_bpe, truncate_bpe, BpeConfig};
use crate::corpus::{load_corpus, load_domains, CorpusConfig, DomainAnnotation, Mode, SequenceRecord};
use crate::domain_align::boundary_hits;
use crate::error::{Error, Result};
use crate::laws::{self, Checkpoints, MenzerathAxis, ZipfOptions};
use crate::metrics::{self, ExponenceOptions, OverlapMeasure};
use crate::table::AnalysisTable;
use crate::tokenizer::{count_pretokens, load_model, save_model, Segmentation, Tokenizer, TokenizerKind, Vocabulary};
use crate::unigram::{train_unigram, UnigramConfig};
use crate::wordpiece::{train_wordpiece, truncate_wordpiece, WordPieceConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Analysis {
    Overlap,
    Lengths,
    Fertility,
    Exponence,
    Domains,
    Zipf,
    Brevity,
    Heaps,
    Menzerath,
}

impl Analysis {
    pub const ALL: [Analysis; 9] = [
        Analysis::Overlap,
        Analysis::Lengths,
        Analysis::Fertility,
        Analysis::Exponence,
        Analysis::Domains,
        Analysis::Zipf,
        Analysis::Brevity,
        Analysis::Heaps,
        Analysis::Menzerath,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Analysis::Overlap => "overlap",
            Analysis::Lengths => "lengths",
            Analysis::Fertility => "fertility",
            Analysis::Exponence => "exponence",
            Analysis::Domains => "domains",
            Analysis::Zipf => "zipf",
            Analysis::Brevity => "brevity",
            Analysis::Heaps => "heaps",
            Analysis::Menzerath => "menzerath",
        }
    }
}

impl std::fmt::Display for Analysis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Analysis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Analysis::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown analysis `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HeapsCheckpoints {
    #[default]
    Geometric,
    PerSequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MenzerathX {
    #[default]
    Residues,
    Tokens,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OverlapKind {
    #[default]
    Shared,
    Jaccard,
}

/// Knobs shared by single analyses and grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisOptions {
    pub window_radius: usize,
    pub top_k: usize,
    pub exclude_self: bool,
    pub overlap: OverlapKind,
    pub zipf_min_rank: usize,
    pub zipf_max_rank: Option<usize>,
    pub heaps_checkpoints: HeapsCheckpoints,
    pub heaps_min_n: u64,
    pub menzerath_x: MenzerathX,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            window_radius: 2,
            top_k: 350,
            exclude_self: false,
            overlap: OverlapKind::Shared,
            zipf_min_rank: 1,
            zipf_max_rank: None,
            heaps_checkpoints: HeapsCheckpoints::Geometric,
            heaps_min_n: 1,
            menzerath_x: MenzerathX::Residues,
        }
    }
}

impl AnalysisOptions {
    fn exponence(&self) -> ExponenceOptions {
        ExponenceOptions {
            window_radius: self.window_radius,
            top_k: self.top_k,
            include_self: !self.exclude_self,
        }
    }

    fn zipf(&self) -> ZipfOptions {
        ZipfOptions {
            min_rank: self.zipf_min_rank,
            max_rank: self.zipf_max_rank,
        }
    }

    fn checkpoints(&self) -> Checkpoints {
        match self.heaps_checkpoints {
            HeapsCheckpoints::Geometric => Checkpoints::Geometric,
            HeapsCheckpoints::PerSequence => Checkpoints::PerSequence,
        }
    }

    fn axis(&self) -> MenzerathAxis {
        match self.menzerath_x {
            MenzerathX::Residues => MenzerathAxis::Residues,
            MenzerathX::Tokens => MenzerathAxis::Tokens,
        }
    }

    fn overlap_measure(&self) -> OverlapMeasure {
        match self.overlap {
            OverlapKind::Shared => OverlapMeasure::Shared,
            OverlapKind::Jaccard => OverlapMeasure::Jaccard,
        }
    }
}

/// Trainer hyperparameters beyond the vocabulary size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub max_token_length: Option<usize>,
    pub unigram_seed_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentGrid {
    pub tokenizers: Vec<TokenizerKind>,
    pub vocab_sizes: Vec<usize>,
    pub analyses: Vec<Analysis>,
    pub mode: Mode,
    pub train_corpus: Option<PathBuf>,
    pub test_corpus: PathBuf,
    pub domains: Option<PathBuf>,
    /// Directory of previously trained `<tokenizer>__v<size>.json` models.
    pub models_dir: Option<PathBuf>,
    pub train: bool,
    pub seed: u64,
    pub sample_size: Option<usize>,
    /// Length filter applied to the test corpus.
    pub max_length: Option<usize>,
    pub lowercase: bool,
    pub training: TrainOptions,
    pub options: AnalysisOptions,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        Self {
            tokenizers: TokenizerKind::ALL.to_vec(),
            vocab_sizes: vec![400, 800, 1600, 3200, 6400],
            analyses: Analysis::ALL.to_vec(),
            mode: Mode::Protein,
            train_corpus: None,
            test_corpus: PathBuf::new(),
            domains: None,
            models_dir: None,
            train: true,
            seed: 0,
            sample_size: None,
            max_length: Some(3000),
            lowercase: false,
            training: TrainOptions::default(),
            options: AnalysisOptions::default(),
        }
    }
}

impl ExperimentGrid {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.tokenizers.is_empty() || self.vocab_sizes.is_empty() || self.analyses.is_empty() {
            return Err(Error::Config("grid needs tokenizers, vocab_sizes and analyses".into()));
        }
        if self.vocab_sizes.contains(&0) {
            return Err(Error::Config("vocabulary sizes must be positive".into()));
        }
        if self.test_corpus.as_os_str().is_empty() {
            return Err(Error::Config("grid needs a test_corpus".into()));
        }
        if self.train && self.train_corpus.is_none() && self.models_dir.is_none() {
            return Err(Error::Config("training is enabled but no train_corpus is set".into()));
        }
        Ok(())
    }

    fn tokenizers(&self) -> Vec<TokenizerKind> {
        let mut t = self.tokenizers.clone();
        t.dedup();
        t
    }

    fn sizes(&self) -> Vec<usize> {
        let mut s = self.vocab_sizes.clone();
        s.sort_unstable();
        s.dedup();
        s
    }
}

/// `<analysis>__<tokenizer(s)>__v<size>.csv`
pub fn cell_file_name(table: &str, tokenizers: &[TokenizerKind], size: usize) -> String {
    let toks: Vec<&str> = tokenizers.iter().map(|t| t.as_str()).collect();
    format!("{table}__{}__v{size}.csv", toks.join("-"))
}

pub fn model_file_name(kind: TokenizerKind, size: usize) -> String {
    format!("{}__v{size}.json", kind.as_str())
}

/// Train one tokenizer at several sizes. Merge-based vocabularies for
/// smaller sizes are prefixes of the largest run.
pub fn train_ladder(
    kind: TokenizerKind,
    records: &[SequenceRecord],
    mode: Mode,
    sizes: &[usize],
    options: &TrainOptions,
) -> Vec<Result<Vocabulary>> {
    let Some(&largest) = sizes.iter().max() else {
        return Vec::new();
    };
    match kind {
        TokenizerKind::Bpe | TokenizerKind::WordPiece => {
            let pretokens = count_pretokens(records, mode);
            let full = if kind == TokenizerKind::Bpe {
                let mut c = BpeConfig::new(largest, mode);
                c.max_token_length = options.max_token_length;
                train_bpe(&pretokens, &c)
            } else {
                let mut c = WordPieceConfig::new(largest, mode);
                c.max_token_length = options.max_token_length;
                train_wordpiece(&pretokens, &c)
            };
            sizes
                .iter()
                .map(|&s| match &full {
                    Ok(v) if kind == TokenizerKind::Bpe => truncate_bpe(v, s),
                    Ok(v) => truncate_wordpiece(v, s),
                    Err(e) => Err(Error::Analysis(format!("training failed: {e}"))),
                })
                .collect()
        }
        TokenizerKind::Unigram => sizes
            .par_iter()
            .map(|&s| {
                let mut c = UnigramConfig::new(s, mode);
                c.seed_size = options.unigram_seed_size;
                c.max_piece_length = options.max_token_length.unwrap_or(c.max_piece_length);
                train_unigram(records, &c)
            })
            .collect(),
    }
}

/// Files produced by one analysis over one cell.
pub fn cell_tables(
    analysis: Analysis,
    vocab: &Vocabulary,
    segmentations: &[Segmentation],
    domains: Option<&[DomainAnnotation]>,
    options: &AnalysisOptions,
) -> Result<Vec<AnalysisTable>> {
    Ok(match analysis {
        Analysis::Overlap => {
            return Err(Error::Analysis(
                "overlap compares two vocabularies; use overlap_tables".into(),
            ))
        }
        Analysis::Lengths => {
            let corpus = metrics::corpus_length_stats(vocab, segmentations)?;
            let (summary, histogram) = metrics::length_tables(&metrics::vocab_length_stats(vocab), &corpus);
            vec![summary, histogram]
        }
        Analysis::Fertility => vec![metrics::fertility_table(&metrics::fertility(vocab, segmentations)?)],
        Analysis::Exponence => {
            let rows = metrics::contextual_exponence(vocab, segmentations, &options.exponence())?;
            vec![metrics::exponence_table(&rows)]
        }
        Analysis::Domains => {
            let annotations =
                domains.ok_or_else(|| Error::Analysis("domain analysis needs a domain annotation file".into()))?;
            let report = boundary_hits(segmentations, annotations);
            vec![report.rows_table(), report.summary_table()]
        }
        Analysis::Zipf => {
            let (rows, fit) = laws::zipf_fit(vocab, segmentations, &options.zipf())?;
            vec![laws::zipf_table(&rows), fit.table("zipf_fit")]
        }
        Analysis::Brevity => {
            let b = laws::brevity_tables(vocab, segmentations)?;
            vec![b.token_table(), b.length_table(), b.fit.table("brevity_fit")]
        }
        Analysis::Heaps => {
            let (curve, fit) = laws::heaps_fit(vocab, segmentations, options.checkpoints(), options.heaps_min_n)?;
            vec![laws::heaps_table(&curve), fit.table()]
        }
        Analysis::Menzerath => {
            let m = laws::menzerath_tables(vocab, segmentations, options.axis())?;
            vec![m.sequence_table(), m.bin_table(), m.fit.table("menzerath_fit")]
        }
    })
}

pub fn overlap_table(a: &Vocabulary, b: &Vocabulary, size: usize, options: &AnalysisOptions) -> Result<AnalysisTable> {
    let f = metrics::overlap(a, b, options.overlap_measure())?;
    Ok(metrics::overlap_table(&[(
        size,
        a.kind().to_string(),
        b.kind().to_string(),
        f,
    )]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub analysis: Analysis,
    pub tokenizers: Vec<TokenizerKind>,
    pub vocab_size: usize,
    pub status: CellStatus,
    pub files: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub config: ExperimentGrid,
    pub corpora: BTreeMap<String, CorpusDigest>,
    pub models: BTreeMap<String, String>,
    pub cells: Vec<CellRecord>,
    /// File name to sha256 of its contents.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| c.status == CellStatus::Failed).count()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn digest_file(path: &Path) -> Result<CorpusDigest> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(CorpusDigest {
        path: path.to_path_buf(),
        sha256: sha256_hex(&bytes),
    })
}

type Models = BTreeMap<(TokenizerKind, usize), std::result::Result<Vocabulary, String>>;

fn obtain_models(grid: &ExperimentGrid, train_records: Option<&[SequenceRecord]>) -> Models {
    let sizes = grid.sizes();
    let mut models = Models::new();
    type Ladder = Vec<(usize, std::result::Result<Vocabulary, String>)>;
    let per_kind: Vec<(TokenizerKind, Ladder)> = grid
        .tokenizers()
        .into_par_iter()
        .map(|kind| {
            let mut have: Vec<(usize, std::result::Result<Vocabulary, String>)> = Vec::new();
            let mut missing = Vec::new();
            for &s in &sizes {
                let from_dir = grid
                    .models_dir
                    .as_ref()
                    .map(|d| d.join(model_file_name(kind, s)))
                    .filter(|p| p.exists());
                match from_dir {
                    Some(p) => have.push((s, load_model(&p).map_err(|e| e.to_string()))),
                    None => missing.push(s),
                }
            }
            if !missing.is_empty() {
                match (grid.train, train_records) {
                    (true, Some(records)) => {
                        let trained = train_ladder(kind, records, grid.mode, &missing, &grid.training);
                        for (s, r) in missing.iter().zip(trained) {
                            have.push((*s, r.map_err(|e| e.to_string())));
                        }
                    }
                    _ => {
                        for s in missing {
                            have.push((
                                s,
                                Err(format!("no model for {kind} at size {s} and training is disabled")),
                            ));
                        }
                    }
                }
            }
            (kind, have)
        })
        .collect();
    for (kind, list) in per_kind {
        for (s, r) in list {
            models.insert((kind, s), r);
        }
    }
    models
}

/// Run every (analysis, tokenizer, size) cell and write CSVs, trained models
/// and `manifest.json` under `out_dir`. Failed cells are recorded and do not
/// stop the grid.
pub fn run_grid(grid: &ExperimentGrid, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    grid.validate()?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let models_out = out_dir.join("models");
    std::fs::create_dir_all(&models_out).map_err(|e| Error::io(&models_out, e))?;

    let mut corpora = BTreeMap::new();
    corpora.insert("test".to_string(), digest_file(&grid.test_corpus)?);
    let mut test_cfg = CorpusConfig::new(grid.mode);
    test_cfg.max_length = grid.max_length;
    test_cfg.lowercase = grid.lowercase;
    let test = load_corpus(&grid.test_corpus, &test_cfg)?;
    log::info!("test corpus: {} records ({} dropped)", test.records.len(), test.dropped);

    let train = match (&grid.train_corpus, grid.train) {
        (Some(path), true) => {
            corpora.insert("train".to_string(), digest_file(path)?);
            let mut cfg = CorpusConfig::new(grid.mode);
            cfg.sample_size = grid.sample_size;
            cfg.seed = grid.seed;
            cfg.lowercase = grid.lowercase;
            Some(load_corpus(path, &cfg)?)
        }
        _ => None,
    };
    let domains = match &grid.domains {
        Some(path) if grid.analyses.contains(&Analysis::Domains) => {
            corpora.insert("domains".to_string(), digest_file(path)?);
            let table = load_domains(path)?;
            if !table.errors.is_empty() {
                log::warn!(
                    "{}: {} malformed domain rows ignored",
                    path.display(),
                    table.errors.len()
                );
            }
            Some(table.annotations)
        }
        _ => None,
    };

    let models = obtain_models(grid, train.as_ref().map(|c| c.records.as_slice()));
    let mut model_digests = BTreeMap::new();
    for ((kind, size), m) in &models {
        if let Ok(v) = m {
            let name = model_file_name(*kind, *size);
            let path = models_out.join(&name);
            save_model(v, &path)?;
            model_digests.insert(name, sha256_hex(crate::tokenizer::render_model(v).as_bytes()));
        }
    }

    let needs_segs = grid.analyses.iter().any(|a| *a != Analysis::Overlap);
    let segmentations: BTreeMap<(TokenizerKind, usize), Vec<Segmentation>> = if needs_segs {
        models
            .iter()
            .filter_map(|(k, m)| m.as_ref().ok().map(|v| (*k, v)))
            .map(|(k, v)| (k, Tokenizer::new(v.clone()).encode_corpus(&test.records)))
            .collect()
    } else {
        BTreeMap::new()
    };

    let mut jobs: Vec<(Analysis, Vec<TokenizerKind>, usize)> = Vec::new();
    let kinds = grid.tokenizers();
    for &analysis in &grid.analyses {
        for &size in &grid.sizes() {
            if analysis == Analysis::Overlap {
                for i in 0..kinds.len() {
                    for j in i + 1..kinds.len() {
                        jobs.push((analysis, vec![kinds[i], kinds[j]], size));
                    }
                }
            } else {
                for &k in &kinds {
                    jobs.push((analysis, vec![k], size));
                }
            }
        }
    }

    let results: Vec<(CellRecord, Vec<(String, String)>)> = jobs
        .par_iter()
        .map(|(analysis, toks, size)| {
            let run = || -> std::result::Result<Vec<AnalysisTable>, String> {
                let vocab = |k: TokenizerKind| -> std::result::Result<&Vocabulary, String> {
                    models[&(k, *size)]
                        .as_ref()
                        .map_err(|e| format!("model {k} v{size}: {e}"))
                };
                if *analysis == Analysis::Overlap {
                    let t = overlap_table(vocab(toks[0])?, vocab(toks[1])?, *size, &grid.options)
                        .map_err(|e| e.to_string())?;
                    return Ok(vec![t]);
                }
                let v = vocab(toks[0])?;
                let segs = &segmentations[&(toks[0], *size)];
                cell_tables(*analysis, v, segs, domains.as_deref(), &grid.options).map_err(|e| e.to_string())
            };
            match run() {
                Ok(tables) => {
                    let files: Vec<(String, String)> = tables
                        .iter()
                        .map(|t| (cell_file_name(&t.name, toks, *size), t.to_csv()))
                        .collect();
                    let record = CellRecord {
                        analysis: *analysis,
                        tokenizers: toks.clone(),
                        vocab_size: *size,
                        status: CellStatus::Ok,
                        files: files.iter().map(|(n, _)| n.clone()).collect(),
                        error: None,
                    };
                    (record, files)
                }
                Err(e) => {
                    log::warn!("{analysis} {:?} v{size} failed: {e}", toks);
                    let record = CellRecord {
                        analysis: *analysis,
                        tokenizers: toks.clone(),
                        vocab_size: *size,
                        status: CellStatus::Failed,
                        files: Vec::new(),
                        error: Some(e),
                    };
                    (record, Vec::new())
                }
            }
        })
        .collect();

    let mut cells = Vec::with_capacity(results.len());
    let mut outputs = BTreeMap::new();
    for (record, files) in results {
        for (name, text) in files {
            let path = out_dir.join(&name);
            std::fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
            outputs.insert(name, sha256_hex(text.as_bytes()));
        }
        cells.push(record);
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: grid.seed,
        config: grid.clone(),
        corpora,
        models: model_digests,
        cells,
        outputs,
    };
    let path = out_dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serialization");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
