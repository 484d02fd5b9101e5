use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use protoken::corpus::{load_corpus, load_domains, write_fasta};
use protoken::desk::{self, DeskConfig};
use protoken::report::{
    self, cell_file_name, cell_tables, overlap_table, train_ladder, Analysis, AnalysisOptions, ExperimentGrid,
    HeapsCheckpoints, Manifest, MenzerathX, OverlapKind, TrainOptions,
};
use protoken::segments::{decode_line, parse_segment_line, write_segmentations};
use protoken::tokenizer::{load_model, save_model};
use protoken::{CorpusConfig, Error, Mode, SequenceRecord, Tokenizer, TokenizerKind, Vocabulary};

#[derive(Parser)]
#[command(
    name = "protoken",
    version,
    about = "Train subword tokenizers and analyse how they segment protein and text corpora"
)]
struct Cli {
    /// Worker threads (default: available parallelism). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More logging; repeat for debug output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one tokenizer and write its model file.
    Train(TrainArgs),
    /// Segment a corpus into a `id<TAB>surface:start-end ...` stream.
    Encode(EncodeArgs),
    /// Rebuild sequences from a segmentation stream.
    Decode(DecodeArgs),
    /// Run one analysis over one model (two for overlap).
    Analyze(AnalyzeArgs),
    /// Run a full tokenizer × vocabulary-size × analysis grid.
    Report(ReportArgs),
    /// Write the synthetic desk corpus (FASTA, domains, text).
    GenerateDesk(DeskArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Bpe,
    Wordpiece,
    Unigram,
}

impl From<Method> for TokenizerKind {
    fn from(m: Method) -> Self {
        match m {
            Method::Bpe => TokenizerKind::Bpe,
            Method::Wordpiece => TokenizerKind::WordPiece,
            Method::Unigram => TokenizerKind::Unigram,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Protein,
    Text,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Protein => Mode::Protein,
            ModeArg::Text => Mode::Text,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AnalysisArg {
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

impl From<AnalysisArg> for Analysis {
    fn from(a: AnalysisArg) -> Self {
        match a {
            AnalysisArg::Overlap => Analysis::Overlap,
            AnalysisArg::Lengths => Analysis::Lengths,
            AnalysisArg::Fertility => Analysis::Fertility,
            AnalysisArg::Exponence => Analysis::Exponence,
            AnalysisArg::Domains => Analysis::Domains,
            AnalysisArg::Zipf => Analysis::Zipf,
            AnalysisArg::Brevity => Analysis::Brevity,
            AnalysisArg::Heaps => Analysis::Heaps,
            AnalysisArg::Menzerath => Analysis::Menzerath,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckpointArg {
    Geometric,
    PerSequence,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Residues,
    Tokens,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    method: Method,
    #[arg(long)]
    vocab_size: usize,
    /// Defaults to the config file's mode, else protein.
    #[arg(long)]
    mode: Option<ModeArg>,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Train on a uniform sample of this many records.
    #[arg(long)]
    sample_size: Option<usize>,
    /// Drop training records longer than this.
    #[arg(long)]
    max_length: Option<usize>,
    /// Lowercase text corpora.
    #[arg(long)]
    lowercase: bool,
    #[arg(long)]
    max_token_length: Option<usize>,
    /// Unigram seed vocabulary size.
    #[arg(long)]
    seed_size: Option<usize>,
    /// Grid TOML supplying defaults for mode, seed, sampling and trainer settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Output path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    max_length: Option<usize>,
    #[arg(long)]
    lowercase: bool,
}

#[derive(Args)]
struct DecodeArgs {
    /// Model that produced the stream.
    #[arg(long)]
    model: PathBuf,
    /// Segmentation stream from `encode`.
    #[arg(long)]
    segments: PathBuf,
    /// FASTA for protein models, one line per record for text; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Default)]
struct AnalysisFlags {
    /// Tokens on each side of the centre for exponence contexts.
    #[arg(long)]
    window_radius: Option<usize>,
    /// Rows kept in ranked exponence output.
    #[arg(long)]
    top_k: Option<usize>,
    /// Leave the centre token out of its own context.
    #[arg(long)]
    exclude_self: bool,
    /// Report Jaccard overlap instead of shared / max size.
    #[arg(long)]
    jaccard: bool,
    /// Rank window used for the Zipf fit.
    #[arg(long)]
    zipf_min_rank: Option<usize>,
    #[arg(long)]
    zipf_max_rank: Option<usize>,
    #[arg(long)]
    heaps_checkpoints: Option<CheckpointArg>,
    /// Fit Heaps only on points with at least this many tokens.
    #[arg(long)]
    heaps_min_n: Option<u64>,
    /// Construct length measured in residues or tokens.
    #[arg(long)]
    menzerath_x: Option<AxisArg>,
}

impl AnalysisFlags {
    fn apply(&self, o: &mut AnalysisOptions) {
        if let Some(v) = self.window_radius {
            o.window_radius = v;
        }
        if let Some(v) = self.top_k {
            o.top_k = v;
        }
        if self.exclude_self {
            o.exclude_self = true;
        }
        if self.jaccard {
            o.overlap = OverlapKind::Jaccard;
        }
        if let Some(v) = self.zipf_min_rank {
            o.zipf_min_rank = v;
        }
        if let Some(v) = self.zipf_max_rank {
            o.zipf_max_rank = Some(v);
        }
        if let Some(v) = self.heaps_checkpoints {
            o.heaps_checkpoints = match v {
                CheckpointArg::Geometric => HeapsCheckpoints::Geometric,
                CheckpointArg::PerSequence => HeapsCheckpoints::PerSequence,
            };
        }
        if let Some(v) = self.heaps_min_n {
            o.heaps_min_n = v;
        }
        if let Some(v) = self.menzerath_x {
            o.menzerath_x = match v {
                AxisArg::Residues => MenzerathX::Residues,
                AxisArg::Tokens => MenzerathX::Tokens,
            };
        }
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    analysis: AnalysisArg,
    /// Model file; give two for overlap.
    #[arg(long, required = true)]
    model: Vec<PathBuf>,
    /// Corpus to segment (not needed for overlap).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Domain TSV for the domains analysis.
    #[arg(long)]
    domains: Option<PathBuf>,
    #[arg(long)]
    max_length: Option<usize>,
    #[arg(long)]
    lowercase: bool,
    /// Grid TOML supplying analysis options.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    flags: AnalysisFlags,
}

#[derive(Args)]
struct ReportArgs {
    /// Grid TOML.
    #[arg(long, conflicts_with = "from_manifest")]
    config: Option<PathBuf>,
    /// Rerun the grid recorded in a previous manifest.json.
    #[arg(long)]
    from_manifest: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    tokenizers: Option<Vec<Method>>,
    /// Comma-separated, e.g. 400,800,1600.
    #[arg(long, value_delimiter = ',')]
    vocab_sizes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    analyses: Option<Vec<AnalysisArg>>,
    #[arg(long)]
    mode: Option<ModeArg>,
    #[arg(long)]
    train_corpus: Option<PathBuf>,
    /// Corpus every analysis is computed on.
    #[arg(long, visible_alias = "test-corpus")]
    corpus: Option<PathBuf>,
    #[arg(long)]
    domains: Option<PathBuf>,
    /// Reuse `<tokenizer>__v<size>.json` models found here.
    #[arg(long)]
    models_dir: Option<PathBuf>,
    /// Never train; every model must come from --models-dir.
    #[arg(long)]
    no_train: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sample_size: Option<usize>,
    #[arg(long)]
    max_length: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    flags: AnalysisFlags,
}

#[derive(Args)]
struct DeskArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train_proteins: Option<usize>,
    #[arg(long)]
    test_proteins: Option<usize>,
    #[arg(long)]
    families: Option<usize>,
    #[arg(long)]
    text_train: Option<usize>,
    #[arg(long)]
    text_test: Option<usize>,
    #[arg(long)]
    lexicon: Option<usize>,
}

enum CliError {
    Usage(&'static str, String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => CliError::Usage("config", m),
            e => CliError::Run(e),
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

fn input(path: &Path) -> CliResult<&Path> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::Usage(
            "missing-input",
            format!("{}: no such file", path.display()),
        ))
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| {
        CliError::Run(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(io_err(p))?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn load_config(path: Option<&Path>) -> CliResult<ExperimentGrid> {
    match path {
        Some(p) => Ok(ExperimentGrid::load(input(p)?)?),
        None => Ok(ExperimentGrid::default()),
    }
}

fn model(path: &Path) -> CliResult<Vocabulary> {
    Ok(load_model(input(path)?)?)
}

fn cmd_train(a: TrainArgs) -> CliResult {
    let file = load_config(a.config.as_deref())?;
    let mode = a.mode.map(Mode::from).unwrap_or(file.mode);
    let mut cfg = CorpusConfig::new(mode);
    cfg.seed = a.seed.unwrap_or(file.seed);
    cfg.sample_size = a.sample_size.or(file.sample_size);
    cfg.max_length = a.max_length;
    cfg.lowercase = a.lowercase || file.lowercase;
    let corpus = load_corpus(input(&a.corpus)?, &cfg)?;
    if corpus.records.is_empty() {
        return Err(CliError::Run(Error::Analysis(format!(
            "{}: no usable records",
            a.corpus.display()
        ))));
    }
    log::info!(
        "training on {} records ({} dropped)",
        corpus.records.len(),
        corpus.dropped
    );
    let options = TrainOptions {
        max_token_length: a.max_token_length.or(file.training.max_token_length),
        unigram_seed_size: a.seed_size.or(file.training.unigram_seed_size),
    };
    let vocab = train_ladder(a.method.into(), &corpus.records, mode, &[a.vocab_size], &options)
        .pop()
        .expect("one size requested")?;
    save_model(&vocab, &a.out)?;
    Ok(())
}

fn cmd_encode(a: EncodeArgs) -> CliResult {
    let vocab = model(&a.model)?;
    let mut cfg = CorpusConfig::new(vocab.mode());
    cfg.max_length = a.max_length;
    cfg.lowercase = a.lowercase;
    let corpus = load_corpus(input(&a.corpus)?, &cfg)?;
    let tokenizer = Tokenizer::new(vocab);
    let segs = tokenizer.encode_corpus(&corpus.records);
    let target = a.out.as_deref();
    let out = output(target)?;
    write_segmentations(out, tokenizer.vocab(), &segs).map_err(io_err(target.unwrap_or(Path::new("<stdout>"))))?;
    Ok(())
}

fn cmd_decode(a: DecodeArgs) -> CliResult {
    let vocab = model(&a.model)?;
    let path = input(&a.segments)?;
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.is_empty() {
            continue;
        }
        let parsed = parse_segment_line(&line).map_err(|message| {
            CliError::Run(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            })
        })?;
        let text = decode_line(&parsed, vocab.continuation_marker())?;
        records.push(SequenceRecord::new(parsed.sequence_id, text));
    }
    let target = a.out.as_deref();
    let mut out = output(target)?;
    let err = io_err(target.unwrap_or(Path::new("<stdout>")));
    let written = match vocab.mode() {
        Mode::Protein => write_fasta(&mut out, &records, 60),
        Mode::Text => records.iter().try_for_each(|r| writeln!(out, "{}", r.residues)),
    };
    written.and_then(|_| out.flush()).map_err(err)
}

fn write_tables(dir: &Path, tables: &[protoken::AnalysisTable], toks: &[TokenizerKind], size: usize) -> CliResult {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    for t in tables {
        let path = dir.join(cell_file_name(&t.name, toks, size));
        t.write_csv(&path)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_analyze(a: AnalyzeArgs) -> CliResult {
    let file = load_config(a.config.as_deref())?;
    let mut options = file.options.clone();
    a.flags.apply(&mut options);
    let analysis = Analysis::from(a.analysis);
    let models = a.model.iter().map(|p| model(p)).collect::<CliResult<Vec<_>>>()?;

    if analysis == Analysis::Overlap {
        let [x, y] = models.as_slice() else {
            return Err(CliError::Usage(
                "usage",
                "overlap needs exactly two --model files".into(),
            ));
        };
        let table = overlap_table(x, y, x.size(), &options)?;
        return write_tables(&a.out_dir, &[table], &[x.kind(), y.kind()], x.size());
    }
    let [vocab] = models.as_slice() else {
        return Err(CliError::Usage("usage", format!("{analysis} takes a single --model")));
    };
    let corpus_path = a
        .corpus
        .as_deref()
        .ok_or_else(|| CliError::Usage("usage", format!("{analysis} needs --corpus")))?;
    let mut cfg = CorpusConfig::new(vocab.mode());
    cfg.max_length = a.max_length.or(file.max_length);
    cfg.lowercase = a.lowercase || file.lowercase;
    let corpus = load_corpus(input(corpus_path)?, &cfg)?;
    let domains = match (analysis, a.domains.as_deref().or(file.domains.as_deref())) {
        (Analysis::Domains, Some(p)) => {
            let table = load_domains(input(p)?)?;
            if !table.errors.is_empty() {
                log::warn!("{}: {} malformed domain rows ignored", p.display(), table.errors.len());
            }
            Some(table.annotations)
        }
        (Analysis::Domains, None) => {
            return Err(CliError::Usage("usage", "domains needs --domains".into()));
        }
        _ => None,
    };
    let segs = Tokenizer::new(vocab.clone()).encode_corpus(&corpus.records);
    let tables = cell_tables(analysis, vocab, &segs, domains.as_deref(), &options)?;
    write_tables(&a.out_dir, &tables, &[vocab.kind()], vocab.size())
}

fn cmd_report(a: ReportArgs) -> CliResult {
    let mut grid = match (&a.config, &a.from_manifest) {
        (_, Some(m)) => Manifest::load(input(m)?)?.config,
        (c, None) => load_config(c.as_deref())?,
    };
    if let Some(t) = &a.tokenizers {
        grid.tokenizers = t.iter().map(|&m| m.into()).collect();
    }
    if let Some(s) = &a.vocab_sizes {
        grid.vocab_sizes = s.clone();
    }
    if let Some(x) = &a.analyses {
        grid.analyses = x.iter().map(|&m| m.into()).collect();
    }
    if let Some(m) = a.mode {
        grid.mode = m.into();
    }
    if let Some(p) = a.train_corpus {
        grid.train_corpus = Some(p);
    }
    if let Some(p) = a.corpus {
        grid.test_corpus = p;
    }
    if let Some(p) = a.domains {
        grid.domains = Some(p);
    }
    if let Some(p) = a.models_dir {
        grid.models_dir = Some(p);
    }
    if a.no_train {
        grid.train = false;
    }
    if let Some(s) = a.seed {
        grid.seed = s;
    }
    if let Some(s) = a.sample_size {
        grid.sample_size = Some(s);
    }
    if let Some(m) = a.max_length {
        grid.max_length = Some(m);
    }
    a.flags.apply(&mut grid.options);
    grid.validate()?;
    for p in [
        Some(&grid.test_corpus),
        grid.train_corpus.as_ref().filter(|_| grid.train),
        grid.domains.as_ref(),
    ]
    .into_iter()
    .flatten()
    {
        input(p)?;
    }
    let manifest = report::run_grid(&grid, &a.out_dir)?;
    let failed = manifest.failed();
    log::info!("{} cells, {} failed", manifest.cells.len(), failed);
    if failed > 0 {
        return Err(CliError::Run(Error::Analysis(format!(
            "{failed} of {} cells failed; see manifest.json",
            manifest.cells.len()
        ))));
    }
    Ok(())
}

fn cmd_generate_desk(a: DeskArgs) -> CliResult {
    let d = DeskConfig::default();
    let config = DeskConfig {
        seed: a.seed.unwrap_or(d.seed),
        train_proteins: a.train_proteins.unwrap_or(d.train_proteins),
        test_proteins: a.test_proteins.unwrap_or(d.test_proteins),
        families: a.families.unwrap_or(d.families),
        text_train: a.text_train.unwrap_or(d.text_train),
        text_test: a.text_test.unwrap_or(d.text_test),
        lexicon: a.lexicon.unwrap_or(d.lexicon),
    };
    let corpus = desk::generate(&config);
    let paths = desk::write_desk(&a.out_dir, &corpus)?;
    for p in [
        &paths.train_fasta,
        &paths.test_fasta,
        &paths.domains,
        &paths.text_train,
        &paths.text_test,
    ] {
        println!("{}", p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("usage", "--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage("usage", e.to_string()))?;
    }
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Encode(a) => cmd_encode(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Report(a) => cmd_report(a),
        Command::GenerateDesk(a) => cmd_generate_desk(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(kind, msg)) => {
            eprintln!("protoken: error[{kind}]: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(e)) => {
            eprintln!("protoken: error[{}]: {}", e.kind(), e.to_string().replace('\n', " "));
            ExitCode::from(1)
        }
    }
}
