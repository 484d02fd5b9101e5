//! Corpus ingestion: FASTA and line-per-record text loaders, seeded reservoir
//! sampling, and domain annotation tables.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Amino-acid letters accepted without warning: the 20 standard residues plus
/// the ambiguity / rare codes B, Z, X, U, O, J.
pub const PROTEIN_ALPHABET: &str = "ACDEFGHIKLMNPQRSTVWYBZXUOJ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Protein,
    Text,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Protein => "protein",
            Mode::Text => "text",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "protein" => Ok(Mode::Protein),
            "text" => Ok(Mode::Text),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceRecord {
    pub id: String,
    pub residues: String,
}

impl SequenceRecord {
    pub fn new(id: impl Into<String>, residues: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            residues: residues.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub mode: Mode,
    /// Records longer than this many characters are dropped.
    pub max_length: Option<usize>,
    pub sample_size: Option<usize>,
    pub seed: u64,
    /// Text mode only.
    pub lowercase: bool,
}

impl CorpusConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            max_length: None,
            sample_size: None,
            seed: 0,
            lowercase: false,
        }
    }

    fn accepts(&self, residues: &str) -> bool {
        !residues.is_empty() && self.max_length.is_none_or(|max| residues.chars().count() <= max)
    }
}

/// A fully loaded (and optionally sampled) corpus.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub records: Vec<SequenceRecord>,
    /// Entries removed by the length filter or because they were empty.
    pub dropped: usize,
    /// Protein records containing letters outside [`PROTEIN_ALPHABET`].
    pub nonstandard: usize,
}

impl Corpus {
    pub fn total_residues(&self) -> usize {
        self.records.iter().map(|r| r.residues.chars().count()).sum()
    }
}

/// Streaming FASTA reader. Multi-line bodies are concatenated and the id is
/// the first whitespace-delimited field of the header.
pub struct FastaReader<R> {
    reader: R,
    path: PathBuf,
    config: CorpusConfig,
    line_no: usize,
    pending_header: Option<(String, usize)>,
    seen: HashSet<String>,
    dropped: usize,
    nonstandard: usize,
    done: bool,
    buf: String,
}

impl FastaReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>, config: &CorpusConfig) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(BufReader::new(file), path, config))
    }
}

impl<R: BufRead> FastaReader<R> {
    pub fn new(reader: R, path: impl Into<PathBuf>, config: &CorpusConfig) -> Self {
        Self {
            reader,
            path: path.into(),
            config: config.clone(),
            line_no: 0,
            pending_header: None,
            seen: HashSet::new(),
            dropped: 0,
            nonstandard: 0,
            done: false,
            buf: String::new(),
        }
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn nonstandard(&self) -> usize {
        self.nonstandard
    }

    fn parse_error(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    fn read_line(&mut self) -> Result<bool> {
        self.buf.clear();
        let n = self
            .reader
            .read_line(&mut self.buf)
            .map_err(|e| Error::io(&self.path, e))?;
        if n > 0 {
            self.line_no += 1;
        }
        Ok(n > 0)
    }

    fn header_id(&self, line: &str) -> Result<String> {
        line[1..]
            .split_whitespace()
            .next()
            .map(str::to_string)
            .ok_or_else(|| self.parse_error(self.line_no, "FASTA header without identifier"))
    }

    fn next_entry(&mut self) -> Result<Option<SequenceRecord>> {
        loop {
            if self.done {
                return Ok(None);
            }
            let (id, header_line) = match self.pending_header.take() {
                Some(h) => h,
                None => loop {
                    if !self.read_line()? {
                        self.done = true;
                        return Ok(None);
                    }
                    let line = self.buf.trim_end();
                    if line.is_empty() {
                        continue;
                    }
                    if !line.starts_with('>') {
                        return Err(self.parse_error(self.line_no, "sequence data before the first '>' header"));
                    }
                    let line = line.to_string();
                    break (self.header_id(&line)?, self.line_no);
                },
            };

            let mut residues = String::new();
            loop {
                if !self.read_line()? {
                    self.done = true;
                    break;
                }
                let line = self.buf.trim_end();
                if line.starts_with('>') {
                    let line = line.to_string();
                    self.pending_header = Some((self.header_id(&line)?, self.line_no));
                    break;
                }
                residues.extend(line.chars().filter(|c| !c.is_whitespace()));
            }

            if !self.seen.insert(id.clone()) {
                return Err(self.parse_error(header_line, format!("duplicate sequence id `{id}`")));
            }
            if !self.config.accepts(&residues) {
                self.dropped += 1;
                continue;
            }
            if self.config.mode == Mode::Protein && residues.chars().any(|c| !PROTEIN_ALPHABET.contains(c)) {
                self.nonstandard += 1;
                log::warn!(
                    "{}:{}: sequence `{id}` contains non-standard residue letters",
                    self.path.display(),
                    header_line
                );
            }
            return Ok(Some(SequenceRecord { id, residues }));
        }
    }
}

impl<R: BufRead> Iterator for FastaReader<R> {
    type Item = Result<SequenceRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.next_entry() {
            Ok(Some(r)) => Some(Ok(r)),
            Ok(None) => None,
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Load a FASTA file, applying the length filter and optional sampling.
pub fn load_fasta(path: impl AsRef<Path>, config: &CorpusConfig) -> Result<Corpus> {
    let mut reader = FastaReader::open(path, config)?;
    let records = (&mut reader).collect::<Result<Vec<_>>>()?;
    let records = match config.sample_size {
        Some(k) => sample(records, k, config.seed),
        None => records,
    };
    Ok(Corpus {
        records,
        dropped: reader.dropped(),
        nonstandard: reader.nonstandard(),
    })
}

/// Load a UTF-8 text file as one record per non-blank line; the id is the
/// 0-based line number.
pub fn load_text(path: impl AsRef<Path>, config: &CorpusConfig) -> Result<Corpus> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Encoding {
        path: path.to_path_buf(),
        offset: e.valid_up_to(),
    })?;
    let mut corpus = Corpus::default();
    for (line_no, line) in text.split('\n').enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let residues = if config.lowercase {
            line.to_lowercase()
        } else {
            line.to_string()
        };
        if !config.accepts(&residues) {
            corpus.dropped += 1;
            continue;
        }
        corpus.records.push(SequenceRecord {
            id: line_no.to_string(),
            residues,
        });
    }
    if let Some(k) = config.sample_size {
        corpus.records = sample(corpus.records, k, config.seed);
    }
    Ok(corpus)
}

/// Load according to `config.mode`.
pub fn load_corpus(path: impl AsRef<Path>, config: &CorpusConfig) -> Result<Corpus> {
    match config.mode {
        Mode::Protein => load_fasta(path, config),
        Mode::Text => load_text(path, config),
    }
}

/// Uniform sample of `k` items without replacement (single-pass reservoir
/// sampling, Algorithm R). The result keeps the input order. `k` at or above
/// the population size returns everything.
pub fn sample<T>(items: impl IntoIterator<Item = T>, k: usize, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reservoir: Vec<(usize, T)> = Vec::with_capacity(k.min(1 << 20));
    for (i, item) in items.into_iter().enumerate() {
        if i < k {
            reservoir.push((i, item));
        } else {
            let j = rng.random_range(0..=i);
            if j < k {
                reservoir[j] = (i, item);
            }
        }
    }
    reservoir.sort_unstable_by_key(|(i, _)| *i);
    reservoir.into_iter().map(|(_, item)| item).collect()
}

pub fn write_fasta<W: Write>(mut out: W, records: &[SequenceRecord], width: usize) -> std::io::Result<()> {
    let width = width.max(1);
    for r in records {
        writeln!(out, ">{}", r.id)?;
        let bytes = r.residues.as_bytes();
        if r.residues.is_ascii() {
            for chunk in bytes.chunks(width) {
                out.write_all(chunk)?;
                out.write_all(b"\n")?;
            }
        } else {
            writeln!(out, "{}", r.residues)?;
        }
    }
    Ok(())
}

/// A named span on a sequence, 1-based inclusive as stored in annotation files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainAnnotation {
    pub sequence_id: String,
    pub name: String,
    pub start: usize,
    pub end: usize,
}

impl DomainAnnotation {
    /// 0-based half-open span.
    pub fn span(&self) -> (usize, usize) {
        (self.start - 1, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    /// 1-based line number in the file (the header is line 1).
    pub row: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct DomainTable {
    pub annotations: Vec<DomainAnnotation>,
    pub errors: Vec<RowError>,
}

pub const DOMAIN_TSV_HEADER: &str = "sequence_id\tname\tstart\tend";

/// Load a domain annotation TSV. Bad rows are collected, not fatal.
pub fn load_domains(path: impl AsRef<Path>) -> Result<DomainTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_domains(&text, path)
}

pub fn parse_domains(text: &str, path: &Path) -> Result<DomainTable> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == DOMAIN_TSV_HEADER => {}
        Some(_) => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("expected header `{}`", DOMAIN_TSV_HEADER.replace('\t', "<TAB>")),
            })
        }
        None => return Ok(DomainTable::default()),
    }
    let mut table = DomainTable::default();
    for (idx, line) in lines {
        let row = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        match parse_domain_row(line) {
            Ok(a) => table.annotations.push(a),
            Err(message) => table.errors.push(RowError { row, message }),
        }
    }
    Ok(table)
}

fn parse_domain_row(line: &str) -> std::result::Result<DomainAnnotation, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 tab-separated columns, found {}", fields.len()));
    }
    let position = |s: &str, what: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| format!("{what} `{s}` is not a non-negative integer"))
    };
    let start = position(fields[2], "start")?;
    let end = position(fields[3], "end")?;
    if start == 0 {
        return Err("start must be >= 1 (coordinates are 1-based)".into());
    }
    if end < start {
        return Err(format!("end {end} is before start {start}"));
    }
    Ok(DomainAnnotation {
        sequence_id: fields[0].to_string(),
        name: fields[1].to_string(),
        start,
        end,
    })
}

pub fn write_domains<W: Write>(mut out: W, annotations: &[DomainAnnotation]) -> std::io::Result<()> {
    writeln!(out, "{DOMAIN_TSV_HEADER}")?;
    for a in annotations {
        writeln!(out, "{}\t{}\t{}\t{}", a.sequence_id, a.name, a.start, a.end)?;
    }
    Ok(())
}
