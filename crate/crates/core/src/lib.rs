//! Subword tokenizer training and vocabulary analysis for protein and text
//! corpora.

pub mod bpe;
pub mod corpus;
pub mod desk;
pub mod domain_align;
pub mod error;
pub mod laws;
mod merges;
pub mod metrics;
pub mod report;
pub mod segments;
pub mod table;
pub mod tokenizer;
pub mod unigram;
pub mod wordpiece;

pub use corpus::{Corpus, CorpusConfig, DomainAnnotation, Mode, SequenceRecord};
pub use error::{Error, Result};
pub use table::AnalysisTable;
pub use tokenizer::{Segmentation, Tokenizer, TokenizerKind, Vocabulary};
