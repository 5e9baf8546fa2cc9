//! Repository-level proof-completion pipeline.
//!
//! The crate turns a Verus-annotated source tree into proof-completion
//! tasks, retrieves few-shot examples and dependency context from
//! persistent embedding indices, drives a pluggable LLM backend through
//! budgeted generation and refinement, and scores candidates with the
//! correct / intact / success metrics plus BLEU.
//!
//! Pipeline stages, bottom to top:
//!
//! - [`source`]: snapshot loading, `verus!` region extraction, item scan
//! - [`modes`]: spec / proof / exec line classification
//! - [`metadata`]: per-function metadata and the repository linkage graph
//! - [`tasks`]: masking, trivial-task filtering, categorization, stats
//! - [`informalize`]: natural-language function summaries
//! - [`index`] and [`retrieval`]: vector indices and retrieval strategies
//! - [`engine`]: prompt assembly, direct generation, ensemble refinement
//! - [`eval`]: correct / intact / success metrics and BLEU
//! - [`backends`]: verifier / LLM / embedding backends with mocks
//! - [`run`]: corpus-level drivers used by the CLI

pub mod backends;
pub mod bleu;
pub mod config;
pub mod engine;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod index;
pub mod informalize;
pub mod lex;
pub mod metadata;
pub mod modes;
pub mod retrieval;
pub mod run;
pub mod source;
pub mod tasks;

pub use error::{Error, Result};
