//! Corpus model and algorithms for multi-service medical dialogue data.
//!
//! Everything here is pure and allocation-only (`no_std` + `alloc`): file IO,
//! the command line and the HTTP backends live in the `medforge` crate.

#![no_std]

extern crate alloc;

use alloc::string::String;
use alloc::vec::Vec;

pub mod cleanse;
pub mod corpus;
pub mod eval;
pub mod grammar;
pub mod knowledge;
pub mod metrics;
pub mod perturb;
pub mod pseudo;
pub mod rules;
pub mod sample;
pub mod seed;
pub mod similarity;
pub mod stats;

pub use corpus::{
    Corpus, Dialogue, Issue, IssueKind, LabelKind, Provenance, SemanticLabel, Service, Speaker,
    Turn, Vocabulary,
};
pub use knowledge::{KnowledgeBase, KnowledgeTriple};
pub use sample::{SampleFormat, Task, TaskSample};
pub use similarity::{similarity, Similarity};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{} validation error(s):\n{}", .0.len(), corpus::describe_issues(.0))]
    Validation(Vec<Issue>),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("rule \"{rule}\": {message}")]
    Rule { rule: String, message: String },
    #[error("dialogue {dialogue} turn {turn}: translation failed: {message}")]
    Translate {
        dialogue: String,
        turn: usize,
        message: String,
    },
    #[error("dialogue {dialogue} turn {turn}: gold labels missing")]
    MissingGold { dialogue: String, turn: usize },
    #[error("dialogue {dialogue}: turn {turn} is not a patient turn")]
    NotPatientTurn { dialogue: String, turn: usize },
    #[error("dialogue {dialogue}: turn {turn} out of range")]
    TurnOutOfRange { dialogue: String, turn: usize },
    #[error("misaligned inputs: {0}")]
    Alignment(String),
    #[error("{0}")]
    Precondition(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
