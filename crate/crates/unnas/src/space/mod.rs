//! Search spaces: cell genotypes and benchmark graphs, their sampling,
//! validity, canonical identity and serialization.

pub mod bench;
mod dot;
mod genotype;
mod record;
mod sample;

pub use bench::{bench_validate, sample_bench_graph, BenchGraph, VertexOp};
pub use dot::genotype_to_dot;
pub use genotype::{sample_genotype, GenoPair, Genotype};
pub use record::{ArchEnvelope, ArchPayload, ArchRecord, SCHEMA_VERSION};
pub use sample::{sample_filtered, stratified_sample, FilteredSample};

use serde::{Deserialize, Serialize};

/// The two supported search spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    Darts,
    Bench,
}

impl SpaceKind {
    pub fn name(&self) -> &'static str {
        match self {
            SpaceKind::Darts => "darts",
            SpaceKind::Bench => "bench",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    InvalidGenotype { reason: String },
    InvalidBenchGraph { reason: String },
    FilterBudgetExhausted { attempts: usize },
    DecileTooSmall { decile: usize, have: usize, need: usize },
    MissingAccuracy { arch_id: String, key: String },
    UndeclaredTask { arch_id: String, task: String },
    AccuracyOutOfRange { arch_id: String, task: String, value: f64 },
    Serde(String),
}

impl std::fmt::Display for Error {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Error::InvalidGenotype { reason } => write!(f, "invalid genotype: {reason}"),
            Error::InvalidBenchGraph { reason } => write!(f, "invalid benchmark graph: {reason}"),
            Error::FilterBudgetExhausted { attempts } => write!(
                f,
                "cost filter rejected all {attempts} attempts (acceptance rate 0/{attempts}); widen the window or raise the budget"
            ),
            Error::DecileTooSmall { decile, have, need } => {
                write!(f, "decile {decile} holds {have} records, need {need}")
            }
            Error::MissingAccuracy { arch_id, key } => {
                write!(f, "record {arch_id} lacks accuracy for task {key:?}")
            }
            Error::UndeclaredTask { arch_id, task } => {
                write!(f, "record {arch_id} carries undeclared task {task:?}")
            }
            Error::AccuracyOutOfRange { arch_id, task, value } => {
                write!(f, "record {arch_id} task {task:?} accuracy {value} outside [0, 1]")
            }
            Error::Serde(msg) => write!(f, "serialization: {msg}"),
        }
    }
}

impl std::error::Error for Error {}
