//! Differentiable cell search: continuous relaxation over the candidate op
//! set, alternating weight/architecture optimization with postponed
//! architecture updates, and discretization back to a genotype.

mod derive;
mod search;
mod supernet;

pub use derive::derive_genotype;
pub use search::{alpha_update_gate, run_search, search_epoch, EpochRecord, SearchOutcome, SearchState};
pub use supernet::{MixedOp, SearchModel};

use serde::{Deserialize, Serialize};

use crate::autograd::Schedule;
use crate::nn::OpKind;

/// Continuous architecture parameters: per cell type and edge, one logit per
/// candidate op. Edges are ordered node-major: node `p` owns edges from
/// predecessors `0..p+2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaTable {
    pub n_nodes: usize,
    pub normal: Vec<Vec<f64>>,
    pub reduce: Vec<Vec<f64>>,
}

impl AlphaTable {
    pub fn edge_count(n_nodes: usize) -> usize {
        n_nodes * (n_nodes + 3) / 2
    }

    pub fn edge_index(node: usize, pred: usize) -> usize {
        debug_assert!(pred < node + 2);
        node * (node + 3) / 2 + pred
    }

    /// (node, pred, edge index) triples in storage order.
    pub fn edge_ids(n_nodes: usize) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::with_capacity(Self::edge_count(n_nodes));
        for node in 0..n_nodes {
            for pred in 0..node + 2 {
                out.push((node, pred, Self::edge_index(node, pred)));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), Error> {
        let expect = Self::edge_count(self.n_nodes);
        for (name, cell) in [("normal", &self.normal), ("reduce", &self.reduce)] {
            if cell.len() != expect {
                return Err(Error::BadAlphaTable {
                    reason: format!("{name}: {} edges, expected {expect}", cell.len()),
                });
            }
            for (i, logits) in cell.iter().enumerate() {
                if logits.len() != OpKind::ALL.len() {
                    return Err(Error::BadAlphaTable {
                        reason: format!("{name} edge {i}: {} logits", logits.len()),
                    });
                }
                if logits.iter().any(|v| !v.is_finite()) {
                    return Err(Error::BadAlphaTable {
                        reason: format!("{name} edge {i}: non-finite logit"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Per-edge entropy of the op mixture, nats.
    pub fn edge_entropies(cell: &[Vec<f64>]) -> Vec<f64> {
        cell.iter()
            .map(|logits| {
                let w = softmax64(logits);
                -w.iter()
                    .filter(|&&p| p > 0.0)
                    .map(|&p| p * p.ln())
                    .sum::<f64>()
            })
            .collect()
    }
}

pub(crate) fn softmax64(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Cosine schedule for the weight optimizer.
    pub w_lr: Schedule,
    pub w_momentum: f64,
    pub w_weight_decay: f64,
    pub alpha_lr: f64,
    pub alpha_weight_decay: f64,
    /// Fraction of search epochs during which architecture updates are
    /// postponed.
    pub postpone_fraction: f64,
    /// Expected input side length.
    pub input_crop: usize,
    pub stem_stride_layers: usize,
    pub width: usize,
    pub depth: usize,
    pub nodes: usize,
    pub seed: u64,
}

impl SearchConfig {
    /// Desk-scale defaults: 2-node cells, width 16, depth 5, 16 px inputs.
    pub fn desk_default(seed: u64) -> Self {
        SearchConfig {
            epochs: 5,
            batch_size: 32,
            w_lr: Schedule::cosine(0.05, 0, 5).expect("static schedule"),
            w_momentum: 0.9,
            w_weight_decay: 3e-5,
            alpha_lr: 3e-3,
            alpha_weight_decay: 1e-3,
            postpone_fraction: 0.5,
            input_crop: 16,
            stem_stride_layers: 1,
            width: 16,
            depth: 5,
            nodes: 2,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let mut problems = Vec::new();
        if self.epochs == 0 {
            problems.push("epochs must be >= 1".to_string());
        }
        if !(0.0..=1.0).contains(&self.postpone_fraction) {
            problems.push(format!(
                "postpone_fraction {} outside [0, 1]",
                self.postpone_fraction
            ));
        }
        if self.w_lr.total_epochs < self.epochs {
            problems.push(format!(
                "weight schedule covers {} epochs, search needs {}",
                self.w_lr.total_epochs, self.epochs
            ));
        }
        if self.nodes == 0 || self.width == 0 || self.depth == 0 || self.batch_size == 0 {
            problems.push("nodes, width, depth and batch_size must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::BadConfig {
                reason: problems.join("; "),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    BadConfig { reason: String },
    BadAlphaTable { reason: String },
    InputSizeMismatch { expected: usize, got: usize },
    NonFiniteLoss { phase: &'static str, epoch: usize, batch: usize, lr: f64 },
    Nn(crate::nn::Error),
    Autograd(crate::autograd::Error),
    Task(crate::task::Error),
}

impl From<crate::nn::Error> for Error {
    fn from(e: crate::nn::Error) -> Self {
        Error::Nn(e)
    }
}

impl From<crate::autograd::Error> for Error {
    fn from(e: crate::autograd::Error) -> Self {
        Error::Autograd(e)
    }
}

impl From<crate::task::Error> for Error {
    fn from(e: crate::task::Error) -> Self {
        Error::Task(e)
    }
}

impl std::fmt::Display for Error {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Error::BadConfig { reason } => write!(f, "invalid search config: {reason}"),
            Error::BadAlphaTable { reason } => write!(f, "invalid alpha table: {reason}"),
            Error::InputSizeMismatch { expected, got } => {
                write!(f, "search expects {expected} px inputs, dataset provides {got} px")
            }
            Error::NonFiniteLoss {
                phase,
                epoch,
                batch,
                lr,
            } => write!(
                f,
                "non-finite {phase} loss at epoch {epoch}, batch {batch} (lr {lr}); aborting search"
            ),
            Error::Nn(e) => write!(f, "{e}"),
            Error::Autograd(e) => write!(f, "{e}"),
            Error::Task(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for Error {}
