//! Discrete cell descriptions: per node, two (operation, predecessor) picks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::OpKind;

use super::Error;

/// One incoming edge choice of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenoPair {
    pub op: OpKind,
    pub pred: usize,
}

/// A pair of cells (normal, reduce). State indices: 0 and 1 are the two
/// cell inputs; intermediate node at position `p` may use predecessors
/// `0..p+2`. `concat` lists the state indices feeding the cell output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Genotype {
    pub normal: Vec<[GenoPair; 2]>,
    pub reduce: Vec<[GenoPair; 2]>,
    pub concat: Vec<usize>,
}

impl Genotype {
    pub fn n_nodes(&self) -> usize {
        self.normal.len()
    }

    /// Default output: concatenate every intermediate node.
    pub fn full_concat(n_nodes: usize) -> Vec<usize> {
        (2..n_nodes + 2).collect()
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.normal.is_empty() || self.normal.len() != self.reduce.len() {
            return Err(Error::InvalidGenotype {
                reason: format!(
                    "cell sizes must match and be non-empty (normal {}, reduce {})",
                    self.normal.len(),
                    self.reduce.len()
                ),
            });
        }
        for (name, cell) in [("normal", &self.normal), ("reduce", &self.reduce)] {
            for (p, node) in cell.iter().enumerate() {
                if node[0].pred == node[1].pred {
                    return Err(Error::InvalidGenotype {
                        reason: format!("{name} node {p}: predecessors must be distinct"),
                    });
                }
                for pair in node {
                    if pair.pred >= p + 2 {
                        return Err(Error::InvalidGenotype {
                            reason: format!(
                                "{name} node {p}: predecessor {} is not earlier than the node",
                                pair.pred
                            ),
                        });
                    }
                }
            }
        }
        let n = self.n_nodes();
        if self.concat.is_empty()
            || self.concat.windows(2).any(|w| w[0] >= w[1])
            || self.concat.iter().any(|&s| s < 2 || s >= n + 2)
        {
            return Err(Error::InvalidGenotype {
                reason: format!("concat {:?} must be sorted intermediate states", self.concat),
            });
        }
        Ok(())
    }
}

/// Uniform random genotype: per node, two distinct predecessors chosen
/// uniformly and i.i.d. op choices over the derivable op set.
pub fn sample_genotype<R: Rng>(rng: &mut R, n_nodes: usize) -> Genotype {
    let cell = |rng: &mut R| -> Vec<[GenoPair; 2]> {
        (0..n_nodes)
            .map(|p| {
                let n_preds = p + 2;
                let a = rng.gen_range(0..n_preds);
                let mut b = rng.gen_range(0..n_preds - 1);
                if b >= a {
                    b += 1;
                }
                let op_a = OpKind::DERIVABLE[rng.gen_range(0..OpKind::DERIVABLE.len())];
                let op_b = OpKind::DERIVABLE[rng.gen_range(0..OpKind::DERIVABLE.len())];
                [
                    GenoPair { op: op_a, pred: a },
                    GenoPair { op: op_b, pred: b },
                ]
            })
            .collect()
    };
    let normal = cell(rng);
    let reduce = cell(rng);
    Genotype {
        normal,
        reduce,
        concat: Genotype::full_concat(n_nodes),
    }
}
