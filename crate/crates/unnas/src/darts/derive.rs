//! Discretization: from architecture logits to a genotype.

use crate::nn::OpKind;
use crate::space::{GenoPair, Genotype};

use super::{softmax64, AlphaTable};

/// Strongest non-zero op on an edge: (op, mixture weight); ties toward the
/// lowest op index.
fn edge_best(logits: &[f64]) -> (OpKind, f64) {
    let w = softmax64(logits);
    let mut best = (OpKind::ALL[0], f64::NEG_INFINITY);
    for (i, kind) in OpKind::ALL.iter().enumerate() {
        if *kind == OpKind::Zero {
            continue;
        }
        if w[i] > best.1 {
            best = (*kind, w[i]);
        }
    }
    best
}

/// Per node, rank incoming edges by their strongest non-zero mixture weight,
/// keep the top two (distinct predecessors by construction), and select that
/// op on each kept edge. Ties break toward the lowest op index, then the
/// lowest predecessor index. The zero op never survives discretization.
pub fn derive_genotype(alpha: &AlphaTable) -> Genotype {
    let derive_cell = |cell: &[Vec<f64>]| -> Vec<[GenoPair; 2]> {
        (0..alpha.n_nodes)
            .map(|node| {
                let mut scored: Vec<(f64, usize, OpKind)> = (0..node + 2)
                    .map(|pred| {
                        let (op, strength) = edge_best(&cell[AlphaTable::edge_index(node, pred)]);
                        (strength, pred, op)
                    })
                    .collect();
                scored.sort_by(|a, b| {
                    b.0.partial_cmp(&a.0)
                        .expect("finite weights")
                        .then(a.1.cmp(&b.1))
                });
                let mut top: Vec<(usize, OpKind)> =
                    scored[..2].iter().map(|&(_, pred, op)| (pred, op)).collect();
                top.sort_by_key(|&(pred, _)| pred);
                [
                    GenoPair {
                        op: top[0].1,
                        pred: top[0].0,
                    },
                    GenoPair {
                        op: top[1].1,
                        pred: top[1].0,
                    },
                ]
            })
            .collect()
    };
    Genotype {
        normal: derive_cell(&alpha.normal),
        reduce: derive_cell(&alpha.reduce),
        concat: Genotype::full_concat(alpha.n_nodes),
    }
}
