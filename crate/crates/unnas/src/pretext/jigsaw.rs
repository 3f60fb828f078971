//! Jigsaw puzzles: shuffle a g x g patch grid by one of K preset
//! permutations, predict which one.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Tensor;

use super::{Error, PretextExample, Target};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JigsawConfig {
    pub grid: usize,
    pub permutations: Vec<Vec<usize>>,
}

impl JigsawConfig {
    pub fn k(&self) -> usize {
        self.permutations.len()
    }
}

fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// All permutations of `0..n` in lexicographic order.
fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(factorial(n));
    let mut current: Vec<usize> = (0..n).collect();
    loop {
        out.push(current.clone());
        // next_permutation
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| current[i] < current[i + 1]) else {
            break;
        };
        let j = (i + 1..n).rev().find(|&j| current[j] > current[i]).unwrap();
        current.swap(i, j);
        current[i + 1..].reverse();
    }
    out
}

fn hamming(a: &[usize], b: &[usize]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Choose `k` preset permutations of the g*g patch slots.
///
/// `k = (g*g)!` returns the full set in lexicographic order. Otherwise the
/// set is grown greedily for spread: start from a random permutation, then
/// repeatedly add the candidate (full enumeration, supported for g = 2, 3)
/// that maximizes the minimum Hamming distance to everything chosen so far,
/// ties resolved toward the lexicographically first candidate.
pub fn jigsaw_permutation_set<R: Rng>(g: usize, k: usize, rng: &mut R) -> Result<JigsawConfig, Error> {
    let slots = g * g;
    let total = factorial(slots);
    if k == 0 || k > total {
        return Err(Error::BadPermutationCount { k, max: total });
    }
    let pool = all_permutations(slots);
    if k == total {
        return Ok(JigsawConfig {
            grid: g,
            permutations: pool,
        });
    }
    if g > 3 {
        return Err(Error::GridTooLargeForSelection { grid: g });
    }
    let mut chosen_idx = vec![rng.gen_range(0..pool.len())];
    // min distance from each pool candidate to the chosen set, maintained
    // incrementally
    let mut min_dist: Vec<usize> = pool
        .iter()
        .map(|p| hamming(p, &pool[chosen_idx[0]]))
        .collect();
    while chosen_idx.len() < k {
        let mut best = None;
        for (i, &d) in min_dist.iter().enumerate() {
            if chosen_idx.contains(&i) {
                continue;
            }
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        let (next, _) = best.expect("pool larger than k");
        chosen_idx.push(next);
        for (i, p) in pool.iter().enumerate() {
            let d = hamming(p, &pool[next]);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
        }
    }
    Ok(JigsawConfig {
        grid: g,
        permutations: chosen_idx.into_iter().map(|i| pool[i].clone()).collect(),
    })
}

/// Apply preset permutation `perm_index`: input patch `j` moves to grid slot
/// `perm[j]`, so output slot `p` holds input patch `perm^-1(p)`. Images are
/// center-cropped to a multiple of the grid first.
pub fn jigsaw_example(
    img: &Tensor<f32>,
    config: &JigsawConfig,
    perm_index: usize,
) -> Result<PretextExample, Error> {
    if perm_index >= config.k() {
        return Err(Error::BadLabelIndex {
            index: perm_index,
            count: config.k(),
        });
    }
    let g = config.grid;
    let shape = img.shape();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let (hc, wc) = (h - h % g, w - w % g);
    if hc == 0 || wc == 0 {
        return Err(Error::ImageTooSmall { hw: h.min(w), grid: g });
    }
    let (dy, dx) = ((h - hc) / 2, (w - wc) / 2);
    let (ph, pw) = (hc / g, wc / g);
    let perm = &config.permutations[perm_index];
    let src = img.data();
    let mut out = vec![0f32; c * hc * wc];
    for (j, &slot) in perm.iter().enumerate() {
        let (sr, sc_) = (j / g, j % g);
        let (tr, tc) = (slot / g, slot % g);
        for ch in 0..c {
            for y in 0..ph {
                for x in 0..pw {
                    let sy = dy + sr * ph + y;
                    let sx = dx + sc_ * pw + x;
                    let ty = tr * ph + y;
                    let tx = tc * pw + x;
                    out[(ch * hc + ty) * wc + tx] = src[(ch * h + sy) * w + sx];
                }
            }
        }
    }
    Ok(PretextExample {
        input: Tensor::new(vec![c, hc, wc], out).expect("sized"),
        target: Target::Class(perm_index),
    })
}
