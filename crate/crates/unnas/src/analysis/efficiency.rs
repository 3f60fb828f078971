//! Random-experiment efficiency curves: for experiment size m, draw m
//! architectures, keep the one with the best pretext accuracy, and report
//! the spread of its target accuracy over ceil(n/m) repeats.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::space::ArchRecord;

use super::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub m: usize,
    pub repeats: usize,
    pub mean: f64,
    /// Two population standard deviations.
    pub band_halfwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyCurve {
    pub pretext_key: String,
    pub target_key: String,
    pub n: usize,
    pub points: Vec<CurvePoint>,
}

/// For each size `m`, run `ceil(n/m)` repeats: sample `m` records uniformly
/// without replacement (`rand::seq::index::sample`, one call per repeat, in
/// size order), pick the record with the highest pretext accuracy (ties to
/// the lowest arch id), and aggregate its target accuracy.
pub fn efficiency_curve<R: Rng>(
    records: &[ArchRecord],
    pretext_key: &str,
    target_key: &str,
    sizes: &[usize],
    rng: &mut R,
) -> Result<EfficiencyCurve, Error> {
    let n = records.len();
    for r in records {
        for key in [pretext_key, target_key] {
            if r.accuracy(key).is_none() {
                return Err(Error::MissingKey {
                    arch_id: r.arch_id.clone(),
                    key: key.to_string(),
                });
            }
        }
    }
    let mut points = Vec::with_capacity(sizes.len());
    for &m in sizes {
        if m == 0 || m > n {
            return Err(Error::SizeExceedsPool { m, n });
        }
        let repeats = n.div_ceil(m);
        let mut winners = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let picked = rand::seq::index::sample(rng, n, m);
            let mut best: Option<&ArchRecord> = None;
            for idx in picked.iter() {
                let candidate = &records[idx];
                let better = match best {
                    None => true,
                    Some(current) => {
                        let (ca, cb) = (
                            candidate.accuracy(pretext_key).unwrap(),
                            current.accuracy(pretext_key).unwrap(),
                        );
                        ca > cb || (ca == cb && candidate.arch_id < current.arch_id)
                    }
                };
                if better {
                    best = Some(candidate);
                }
            }
            winners.push(best.expect("m >= 1").accuracy(target_key).unwrap());
        }
        let mean = winners.iter().sum::<f64>() / repeats as f64;
        let var = winners.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / repeats as f64;
        points.push(CurvePoint {
            m,
            repeats,
            mean,
            band_halfwidth: 2.0 * var.sqrt(),
        });
    }
    Ok(EfficiencyCurve {
        pretext_key: pretext_key.to_string(),
        target_key: target_key.to_string(),
        n,
        points,
    })
}
