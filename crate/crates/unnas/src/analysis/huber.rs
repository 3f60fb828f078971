//! Robust line fitting: Huber loss minimized by iteratively reweighted
//! least squares, with the residual scale re-estimated each iteration via
//! the median absolute deviation.

use serde::{Deserialize, Serialize};

use super::Error;

/// Default delta, in units of the residual scale.
pub const DEFAULT_DELTA: f64 = 1.345;

const MAX_ITERATIONS: usize = 100;
const PARAM_TOL: f64 = 1e-10;

/// One IRLS iteration, recorded for the monotonicity property: both
/// objectives use the threshold (`delta * scale`) that produced the step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStat {
    pub scale: f64,
    pub objective_before: f64,
    pub objective_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HuberFit {
    pub slope: f64,
    pub intercept: f64,
    pub iterations: usize,
    pub trace: Vec<IterationStat>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn mad_scale(residuals: &[f64]) -> f64 {
    let mut r: Vec<f64> = residuals.to_vec();
    r.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = median(&r);
    let mut dev: Vec<f64> = residuals.iter().map(|v| (v - med).abs()).collect();
    dev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    1.4826 * median(&dev)
}

fn huber_objective(residuals: &[f64], threshold: f64) -> f64 {
    residuals
        .iter()
        .map(|&r| {
            let a = r.abs();
            if a <= threshold {
                0.5 * r * r
            } else {
                threshold * (a - 0.5 * threshold)
            }
        })
        .sum()
}

fn weighted_ls(xs: &[f64], ys: &[f64], weights: &[f64]) -> Result<(f64, f64), Error> {
    let (mut sw, mut swx, mut swy, mut swxx, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..xs.len() {
        let w = weights[i];
        sw += w;
        swx += w * xs[i];
        swy += w * ys[i];
        swxx += w * xs[i] * xs[i];
        swxy += w * xs[i] * ys[i];
    }
    let denom = sw * swxx - swx * swx;
    if denom.abs() < 1e-300 {
        return Err(Error::RankDeficient);
    }
    let slope = (sw * swxy - swx * swy) / denom;
    let intercept = (swy - slope * swx) / sw;
    Ok((slope, intercept))
}

/// Fit `y = slope*x + intercept` by IRLS on the Huber objective. `delta` is
/// expressed in residual-scale units; the scale is re-estimated from the
/// current residuals (MAD) every iteration. Convergence: parameter change
/// below 1e-10 or 100 iterations.
pub fn huber_fit(xs: &[f64], ys: &[f64], delta: f64) -> Result<HuberFit, Error> {
    if xs.len() != ys.len() {
        return Err(Error::MismatchedLengths {
            xs: xs.len(),
            ys: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::TooFewPoints { n: xs.len() });
    }
    if xs.iter().all(|&x| x == xs[0]) {
        return Err(Error::RankDeficient);
    }
    assert!(delta > 0.0, "delta must be positive");

    // ordinary least squares start
    let ones = vec![1.0; xs.len()];
    let (mut slope, mut intercept) = weighted_ls(xs, ys, &ones)?;
    let mut trace = Vec::new();
    let mut iterations = 0;
    for _ in 0..MAX_ITERATIONS {
        let residuals: Vec<f64> = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| y - slope * x - intercept)
            .collect();
        if residuals.iter().all(|&r| r == 0.0) {
            break;
        }
        let scale = mad_scale(&residuals).max(1e-12);
        let threshold = delta * scale;
        let weights: Vec<f64> = residuals
            .iter()
            .map(|&r| {
                let a = r.abs();
                if a <= threshold {
                    1.0
                } else {
                    threshold / a
                }
            })
            .collect();
        let objective_before = huber_objective(&residuals, threshold);
        let (new_slope, new_intercept) = weighted_ls(xs, ys, &weights)?;
        let new_residuals: Vec<f64> = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| y - new_slope * x - new_intercept)
            .collect();
        trace.push(IterationStat {
            scale,
            objective_before,
            objective_after: huber_objective(&new_residuals, threshold),
        });
        iterations += 1;
        let delta_params = (new_slope - slope).abs().max((new_intercept - intercept).abs());
        slope = new_slope;
        intercept = new_intercept;
        if delta_params < PARAM_TOL {
            break;
        }
    }
    Ok(HuberFit {
        slope,
        intercept,
        iterations,
        trace,
    })
}

/// Plain least squares (the delta -> infinity limit), for comparisons.
pub fn ols_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64), Error> {
    if xs.len() != ys.len() {
        return Err(Error::MismatchedLengths {
            xs: xs.len(),
            ys: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::TooFewPoints { n: xs.len() });
    }
    let ones = vec![1.0; xs.len()];
    weighted_ls(xs, ys, &ones)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_line_is_recovered_for_any_delta() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        for delta in [0.5, 1.345, 100.0] {
            let fit = huber_fit(&xs, &ys, delta).unwrap();
            assert!((fit.slope - 2.0).abs() < 1e-12, "slope {}", fit.slope);
            assert!((fit.intercept - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn huge_delta_matches_ordinary_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let n = rng.gen_range(5..40);
            let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let ys: Vec<f64> = xs
                .iter()
                .map(|x| 1.7 * x - 0.4 + rng.gen_range(-1.0..1.0))
                .collect();
            let fit = huber_fit(&xs, &ys, 1e9).unwrap();
            let (s, b) = ols_fit(&xs, &ys).unwrap();
            assert!((fit.slope - s).abs() < 1e-8, "{} vs {s}", fit.slope);
            assert!((fit.intercept - b).abs() < 1e-8);
        }
    }

    #[test]
    fn outlier_hurts_the_robust_fit_less() {
        // twenty points on y = x plus an outlier at (10, 100)
        let mut xs: Vec<f64> = (0..20).map(|i| i as f64 / 2.0).collect();
        let mut ys: Vec<f64> = xs.clone();
        xs.push(10.0);
        ys.push(100.0);
        let robust = huber_fit(&xs, &ys, 1.0).unwrap();
        let (ols_slope, _) = ols_fit(&xs, &ys).unwrap();
        assert!(
            (robust.slope - 1.0).abs() < (ols_slope - 1.0).abs(),
            "huber {} vs ols {ols_slope}",
            robust.slope
        );
    }

    #[test]
    fn irls_objective_never_increases_within_an_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..100 {
            let n = rng.gen_range(4..50);
            let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let ys: Vec<f64> = xs
                .iter()
                .map(|x| {
                    let noise = if rng.gen_bool(0.1) {
                        rng.gen_range(-20.0..20.0)
                    } else {
                        rng.gen_range(-0.5..0.5)
                    };
                    0.8 * x + 2.0 + noise
                })
                .collect();
            let Ok(fit) = huber_fit(&xs, &ys, 1.345) else {
                continue;
            };
            for (i, stat) in fit.trace.iter().enumerate() {
                assert!(
                    stat.objective_after <= stat.objective_before + 1e-9,
                    "iteration {i}: {} -> {}",
                    stat.objective_before,
                    stat.objective_after
                );
            }
        }
    }

    #[test]
    fn all_equal_xs_is_rank_deficient() {
        let xs = [2.0, 2.0, 2.0];
        let ys = [1.0, 2.0, 3.0];
        assert!(matches!(huber_fit(&xs, &ys, 1.0), Err(Error::RankDeficient)));
    }
}
