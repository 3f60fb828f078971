//! Spearman rank correlation with average-rank tie handling.

use serde::{Deserialize, Serialize};

use super::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub rho: f64,
    pub n: usize,
    /// The analyzed (x, y) pairs, in input order.
    pub pairs: Vec<(f64, f64)>,
}

/// Ranks with ties receiving the average of the positions they occupy
/// (1-based).
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // positions i..=j share the value; average rank (1-based)
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho: the Pearson correlation of the two rank vectors.
/// Constant inputs make the correlation undefined and are reported as an
/// explicit degenerate-input error.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<CorrelationReport, Error> {
    if xs.len() != ys.len() {
        return Err(Error::MismatchedLengths {
            xs: xs.len(),
            ys: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::TooFewPoints { n: xs.len() });
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..xs.len() {
        let dx = rx[i] - mx;
        let dy = ry[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateRanks {
            which: if sxx == 0.0 { "xs" } else { "ys" },
        });
    }
    Ok(CorrelationReport {
        rho: sxy / (sxx * syy).sqrt(),
        n: xs.len(),
        pairs: xs.iter().copied().zip(ys.iter().copied()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn monotone_agreement_gives_plus_one() {
        let xs = [0.1, 0.5, 0.7, 2.0];
        let ys = [1.0, 2.0, 30.0, 40.0];
        assert_eq!(spearman_rho(&xs, &ys).unwrap().rho, 1.0);
    }

    #[test]
    fn monotone_disagreement_gives_minus_one() {
        let xs = [0.1, 0.5, 0.7, 2.0];
        let ys = [40.0, 30.0, 2.0, 1.0];
        assert_eq!(spearman_rho(&xs, &ys).unwrap().rho, -1.0);
    }

    #[test]
    fn textbook_tie_free_example() {
        // rho = 1 - 6*sum(d^2)/(n(n^2-1)) = 0.6
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [2.0, 1.0, 4.0, 3.0];
        let rho = spearman_rho(&xs, &ys).unwrap().rho;
        assert!((rho - 0.6).abs() < 1e-15);
    }

    #[test]
    fn matches_displacement_formula_without_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let n = rng.gen_range(3..40);
            // tie-free by construction: distinct values
            let mut xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let mut ys = xs.clone();
            use rand::seq::SliceRandom;
            xs.shuffle(&mut rng);
            ys.shuffle(&mut rng);
            let rho = spearman_rho(&xs, &ys).unwrap().rho;
            let rx = average_ranks(&xs);
            let ry = average_ranks(&ys);
            let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
            let nf = n as f64;
            let closed = 1.0 - 6.0 * d2 / (nf * (nf * nf - 1.0));
            assert!((rho - closed).abs() < 1e-12);
        }
    }

    #[test]
    fn tied_data_uses_average_ranks() {
        // oracle: brute-force average ranks by scanning equal values
        let xs = [1.0, 2.0, 2.0, 3.0];
        let ranks = average_ranks(&xs);
        assert_eq!(ranks, vec![1.0, 2.5, 2.5, 4.0]);
        let ys = [5.0, 5.0, 1.0, 1.0];
        assert_eq!(average_ranks(&ys), vec![3.5, 3.5, 1.5, 1.5]);
        let rho = spearman_rho(&xs, &ys).unwrap().rho;
        assert!(rho < 0.0, "descending-ish with ties: {rho}");
    }

    #[test]
    fn invariant_under_strictly_increasing_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let xs: Vec<f64> = (0..30).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let ys: Vec<f64> = (0..30).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let base = spearman_rho(&xs, &ys).unwrap().rho;
        let transforms: [&dyn Fn(f64) -> f64; 3] =
            [&f64::exp, &|x| 2.0 * x + 3.0, &|x| x * x * x];
        for f in transforms {
            let fx: Vec<f64> = xs.iter().map(|&v| f(v)).collect();
            assert_eq!(spearman_rho(&fx, &ys).unwrap().rho, base);
            let fy: Vec<f64> = ys.iter().map(|&v| f(v)).collect();
            assert_eq!(spearman_rho(&xs, &fy).unwrap().rho, base);
        }
    }

    #[test]
    fn symmetric_in_its_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let xs: Vec<f64> = (0..25).map(|_| rng.gen_range(0.0..1.0)).collect();
        let ys: Vec<f64> = (0..25).map(|_| rng.gen_range(0.0..1.0)).collect();
        assert_eq!(
            spearman_rho(&xs, &ys).unwrap().rho,
            spearman_rho(&ys, &xs).unwrap().rho
        );
    }

    #[test]
    fn constant_vector_is_an_explicit_degenerate_result() {
        let xs = [1.0, 1.0, 1.0];
        let ys = [1.0, 2.0, 3.0];
        assert!(matches!(
            spearman_rho(&xs, &ys),
            Err(Error::DegenerateRanks { which: "xs" })
        ));
    }
}
