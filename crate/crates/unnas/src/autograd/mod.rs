//! Dense-tensor engine with reverse-mode differentiation.
//!
//! Everything downstream (candidate ops, supernets, training loops) builds
//! forward graphs through [`Graph`] and trains with [`Sgd`] under a
//! [`Schedule`]. The tape is rebuilt every step; parameters persist in a
//! [`ParamStore`]. `f64` exists for gradient checking, experiments run `f32`.

pub mod check;
mod conv;
mod graph;
mod params;
mod pool;
mod optim;
mod scalar;
mod schedule;
mod tensor;

pub use conv::ConvSpec;
pub use graph::{softmax, Graph, NodeId};
pub use params::{ParamGroup, ParamId, ParamStore};
pub use pool::PoolSpec;
pub use optim::{sgd_step, Sgd};
pub use scalar::Scalar;
pub use schedule::{cosine_lr, Schedule, ScheduleKind};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    LengthMismatch { expected: usize, got: usize },
    NonScalarLoss { shape: Vec<usize> },
    EpochOutOfRange { epoch: usize, total: usize },
    BadSchedule { reason: String },
    UnsupportedGroups { groups: usize, in_channels: usize, out_channels: usize },
    ClassOutOfRange { class: usize, count: usize },
}

impl std::fmt::Display for Error {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Error::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected {expected:?}, got {got:?}")
            }
            Error::LengthMismatch { expected, got } => {
                write!(f, "length mismatch: expected {expected}, got {got}")
            }
            Error::NonScalarLoss { shape } => {
                write!(f, "backward requires a scalar loss, got shape {shape:?}")
            }
            Error::EpochOutOfRange { epoch, total } => {
                write!(f, "epoch {epoch} out of schedule range 0..={total}")
            }
            Error::BadSchedule { reason } => write!(f, "invalid schedule: {reason}"),
            Error::UnsupportedGroups {
                groups,
                in_channels,
                out_channels,
            } => write!(
                f,
                "unsupported conv grouping: groups={groups} in={in_channels} out={out_channels} (dense or depthwise only)"
            ),
            Error::ClassOutOfRange { class, count } => {
                write!(f, "target class {class} out of range for {count} classes")
            }
        }
    }
}

impl std::error::Error for Error {}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn backward_of_sum_of_squares() {
        // loss = sum(x ∘ x), x = [1, 2, 3]  =>  dx = [2, 4, 6]
        let mut store: ParamStore<f64> = ParamStore::new();
        let x = store.add(
            Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap(),
            ParamGroup::Weights,
        );
        let mut g = Graph::new(true);
        let xn = g.param(&store, x);
        let sq = g.mul(xn, xn).unwrap();
        let loss = g.sum(sq);
        g.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(x).data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn backward_of_constant_leaves_params_zero() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let p = store.add(Tensor::full(&[4], 2.0), ParamGroup::Weights);
        let mut g = Graph::new(true);
        let c = g.leaf(Tensor::scalar(7.0));
        let loss = g.sum(c);
        g.backward(loss, &mut store).unwrap();
        assert!(store.grad(p).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let mut g = Graph::new(true);
        let x = g.leaf(Tensor::full(&[3], 1.0));
        let y = g.relu(x);
        assert!(matches!(
            g.backward(y, &mut store),
            Err(Error::NonScalarLoss { .. })
        ));
    }

    #[test]
    fn composite_graph_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Tensor::randn(&[2, 3, 6, 6], 1.0, &mut rng);
        let w = Tensor::randn(&[4, 3, 3, 3], 0.5, &mut rng);
        let gamma = Tensor::uniform(&[4], 0.5, 1.5, &mut rng);
        let beta = Tensor::randn(&[4], 0.1, &mut rng);
        let worst = check::check_gradients(
            &[x, w, gamma, beta],
            check::DEFAULT_STEP,
            check::DEFAULT_TOL,
            |g, _store, nodes| {
                let conv = g.conv2d(nodes[0], nodes[1], ConvSpec::same(3, 4, 3, 1))?;
                let (bn, _, _) = g.batch_norm_train(conv, nodes[2], nodes[3], 1e-5)?;
                let act = g.relu(bn);
                let pooled = g.global_avg_pool(act)?;
                let sq = g.mul(pooled, pooled)?;
                Ok(g.sum(sq))
            },
        )
        .unwrap();
        assert!(worst <= check::DEFAULT_TOL);
    }

    #[test]
    fn sgd_plain_step() {
        // momentum=0, wd=0, lr=1, p=1, g=0.5 => p=0.5
        let mut p = Tensor::scalar(1.0f64);
        let g = Tensor::scalar(0.5);
        let mut v = Tensor::scalar(0.0);
        sgd_step(&mut p, &g, &mut v, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(p.item(), 0.5);
    }

    #[test]
    fn sgd_zero_lr_is_identity() {
        let mut p = Tensor::new(vec![2], vec![1.0f64, -2.0]).unwrap();
        let g = Tensor::new(vec![2], vec![3.0, 4.0]).unwrap();
        let mut v = Tensor::zeros(&[2]);
        sgd_step(&mut p, &g, &mut v, 0.0, 0.9, 0.1).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0]);
    }

    #[test]
    fn sgd_momentum_matches_hand_unrolled_recurrence() {
        let (lr, m, wd, g0) = (0.1f64, 0.9f64, 0.01f64, 0.5f64);
        let mut p = Tensor::scalar(2.0f64);
        let grad = Tensor::scalar(g0);
        let mut v = Tensor::scalar(0.0);
        // hand-unrolled: v1 = g + wd*p0; p1 = p0 - lr*v1
        //                v2 = m*v1 + g + wd*p1; p2 = p1 - lr*v2
        let p0 = 2.0;
        let v1 = g0 + wd * p0;
        let p1 = p0 - lr * v1;
        let v2 = m * v1 + g0 + wd * p1;
        let p2 = p1 - lr * v2;
        sgd_step(&mut p, &grad, &mut v, lr, m, wd).unwrap();
        assert!((p.item() - p1).abs() < 1e-15);
        sgd_step(&mut p, &grad, &mut v, lr, m, wd).unwrap();
        assert!((p.item() - p2).abs() < 1e-15);
    }

    #[test]
    fn sgd_shape_mismatch_is_an_error() {
        let mut p = Tensor::zeros(&[2]);
        let g = Tensor::zeros(&[3]);
        let mut v = Tensor::zeros(&[2]);
        assert!(sgd_step::<f64>(&mut p, &g, &mut v, 0.1, 0.9, 0.0).is_err());
    }

    #[test]
    fn parameters_on_dead_branches_get_zero_grad() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let used = store.add(Tensor::scalar(1.0), ParamGroup::Weights);
        let unused = store.add(Tensor::scalar(5.0), ParamGroup::Weights);
        let mut g = Graph::new(true);
        let a = g.param(&store, used);
        let b = g.param(&store, unused);
        let _dead = g.scale(b, 3.0);
        let loss = g.sum(a);
        g.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(used).item(), 1.0);
        assert_eq!(store.grad(unused).item(), 0.0);
    }

    #[test]
    fn determinism_same_seed_same_outputs() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let x = Tensor::<f32>::randn(&[2, 3, 8, 8], 1.0, &mut rng);
            let w = Tensor::<f32>::randn(&[5, 3, 3, 3], 0.1, &mut rng);
            let mut g = Graph::new(true);
            let xn = g.leaf(x);
            let wn = g.leaf(w);
            let y = g.conv2d(xn, wn, ConvSpec::same(3, 5, 3, 2)).unwrap();
            let s = g.sum(y);
            g.value(s).item().to_bits()
        };
        assert_eq!(run(), run());
    }
}
