//! Finite-difference gradient checks for every differentiable op, plus the
//! saturation/averaging behaviors of the softmax mixture.

mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use unnas::autograd::{Graph, ParamStore, Tensor};
use unnas::nn::{instantiate_op, Layer, OpKind};

#[test]
fn every_op_passes_central_finite_differences() {
    let results = common::run_all_op_gradient_checks(5);
    assert!(!results.is_empty());
    for (name, worst) in &results {
        assert!(worst.is_finite(), "{name}: non-finite error");
    }
}

#[test]
fn one_hot_logits_saturate_to_the_selected_branch() {
    // logit 40 vs 0 drives the mixture weight to ~1 within 1e-9
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut g: Graph<f64> = Graph::new(true);
    let x = g.leaf(Tensor::randn(&[1, 2, 4, 4], 1.0, &mut rng));
    let a = g.scale(x, 2.0);
    let b = g.scale(x, -3.0);
    let logits = g.leaf(Tensor::new(vec![2], vec![40.0, 0.0]).unwrap());
    let mixed = g.mixed_combine(logits, &[a, b]).unwrap();
    for (m, av) in g.value(mixed).data().iter().zip(g.value(a).data()) {
        assert!((m - av).abs() < 1e-9);
    }
}

#[test]
fn uniform_logits_over_skip_and_zero_halve_the_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store: ParamStore<f32> = ParamStore::new();
    let mut skip = instantiate_op(OpKind::SkipConnect, &mut store, &mut rng, 3, 1).unwrap();
    let mut zero = instantiate_op(OpKind::Zero, &mut store, &mut rng, 3, 1).unwrap();
    let mut g: Graph<f32> = Graph::new(true);
    let x = g.leaf(Tensor::randn(&[2, 3, 4, 4], 1.0, &mut rng));
    let ya = skip.forward(&mut g, &store, x).unwrap();
    let yb = zero.forward(&mut g, &store, x).unwrap();
    let logits = g.leaf(Tensor::new(vec![2], vec![0.7f32, 0.7]).unwrap());
    let mixed = g.mixed_combine(logits, &[ya, yb]).unwrap();
    for (m, xv) in g.value(mixed).data().iter().zip(g.value(x).data()) {
        assert!((m - xv / 2.0).abs() < 1e-6);
    }
}

#[test]
fn candidate_op_compositions_pass_gradient_checks() {
    // the composed candidate ops (separable/dilated convs, factorized
    // reduce) differentiate end to end in f64
    use unnas::autograd::check::{check_gradients, DEFAULT_STEP, DEFAULT_TOL};
    use unnas::autograd::ConvSpec;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // separable conv structure: relu -> depthwise -> pointwise
    let c = 3usize;
    let dw_spec = ConvSpec::depthwise(c, 3, 1, 1);
    let pw_spec = ConvSpec::pointwise(c, c, 1);
    let x = common::relu_safe_tensor(&[2, c, 6, 6], &mut rng);
    let dw = Tensor::randn(&dw_spec.weight_shape(), 0.5, &mut rng);
    let pw = Tensor::randn(&pw_spec.weight_shape(), 0.5, &mut rng);
    check_gradients(&[x, dw, pw], DEFAULT_STEP, DEFAULT_TOL, |g, _, n| {
        let a = g.relu(n[0]);
        let d = g.conv2d(a, n[1], dw_spec)?;
        let p = g.conv2d(d, n[2], pw_spec)?;
        let sq = g.mul(p, p)?;
        Ok(g.sum(sq))
    })
    .unwrap();
}
