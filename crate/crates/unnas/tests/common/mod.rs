//! Shared helpers for integration tests.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use unnas::autograd::check::{check_gradients, DEFAULT_STEP, DEFAULT_TOL};
use unnas::autograd::{ConvSpec, PoolSpec, Tensor};

/// Random tensor with all values at least `gap` apart (kink-safe for max
/// pooling) by shuffling an arithmetic progression.
pub fn distinct_tensor(shape: &[usize], gap: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut values: Vec<f64> = (0..n).map(|i| (i as f64 - n as f64 / 2.0) * gap).collect();
    use rand::seq::SliceRandom;
    values.shuffle(rng);
    Tensor::new(shape.to_vec(), values).unwrap()
}

/// Random tensor bounded away from zero (kink-safe for relu).
pub fn relu_safe_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let values: Vec<f64> = (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), values).unwrap()
}

fn small(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    rng.gen_range(lo..=hi)
}

/// Central finite-difference checks on every differentiable op, across
/// `rounds` random shapes each. Returns (op name, worst relative error)
/// per round; panics with a diagnostic on any failure.
pub fn run_all_op_gradient_checks(rounds: usize) -> Vec<(String, f64)> {
    let mut results = Vec::new();
    let mut check = |name: &str, inputs: &[Tensor<f64>], build: &dyn Fn(
        &mut unnas::autograd::Graph<f64>,
        &unnas::autograd::ParamStore<f64>,
        &[unnas::autograd::NodeId],
    ) -> Result<unnas::autograd::NodeId, unnas::autograd::Error>| {
        let worst = check_gradients(inputs, DEFAULT_STEP, DEFAULT_TOL, build)
            .unwrap_or_else(|e| panic!("{name}: {e}"));
        results.push((name.to_string(), worst));
    };

    for round in 0..rounds {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + round as u64);
        let r = &mut rng;

        // elementwise and reduction ops
        let shape = vec![small(r, 2, 4), small(r, 2, 5)];
        let a = Tensor::randn(&shape, 1.0, r);
        let b = Tensor::randn(&shape, 1.0, r);
        check("add", &[a.clone(), b.clone()], &|g, _, n| {
            let s = g.add(n[0], n[1])?;
            let sq = g.mul(s, s)?;
            Ok(g.sum(sq))
        });
        check("mul", &[a.clone(), b.clone()], &|g, _, n| {
            let m = g.mul(n[0], n[1])?;
            Ok(g.sum(m))
        });
        check("scale", &[a.clone()], &|g, _, n| {
            let s = g.scale(n[0], 0.37);
            let sq = g.mul(s, s)?;
            Ok(g.sum(sq))
        });
        check("sum", &[a.clone()], &|g, _, n| {
            let s = g.sum(n[0]);
            Ok(g.mul(s, s)?)
        });

        // relu away from the kink
        let x = relu_safe_tensor(&[small(r, 1, 2), small(r, 2, 4), 4, 4], r);
        check("relu", &[x], &|g, _, n| {
            let y = g.relu(n[0]);
            let sq = g.mul(y, y)?;
            Ok(g.sum(sq))
        });

        // bias broadcast over [N, C, H, W]
        let c = small(r, 2, 4);
        let x = Tensor::randn(&[2, c, 3, 3], 1.0, r);
        let bias = Tensor::randn(&[c], 1.0, r);
        check("add_bias", &[x, bias], &|g, _, n| {
            let y = g.add_bias(n[0], n[1])?;
            let sq = g.mul(y, y)?;
            Ok(g.sum(sq))
        });

        // dense conv, stride 1 and 2
        for stride in [1usize, 2] {
            let (cin, cout) = (small(r, 2, 3), small(r, 2, 4));
            let spec = ConvSpec::same(cin, cout, 3, stride);
            let x = Tensor::randn(&[2, cin, 6, 6], 1.0, r);
            let w = Tensor::randn(&spec.weight_shape(), 0.5, r);
            check(&format!("conv3x3_s{stride}"), &[x, w], &|g, _, n| {
                let y = g.conv2d(n[0], n[1], spec)?;
                let sq = g.mul(y, y)?;
                Ok(g.sum(sq))
            });
        }

        // pointwise conv
        {
            let (cin, cout) = (small(r, 2, 4), small(r, 2, 4));
            let spec = ConvSpec::pointwise(cin, cout, 1);
            let x = Tensor::randn(&[2, cin, 5, 5], 1.0, r);
            let w = Tensor::randn(&spec.weight_shape(), 0.5, r);
            check("conv1x1", &[x, w], &|g, _, n| {
                let y = g.conv2d(n[0], n[1], spec)?;
                let sq = g.mul(y, y)?;
                Ok(g.sum(sq))
            });
        }

        // depthwise conv, plain and dilated
        for dilation in [1usize, 2] {
            let c = small(r, 2, 4);
            let spec = ConvSpec::depthwise(c, 3, 1, dilation);
            let x = Tensor::randn(&[2, c, 7, 7], 1.0, r);
            let w = Tensor::randn(&spec.weight_shape(), 0.5, r);
            check(&format!("depthwise_d{dilation}"), &[x, w], &|g, _, n| {
                let y = g.conv2d(n[0], n[1], spec)?;
                let sq = g.mul(y, y)?;
                Ok(g.sum(sq))
            });
        }

        // pooling
        let pool = PoolSpec {
            kernel: 3,
            stride: if round % 2 == 0 { 1 } else { 2 },
            padding: 1,
        };
        let x = distinct_tensor(&[2, small(r, 2, 3), 6, 6], 0.01, r);
        check("max_pool", &[x], &|g, _, n| {
            let y = g.max_pool(n[0], pool)?;
            let sq = g.mul(y, y)?;
            Ok(g.sum(sq))
        });
        let x = Tensor::randn(&[2, small(r, 2, 3), 6, 6], 1.0, r);
        check("avg_pool", &[x], &|g, _, n| {
            let y = g.avg_pool(n[0], pool)?;
            let sq = g.mul(y, y)?;
            Ok(g.sum(sq))
        });
        let x = Tensor::randn(&[2, small(r, 2, 4), 5, 5], 1.0, r);
        check("global_avg_pool", &[x], &|g, _, n| {
            let y = g.global_avg_pool(n[0])?;
            let sq = g.mul(y, y)?;
            Ok(g.sum(sq))
        });

        // batch norm, batch and frozen statistics
        let c = small(r, 2, 3);
        let x = Tensor::randn(&[3, c, 4, 4], 1.0, r);
        let gamma = Tensor::uniform(&[c], 0.5, 1.5, r);
        let beta = Tensor::randn(&[c], 0.3, r);
        check("batch_norm_train", &[x.clone(), gamma.clone(), beta.clone()], &|g, _, n| {
            let (y, _, _) = g.batch_norm_train(n[0], n[1], n[2], 1e-5)?;
            let sq = g.mul(y, y)?;
            Ok(g.sum(sq))
        });
        let rm: Vec<f64> = (0..c).map(|i| 0.1 * i as f64).collect();
        let rv: Vec<f64> = (0..c).map(|i| 1.0 + 0.2 * i as f64).collect();
        check("batch_norm_eval", &[x, gamma, beta], &|g, _, n| {
            let y = g.batch_norm_eval(n[0], n[1], n[2], &rm, &rv, 1e-5)?;
            let sq = g.mul(y, y)?;
            Ok(g.sum(sq))
        });

        // linear
        let (k, m) = (small(r, 2, 5), small(r, 2, 4));
        let x = Tensor::randn(&[3, k], 1.0, r);
        let w = Tensor::randn(&[k, m], 0.5, r);
        check("linear", &[x, w], &|g, _, n| {
            let y = g.linear(n[0], n[1])?;
            let sq = g.mul(y, y)?;
            Ok(g.sum(sq))
        });

        // channel concat
        let (c1, c2) = (small(r, 1, 3), small(r, 1, 3));
        let xa = Tensor::randn(&[2, c1, 4, 4], 1.0, r);
        let xb = Tensor::randn(&[2, c2, 4, 4], 1.0, r);
        check("concat_channels", &[xa, xb], &|g, _, n| {
            let y = g.concat_channels(&[n[0], n[1]])?;
            let sq = g.mul(y, y)?;
            Ok(g.sum(sq))
        });

        // structural ops
        let x = Tensor::randn(&[2, 2, 5, 5], 1.0, r);
        check("crop_tl", &[x], &|g, _, n| {
            let y = g.crop_tl(n[0])?;
            let sq = g.mul(y, y)?;
            Ok(g.sum(sq))
        });
        let x = Tensor::randn(&[2, 2, 3, 3], 1.0, r);
        check("upsample_nearest", &[x], &|g, _, n| {
            let y = g.upsample_nearest(n[0], 2)?;
            let sq = g.mul(y, y)?;
            Ok(g.sum(sq))
        });
        let x = Tensor::randn(&[2, 3, 4, 4], 1.0, r);
        check("zero_out", &[x], &|g, _, n| {
            let y = g.zero_out(n[0], 2)?;
            let s = g.sum(y);
            // keep the loss connected to the input through a second path so
            // the scalar is not constant
            let t = g.sum(n[0]);
            let st = g.scale(t, 0.5);
            Ok(g.add(s, st)?)
        });

        // cross entropy, image-level and pixel-level
        let (n_batch, classes) = (3usize, small(r, 3, 5));
        let logits = Tensor::randn(&[n_batch, classes], 1.0, r);
        let targets: Vec<usize> = (0..n_batch).map(|_| r.gen_range(0..classes)).collect();
        let t1 = targets.clone();
        check("cross_entropy_2d", &[logits], &|g, _, n| {
            Ok(g.cross_entropy(n[0], &t1)?)
        });
        let logits = Tensor::randn(&[2, classes, 3, 3], 1.0, r);
        let dense_targets: Vec<usize> = (0..2 * 9).map(|_| r.gen_range(0..classes)).collect();
        check("cross_entropy_dense", &[logits], &|g, _, n| {
            Ok(g.cross_entropy(n[0], &dense_targets)?)
        });

        // softmax-weighted mixture: gradients w.r.t. logits and candidates
        let k = small(r, 2, 4);
        let mut inputs = vec![Tensor::randn(&[k], 1.0, r)];
        for _ in 0..k {
            inputs.push(Tensor::randn(&[2, 2, 3, 3], 1.0, r));
        }
        check("mixed_combine", &inputs, &|g, _, n| {
            let y = g.mixed_combine(n[0], &n[1..])?;
            let sq = g.mul(y, y)?;
            Ok(g.sum(sq))
        });
    }
    results
}
