//! The tape: a topological record of executed ops, rebuilt every step.
//!
//! Forward methods append nodes; `backward` walks the record in reverse and
//! accumulates gradients into the parameter store. Ops save whatever context
//! their backward needs (conv column matrices, pool argmaxes, normalized
//! activations) at record time.

use super::conv::{conv2d_backward, conv2d_forward, dims4, ConvSpec};
use super::params::{ParamId, ParamStore};
use super::pool::{
    avg_pool_backward, avg_pool_forward, max_pool_backward, max_pool_forward, PoolSpec,
};
use super::scalar::Scalar;
use super::tensor::Tensor;
use super::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

pub(crate) enum Op<E: Scalar> {
    Leaf,
    Add,
    Mul,
    Scale(E),
    AddBias,
    Relu,
    Sum,
    Conv2d {
        spec: ConvSpec,
        cols: Vec<Tensor<E>>,
    },
    MaxPool {
        argmax: Vec<usize>,
    },
    AvgPool {
        spec: PoolSpec,
    },
    GlobalAvgPool,
    BatchNorm {
        xhat: Tensor<E>,
        invstd: Vec<E>,
        batch_stats: bool,
    },
    Linear,
    ConcatC {
        channels: Vec<usize>,
    },
    ZeroOut,
    CropTl,
    UpsampleNearest {
        factor: usize,
    },
    CrossEntropy {
        targets: Vec<usize>,
        probs: Tensor<E>,
    },
    MixedCombine {
        weights: Vec<E>,
    },
}

struct Node<E: Scalar> {
    value: Tensor<E>,
    parents: Vec<NodeId>,
    op: Op<E>,
    param: Option<ParamId>,
}

pub struct Graph<E: Scalar> {
    nodes: Vec<Node<E>>,
    train: bool,
}

impl<E: Scalar> Graph<E> {
    pub fn new(train: bool) -> Self {
        Graph {
            nodes: Vec::new(),
            train,
        }
    }

    pub fn train_mode(&self) -> bool {
        self.train
    }

    pub fn value(&self, id: NodeId) -> &Tensor<E> {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(
        &mut self,
        value: Tensor<E>,
        parents: Vec<NodeId>,
        op: Op<E>,
        param: Option<ParamId>,
    ) -> NodeId {
        value.debug_check_finite("forward op output");
        self.nodes.push(Node {
            value,
            parents,
            op,
            param,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Constant input (no gradient tracked beyond graph connectivity).
    pub fn leaf(&mut self, value: Tensor<E>) -> NodeId {
        self.push(value, Vec::new(), Op::Leaf, None)
    }

    /// Parameter leaf: the value is snapshotted from the store; backward
    /// accumulates into the store's grad slot.
    pub fn param(&mut self, store: &ParamStore<E>, id: ParamId) -> NodeId {
        self.push(store.value(id).clone(), Vec::new(), Op::Leaf, Some(id))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, Error> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::ShapeMismatch {
                expected: va.shape().to_vec(),
                got: vb.shape().to_vec(),
            });
        }
        let mut out = va.clone();
        out.add_assign(vb)?;
        Ok(self.push(out, vec![a, b], Op::Add, None))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, Error> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::ShapeMismatch {
                expected: va.shape().to_vec(),
                got: vb.shape().to_vec(),
            });
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| *x * *y)
            .collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(out, vec![a, b], Op::Mul, None))
    }

    pub fn scale(&mut self, x: NodeId, c: E) -> NodeId {
        let data = self.value(x).data().iter().map(|v| *v * c).collect();
        let out = Tensor::new(self.value(x).shape().to_vec(), data).expect("same shape");
        self.push(out, vec![x], Op::Scale(c), None)
    }

    /// Broadcast-add a `[C]` bias over `[N, C]` or `[N, C, H, W]`.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId, Error> {
        let xs = self.value(x).shape().to_vec();
        let bs = self.value(bias).shape().to_vec();
        if bs.len() != 1 || (xs.len() != 2 && xs.len() != 4) || xs[1] != bs[0] {
            return Err(Error::ShapeMismatch {
                expected: vec![xs.get(1).copied().unwrap_or(0)],
                got: bs,
            });
        }
        let c = xs[1];
        let inner: usize = xs[2..].iter().product();
        let bd = self.value(bias).data().to_vec();
        let mut out = self.value(x).clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v = *v + bd[(i / inner) % c];
        }
        Ok(self.push(out, vec![x, bias], Op::AddBias, None))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let data = self
            .value(x)
            .data()
            .iter()
            .map(|v| if *v > E::zero() { *v } else { E::zero() })
            .collect();
        let out = Tensor::new(self.value(x).shape().to_vec(), data).expect("same shape");
        self.push(out, vec![x], Op::Relu, None)
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let total: E = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(total), vec![x], Op::Sum, None)
    }

    pub fn conv2d(&mut self, x: NodeId, weight: NodeId, spec: ConvSpec) -> Result<NodeId, Error> {
        let (out, cols) = conv2d_forward(self.value(x), self.value(weight), &spec)?;
        Ok(self.push(out, vec![x, weight], Op::Conv2d { spec, cols }, None))
    }

    pub fn max_pool(&mut self, x: NodeId, spec: PoolSpec) -> Result<NodeId, Error> {
        dims4(self.value(x))?;
        let (out, argmax) = max_pool_forward(self.value(x), &spec);
        Ok(self.push(out, vec![x], Op::MaxPool { argmax }, None))
    }

    pub fn avg_pool(&mut self, x: NodeId, spec: PoolSpec) -> Result<NodeId, Error> {
        dims4(self.value(x))?;
        let out = avg_pool_forward(self.value(x), &spec);
        Ok(self.push(out, vec![x], Op::AvgPool { spec }, None))
    }

    /// `[N, C, H, W] -> [N, C]` spatial mean.
    pub fn global_avg_pool(&mut self, x: NodeId) -> Result<NodeId, Error> {
        let (n, c, h, w) = dims4(self.value(x))?;
        let hw = E::from_f64((h * w) as f64);
        let xd = self.value(x).data();
        let mut out = Tensor::zeros(&[n, c]);
        for i in 0..n {
            for ci in 0..c {
                let base = (i * c + ci) * h * w;
                let s: E = xd[base..base + h * w].iter().copied().sum();
                out.data_mut()[i * c + ci] = s / hw;
            }
        }
        Ok(self.push(out, vec![x], Op::GlobalAvgPool, None))
    }

    /// Batch normalization over `(N, H, W)` per channel using batch
    /// statistics. Returns the node plus the batch mean/var so the caller
    /// can maintain running averages.
    #[allow(clippy::type_complexity)]
    pub fn batch_norm_train(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: f64,
    ) -> Result<(NodeId, Vec<E>, Vec<E>), Error> {
        let (n, c, h, w) = dims4(self.value(x))?;
        let count = E::from_f64((n * h * w) as f64);
        let xd = self.value(x).data();
        let mut mean = vec![E::zero(); c];
        let mut var = vec![E::zero(); c];
        for i in 0..n {
            for ci in 0..c {
                let base = (i * c + ci) * h * w;
                for v in &xd[base..base + h * w] {
                    mean[ci] = mean[ci] + *v;
                }
            }
        }
        for m in mean.iter_mut() {
            *m = *m / count;
        }
        for i in 0..n {
            for ci in 0..c {
                let base = (i * c + ci) * h * w;
                for v in &xd[base..base + h * w] {
                    let d = *v - mean[ci];
                    var[ci] = var[ci] + d * d;
                }
            }
        }
        for v in var.iter_mut() {
            *v = *v / count;
        }
        let invstd: Vec<E> = var
            .iter()
            .map(|v| E::one() / (*v + E::from_f64(eps)).sqrt())
            .collect();
        let node = self.batch_norm_apply(x, gamma, beta, &mean, &invstd, true)?;
        Ok((node, mean, var))
    }

    /// Batch normalization with frozen (running) statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running_mean: &[E],
        running_var: &[E],
        eps: f64,
    ) -> Result<NodeId, Error> {
        let invstd: Vec<E> = running_var
            .iter()
            .map(|v| E::one() / (*v + E::from_f64(eps)).sqrt())
            .collect();
        self.batch_norm_apply(x, gamma, beta, running_mean, &invstd, false)
    }

    fn batch_norm_apply(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        mean: &[E],
        invstd: &[E],
        batch_stats: bool,
    ) -> Result<NodeId, Error> {
        let (n, c, h, w) = dims4(self.value(x))?;
        if self.value(gamma).shape() != [c] || self.value(beta).shape() != [c] {
            return Err(Error::ShapeMismatch {
                expected: vec![c],
                got: self.value(gamma).shape().to_vec(),
            });
        }
        let xd = self.value(x).data();
        let gd = self.value(gamma).data().to_vec();
        let bd = self.value(beta).data().to_vec();
        let mut xhat = Tensor::zeros(self.value(x).shape());
        let mut out = Tensor::zeros(self.value(x).shape());
        {
            let xh = xhat.data_mut();
            let od = out.data_mut();
            for i in 0..n {
                for ci in 0..c {
                    let base = (i * c + ci) * h * w;
                    for j in base..base + h * w {
                        let z = (xd[j] - mean[ci]) * invstd[ci];
                        xh[j] = z;
                        od[j] = gd[ci] * z + bd[ci];
                    }
                }
            }
        }
        Ok(self.push(
            out,
            vec![x, gamma, beta],
            Op::BatchNorm {
                xhat,
                invstd: invstd.to_vec(),
                batch_stats,
            },
            None,
        ))
    }

    /// `[N, K] x [K, M] -> [N, M]`.
    pub fn linear(&mut self, x: NodeId, weight: NodeId) -> Result<NodeId, Error> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(weight).shape().to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
            return Err(Error::ShapeMismatch {
                expected: xs,
                got: ws,
            });
        }
        let (n, k, m) = (xs[0], xs[1], ws[1]);
        let mut out = Tensor::zeros(&[n, m]);
        unsafe {
            E::gemm(
                n,
                k,
                m,
                E::one(),
                self.value(x).data().as_ptr(),
                k as isize,
                1,
                self.value(weight).data().as_ptr(),
                m as isize,
                1,
                E::zero(),
                out.data_mut().as_mut_ptr(),
                m as isize,
                1,
            );
        }
        Ok(self.push(out, vec![x, weight], Op::Linear, None))
    }

    /// Concatenate along the channel dimension.
    pub fn concat_channels(&mut self, xs: &[NodeId]) -> Result<NodeId, Error> {
        if xs.is_empty() {
            return Err(Error::LengthMismatch {
                expected: 1,
                got: 0,
            });
        }
        let (n, _, h, w) = dims4(self.value(xs[0]))?;
        let mut channels = Vec::with_capacity(xs.len());
        for &x in xs {
            let (ni, ci, hi, wi) = dims4(self.value(x))?;
            if (ni, hi, wi) != (n, h, w) {
                return Err(Error::ShapeMismatch {
                    expected: self.value(xs[0]).shape().to_vec(),
                    got: self.value(x).shape().to_vec(),
                });
            }
            channels.push(ci);
        }
        let c_total: usize = channels.iter().sum();
        let mut out = Tensor::zeros(&[n, c_total, h, w]);
        let od = out.data_mut();
        for i in 0..n {
            let mut c_off = 0usize;
            for (&x, &ci) in xs.iter().zip(channels.iter()) {
                let xd = self.value(x).data();
                let src = i * ci * h * w;
                let dst = (i * c_total + c_off) * h * w;
                od[dst..dst + ci * h * w].copy_from_slice(&xd[src..src + ci * h * w]);
                c_off += ci;
            }
        }
        // re-borrow dance: values were read above before pushing
        Ok(self.push(out, xs.to_vec(), Op::ConcatC { channels }, None))
    }

    /// The zero candidate op: emits zeros, reduced spatially by `stride`,
    /// and passes no gradient to its input.
    pub fn zero_out(&mut self, x: NodeId, stride: usize) -> Result<NodeId, Error> {
        let (n, c, h, w) = dims4(self.value(x))?;
        let out = Tensor::zeros(&[n, c, (h - 1) / stride + 1, (w - 1) / stride + 1]);
        Ok(self.push(out, vec![x], Op::ZeroOut, None))
    }

    /// Drop the first row and column: `x[:, :, 1:, 1:]`.
    pub fn crop_tl(&mut self, x: NodeId) -> Result<NodeId, Error> {
        let (n, c, h, w) = dims4(self.value(x))?;
        if h < 2 || w < 2 {
            return Err(Error::ShapeMismatch {
                expected: vec![n, c, 2, 2],
                got: self.value(x).shape().to_vec(),
            });
        }
        let xd = self.value(x).data();
        let mut out = Tensor::zeros(&[n, c, h - 1, w - 1]);
        let od = out.data_mut();
        for i in 0..n {
            for ci in 0..c {
                let base = (i * c + ci) * h * w;
                let obase = (i * c + ci) * (h - 1) * (w - 1);
                for r in 1..h {
                    for col in 1..w {
                        od[obase + (r - 1) * (w - 1) + (col - 1)] = xd[base + r * w + col];
                    }
                }
            }
        }
        Ok(self.push(out, vec![x], Op::CropTl, None))
    }

    /// Nearest-neighbor spatial upsample by an integer factor.
    pub fn upsample_nearest(&mut self, x: NodeId, factor: usize) -> Result<NodeId, Error> {
        let (n, c, h, w) = dims4(self.value(x))?;
        let xd = self.value(x).data();
        let (ho, wo) = (h * factor, w * factor);
        let mut out = Tensor::zeros(&[n, c, ho, wo]);
        let od = out.data_mut();
        for i in 0..n {
            for ci in 0..c {
                let base = (i * c + ci) * h * w;
                let obase = (i * c + ci) * ho * wo;
                for oh in 0..ho {
                    for ow in 0..wo {
                        od[obase + oh * wo + ow] = xd[base + (oh / factor) * w + (ow / factor)];
                    }
                }
            }
        }
        Ok(self.push(out, vec![x], Op::UpsampleNearest { factor }, None))
    }

    /// Mean cross-entropy over `[N, C]` logits with `targets.len() == N`, or
    /// `[N, C, H, W]` logits with `targets.len() == N*H*W` (pixel-wise,
    /// row-major per sample).
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize]) -> Result<NodeId, Error> {
        let shape = self.value(logits).shape().to_vec();
        let (n, c, spatial) = match shape.len() {
            2 => (shape[0], shape[1], 1),
            4 => (shape[0], shape[1], shape[2] * shape[3]),
            _ => {
                return Err(Error::ShapeMismatch {
                    expected: vec![0, 0],
                    got: shape,
                })
            }
        };
        if targets.len() != n * spatial {
            return Err(Error::LengthMismatch {
                expected: n * spatial,
                got: targets.len(),
            });
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= c) {
            return Err(Error::ClassOutOfRange { class: t, count: c });
        }
        let xd = self.value(logits).data();
        let mut probs = Tensor::zeros(&shape);
        let mut loss = 0.0f64;
        {
            let pd = probs.data_mut();
            for i in 0..n {
                for s in 0..spatial {
                    // logits for (sample i, position s) live at stride `spatial`
                    let mut max = E::neg_infinity();
                    for ci in 0..c {
                        let v = xd[(i * c + ci) * spatial + s];
                        if v > max {
                            max = v;
                        }
                    }
                    let mut z = E::zero();
                    for ci in 0..c {
                        let e = (xd[(i * c + ci) * spatial + s] - max).exp();
                        pd[(i * c + ci) * spatial + s] = e;
                        z = z + e;
                    }
                    let t = targets[i * spatial + s];
                    for ci in 0..c {
                        pd[(i * c + ci) * spatial + s] = pd[(i * c + ci) * spatial + s] / z;
                    }
                    loss -= pd[(i * c + t) * spatial + s].to_f64().max(1e-300).ln();
                }
            }
        }
        let value = Tensor::scalar(E::from_f64(loss / (n * spatial) as f64));
        Ok(self.push(
            value,
            vec![logits],
            Op::CrossEntropy {
                targets: targets.to_vec(),
                probs,
            },
            None,
        ))
    }

    /// Softmax-weighted sum of candidate outputs: `sum_k softmax(logits)_k * x_k`.
    /// Differentiable in the logits and in every candidate.
    pub fn mixed_combine(&mut self, logits: NodeId, xs: &[NodeId]) -> Result<NodeId, Error> {
        let k = xs.len();
        if self.value(logits).shape() != [k] {
            return Err(Error::ShapeMismatch {
                expected: vec![k],
                got: self.value(logits).shape().to_vec(),
            });
        }
        let shape = self.value(xs[0]).shape().to_vec();
        for &x in xs {
            if self.value(x).shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    expected: shape,
                    got: self.value(x).shape().to_vec(),
                });
            }
        }
        let weights = softmax(self.value(logits).data());
        let mut out = Tensor::zeros(&shape);
        for (wk, &x) in weights.iter().zip(xs.iter()) {
            let xd = self.value(x).data();
            for (o, v) in out.data_mut().iter_mut().zip(xd.iter()) {
                *o = *o + *wk * *v;
            }
        }
        let mut parents = Vec::with_capacity(k + 1);
        parents.push(logits);
        parents.extend_from_slice(xs);
        Ok(self.push(out, parents, Op::MixedCombine { weights }, None))
    }

    /// Reverse pass from a scalar loss. Zeroes all parameter gradients in
    /// the store, then accumulates `d(loss)/d(param)` for every parameter
    /// reachable from `loss`; unreachable parameters keep zero gradient.
    pub fn backward(&self, loss: NodeId, store: &mut ParamStore<E>) -> Result<(), Error> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::NonScalarLoss {
                shape: self.nodes[loss.0].value.shape().to_vec(),
            });
        }
        store.zero_grads();
        let mut grads: Vec<Option<Tensor<E>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.nodes[loss.0].value.shape(), E::one()));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            g.debug_check_finite("backward gradient");
            let node = &self.nodes[i];
            if let Some(pid) = node.param {
                store.accumulate_grad(pid, &g);
            }
            for (parent, contrib) in self.op_backward(i, &g)? {
                match &mut grads[parent.0] {
                    Some(acc) => acc.add_assign(&contrib)?,
                    slot @ None => *slot = Some(contrib),
                }
            }
        }
        Ok(())
    }

    /// Per-op vector-Jacobian products: gradient contribution per parent.
    fn op_backward(&self, i: usize, g: &Tensor<E>) -> Result<Vec<(NodeId, Tensor<E>)>, Error> {
        let node = &self.nodes[i];
        let pv = |j: usize| &self.nodes[node.parents[j].0].value;
        let out = match &node.op {
            Op::Leaf => Vec::new(),
            Op::Add => vec![(node.parents[0], g.clone()), (node.parents[1], g.clone())],
            Op::Mul => {
                let da = zip_mul(g, pv(1));
                let db = zip_mul(g, pv(0));
                vec![(node.parents[0], da), (node.parents[1], db)]
            }
            Op::Scale(c) => {
                let data = g.data().iter().map(|v| *v * *c).collect();
                vec![(
                    node.parents[0],
                    Tensor::new(g.shape().to_vec(), data)?,
                )]
            }
            Op::AddBias => {
                let xs = pv(0).shape();
                let c = xs[1];
                let inner: usize = xs[2..].iter().product();
                let mut db = Tensor::zeros(&[c]);
                for (j, v) in g.data().iter().enumerate() {
                    let ci = (j / inner) % c;
                    db.data_mut()[ci] = db.data_mut()[ci] + *v;
                }
                vec![(node.parents[0], g.clone()), (node.parents[1], db)]
            }
            Op::Relu => {
                let data = g
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .map(|(gv, ov)| if *ov > E::zero() { *gv } else { E::zero() })
                    .collect();
                vec![(
                    node.parents[0],
                    Tensor::new(g.shape().to_vec(), data)?,
                )]
            }
            Op::Sum => {
                let s = g.item();
                vec![(node.parents[0], Tensor::full(pv(0).shape(), s))]
            }
            Op::Conv2d { spec, cols } => {
                let (dx, dw) = conv2d_backward(pv(0), pv(1), spec, cols, g)?;
                vec![(node.parents[0], dx), (node.parents[1], dw)]
            }
            Op::MaxPool { argmax, .. } => {
                vec![(node.parents[0], max_pool_backward(pv(0).shape(), argmax, g))]
            }
            Op::AvgPool { spec } => {
                vec![(node.parents[0], avg_pool_backward(pv(0).shape(), spec, g))]
            }
            Op::GlobalAvgPool => {
                let s = pv(0).shape();
                let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
                let hw = E::from_f64((h * w) as f64);
                let mut dx = Tensor::zeros(s);
                let dxd = dx.data_mut();
                for i2 in 0..n {
                    for ci in 0..c {
                        let share = g.data()[i2 * c + ci] / hw;
                        let base = (i2 * c + ci) * h * w;
                        for v in &mut dxd[base..base + h * w] {
                            *v = share;
                        }
                    }
                }
                vec![(node.parents[0], dx)]
            }
            Op::BatchNorm {
                xhat,
                invstd,
                batch_stats,
            } => {
                let s = pv(0).shape();
                let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
                let count = E::from_f64((n * h * w) as f64);
                let gamma = pv(1).data();
                let mut dgamma = Tensor::zeros(&[c]);
                let mut dbeta = Tensor::zeros(&[c]);
                let mut sum_g = vec![E::zero(); c];
                let mut sum_gx = vec![E::zero(); c];
                for i2 in 0..n {
                    for ci in 0..c {
                        let base = (i2 * c + ci) * h * w;
                        for j in base..base + h * w {
                            sum_g[ci] = sum_g[ci] + g.data()[j];
                            sum_gx[ci] = sum_gx[ci] + g.data()[j] * xhat.data()[j];
                        }
                    }
                }
                for ci in 0..c {
                    dgamma.data_mut()[ci] = sum_gx[ci];
                    dbeta.data_mut()[ci] = sum_g[ci];
                }
                let mut dx = Tensor::zeros(s);
                let dxd = dx.data_mut();
                for i2 in 0..n {
                    for ci in 0..c {
                        let base = (i2 * c + ci) * h * w;
                        let scale = gamma[ci] * invstd[ci];
                        if *batch_stats {
                            let mg = sum_g[ci] / count;
                            let mgx = sum_gx[ci] / count;
                            for j in base..base + h * w {
                                dxd[j] = scale * (g.data()[j] - mg - xhat.data()[j] * mgx);
                            }
                        } else {
                            for j in base..base + h * w {
                                dxd[j] = scale * g.data()[j];
                            }
                        }
                    }
                }
                vec![
                    (node.parents[0], dx),
                    (node.parents[1], dgamma),
                    (node.parents[2], dbeta),
                ]
            }
            Op::Linear => {
                let (n, k) = (pv(0).shape()[0], pv(0).shape()[1]);
                let m = pv(1).shape()[1];
                let mut dx = Tensor::zeros(pv(0).shape());
                let mut dw = Tensor::zeros(pv(1).shape());
                unsafe {
                    // dX[n,k] = G[n,m] * W^T[m,k]
                    E::gemm(
                        n,
                        m,
                        k,
                        E::one(),
                        g.data().as_ptr(),
                        m as isize,
                        1,
                        pv(1).data().as_ptr(),
                        1,
                        m as isize,
                        E::zero(),
                        dx.data_mut().as_mut_ptr(),
                        k as isize,
                        1,
                    );
                    // dW[k,m] = X^T[k,n] * G[n,m]
                    E::gemm(
                        k,
                        n,
                        m,
                        E::one(),
                        pv(0).data().as_ptr(),
                        1,
                        k as isize,
                        g.data().as_ptr(),
                        m as isize,
                        1,
                        E::zero(),
                        dw.data_mut().as_mut_ptr(),
                        m as isize,
                        1,
                    );
                }
                vec![(node.parents[0], dx), (node.parents[1], dw)]
            }
            Op::ConcatC { channels } => {
                let s = node.value.shape();
                let (n, c_total, h, w) = (s[0], s[1], s[2], s[3]);
                let mut outs = Vec::with_capacity(channels.len());
                let mut c_off = 0usize;
                for (p, &ci) in node.parents.iter().zip(channels.iter()) {
                    let mut dx = Tensor::zeros(&[n, ci, h, w]);
                    for i2 in 0..n {
                        let src = (i2 * c_total + c_off) * h * w;
                        let dst = i2 * ci * h * w;
                        dx.data_mut()[dst..dst + ci * h * w]
                            .copy_from_slice(&g.data()[src..src + ci * h * w]);
                    }
                    outs.push((*p, dx));
                    c_off += ci;
                }
                outs
            }
            Op::ZeroOut => vec![(node.parents[0], Tensor::zeros(pv(0).shape()))],
            Op::CropTl => {
                let s = pv(0).shape();
                let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
                let mut dx = Tensor::zeros(s);
                let dxd = dx.data_mut();
                for i2 in 0..n {
                    for ci in 0..c {
                        let base = (i2 * c + ci) * h * w;
                        let obase = (i2 * c + ci) * (h - 1) * (w - 1);
                        for r in 1..h {
                            for col in 1..w {
                                dxd[base + r * w + col] =
                                    g.data()[obase + (r - 1) * (w - 1) + (col - 1)];
                            }
                        }
                    }
                }
                vec![(node.parents[0], dx)]
            }
            Op::UpsampleNearest { factor } => {
                let s = pv(0).shape();
                let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
                let (ho, wo) = (h * factor, w * factor);
                let mut dx = Tensor::zeros(s);
                let dxd = dx.data_mut();
                for i2 in 0..n {
                    for ci in 0..c {
                        let base = (i2 * c + ci) * h * w;
                        let obase = (i2 * c + ci) * ho * wo;
                        for oh in 0..ho {
                            for ow in 0..wo {
                                let j = base + (oh / factor) * w + (ow / factor);
                                dxd[j] = dxd[j] + g.data()[obase + oh * wo + ow];
                            }
                        }
                    }
                }
                vec![(node.parents[0], dx)]
            }
            Op::CrossEntropy { targets, probs } => {
                let s = probs.shape();
                let (n, c, spatial) = if s.len() == 2 {
                    (s[0], s[1], 1)
                } else {
                    (s[0], s[1], s[2] * s[3])
                };
                let gs = g.item();
                let scale = gs / E::from_f64((n * spatial) as f64);
                let mut dl = probs.clone();
                {
                    let d = dl.data_mut();
                    for i2 in 0..n {
                        for sp in 0..spatial {
                            let t = targets[i2 * spatial + sp];
                            let j = (i2 * c + t) * spatial + sp;
                            d[j] = d[j] - E::one();
                        }
                    }
                    for v in d.iter_mut() {
                        *v = *v * scale;
                    }
                }
                vec![(node.parents[0], dl)]
            }
            Op::MixedCombine { weights } => {
                let k = weights.len();
                let mut outs = Vec::with_capacity(k + 1);
                // inner products <g, x_k> drive the softmax backward
                let mut dots = vec![E::zero(); k];
                for (j, d) in dots.iter_mut().enumerate() {
                    let xd = self.nodes[node.parents[j + 1].0].value.data();
                    *d = g.data().iter().zip(xd).map(|(a, b)| *a * *b).sum();
                }
                let weighted: E = weights.iter().zip(dots.iter()).map(|(w, d)| *w * *d).sum();
                let mut dlogits = Tensor::zeros(&[k]);
                for j in 0..k {
                    dlogits.data_mut()[j] = weights[j] * (dots[j] - weighted);
                }
                outs.push((node.parents[0], dlogits));
                for j in 0..k {
                    let data = g.data().iter().map(|v| *v * weights[j]).collect();
                    outs.push((
                        node.parents[j + 1],
                        Tensor::new(g.shape().to_vec(), data)?,
                    ));
                }
                outs
            }
        };
        Ok(out)
    }
}

fn zip_mul<E: Scalar>(a: &Tensor<E>, b: &Tensor<E>) -> Tensor<E> {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| *x * *y)
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

/// Numerically stable softmax of a small logit vector.
pub fn softmax<E: Scalar>(logits: &[E]) -> Vec<E> {
    let max = logits
        .iter()
        .copied()
        .fold(E::neg_infinity(), |a, b| if b > a { b } else { a });
    let exps: Vec<E> = logits.iter().map(|v| (*v - max).exp()).collect();
    let z: E = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / z).collect()
}
