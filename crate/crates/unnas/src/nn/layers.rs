//! Candidate-operation library and the primitive layers it is built from.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{ConvSpec, Graph, NodeId, ParamGroup, ParamId, ParamStore, PoolSpec, Scalar, Tensor};

use super::cost::{conv_cost, norm_cost, CostStats};
use super::Error;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// The candidate operation set of the cell search space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    SepConv3x3,
    SepConv5x5,
    DilConv3x3,
    DilConv5x5,
    MaxPool3x3,
    AvgPool3x3,
    SkipConnect,
    Zero,
}

impl OpKind {
    pub const ALL: [OpKind; 8] = [
        OpKind::SepConv3x3,
        OpKind::SepConv5x5,
        OpKind::DilConv3x3,
        OpKind::DilConv5x5,
        OpKind::MaxPool3x3,
        OpKind::AvgPool3x3,
        OpKind::SkipConnect,
        OpKind::Zero,
    ];

    /// Ops eligible for discrete genotypes (everything but `zero`).
    pub const DERIVABLE: [OpKind; 7] = [
        OpKind::SepConv3x3,
        OpKind::SepConv5x5,
        OpKind::DilConv3x3,
        OpKind::DilConv5x5,
        OpKind::MaxPool3x3,
        OpKind::AvgPool3x3,
        OpKind::SkipConnect,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            OpKind::SepConv3x3 => "sep_conv_3x3",
            OpKind::SepConv5x5 => "sep_conv_5x5",
            OpKind::DilConv3x3 => "dil_conv_3x3",
            OpKind::DilConv5x5 => "dil_conv_5x5",
            OpKind::MaxPool3x3 => "max_pool_3x3",
            OpKind::AvgPool3x3 => "avg_pool_3x3",
            OpKind::SkipConnect => "skip_connect",
            OpKind::Zero => "zero",
        }
    }

    pub fn index(&self) -> usize {
        OpKind::ALL.iter().position(|k| k == self).expect("member")
    }
}

/// Per-sample feature shape flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatShape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl FeatShape {
    pub fn new(c: usize, h: usize, w: usize) -> Self {
        FeatShape { c, h, w }
    }
}

/// A differentiable layer: records its forward ops on the tape, knows its
/// output shape and analytic cost.
pub trait Layer<E: Scalar>: Send {
    fn forward(
        &mut self,
        g: &mut Graph<E>,
        ps: &ParamStore<E>,
        x: NodeId,
    ) -> Result<NodeId, Error>;

    fn out_shape(&self, input: FeatShape) -> FeatShape;

    fn cost(&self, input: FeatShape) -> CostStats;
}

// ---------------------------------------------------------------------------
// primitives

pub struct Conv2dLayer {
    pub weight: ParamId,
    pub spec: ConvSpec,
}

impl Conv2dLayer {
    pub fn new<E: Scalar, R: Rng>(
        store: &mut ParamStore<E>,
        rng: &mut R,
        spec: ConvSpec,
    ) -> Self {
        let fan_in = (spec.in_channels / spec.groups) * spec.kernel * spec.kernel;
        let std = (2.0 / fan_in as f64).sqrt();
        let weight = store.add(
            Tensor::randn(&spec.weight_shape(), E::from_f64(std), rng),
            ParamGroup::Weights,
        );
        Conv2dLayer { weight, spec }
    }
}

impl<E: Scalar> Layer<E> for Conv2dLayer {
    fn forward(
        &mut self,
        g: &mut Graph<E>,
        ps: &ParamStore<E>,
        x: NodeId,
    ) -> Result<NodeId, Error> {
        let w = g.param(ps, self.weight);
        Ok(g.conv2d(x, w, self.spec)?)
    }

    fn out_shape(&self, input: FeatShape) -> FeatShape {
        let (h, w) = self.spec.out_hw(input.h, input.w);
        FeatShape::new(self.spec.out_channels, h, w)
    }

    fn cost(&self, input: FeatShape) -> CostStats {
        let (h, w) = self.spec.out_hw(input.h, input.w);
        conv_cost(
            self.spec.in_channels,
            self.spec.out_channels,
            self.spec.kernel,
            self.spec.groups,
            h,
            w,
            false,
        )
    }
}

/// Batch normalization with affine parameters and running statistics
/// (batch statistics in train mode, running averages in eval mode).
pub struct BatchNormLayer<E: Scalar> {
    pub gamma: ParamId,
    pub beta: ParamId,
    channels: usize,
    running_mean: Vec<E>,
    running_var: Vec<E>,
}

impl<E: Scalar> BatchNormLayer<E> {
    pub fn new(store: &mut ParamStore<E>, channels: usize) -> Self {
        let gamma = store.add(Tensor::full(&[channels], E::one()), ParamGroup::Weights);
        let beta = store.add(Tensor::zeros(&[channels]), ParamGroup::Weights);
        BatchNormLayer {
            gamma,
            beta,
            channels,
            running_mean: vec![E::zero(); channels],
            running_var: vec![E::one(); channels],
        }
    }
}

impl<E: Scalar> Layer<E> for BatchNormLayer<E> {
    fn forward(
        &mut self,
        g: &mut Graph<E>,
        ps: &ParamStore<E>,
        x: NodeId,
    ) -> Result<NodeId, Error> {
        let gamma = g.param(ps, self.gamma);
        let beta = g.param(ps, self.beta);
        if g.train_mode() {
            let (out, mean, var) = g.batch_norm_train(x, gamma, beta, BN_EPS)?;
            let m = E::from_f64(BN_MOMENTUM);
            let one_m = E::one() - m;
            for c in 0..self.channels {
                self.running_mean[c] = one_m * self.running_mean[c] + m * mean[c];
                self.running_var[c] = one_m * self.running_var[c] + m * var[c];
            }
            Ok(out)
        } else {
            Ok(g.batch_norm_eval(
                x,
                gamma,
                beta,
                &self.running_mean,
                &self.running_var,
                BN_EPS,
            )?)
        }
    }

    fn out_shape(&self, input: FeatShape) -> FeatShape {
        input
    }

    fn cost(&self, _input: FeatShape) -> CostStats {
        norm_cost(self.channels)
    }
}

/// ReLU -> conv -> norm block; the cell preprocessing unit and stem building
/// block (`relu_first = false` for the stem).
pub struct ReluConvBn<E: Scalar> {
    relu_first: bool,
    conv: Conv2dLayer,
    bn: BatchNormLayer<E>,
}

impl<E: Scalar> ReluConvBn<E> {
    pub fn new<R: Rng>(
        store: &mut ParamStore<E>,
        rng: &mut R,
        spec: ConvSpec,
        relu_first: bool,
    ) -> Self {
        ReluConvBn {
            relu_first,
            conv: Conv2dLayer::new(store, rng, spec),
            bn: BatchNormLayer::new(store, spec.out_channels),
        }
    }
}

impl<E: Scalar> Layer<E> for ReluConvBn<E> {
    fn forward(
        &mut self,
        g: &mut Graph<E>,
        ps: &ParamStore<E>,
        x: NodeId,
    ) -> Result<NodeId, Error> {
        let x = if self.relu_first { g.relu(x) } else { x };
        let x = self.conv.forward(g, ps, x)?;
        self.bn.forward(g, ps, x)
    }

    fn out_shape(&self, input: FeatShape) -> FeatShape {
        Layer::<E>::out_shape(&self.conv, input)
    }

    fn cost(&self, input: FeatShape) -> CostStats {
        Layer::<E>::cost(&self.conv, input) + self.bn.cost(Layer::<E>::out_shape(&self.conv, input))
    }
}

// ---------------------------------------------------------------------------
// candidate ops

/// Separable conv: (ReLU -> depthwise k x k -> pointwise 1x1 -> norm) twice;
/// the first depthwise carries the stride.
pub struct SepConv<E: Scalar> {
    dw1: Conv2dLayer,
    pw1: Conv2dLayer,
    bn1: BatchNormLayer<E>,
    dw2: Conv2dLayer,
    pw2: Conv2dLayer,
    bn2: BatchNormLayer<E>,
}

impl<E: Scalar> SepConv<E> {
    pub fn new<R: Rng>(
        store: &mut ParamStore<E>,
        rng: &mut R,
        channels: usize,
        kernel: usize,
        stride: usize,
    ) -> Self {
        SepConv {
            dw1: Conv2dLayer::new(store, rng, ConvSpec::depthwise(channels, kernel, stride, 1)),
            pw1: Conv2dLayer::new(store, rng, ConvSpec::pointwise(channels, channels, 1)),
            bn1: BatchNormLayer::new(store, channels),
            dw2: Conv2dLayer::new(store, rng, ConvSpec::depthwise(channels, kernel, 1, 1)),
            pw2: Conv2dLayer::new(store, rng, ConvSpec::pointwise(channels, channels, 1)),
            bn2: BatchNormLayer::new(store, channels),
        }
    }
}

impl<E: Scalar> Layer<E> for SepConv<E> {
    fn forward(
        &mut self,
        g: &mut Graph<E>,
        ps: &ParamStore<E>,
        x: NodeId,
    ) -> Result<NodeId, Error> {
        let x = g.relu(x);
        let x = self.dw1.forward(g, ps, x)?;
        let x = self.pw1.forward(g, ps, x)?;
        let x = self.bn1.forward(g, ps, x)?;
        let x = g.relu(x);
        let x = self.dw2.forward(g, ps, x)?;
        let x = self.pw2.forward(g, ps, x)?;
        self.bn2.forward(g, ps, x)
    }

    fn out_shape(&self, input: FeatShape) -> FeatShape {
        Layer::<E>::out_shape(&self.dw1, input)
    }

    fn cost(&self, input: FeatShape) -> CostStats {
        let mid = Layer::<E>::out_shape(&self.dw1, input);
        Layer::<E>::cost(&self.dw1, input)
            + Layer::<E>::cost(&self.pw1, mid)
            + self.bn1.cost(mid)
            + Layer::<E>::cost(&self.dw2, mid)
            + Layer::<E>::cost(&self.pw2, mid)
            + self.bn2.cost(mid)
    }
}

/// Dilated separable conv: ReLU -> depthwise k x k (dilation 2) -> pointwise
/// -> norm, applied once.
pub struct DilConv<E: Scalar> {
    dw: Conv2dLayer,
    pw: Conv2dLayer,
    bn: BatchNormLayer<E>,
}

impl<E: Scalar> DilConv<E> {
    pub fn new<R: Rng>(
        store: &mut ParamStore<E>,
        rng: &mut R,
        channels: usize,
        kernel: usize,
        stride: usize,
    ) -> Self {
        DilConv {
            dw: Conv2dLayer::new(store, rng, ConvSpec::depthwise(channels, kernel, stride, 2)),
            pw: Conv2dLayer::new(store, rng, ConvSpec::pointwise(channels, channels, 1)),
            bn: BatchNormLayer::new(store, channels),
        }
    }
}

impl<E: Scalar> Layer<E> for DilConv<E> {
    fn forward(
        &mut self,
        g: &mut Graph<E>,
        ps: &ParamStore<E>,
        x: NodeId,
    ) -> Result<NodeId, Error> {
        let x = g.relu(x);
        let x = self.dw.forward(g, ps, x)?;
        let x = self.pw.forward(g, ps, x)?;
        self.bn.forward(g, ps, x)
    }

    fn out_shape(&self, input: FeatShape) -> FeatShape {
        Layer::<E>::out_shape(&self.dw, input)
    }

    fn cost(&self, input: FeatShape) -> CostStats {
        let mid = Layer::<E>::out_shape(&self.dw, input);
        Layer::<E>::cost(&self.dw, input) + Layer::<E>::cost(&self.pw, mid) + self.bn.cost(mid)
    }
}

pub enum PoolMode {
    Max,
    Avg,
}

pub struct PoolOp {
    mode: PoolMode,
    spec: PoolSpec,
}

impl PoolOp {
    pub fn new(mode: PoolMode, stride: usize) -> Self {
        PoolOp {
            mode,
            spec: PoolSpec {
                kernel: 3,
                stride,
                padding: 1,
            },
        }
    }
}

impl<E: Scalar> Layer<E> for PoolOp {
    fn forward(
        &mut self,
        g: &mut Graph<E>,
        _ps: &ParamStore<E>,
        x: NodeId,
    ) -> Result<NodeId, Error> {
        Ok(match self.mode {
            PoolMode::Max => g.max_pool(x, self.spec)?,
            PoolMode::Avg => g.avg_pool(x, self.spec)?,
        })
    }

    fn out_shape(&self, input: FeatShape) -> FeatShape {
        FeatShape::new(input.c, self.spec.out_dim(input.h), self.spec.out_dim(input.w))
    }

    fn cost(&self, _input: FeatShape) -> CostStats {
        CostStats::zero()
    }
}

pub struct Identity;

impl<E: Scalar> Layer<E> for Identity {
    fn forward(
        &mut self,
        _g: &mut Graph<E>,
        _ps: &ParamStore<E>,
        x: NodeId,
    ) -> Result<NodeId, Error> {
        Ok(x)
    }

    fn out_shape(&self, input: FeatShape) -> FeatShape {
        input
    }

    fn cost(&self, _input: FeatShape) -> CostStats {
        CostStats::zero()
    }
}

/// Stride-2 skip connection: two pointwise stride-2 convs, one on the input
/// and one on the input shifted by a pixel, concatenated then normalized.
pub struct FactorizedReduce<E: Scalar> {
    conv_a: Conv2dLayer,
    conv_b: Conv2dLayer,
    bn: BatchNormLayer<E>,
    out_channels: usize,
}

impl<E: Scalar> FactorizedReduce<E> {
    pub fn new<R: Rng>(
        store: &mut ParamStore<E>,
        rng: &mut R,
        in_channels: usize,
        out_channels: usize,
    ) -> Self {
        let half_a = out_channels - out_channels / 2;
        let half_b = out_channels / 2;
        FactorizedReduce {
            conv_a: Conv2dLayer::new(store, rng, ConvSpec::pointwise(in_channels, half_a, 2)),
            conv_b: Conv2dLayer::new(store, rng, ConvSpec::pointwise(in_channels, half_b, 2)),
            bn: BatchNormLayer::new(store, out_channels),
            out_channels,
        }
    }
}

impl<E: Scalar> Layer<E> for FactorizedReduce<E> {
    fn forward(
        &mut self,
        g: &mut Graph<E>,
        ps: &ParamStore<E>,
        x: NodeId,
    ) -> Result<NodeId, Error> {
        let x = g.relu(x);
        let a = self.conv_a.forward(g, ps, x)?;
        let shifted = g.crop_tl(x)?;
        let b = self.conv_b.forward(g, ps, shifted)?;
        let cat = g.concat_channels(&[a, b])?;
        self.bn.forward(g, ps, cat)
    }

    fn out_shape(&self, input: FeatShape) -> FeatShape {
        FeatShape::new(self.out_channels, input.h / 2, input.w / 2)
    }

    fn cost(&self, input: FeatShape) -> CostStats {
        let shifted = FeatShape::new(input.c, input.h - 1, input.w - 1);
        Layer::<E>::cost(&self.conv_a, input)
            + Layer::<E>::cost(&self.conv_b, shifted)
            + self.bn.cost(self.out_shape(input))
    }
}

/// The zero op: emits zeros (spatially reduced at stride 2) and passes no
/// gradient.
pub struct ZeroOp {
    stride: usize,
}

impl ZeroOp {
    pub fn new(stride: usize) -> Self {
        ZeroOp { stride }
    }
}

impl<E: Scalar> Layer<E> for ZeroOp {
    fn forward(
        &mut self,
        g: &mut Graph<E>,
        _ps: &ParamStore<E>,
        x: NodeId,
    ) -> Result<NodeId, Error> {
        Ok(g.zero_out(x, self.stride)?)
    }

    fn out_shape(&self, input: FeatShape) -> FeatShape {
        FeatShape::new(
            input.c,
            (input.h - 1) / self.stride + 1,
            (input.w - 1) / self.stride + 1,
        )
    }

    fn cost(&self, _input: FeatShape) -> CostStats {
        CostStats::zero()
    }
}

/// Instantiate one candidate op at the given channel count and stride.
/// Every kind preserves (H, W) at stride 1 and halves both at stride 2.
pub fn instantiate_op<E: Scalar, R: Rng>(
    kind: OpKind,
    store: &mut ParamStore<E>,
    rng: &mut R,
    channels: usize,
    stride: usize,
) -> Result<Box<dyn Layer<E>>, Error> {
    if channels == 0 || !(stride == 1 || stride == 2) {
        return Err(Error::BadOpConfig { channels, stride });
    }
    Ok(match kind {
        OpKind::SepConv3x3 => Box::new(SepConv::new(store, rng, channels, 3, stride)),
        OpKind::SepConv5x5 => Box::new(SepConv::new(store, rng, channels, 5, stride)),
        OpKind::DilConv3x3 => Box::new(DilConv::new(store, rng, channels, 3, stride)),
        OpKind::DilConv5x5 => Box::new(DilConv::new(store, rng, channels, 5, stride)),
        OpKind::MaxPool3x3 => Box::new(PoolOp::new(PoolMode::Max, stride)),
        OpKind::AvgPool3x3 => Box::new(PoolOp::new(PoolMode::Avg, stride)),
        OpKind::SkipConnect => {
            if stride == 1 {
                Box::new(Identity)
            } else {
                Box::new(FactorizedReduce::new(store, rng, channels, channels))
            }
        }
        OpKind::Zero => Box::new(ZeroOp::new(stride)),
    })
}
