//! Task heads: global-average-pool classifier and dense per-pixel maps.

use rand::Rng;

use crate::autograd::{ConvSpec, Graph, NodeId, ParamGroup, ParamId, ParamStore, Scalar, Tensor};

use super::cost::{conv_cost, linear_cost, CostStats};
use super::layers::{Conv2dLayer, FeatShape, Layer};
use super::network::HeadKind;
use super::Error;

/// Global-average-pool -> linear classifier with bias.
pub(crate) struct LinearHead {
    weight: ParamId,
    bias: ParamId,
    in_features: usize,
    out_features: usize,
}

impl LinearHead {
    pub fn new<E: Scalar, R: Rng>(
        store: &mut ParamStore<E>,
        rng: &mut R,
        in_features: usize,
        out_features: usize,
    ) -> Self {
        let std = (1.0 / in_features as f64).sqrt();
        let weight = store.add(
            Tensor::randn(&[in_features, out_features], E::from_f64(std), rng),
            ParamGroup::Weights,
        );
        let bias = store.add(Tensor::zeros(&[out_features]), ParamGroup::Weights);
        LinearHead {
            weight,
            bias,
            in_features,
            out_features,
        }
    }

    pub fn forward<E: Scalar>(
        &self,
        g: &mut Graph<E>,
        ps: &ParamStore<E>,
        feat: NodeId,
    ) -> Result<NodeId, Error> {
        let pooled = g.global_avg_pool(feat)?;
        let w = g.param(ps, self.weight);
        let logits = g.linear(pooled, w)?;
        let b = g.param(ps, self.bias);
        Ok(g.add_bias(logits, b)?)
    }

    pub fn cost(&self) -> CostStats {
        linear_cost(self.in_features, self.out_features, true)
    }
}

/// Head selected by [`HeadKind`]: image-level logits, or a per-pixel class
/// map emitted at `1/downsample` of the input resolution (upsampled from the
/// final features when those sit deeper than the target).
pub(crate) enum TaskHead<E: Scalar> {
    Global(LinearHead),
    Dense {
        conv: Conv2dLayer,
        downsample: usize,
        _marker: std::marker::PhantomData<E>,
    },
}

impl<E: Scalar> TaskHead<E> {
    pub fn new<R: Rng>(
        kind: HeadKind,
        store: &mut ParamStore<E>,
        rng: &mut R,
        in_channels: usize,
        num_classes: usize,
    ) -> Self {
        match kind {
            HeadKind::Global => {
                TaskHead::Global(LinearHead::new(store, rng, in_channels, num_classes))
            }
            HeadKind::Dense { downsample } => TaskHead::Dense {
                conv: Conv2dLayer::new(store, rng, ConvSpec::pointwise(in_channels, num_classes, 1)),
                downsample,
                _marker: std::marker::PhantomData,
            },
        }
    }

    pub fn forward(
        &mut self,
        g: &mut Graph<E>,
        ps: &ParamStore<E>,
        feat: NodeId,
        input_h: usize,
    ) -> Result<NodeId, Error> {
        match self {
            TaskHead::Global(lin) => lin.forward(g, ps, feat),
            TaskHead::Dense {
                conv, downsample, ..
            } => {
                let act = g.relu(feat);
                let maps = conv.forward(g, ps, act)?;
                let feat_h = g.value(maps).shape()[2];
                let target_h = input_h / *downsample;
                if target_h < feat_h || target_h % feat_h != 0 {
                    return Err(Error::HeadResolution {
                        feat: feat_h,
                        target: target_h,
                    });
                }
                let factor = target_h / feat_h;
                if factor > 1 {
                    Ok(g.upsample_nearest(maps, factor)?)
                } else {
                    Ok(maps)
                }
            }
        }
    }

    pub fn cost(&self, feat: FeatShape) -> CostStats {
        match self {
            TaskHead::Global(lin) => lin.cost(),
            TaskHead::Dense { conv, .. } => Layer::<E>::cost(conv, feat),
        }
    }
}

/// Cost mirror for [`TaskHead`] used by the analytic per-genotype path.
pub(crate) fn head_cost(kind: HeadKind, in_channels: usize, num_classes: usize, feat_h: usize) -> CostStats {
    match kind {
        HeadKind::Global => linear_cost(in_channels, num_classes, true),
        HeadKind::Dense { .. } => conv_cost(in_channels, num_classes, 1, 1, feat_h, feat_h, false),
    }
}
