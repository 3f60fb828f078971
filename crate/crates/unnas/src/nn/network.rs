//! Whole-network assembly from a genotype: stride-2 conv stem, a stack of
//! cells with reduce cells (and channel doubling) at one and two thirds of
//! the depth, and a task head. An optional auxiliary classifier taps the
//! features after the two-thirds-depth cell.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{ConvSpec, Graph, NodeId, ParamStore, Scalar};
use crate::space::Genotype;

use super::cell::Cell;
use super::cost::{conv_cost, norm_cost, CostStats};
use super::head::{head_cost, LinearHead, TaskHead};
use super::layers::{FeatShape, Layer, OpKind, ReluConvBn};
use super::Error;

/// Output head shape: image-level classification or a dense per-pixel class
/// map predicted at `1/downsample` of the input resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadKind {
    Global,
    Dense { downsample: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub in_channels: usize,
    /// Initial channel count (doubles at each reduce cell).
    pub width: usize,
    /// Number of cells.
    pub depth: usize,
    pub num_classes: usize,
    /// Number of stride-2 convs in the stem (>= 1).
    pub stem_stride_layers: usize,
    pub auxiliary: bool,
    pub aux_weight: f64,
    pub head: HeadKind,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let mut problems = Vec::new();
        if self.in_channels == 0 {
            problems.push("in_channels must be positive");
        }
        if self.width == 0 {
            problems.push("width must be positive");
        }
        if self.depth == 0 {
            problems.push("depth must be positive");
        }
        if self.num_classes == 0 {
            problems.push("num_classes must be positive");
        }
        if self.stem_stride_layers == 0 {
            problems.push("stem_stride_layers must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.aux_weight) {
            problems.push("aux_weight must lie in [0, 1]");
        }
        if let HeadKind::Dense { downsample } = self.head {
            if downsample == 0 || !downsample.is_power_of_two() {
                problems.push("dense head downsample must be a positive power of two");
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::BadNetworkConfig {
                reason: problems.join("; "),
            })
        }
    }

    /// Cell indices that reduce (and double channels).
    pub fn reduce_positions(&self) -> [usize; 2] {
        [self.depth / 3, 2 * self.depth / 3]
    }
}

/// A trainable network for a fixed genotype.
pub struct Network<E: Scalar> {
    stem: Vec<ReluConvBn<E>>,
    cells: Vec<Cell<E>>,
    aux: Option<LinearHead>,
    aux_index: usize,
    head: TaskHead<E>,
    config: NetworkConfig,
}

/// Logits produced by one forward pass.
pub struct NetOutput {
    pub logits: NodeId,
    pub aux_logits: Option<NodeId>,
}

impl<E: Scalar> Network<E> {
    pub fn new<R: Rng>(
        genotype: &Genotype,
        config: &NetworkConfig,
        store: &mut ParamStore<E>,
        rng: &mut R,
    ) -> Result<Self, Error> {
        config.validate()?;
        genotype.validate().map_err(|e| Error::GenotypeMismatch {
            reason: e.to_string(),
        })?;

        let mut stem = Vec::with_capacity(config.stem_stride_layers);
        let mut c_in = config.in_channels;
        for _ in 0..config.stem_stride_layers {
            stem.push(ReluConvBn::new(
                store,
                rng,
                ConvSpec::same(c_in, config.width, 3, 2),
                false,
            ));
            c_in = config.width;
        }

        let reduce_at = config.reduce_positions();
        let mut c_node = config.width;
        let (mut c_pp, mut c_p) = (config.width, config.width);
        let mut prev_reduction = false;
        let mut cells = Vec::with_capacity(config.depth);
        let mut aux_in_features = 0usize;
        for i in 0..config.depth {
            let reduction = reduce_at.contains(&i);
            if reduction {
                c_node *= 2;
            }
            let cell = Cell::new(
                genotype,
                c_pp,
                c_p,
                c_node,
                reduction,
                prev_reduction,
                store,
                rng,
            )?;
            c_pp = c_p;
            c_p = cell.out_channels;
            prev_reduction = reduction;
            cells.push(cell);
            if i == 2 * config.depth / 3 {
                aux_in_features = c_p;
            }
        }
        let aux = if config.auxiliary {
            Some(LinearHead::new(store, rng, aux_in_features, config.num_classes))
        } else {
            None
        };
        let head = TaskHead::new(config.head, store, rng, c_p, config.num_classes);
        Ok(Network {
            stem,
            cells,
            aux,
            aux_index: 2 * config.depth / 3,
            head,
            config: config.clone(),
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn forward(
        &mut self,
        g: &mut Graph<E>,
        ps: &ParamStore<E>,
        input: NodeId,
    ) -> Result<NetOutput, Error> {
        let input_h = g.value(input).shape()[2];
        let mut x = input;
        for block in &mut self.stem {
            x = block.forward(g, ps, x)?;
            x = g.relu(x);
        }
        let (mut s0, mut s1) = (x, x);
        let mut aux_logits = None;
        for (i, cell) in self.cells.iter_mut().enumerate() {
            let out = cell.forward(g, ps, s0, s1)?;
            s0 = s1;
            s1 = out;
            if i == self.aux_index && g.train_mode() {
                if let Some(aux) = &self.aux {
                    let tapped = g.relu(s1);
                    aux_logits = Some(aux.forward(g, ps, tapped)?);
                }
            }
        }
        let logits = self.head.forward(g, ps, s1, input_h)?;
        Ok(NetOutput { logits, aux_logits })
    }

    /// Structure-only cost for one input sample, independent of parameter
    /// values. The auxiliary branch is excluded: cost describes the
    /// inference network.
    pub fn cost(&self, input_hw: usize) -> CostStats {
        let mut total = CostStats::zero();
        let mut shape = FeatShape::new(self.config.in_channels, input_hw, input_hw);
        for block in &self.stem {
            total += block.cost(shape);
            shape = block.out_shape(shape);
        }
        let (mut sh0, mut sh1) = (shape, shape);
        for cell in &self.cells {
            total += cell.cost(sh0, sh1);
            let out = cell.out_shape(sh0, sh1);
            sh0 = sh1;
            sh1 = out;
        }
        total + self.head.cost(sh1)
    }
}

/// Analytic cost of a genotype network without instantiating parameters;
/// mirrors `Network::new` + `Network::cost` exactly (kept aligned by test).
pub fn genotype_cost(genotype: &Genotype, config: &NetworkConfig, input_hw: usize) -> CostStats {
    let mut total = CostStats::zero();
    let mut h = input_hw;
    let mut c_in = config.in_channels;
    for _ in 0..config.stem_stride_layers {
        let ho = (h - 1) / 2 + 1;
        total += conv_cost(c_in, config.width, 3, 1, ho, ho, false) + norm_cost(config.width);
        c_in = config.width;
        h = ho;
    }
    let reduce_at = config.reduce_positions();
    let mut c_node = config.width;
    let (mut c_pp, mut c_p) = (config.width, config.width);
    let (mut h_pp, mut h_p) = (h, h);
    let mut prev_reduction = false;
    for i in 0..config.depth {
        let reduction = reduce_at.contains(&i);
        if reduction {
            c_node *= 2;
        }
        // preprocess both inputs to c_node channels at h_p resolution
        if prev_reduction {
            total += factorized_reduce_cost(c_pp, c_node, h_pp);
        } else {
            total += conv_cost(c_pp, c_node, 1, 1, h_pp, h_pp, false) + norm_cost(c_node);
        }
        total += conv_cost(c_p, c_node, 1, 1, h_p, h_p, false) + norm_cost(c_node);
        let h_out = if reduction { h_p / 2 } else { h_p };
        let cell_pairs = if reduction {
            &genotype.reduce
        } else {
            &genotype.normal
        };
        for node in cell_pairs {
            for pair in node {
                let stride = if reduction && pair.pred < 2 { 2 } else { 1 };
                let h_in = if stride == 2 { h_p } else { h_out };
                total += op_cost(pair.op, c_node, stride, h_in, h_out);
            }
        }
        c_pp = c_p;
        c_p = genotype.concat.len() * c_node;
        h_pp = h_p;
        h_p = h_out;
        prev_reduction = reduction;
    }
    total + head_cost(config.head, c_p, config.num_classes, h_p)
}

fn factorized_reduce_cost(c_in: usize, c_out: usize, h: usize) -> CostStats {
    let half_a = c_out - c_out / 2;
    let half_b = c_out / 2;
    let ho_a = (h - 1) / 2 + 1;
    let ho_b = (h - 2) / 2 + 1;
    conv_cost(c_in, half_a, 1, 1, ho_a, ho_a, false)
        + conv_cost(c_in, half_b, 1, 1, ho_b, ho_b, false)
        + norm_cost(c_out)
}

pub(crate) fn op_cost(kind: OpKind, c: usize, stride: usize, h_in: usize, h_out: usize) -> CostStats {
    match kind {
        OpKind::SepConv3x3 | OpKind::SepConv5x5 => {
            let k = if kind == OpKind::SepConv3x3 { 3 } else { 5 };
            // two (depthwise -> pointwise -> norm) applications; the first
            // depthwise carries the stride
            conv_cost(c, c, k, c, h_out, h_out, false)
                + conv_cost(c, c, 1, 1, h_out, h_out, false)
                + norm_cost(c)
                + conv_cost(c, c, k, c, h_out, h_out, false)
                + conv_cost(c, c, 1, 1, h_out, h_out, false)
                + norm_cost(c)
        }
        OpKind::DilConv3x3 | OpKind::DilConv5x5 => {
            let k = if kind == OpKind::DilConv3x3 { 3 } else { 5 };
            conv_cost(c, c, k, c, h_out, h_out, false)
                + conv_cost(c, c, 1, 1, h_out, h_out, false)
                + norm_cost(c)
        }
        OpKind::MaxPool3x3 | OpKind::AvgPool3x3 | OpKind::Zero => CostStats::zero(),
        OpKind::SkipConnect => {
            if stride == 1 {
                CostStats::zero()
            } else {
                factorized_reduce_cost(c, c, h_in)
            }
        }
    }
}
