//! The supernet: every edge carries all candidate ops, combined by a
//! softmax over that edge's logits.

use rand::Rng;

use crate::autograd::{ConvSpec, Graph, NodeId, ParamGroup, ParamId, ParamStore, Tensor};
use crate::nn::head::TaskHead;
use crate::nn::{instantiate_op, FactorizedReduce, HeadKind, Layer, OpKind, ReluConvBn};
use crate::util::derive_rng;

use super::{AlphaTable, Error, SearchConfig};

/// One relaxed edge: all candidate ops plus the shared logits parameter.
/// Output = sum_k softmax(logits)_k * op_k(x).
pub struct MixedOp {
    candidates: Vec<Box<dyn Layer<f32>>>,
    alpha: ParamId,
    pred: usize,
}

impl MixedOp {
    pub fn new<R: Rng>(
        store: &mut ParamStore<f32>,
        rng: &mut R,
        alpha: ParamId,
        channels: usize,
        stride: usize,
        pred: usize,
    ) -> Result<Self, Error> {
        let mut candidates: Vec<Box<dyn Layer<f32>>> = Vec::with_capacity(OpKind::ALL.len());
        for kind in OpKind::ALL {
            candidates.push(instantiate_op(kind, store, rng, channels, stride)?);
        }
        Ok(MixedOp {
            candidates,
            alpha,
            pred,
        })
    }

    pub fn forward(
        &mut self,
        g: &mut Graph<f32>,
        ps: &ParamStore<f32>,
        x: NodeId,
    ) -> Result<NodeId, Error> {
        let mut outs = Vec::with_capacity(self.candidates.len());
        for op in &mut self.candidates {
            outs.push(op.forward(g, ps, x)?);
        }
        let logits = g.param(ps, self.alpha);
        Ok(g.mixed_combine(logits, &outs)?)
    }

    pub fn pred(&self) -> usize {
        self.pred
    }
}

struct SuperCell {
    pre0: Box<dyn Layer<f32>>,
    pre1: ReluConvBn<f32>,
    /// Node-major: node p owns entries for predecessors 0..p+2.
    edges: Vec<MixedOp>,
    n_nodes: usize,
}

impl SuperCell {
    #[allow(clippy::too_many_arguments)]
    fn new<R: Rng>(
        store: &mut ParamStore<f32>,
        rng: &mut R,
        alphas: &[ParamId],
        n_nodes: usize,
        c_prev_prev: usize,
        c_prev: usize,
        c_node: usize,
        reduction: bool,
        prev_reduction: bool,
    ) -> Result<Self, Error> {
        let pre0: Box<dyn Layer<f32>> = if prev_reduction {
            Box::new(FactorizedReduce::new(store, rng, c_prev_prev, c_node))
        } else {
            Box::new(ReluConvBn::new(
                store,
                rng,
                ConvSpec::pointwise(c_prev_prev, c_node, 1),
                true,
            ))
        };
        let pre1 = ReluConvBn::new(store, rng, ConvSpec::pointwise(c_prev, c_node, 1), true);
        let mut edges = Vec::with_capacity(AlphaTable::edge_count(n_nodes));
        for (node, pred, idx) in AlphaTable::edge_ids(n_nodes) {
            let _ = node;
            let stride = if reduction && pred < 2 { 2 } else { 1 };
            edges.push(MixedOp::new(store, rng, alphas[idx], c_node, stride, pred)?);
        }
        Ok(SuperCell {
            pre0,
            pre1,
            edges,
            n_nodes,
        })
    }

    fn forward(
        &mut self,
        g: &mut Graph<f32>,
        ps: &ParamStore<f32>,
        s0: NodeId,
        s1: NodeId,
    ) -> Result<NodeId, Error> {
        let mut states = vec![self.pre0.forward(g, ps, s0)?, self.pre1.forward(g, ps, s1)?];
        let mut cursor = 0usize;
        for node in 0..self.n_nodes {
            let mut acc: Option<NodeId> = None;
            for _pred in 0..node + 2 {
                let edge = &mut self.edges[cursor];
                cursor += 1;
                let contribution = {
                    let input = states[edge.pred()];
                    edge.forward(g, ps, input)?
                };
                acc = Some(match acc {
                    None => contribution,
                    Some(a) => g.add(a, contribution)?,
                });
            }
            states.push(acc.expect("every node has incoming edges"));
        }
        let outs: Vec<NodeId> = (2..self.n_nodes + 2).map(|s| states[s]).collect();
        Ok(g.concat_channels(&outs)?)
    }
}

/// The supernet plus its parameter store and the shared alpha parameters.
pub struct SearchModel {
    stem: Vec<ReluConvBn<f32>>,
    cells: Vec<SuperCell>,
    head: TaskHead<f32>,
    pub store: ParamStore<f32>,
    alpha_normal: Vec<ParamId>,
    alpha_reduce: Vec<ParamId>,
    n_nodes: usize,
}

impl SearchModel {
    pub fn new(
        config: &SearchConfig,
        in_channels: usize,
        num_classes: usize,
        head_kind: HeadKind,
    ) -> Result<Self, Error> {
        config.validate()?;
        let mut store: ParamStore<f32> = ParamStore::new();
        let mut rng = derive_rng(config.seed, "supernet-init", 0);

        // architecture logits: one [n_ops] vector per edge, shared across
        // cells of the same type
        let n_edges = AlphaTable::edge_count(config.nodes);
        let alpha = |store: &mut ParamStore<f32>, rng: &mut _| -> Vec<ParamId> {
            (0..n_edges)
                .map(|_| {
                    store.add(
                        Tensor::randn(&[OpKind::ALL.len()], 1e-3, rng),
                        ParamGroup::Alpha,
                    )
                })
                .collect()
        };
        let alpha_normal = alpha(&mut store, &mut rng);
        let alpha_reduce = alpha(&mut store, &mut rng);

        let mut stem = Vec::with_capacity(config.stem_stride_layers);
        let mut c = in_channels;
        for _ in 0..config.stem_stride_layers {
            stem.push(ReluConvBn::new(
                &mut store,
                &mut rng,
                ConvSpec::same(c, config.width, 3, 2),
                false,
            ));
            c = config.width;
        }

        let reduce_at = [config.depth / 3, 2 * config.depth / 3];
        let mut c_node = config.width;
        let (mut c_pp, mut c_p) = (config.width, config.width);
        let mut prev_reduction = false;
        let mut cells = Vec::with_capacity(config.depth);
        for i in 0..config.depth {
            let reduction = reduce_at.contains(&i);
            if reduction {
                c_node *= 2;
            }
            let alphas = if reduction {
                &alpha_reduce
            } else {
                &alpha_normal
            };
            cells.push(SuperCell::new(
                &mut store,
                &mut rng,
                alphas,
                config.nodes,
                c_pp,
                c_p,
                c_node,
                reduction,
                prev_reduction,
            )?);
            c_pp = c_p;
            c_p = config.nodes * c_node;
            prev_reduction = reduction;
        }
        let head = TaskHead::new(head_kind, &mut store, &mut rng, c_p, num_classes);
        Ok(SearchModel {
            stem,
            cells,
            head,
            store,
            alpha_normal,
            alpha_reduce,
            n_nodes: config.nodes,
        })
    }

    pub fn forward(&mut self, g: &mut Graph<f32>, input: NodeId) -> Result<NodeId, Error> {
        let SearchModel {
            stem,
            cells,
            head,
            store,
            ..
        } = self;
        let input_h = g.value(input).shape()[2];
        let mut x = input;
        for block in stem.iter_mut() {
            x = block.forward(g, store, x)?;
            x = g.relu(x);
        }
        let (mut s0, mut s1) = (x, x);
        for cell in cells.iter_mut() {
            let out = cell.forward(g, store, s0, s1)?;
            s0 = s1;
            s1 = out;
        }
        Ok(head.forward(g, store, s1, input_h)?)
    }

    /// Snapshot the architecture logits.
    pub fn alpha_table(&self) -> AlphaTable {
        let read = |ids: &[ParamId]| -> Vec<Vec<f64>> {
            ids.iter()
                .map(|id| {
                    self.store
                        .value(*id)
                        .data()
                        .iter()
                        .map(|&v| v as f64)
                        .collect()
                })
                .collect()
        };
        AlphaTable {
            n_nodes: self.n_nodes,
            normal: read(&self.alpha_normal),
            reduce: read(&self.alpha_reduce),
        }
    }

    /// Raw bit pattern of every alpha scalar, for reproducibility checks.
    pub fn alpha_bits(&self) -> Vec<u32> {
        self.alpha_normal
            .iter()
            .chain(self.alpha_reduce.iter())
            .flat_map(|id| self.store.value(*id).data().iter().map(|v| v.to_bits()))
            .collect()
    }
}
