//! Assembly of one discrete cell from a genotype.

use rand::Rng;

use crate::autograd::{ConvSpec, Graph, NodeId, ParamStore, Scalar};
use crate::space::{GenoPair, Genotype};

use super::cost::CostStats;
use super::layers::{instantiate_op, FactorizedReduce, FeatShape, Layer, ReluConvBn};
use super::Error;

/// One cell instance. States 0 and 1 are the preprocessed cell inputs; each
/// intermediate node adds two op outputs; the cell output concatenates the
/// states listed in `concat`.
pub struct Cell<E: Scalar> {
    pre0: Box<dyn Layer<E>>,
    pre1: ReluConvBn<E>,
    node_ops: Vec<[(Box<dyn Layer<E>>, usize); 2]>,
    concat: Vec<usize>,
    pub reduction: bool,
    pub out_channels: usize,
}

impl<E: Scalar> Cell<E> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        genotype: &Genotype,
        c_prev_prev: usize,
        c_prev: usize,
        c_node: usize,
        reduction: bool,
        prev_reduction: bool,
        store: &mut ParamStore<E>,
        rng: &mut R,
    ) -> Result<Self, Error> {
        genotype.validate().map_err(|e| Error::GenotypeMismatch {
            reason: e.to_string(),
        })?;
        let pre0: Box<dyn Layer<E>> = if prev_reduction {
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
        let pairs = if reduction {
            &genotype.reduce
        } else {
            &genotype.normal
        };
        let mut node_ops = Vec::with_capacity(pairs.len());
        for node in pairs {
            let mut built: Vec<(Box<dyn Layer<E>>, usize)> = Vec::with_capacity(2);
            for GenoPair { op, pred } in node {
                let stride = if reduction && *pred < 2 { 2 } else { 1 };
                built.push((instantiate_op(*op, store, rng, c_node, stride)?, *pred));
            }
            let mut it = built.into_iter();
            node_ops.push([it.next().unwrap(), it.next().unwrap()]);
        }
        Ok(Cell {
            pre0,
            pre1,
            node_ops,
            concat: genotype.concat.clone(),
            reduction,
            out_channels: genotype.concat.len() * c_node,
        })
    }

    pub fn forward(
        &mut self,
        g: &mut Graph<E>,
        ps: &ParamStore<E>,
        s0: NodeId,
        s1: NodeId,
    ) -> Result<NodeId, Error> {
        let mut states = vec![self.pre0.forward(g, ps, s0)?, self.pre1.forward(g, ps, s1)?];
        for node in &mut self.node_ops {
            let a = node[0].0.forward(g, ps, states[node[0].1])?;
            let b = node[1].0.forward(g, ps, states[node[1].1])?;
            states.push(g.add(a, b)?);
        }
        let outs: Vec<NodeId> = self.concat.iter().map(|&s| states[s]).collect();
        Ok(g.concat_channels(&outs)?)
    }

    /// Shape of the cell output given the two input shapes.
    pub fn out_shape(&self, in0: FeatShape, in1: FeatShape) -> FeatShape {
        let _ = in0;
        let base = self.pre1.out_shape(in1);
        let (h, w) = if self.reduction {
            (base.h / 2, base.w / 2)
        } else {
            (base.h, base.w)
        };
        FeatShape::new(self.out_channels, h, w)
    }

    pub fn cost(&self, in0: FeatShape, in1: FeatShape) -> CostStats {
        let mut total = self.pre0.cost(in0);
        total += self.pre1.cost(in1);
        let mut shapes = vec![self.pre0.out_shape(in0), self.pre1.out_shape(in1)];
        for node in &self.node_ops {
            let mut node_shape = None;
            for (op, pred) in node {
                total += op.cost(shapes[*pred]);
                node_shape = Some(op.out_shape(shapes[*pred]));
            }
            shapes.push(node_shape.expect("two ops per node"));
        }
        total
    }
}
