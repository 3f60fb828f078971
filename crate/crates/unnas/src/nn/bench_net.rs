//! Trainable network for benchmark cell graphs, built from plain conv/pool
//! layers: a stride-2 conv stem, three stages of identical cells separated
//! by 2x2 max-pool downsampling with channel doubling, and a task head.
//!
//! Cell semantics (desk-scale simplification of the public benchmark): all
//! vertices operate at the stage width; a vertex input is the elementwise
//! sum of its predecessors' outputs; the output vertex sums its inputs.

use rand::Rng;

use crate::autograd::{ConvSpec, Graph, NodeId, ParamStore, PoolSpec, Scalar};
use crate::space::{BenchGraph, VertexOp};

use super::cost::{conv_cost, norm_cost, CostStats};
use super::head::{head_cost, TaskHead};
use super::layers::{FeatShape, Layer, PoolMode, PoolOp, ReluConvBn};
use super::network::NetworkConfig;
use super::Error;

enum VertexLayer<E: Scalar> {
    Op(Box<dyn Layer<E>>),
    PassThrough,
}

struct BenchCell<E: Scalar> {
    graph: BenchGraph,
    vertices: Vec<VertexLayer<E>>,
}

impl<E: Scalar> BenchCell<E> {
    fn new<R: Rng>(
        graph: &BenchGraph,
        channels: usize,
        store: &mut ParamStore<E>,
        rng: &mut R,
    ) -> Result<Self, Error> {
        let mut vertices = Vec::with_capacity(graph.n_vertices());
        for op in graph.ops() {
            vertices.push(match op {
                VertexOp::Input | VertexOp::Output => VertexLayer::PassThrough,
                VertexOp::Conv3x3 => VertexLayer::Op(Box::new(ReluConvBn::new(
                    store,
                    rng,
                    ConvSpec::same(channels, channels, 3, 1),
                    true,
                ))),
                VertexOp::Conv1x1 => VertexLayer::Op(Box::new(ReluConvBn::new(
                    store,
                    rng,
                    ConvSpec::pointwise(channels, channels, 1),
                    true,
                ))),
                VertexOp::Maxpool3x3 => VertexLayer::Op(Box::new(PoolOp::new(PoolMode::Max, 1))),
            });
        }
        Ok(BenchCell {
            graph: graph.clone(),
            vertices,
        })
    }

    fn forward(
        &mut self,
        g: &mut Graph<E>,
        ps: &ParamStore<E>,
        x: NodeId,
    ) -> Result<NodeId, Error> {
        let n = self.graph.n_vertices();
        let mut states: Vec<Option<NodeId>> = vec![None; n];
        states[0] = Some(x);
        for v in 1..n {
            let mut incoming: Option<NodeId> = None;
            for u in 0..v {
                if self.graph.has_edge(u, v) {
                    let s = states[u].expect("topological order");
                    incoming = Some(match incoming {
                        None => s,
                        Some(acc) => g.add(acc, s)?,
                    });
                }
            }
            let inp = incoming.expect("pruned graph keeps connected vertices only");
            states[v] = Some(match &mut self.vertices[v] {
                VertexLayer::PassThrough => inp,
                VertexLayer::Op(layer) => layer.forward(g, ps, inp)?,
            });
        }
        Ok(states[n - 1].unwrap())
    }

    fn cost(&self, shape: FeatShape) -> CostStats {
        let mut total = CostStats::zero();
        for v in self.vertices.iter() {
            if let VertexLayer::Op(layer) = v {
                total += layer.cost(shape);
            }
        }
        total
    }
}

/// Network over a benchmark graph. `config.width` is the first-stage channel
/// count; `config.depth` cells are split across three stages.
pub struct BenchNetwork<E: Scalar> {
    stem: Vec<ReluConvBn<E>>,
    stages: Vec<Vec<BenchCell<E>>>,
    transitions: Vec<ReluConvBn<E>>,
    head: TaskHead<E>,
    config: NetworkConfig,
}

impl<E: Scalar> BenchNetwork<E> {
    pub fn new<R: Rng>(
        graph: &BenchGraph,
        config: &NetworkConfig,
        store: &mut ParamStore<E>,
        rng: &mut R,
    ) -> Result<Self, Error> {
        config.validate()?;
        if !graph.is_valid() {
            return Err(Error::GenotypeMismatch {
                reason: "benchmark graph fails validity".to_string(),
            });
        }
        let pruned = graph.pruned();
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
        let mut stages = Vec::with_capacity(3);
        let mut transitions = Vec::with_capacity(2);
        let mut channels = config.width;
        for stage in 0..3 {
            if stage > 0 {
                transitions.push(ReluConvBn::new(
                    store,
                    rng,
                    ConvSpec::pointwise(channels, channels * 2, 1),
                    true,
                ));
                channels *= 2;
            }
            let cells_here = config.depth / 3 + usize::from(stage < config.depth % 3);
            let mut cells = Vec::with_capacity(cells_here);
            for _ in 0..cells_here {
                cells.push(BenchCell::new(&pruned, channels, store, rng)?);
            }
            stages.push(cells);
        }
        let head = TaskHead::new(config.head, store, rng, channels, config.num_classes);
        Ok(BenchNetwork {
            stem,
            stages,
            transitions,
            head,
            config: config.clone(),
        })
    }

    pub fn forward(
        &mut self,
        g: &mut Graph<E>,
        ps: &ParamStore<E>,
        input: NodeId,
    ) -> Result<NodeId, Error> {
        let input_h = g.value(input).shape()[2];
        let mut x = input;
        for block in &mut self.stem {
            x = block.forward(g, ps, x)?;
            x = g.relu(x);
        }
        for (stage, cells) in self.stages.iter_mut().enumerate() {
            if stage > 0 {
                x = g.max_pool(
                    x,
                    PoolSpec {
                        kernel: 2,
                        stride: 2,
                        padding: 0,
                    },
                )?;
                x = self.transitions[stage - 1].forward(g, ps, x)?;
            }
            for cell in cells.iter_mut() {
                x = cell.forward(g, ps, x)?;
            }
        }
        self.head.forward(g, ps, x, input_h)
    }

    pub fn cost(&self, input_hw: usize) -> CostStats {
        let mut total = CostStats::zero();
        let mut shape = FeatShape::new(self.config.in_channels, input_hw, input_hw);
        for block in &self.stem {
            total += block.cost(shape);
            shape = block.out_shape(shape);
        }
        for (stage, cells) in self.stages.iter().enumerate() {
            if stage > 0 {
                shape = FeatShape::new(shape.c, shape.h / 2, shape.w / 2);
                total += self.transitions[stage - 1].cost(shape);
                shape = FeatShape::new(shape.c * 2, shape.h, shape.w);
            }
            for cell in cells {
                total += cell.cost(shape);
            }
        }
        total + self.head.cost(shape)
    }
}

/// Analytic cost of a benchmark-graph network; mirrors `BenchNetwork`
/// (alignment pinned by test).
pub fn bench_graph_cost(graph: &BenchGraph, config: &NetworkConfig, input_hw: usize) -> CostStats {
    let pruned = graph.pruned();
    let mut total = CostStats::zero();
    let mut h = input_hw;
    let mut c_in = config.in_channels;
    for _ in 0..config.stem_stride_layers {
        h = (h - 1) / 2 + 1;
        total += conv_cost(c_in, config.width, 3, 1, h, h, false) + norm_cost(config.width);
        c_in = config.width;
    }
    let mut channels = config.width;
    for stage in 0..3 {
        if stage > 0 {
            h /= 2;
            total += conv_cost(channels, channels * 2, 1, 1, h, h, false) + norm_cost(channels * 2);
            channels *= 2;
        }
        let cells_here = config.depth / 3 + usize::from(stage < config.depth % 3);
        let mut cell_cost = CostStats::zero();
        for op in pruned.ops() {
            cell_cost += match op {
                VertexOp::Input | VertexOp::Output | VertexOp::Maxpool3x3 => CostStats::zero(),
                VertexOp::Conv3x3 => {
                    conv_cost(channels, channels, 3, 1, h, h, false) + norm_cost(channels)
                }
                VertexOp::Conv1x1 => {
                    conv_cost(channels, channels, 1, 1, h, h, false) + norm_cost(channels)
                }
            };
        }
        for _ in 0..cells_here {
            total += cell_cost;
        }
    }
    total + head_cost(config.head, channels, config.num_classes, h)
}
