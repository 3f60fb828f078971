//! The alternating search loop: weight steps on one half of the search
//! split, architecture steps (when the postponement gate is open) on the
//! other half, then discretization.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, ParamGroup, Sgd};
use crate::data::Batch;
use crate::nn::HeadKind;
use crate::space::Genotype;
use crate::task::{make_task_stream, TaskData, TaskKind, TaskSettings, TaskStream};
use crate::util::derive_rng;

use super::derive::derive_genotype;
use super::supernet::SearchModel;
use super::{AlphaTable, Error, SearchConfig};

/// Architecture updates are postponed for the first
/// `postpone_fraction * epochs` epochs.
pub fn alpha_update_gate(epoch: usize, config: &SearchConfig) -> bool {
    (epoch as f64) >= config.postpone_fraction * config.epochs as f64
}

/// One line of the search log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub w_loss: f64,
    /// Mean architecture loss; absent while the gate is closed.
    pub a_loss: Option<f64>,
    pub entropy_normal: Vec<f64>,
    pub entropy_reduce: Vec<f64>,
    pub lr: f64,
}

pub struct SearchState {
    pub model: SearchModel,
    w_opt: Sgd<f32>,
    a_opt: Sgd<f32>,
}

impl SearchState {
    pub fn new(model: SearchModel, config: &SearchConfig) -> Self {
        SearchState {
            model,
            w_opt: Sgd::new(ParamGroup::Weights, config.w_momentum, config.w_weight_decay),
            a_opt: Sgd::new(ParamGroup::Alpha, 0.0, config.alpha_weight_decay),
        }
    }
}

fn batch_loss(
    model: &mut SearchModel,
    batch: &Batch,
    train: bool,
) -> Result<(Graph<f32>, crate::autograd::NodeId), Error> {
    let mut g = Graph::new(train);
    let x = g.leaf(batch.input.clone());
    let logits = model.forward(&mut g, x)?;
    let loss = g.cross_entropy(logits, &batch.targets)?;
    Ok((g, loss))
}

/// Run one epoch of alternating optimization: per weight batch, one weight
/// step; when the gate is open, one architecture step on the next
/// architecture batch. The two optimizers touch disjoint parameter groups.
pub fn search_epoch(
    state: &mut SearchState,
    weight_stream: &TaskStream<'_>,
    alpha_stream: &TaskStream<'_>,
    config: &SearchConfig,
    epoch: usize,
) -> Result<EpochRecord, Error> {
    let lr = config.w_lr.lr(epoch)?;
    let gate_open = alpha_update_gate(epoch, config);
    let mut w_losses = Vec::new();
    let mut a_losses = Vec::new();
    let mut alpha_batches = alpha_stream.epoch(epoch);

    for (batch_idx, batch) in weight_stream.epoch(epoch).enumerate() {
        let (g, loss) = batch_loss(&mut state.model, &batch, true)?;
        let loss_value = g.value(loss).item() as f64;
        if !loss_value.is_finite() {
            return Err(Error::NonFiniteLoss {
                phase: "weight",
                epoch,
                batch: batch_idx,
                lr,
            });
        }
        w_losses.push(loss_value);
        g.backward(loss, &mut state.model.store)?;
        state.w_opt.step(&mut state.model.store, lr)?;

        if gate_open {
            let a_batch = match alpha_batches.next() {
                Some(b) => b,
                None => {
                    alpha_batches = alpha_stream.epoch(epoch);
                    alpha_batches.next().expect("non-empty stream")
                }
            };
            let (g, loss) = batch_loss(&mut state.model, &a_batch, true)?;
            let loss_value = g.value(loss).item() as f64;
            if !loss_value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    phase: "alpha",
                    epoch,
                    batch: batch_idx,
                    lr: config.alpha_lr,
                });
            }
            a_losses.push(loss_value);
            g.backward(loss, &mut state.model.store)?;
            state.a_opt.step(&mut state.model.store, config.alpha_lr)?;
        }
    }

    let alpha = state.model.alpha_table();
    Ok(EpochRecord {
        epoch,
        w_loss: mean(&w_losses),
        a_loss: if gate_open { Some(mean(&a_losses)) } else { None },
        entropy_normal: AlphaTable::edge_entropies(&alpha.normal),
        entropy_reduce: AlphaTable::edge_entropies(&alpha.reduce),
        lr,
    })
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Result of a full search run.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub genotype: Genotype,
    pub alpha: AlphaTable,
    pub log: Vec<EpochRecord>,
}

/// Run the whole search: build the supernet for the objective, split the
/// provided data 50/50 into weight and architecture halves, run the
/// configured epochs, and discretize. Validation data never enters here;
/// callers pass the search (training) split only.
pub fn run_search(
    data: TaskData<'_>,
    objective: TaskKind,
    settings: &TaskSettings,
    config: &SearchConfig,
    dataset_classes: usize,
) -> Result<SearchOutcome, Error> {
    config.validate()?;
    if data.hw() != config.input_crop {
        return Err(Error::InputSizeMismatch {
            expected: config.input_crop,
            got: data.hw(),
        });
    }

    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut derive_rng(config.seed, "search-split", 0));
    let alpha_half = order.split_off(n / 2);
    let weight_data = data.subset(order);
    let alpha_data = data.subset(alpha_half);

    let weight_stream = make_task_stream(
        weight_data,
        objective,
        settings,
        derive_rng(config.seed, "w-stream", 0).next_u64(),
        config.batch_size,
        true,
    )?;
    let alpha_stream = make_task_stream(
        alpha_data,
        objective,
        settings,
        derive_rng(config.seed, "a-stream", 0).next_u64(),
        config.batch_size,
        true,
    )?;

    let in_channels = settings.in_channels(objective, data.channels());
    let num_classes = settings.num_classes(objective, dataset_classes);
    let head: HeadKind = settings.head_kind(objective);
    let model = SearchModel::new(config, in_channels, num_classes, head)?;
    let mut state = SearchState::new(model, config);

    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        log.push(search_epoch(
            &mut state,
            &weight_stream,
            &alpha_stream,
            config,
            epoch,
        )?);
    }
    let alpha = state.model.alpha_table();
    alpha.validate()?;
    Ok(SearchOutcome {
        genotype: derive_genotype(&alpha),
        alpha,
        log,
    })
}
