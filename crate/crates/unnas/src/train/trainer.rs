//! One training job: build the network for (architecture, task), train on
//! the training split, report the task's own validation accuracy.

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, NodeId, ParamGroup, ParamStore, Schedule, Sgd, Tensor};
use crate::data::{split_indices, Batch, Dataset};
use crate::nn::{BenchNetwork, HeadKind, Network, NetworkConfig};
use crate::space::ArchPayload;
use crate::task::{make_task_stream, TaskData, TaskKind, TaskSettings, TaskStream};
use crate::util::derive_rng;

use super::Error;

/// Hyperparameters of one evaluation-phase training run. The same recipe is
/// reused across architectures and tasks within a study; only the head size
/// and input channels differ per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub width: usize,
    pub depth: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub init_lr: f64,
    pub warmup_epochs: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub stem_stride_layers: usize,
    pub auxiliary: bool,
    pub aux_weight: f64,
    pub augment: bool,
    pub val_fraction: f64,
    /// Seed of the train/val split (shared across jobs so every run sees the
    /// same validation set).
    pub split_seed: u64,
}

impl Recipe {
    pub fn desk_default() -> Self {
        Recipe {
            width: 8,
            depth: 5,
            epochs: 20,
            batch_size: 64,
            init_lr: 0.05,
            warmup_epochs: 0,
            momentum: 0.9,
            weight_decay: 3e-4,
            stem_stride_layers: 1,
            auxiliary: false,
            aux_weight: 0.4,
            augment: true,
            val_fraction: 0.2,
            split_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let mut problems = Vec::new();
        if self.epochs == 0 || self.batch_size == 0 || self.width == 0 || self.depth == 0 {
            problems.push("epochs, batch_size, width and depth must be positive".to_string());
        }
        if !(0.0..1.0).contains(&self.val_fraction) || self.val_fraction == 0.0 {
            problems.push(format!("val_fraction {} outside (0, 1)", self.val_fraction));
        }
        if self.warmup_epochs >= self.epochs {
            problems.push("warmup_epochs must be below epochs".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::BadRecipe {
                reason: problems.join("; "),
            })
        }
    }

    pub fn schedule(&self) -> Result<Schedule, Error> {
        Ok(Schedule::cosine(self.init_lr, self.warmup_epochs, self.epochs)?)
    }

    /// The auxiliary branch only makes sense for deeper image-level networks.
    pub fn effective_aux(&self, head: HeadKind) -> bool {
        self.auxiliary && self.depth >= 8 && head == HeadKind::Global
    }
}

/// Result of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub task: String,
    pub epochs: usize,
    pub final_train_loss: f64,
    pub val_accuracy: f64,
    pub seed: u64,
    pub wall_time_s: f64,
}

/// A trainable model for either search space.
pub enum Model {
    Cell(Network<f32>),
    Bench(BenchNetwork<f32>),
}

impl Model {
    pub fn build(
        arch: &ArchPayload,
        config: &NetworkConfig,
        store: &mut ParamStore<f32>,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<Self, Error> {
        Ok(match arch {
            ArchPayload::Darts(genotype) => Model::Cell(Network::new(genotype, config, store, rng)?),
            ArchPayload::Bench(graph) => {
                Model::Bench(BenchNetwork::new(graph, config, store, rng)?)
            }
        })
    }

    fn forward(
        &mut self,
        g: &mut Graph<f32>,
        ps: &ParamStore<f32>,
        x: NodeId,
    ) -> Result<(NodeId, Option<NodeId>), Error> {
        Ok(match self {
            Model::Cell(net) => {
                let out = net.forward(g, ps, x)?;
                (out.logits, out.aux_logits)
            }
            Model::Bench(net) => (net.forward(g, ps, x)?, None),
        })
    }
}

/// Fraction of correct predictions; dense targets count per pixel.
pub fn accuracy(logits: &Tensor<f32>, targets: &[usize]) -> f64 {
    let shape = logits.shape();
    let (n, c, spatial) = match shape.len() {
        2 => (shape[0], shape[1], 1),
        4 => (shape[0], shape[1], shape[2] * shape[3]),
        _ => unreachable!("classifier logits are 2- or 4-d"),
    };
    let mut correct = 0usize;
    let data = logits.data();
    for i in 0..n {
        for s in 0..spatial {
            let mut best = (0usize, f32::NEG_INFINITY);
            for ci in 0..c {
                let v = data[(i * c + ci) * spatial + s];
                if v > best.1 {
                    best = (ci, v);
                }
            }
            if best.0 == targets[i * spatial + s] {
                correct += 1;
            }
        }
    }
    correct as f64 / targets.len() as f64
}

fn task_data<'a>(
    dataset: &'a Dataset,
    task: TaskKind,
    indices: Vec<usize>,
) -> TaskData<'a> {
    if task.is_pretext() {
        TaskData::Unlabeled(dataset.images_view(indices))
    } else {
        TaskData::Labeled(dataset.labeled_view(indices))
    }
}

fn network_config(
    dataset: &Dataset,
    task: TaskKind,
    settings: &TaskSettings,
    recipe: &Recipe,
) -> NetworkConfig {
    let head = settings.head_kind(task);
    NetworkConfig {
        in_channels: settings.in_channels(task, dataset.channels()),
        width: recipe.width,
        depth: recipe.depth,
        num_classes: settings.num_classes(task, dataset.num_classes()),
        stem_stride_layers: recipe.stem_stride_layers,
        auxiliary: recipe.effective_aux(head),
        aux_weight: recipe.aux_weight,
        head,
    }
}

struct LossOutcome {
    loss_value: f64,
    graph: Graph<f32>,
    loss: NodeId,
}

fn batch_loss(
    model: &mut Model,
    store: &ParamStore<f32>,
    batch: &Batch,
    aux_weight: f64,
    train: bool,
) -> Result<LossOutcome, Error> {
    let mut g = Graph::new(train);
    let x = g.leaf(batch.input.clone());
    let (logits, aux_logits) = model.forward(&mut g, store, x)?;
    let main = g.cross_entropy(logits, &batch.targets)?;
    let loss = match aux_logits {
        Some(aux) => {
            let aux_loss = g.cross_entropy(aux, &batch.targets)?;
            let scaled = g.scale(aux_loss, aux_weight as f32);
            g.add(main, scaled)?
        }
        None => main,
    };
    Ok(LossOutcome {
        loss_value: g.value(loss).item() as f64,
        graph: g,
        loss,
    })
}

/// Train `arch` from random initialization on `task` and score the task's
/// own validation accuracy (pretext accuracy for pretext tasks, top-1 for
/// supervised) on the held-out split.
pub fn train_and_score(
    arch: &ArchPayload,
    dataset: &Dataset,
    task: TaskKind,
    settings: &TaskSettings,
    recipe: &Recipe,
    seed: u64,
) -> Result<TrainReport, Error> {
    recipe.validate()?;
    let started = std::time::Instant::now();
    let (train_idx, val_idx) = split_indices(dataset.len(), recipe.val_fraction, recipe.split_seed)?;
    if train_idx.is_empty() {
        return Err(Error::EmptySplit { which: "train" });
    }
    if val_idx.is_empty() {
        return Err(Error::EmptySplit { which: "val" });
    }

    let config = network_config(dataset, task, settings, recipe);
    let mut store: ParamStore<f32> = ParamStore::new();
    let mut init_rng = derive_rng(seed, "net-init", 0);
    let mut model = Model::build(arch, &config, &mut store, &mut init_rng)?;

    use rand::RngCore;
    let train_stream = make_task_stream(
        task_data(dataset, task, train_idx),
        task,
        settings,
        derive_rng(seed, "train-stream", 0).next_u64(),
        recipe.batch_size,
        recipe.augment,
    )?;
    // validation labels derive from the split seed, not the run seed: every
    // run of this study scores against the same validation examples
    let val_stream = make_task_stream(
        task_data(dataset, task, val_idx),
        task,
        settings,
        derive_rng(recipe.split_seed, "val-stream", 0).next_u64(),
        recipe.batch_size,
        false,
    )?;

    let schedule = recipe.schedule()?;
    let mut opt: Sgd<f32> = Sgd::new(ParamGroup::Weights, recipe.momentum, recipe.weight_decay);
    let mut final_train_loss = f64::NAN;
    for epoch in 0..recipe.epochs {
        let lr = schedule.lr(epoch)?;
        let mut losses = Vec::new();
        for (batch_idx, batch) in train_stream.epoch(epoch).enumerate() {
            let out = batch_loss(&mut model, &store, &batch, recipe.aux_weight, true)?;
            if !out.loss_value.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_idx,
                    loss: out.loss_value,
                });
            }
            out.graph.backward(out.loss, &mut store)?;
            opt.step(&mut store, lr)?;
            losses.push(out.loss_value);
        }
        final_train_loss = losses.iter().sum::<f64>() / losses.len().max(1) as f64;
    }

    let val_accuracy = evaluate(&mut model, &store, &val_stream)?;
    Ok(TrainReport {
        task: task.name().to_string(),
        epochs: recipe.epochs,
        final_train_loss,
        val_accuracy,
        seed,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// Accuracy over one pass of a stream (eval mode, epoch 0 labels).
pub fn evaluate(
    model: &mut Model,
    store: &ParamStore<f32>,
    stream: &TaskStream<'_>,
) -> Result<f64, Error> {
    let mut correct_weighted = 0.0f64;
    let mut total = 0usize;
    for batch in stream.epoch(0) {
        let mut g = Graph::new(false);
        let x = g.leaf(batch.input.clone());
        let (logits, _) = model.forward(&mut g, store, x)?;
        let acc = accuracy(g.value(logits), &batch.targets);
        correct_weighted += acc * batch.targets.len() as f64;
        total += batch.targets.len();
    }
    Ok(correct_weighted / total.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic_dataset, SyntheticSpec};
    use crate::space::sample_genotype;

    fn dataset(n: usize) -> Dataset {
        synthetic_dataset(&SyntheticSpec {
            classes: 4,
            n,
            hw: 16,
            seed: 77,
        })
    }

    fn tiny_recipe() -> Recipe {
        let mut r = Recipe::desk_default();
        r.width = 6;
        r.depth = 3;
        r.epochs = 1;
        r.batch_size = 16;
        r
    }

    #[test]
    fn rotation_head_width_is_four() {
        let ds = dataset(16);
        let cfg = network_config(&ds, TaskKind::Rot, &TaskSettings::default(), &tiny_recipe());
        assert_eq!(cfg.num_classes, 4);
        assert_eq!(cfg.head, HeadKind::Global);
    }

    #[test]
    fn untrained_network_scores_chance_on_balanced_four_way_task() {
        let ds = dataset(400);
        let settings = TaskSettings::default();
        let recipe = tiny_recipe();
        let config = network_config(&ds, TaskKind::Rot, &settings, &recipe);
        let mut store: ParamStore<f32> = ParamStore::new();
        let mut rng = derive_rng(1, "net-init", 0);
        let mut model = Model::build(
            &ArchPayload::Darts(sample_genotype(&mut derive_rng(2, "g", 0), 2)),
            &config,
            &mut store,
            &mut rng,
        )
        .unwrap();
        let stream = make_task_stream(
            TaskData::Unlabeled(ds.images_view(ds.all_indices())),
            TaskKind::Rot,
            &settings,
            3,
            50,
            false,
        )
        .unwrap();
        let acc = evaluate(&mut model, &store, &stream).unwrap();
        // chance level 0.25, 3-sigma binomial band at n = 400
        let sigma = (0.25f64 * 0.75 / 400.0).sqrt();
        assert!(
            (acc - 0.25).abs() <= 3.0 * sigma + 1e-9,
            "accuracy {acc} outside chance band"
        );
    }

    #[test]
    fn fifty_steps_overfit_a_single_batch() {
        let ds = dataset(8);
        let settings = TaskSettings::default();
        let mut recipe = tiny_recipe();
        recipe.width = 8;
        recipe.augment = false;
        let config = network_config(&ds, TaskKind::SupvCls, &settings, &recipe);
        let mut store: ParamStore<f32> = ParamStore::new();
        let mut rng = derive_rng(4, "net-init", 0);
        let mut model = Model::build(
            &ArchPayload::Darts(sample_genotype(&mut derive_rng(5, "g", 0), 2)),
            &config,
            &mut store,
            &mut rng,
        )
        .unwrap();
        let stream = make_task_stream(
            task_data(&ds, TaskKind::SupvCls, ds.all_indices()),
            TaskKind::SupvCls,
            &settings,
            6,
            8,
            false,
        )
        .unwrap();
        let batch = stream.epoch(0).next().unwrap();
        let mut opt: Sgd<f32> = Sgd::new(ParamGroup::Weights, 0.9, 0.0);
        let mut last = f64::INFINITY;
        for _ in 0..50 {
            let out = batch_loss(&mut model, &store, &batch, 0.0, true).unwrap();
            out.graph.backward(out.loss, &mut store).unwrap();
            opt.step(&mut store, 0.05).unwrap();
            last = out.loss_value;
        }
        assert!(last < 0.05, "single-batch loss stuck at {last}");
    }

    #[test]
    fn same_seed_reproduces_the_report() {
        let ds = dataset(40);
        let settings = TaskSettings::default();
        let recipe = tiny_recipe();
        let arch = ArchPayload::Darts(sample_genotype(&mut derive_rng(8, "g", 0), 2));
        let a = train_and_score(&arch, &ds, TaskKind::Rot, &settings, &recipe, 42).unwrap();
        let b = train_and_score(&arch, &ds, TaskKind::Rot, &settings, &recipe, 42).unwrap();
        assert_eq!(a.val_accuracy, b.val_accuracy);
        assert_eq!(a.final_train_loss, b.final_train_loss);
        assert!((0.0..=1.0).contains(&a.val_accuracy));
    }
}
