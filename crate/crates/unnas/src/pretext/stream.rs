//! Deterministic pretext example streams over unlabeled dataset views.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::Tensor;
use crate::data::{augment_image, stack_batch, Batch, ImagesView};
use crate::util::derive_rng;

use super::color::{color_example, pool_majority};
use super::jigsaw::jigsaw_example;
use super::rotation::rotate_label;
use super::{Error, PretextTask, Target};

/// Per-epoch reshuffled stream of pretext examples. Identical
/// (seed, epoch) produce identical batches; the stream type only ever sees
/// pixels (an [`ImagesView`]), never annotations.
pub struct PretextStream<'a> {
    view: ImagesView<'a>,
    task: PretextTask,
    seed: u64,
    batch_size: usize,
    augment: bool,
}

impl<'a> PretextStream<'a> {
    pub fn new(
        view: ImagesView<'a>,
        task: PretextTask,
        seed: u64,
        batch_size: usize,
        augment: bool,
    ) -> Result<Self, Error> {
        assert!(batch_size > 0);
        let hw = view.hw();
        match &task {
            PretextTask::Rot => {}
            PretextTask::Jigsaw(cfg) => {
                if hw % cfg.grid != 0 {
                    return Err(Error::ImageTooSmall {
                        hw,
                        grid: cfg.grid,
                    });
                }
            }
            PretextTask::Color { pool_factor, .. } => {
                if hw % pool_factor != 0 {
                    return Err(Error::BadPoolFactor {
                        hw,
                        factor: *pool_factor,
                    });
                }
                if view.channels() != 3 {
                    return Err(Error::NotThreeChannel {
                        shape: vec![view.channels(), hw, hw],
                    });
                }
            }
        }
        Ok(PretextStream {
            view,
            task,
            seed,
            batch_size,
            augment,
        })
    }

    pub fn len(&self) -> usize {
        self.view.len()
    }

    pub fn is_empty(&self) -> bool {
        self.view.is_empty()
    }

    pub fn task(&self) -> &PretextTask {
        &self.task
    }

    pub fn num_classes(&self) -> usize {
        self.task.num_classes()
    }

    /// Iterate the epoch's batches (reshuffled and relabeled per epoch).
    pub fn epoch(&self, epoch: usize) -> PretextEpochIter<'_, 'a> {
        let mut order: Vec<usize> = (0..self.view.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut derive_rng(self.seed, "pretext-order", epoch as u64));
        PretextEpochIter {
            stream: self,
            order,
            label_rng: derive_rng(self.seed, "pretext-labels", epoch as u64),
            aug_rng: derive_rng(self.seed, "pretext-augment", epoch as u64),
            cursor: 0,
        }
    }

    fn make_example(
        &self,
        index: usize,
        label_rng: &mut ChaCha8Rng,
        aug_rng: &mut ChaCha8Rng,
    ) -> (Tensor<f32>, Target) {
        let raw = self.view.image(index);
        let img = if self.augment {
            augment_image(raw, aug_rng)
        } else {
            raw.clone()
        };
        let ex = match &self.task {
            PretextTask::Rot => {
                let k = label_rng.gen_range(0..4);
                rotate_label(&img, k).expect("square image validated")
            }
            PretextTask::Jigsaw(cfg) => {
                let idx = label_rng.gen_range(0..cfg.k());
                jigsaw_example(&img, cfg, idx).expect("grid validated")
            }
            PretextTask::Color { bins, pool_factor } => {
                let mut ex = color_example(&img, *bins).expect("channels validated");
                if let Target::Map { classes, h, w } = ex.target {
                    let (pooled, ho, wo) = pool_majority(&classes, h, w, *pool_factor);
                    ex.target = Target::Map {
                        classes: pooled,
                        h: ho,
                        w: wo,
                    };
                }
                ex
            }
        };
        (ex.input, ex.target)
    }
}

pub struct PretextEpochIter<'s, 'a> {
    stream: &'s PretextStream<'a>,
    order: Vec<usize>,
    label_rng: ChaCha8Rng,
    aug_rng: ChaCha8Rng,
    cursor: usize,
}

impl Iterator for PretextEpochIter<'_, '_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.stream.batch_size).min(self.order.len());
        let mut images = Vec::with_capacity(end - self.cursor);
        let mut targets = Vec::new();
        let mut dense_hw = None;
        for &idx in &self.order[self.cursor..end] {
            let (input, target) =
                self.stream
                    .make_example(idx, &mut self.label_rng, &mut self.aug_rng);
            images.push(input);
            match target {
                Target::Class(c) => targets.push(c),
                Target::Map { classes, h, w } => {
                    dense_hw = Some((h, w));
                    targets.extend(classes);
                }
            }
        }
        self.cursor = end;
        Some(Batch {
            input: stack_batch(&images),
            targets,
            dense_hw,
        })
    }
}

/// Build the deterministic example stream for a pretext task over an
/// unlabeled view.
pub fn make_pretext_stream<'a>(
    view: ImagesView<'a>,
    task: PretextTask,
    seed: u64,
    batch_size: usize,
    augment: bool,
) -> Result<PretextStream<'a>, Error> {
    PretextStream::new(view, task, seed, batch_size, augment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic_dataset, SyntheticSpec};

    fn dataset() -> crate::data::Dataset {
        synthetic_dataset(&SyntheticSpec {
            classes: 4,
            n: 64,
            hw: 16,
            seed: 11,
        })
    }

    #[test]
    fn same_seed_and_epoch_repeat_the_first_batch() {
        let ds = dataset();
        let stream =
            make_pretext_stream(ds.images_view(ds.all_indices()), PretextTask::Rot, 5, 8, true)
                .unwrap();
        let a = stream.epoch(2).next().unwrap();
        let b = stream.epoch(2).next().unwrap();
        assert_eq!(a.input.data(), b.input.data());
        assert_eq!(a.targets, b.targets);
        let c = stream.epoch(3).next().unwrap();
        assert_ne!(a.targets, c.targets);
    }

    #[test]
    fn rotation_label_histogram_is_uniform_within_3_sigma() {
        let ds = synthetic_dataset(&SyntheticSpec {
            classes: 4,
            n: 2500,
            hw: 16,
            seed: 12,
        });
        let stream =
            make_pretext_stream(ds.images_view(ds.all_indices()), PretextTask::Rot, 6, 50, false)
                .unwrap();
        let mut counts = [0usize; 4];
        for epoch in 0..4 {
            for batch in stream.epoch(epoch) {
                for &t in &batch.targets {
                    counts[t] += 1;
                }
            }
        }
        let total = 10_000f64;
        let p = 0.25;
        let sigma = (total * p * (1.0 - p)).sqrt();
        for (k, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - total * p).abs() <= 3.0 * sigma,
                "label {k}: {c} vs {}",
                total * p
            );
        }
    }

    #[test]
    fn color_stream_pools_targets_to_quarter_resolution() {
        let ds = dataset();
        let stream = make_pretext_stream(
            ds.images_view(ds.all_indices()),
            PretextTask::Color {
                bins: 4,
                pool_factor: 4,
            },
            7,
            8,
            false,
        )
        .unwrap();
        let batch = stream.epoch(0).next().unwrap();
        assert_eq!(batch.dense_hw, Some((4, 4)));
        assert_eq!(batch.targets.len(), 8 * 4 * 4);
        assert_eq!(batch.input.shape(), &[8, 1, 16, 16]);
    }

    #[test]
    fn jigsaw_stream_emits_permutation_indices() {
        let ds = dataset();
        let cfg = crate::pretext::jigsaw_permutation_set(
            2,
            24,
            &mut crate::util::derive_rng(0, "perm", 0),
        )
        .unwrap();
        let stream = make_pretext_stream(
            ds.images_view(ds.all_indices()),
            PretextTask::Jigsaw(cfg),
            8,
            16,
            true,
        )
        .unwrap();
        for batch in stream.epoch(0) {
            assert!(batch.targets.iter().all(|&t| t < 24));
            assert!(batch.dense_hw.is_none());
        }
    }
}
