//! Batches and the supervised example stream.

use crate::autograd::Tensor;
use crate::util::derive_rng;

use super::{augment_image, stack_batch, LabeledView};

/// One training batch: stacked inputs plus flat targets (`N` class ids, or
/// `N*h*w` per-pixel classes when `dense_hw` is set).
pub struct Batch {
    pub input: Tensor<f32>,
    pub targets: Vec<usize>,
    pub dense_hw: Option<(usize, usize)>,
}

/// Per-epoch reshuffled stream of labeled examples.
pub struct SupervisedStream<'a> {
    view: LabeledView<'a>,
    seed: u64,
    batch_size: usize,
    augment: bool,
}

impl<'a> SupervisedStream<'a> {
    pub fn new(view: LabeledView<'a>, seed: u64, batch_size: usize, augment: bool) -> Self {
        assert!(batch_size > 0);
        SupervisedStream {
            view,
            seed,
            batch_size,
            augment,
        }
    }

    pub fn len(&self) -> usize {
        self.view.len()
    }

    pub fn is_empty(&self) -> bool {
        self.view.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.view.num_classes()
    }

    pub fn epoch(&self, epoch: usize) -> SupervisedEpochIter<'_, 'a> {
        let mut order: Vec<usize> = (0..self.view.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut derive_rng(self.seed, "supervised-order", epoch as u64));
        SupervisedEpochIter {
            stream: self,
            order,
            aug_rng: derive_rng(self.seed, "supervised-augment", epoch as u64),
            cursor: 0,
        }
    }
}

pub struct SupervisedEpochIter<'s, 'a> {
    stream: &'s SupervisedStream<'a>,
    order: Vec<usize>,
    aug_rng: rand_chacha::ChaCha8Rng,
    cursor: usize,
}

impl Iterator for SupervisedEpochIter<'_, '_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.stream.batch_size).min(self.order.len());
        let mut images = Vec::with_capacity(end - self.cursor);
        let mut targets = Vec::with_capacity(end - self.cursor);
        for &idx in &self.order[self.cursor..end] {
            let raw = self.stream.view.image(idx);
            images.push(if self.stream.augment {
                augment_image(raw, &mut self.aug_rng)
            } else {
                raw.clone()
            });
            targets.push(self.stream.view.label(idx));
        }
        self.cursor = end;
        Some(Batch {
            input: stack_batch(&images),
            targets,
            dense_hw: None,
        })
    }
}
