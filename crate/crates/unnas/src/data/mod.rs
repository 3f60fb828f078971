//! Datasets and their views.
//!
//! The label firewall lives here: [`ImagesView`] exposes pixels only, and
//! every pretext pipeline is typed against it. Code holding an `ImagesView`
//! has no way to reach the annotations.

mod augment;
mod cifar;
mod stream;
mod synthetic;

pub use augment::augment_image;
pub use cifar::load_cifar10;
pub use stream::{Batch, SupervisedStream};
pub use synthetic::{synthetic_dataset, SyntheticSpec};

use crate::autograd::Tensor;

#[derive(Debug)]
pub enum Error {
    Io(String),
    Malformed { reason: String },
    BadSplit { reason: String },
}

impl std::fmt::Display for Error {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Error::Io(msg) => write!(f, "dataset io: {msg}"),
            Error::Malformed { reason } => write!(f, "malformed dataset: {reason}"),
            Error::BadSplit { reason } => write!(f, "bad split: {reason}"),
        }
    }
}

impl std::error::Error for Error {}

/// An in-memory image classification dataset. Images are `[C, H, W]`
/// float tensors in `[0, 1]`.
pub struct Dataset {
    images: Vec<Tensor<f32>>,
    labels: Vec<usize>,
    num_classes: usize,
    channels: usize,
    hw: usize,
}

impl Dataset {
    pub fn new(
        images: Vec<Tensor<f32>>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self, Error> {
        if images.is_empty() || images.len() != labels.len() {
            return Err(Error::Malformed {
                reason: format!("{} images vs {} labels", images.len(), labels.len()),
            });
        }
        let shape = images[0].shape().to_vec();
        if shape.len() != 3 || shape[1] != shape[2] {
            return Err(Error::Malformed {
                reason: format!("expected square [C, H, W] images, got {shape:?}"),
            });
        }
        if images.iter().any(|im| im.shape() != shape.as_slice()) {
            return Err(Error::Malformed {
                reason: "inconsistent image shapes".to_string(),
            });
        }
        if labels.iter().any(|&l| l >= num_classes) {
            return Err(Error::Malformed {
                reason: "label outside class range".to_string(),
            });
        }
        Ok(Dataset {
            channels: shape[0],
            hw: shape[1],
            images,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn hw(&self) -> usize {
        self.hw
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Pixels-only view over the given example indices.
    pub fn images_view(&self, indices: Vec<usize>) -> ImagesView<'_> {
        ImagesView { ds: self, indices }
    }

    /// Labeled view over the given example indices.
    pub fn labeled_view(&self, indices: Vec<usize>) -> LabeledView<'_> {
        LabeledView { ds: self, indices }
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }
}

/// Unlabeled view: pixels only. Pretext pipelines accept exactly this type,
/// which is what keeps label-free search label-free.
pub struct ImagesView<'a> {
    ds: &'a Dataset,
    indices: Vec<usize>,
}

impl<'a> ImagesView<'a> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn hw(&self) -> usize {
        self.ds.hw
    }

    pub fn channels(&self) -> usize {
        self.ds.channels
    }

    pub fn image(&self, i: usize) -> &'a Tensor<f32> {
        &self.ds.images[self.indices[i]]
    }

    pub fn subset(&self, indices: Vec<usize>) -> ImagesView<'a> {
        ImagesView {
            ds: self.ds,
            indices: indices.into_iter().map(|i| self.indices[i]).collect(),
        }
    }
}

/// Labeled view: pixels plus annotations, for supervised objectives and for
/// the evaluation phase.
pub struct LabeledView<'a> {
    ds: &'a Dataset,
    indices: Vec<usize>,
}

impl<'a> LabeledView<'a> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn hw(&self) -> usize {
        self.ds.hw
    }

    pub fn channels(&self) -> usize {
        self.ds.channels
    }

    pub fn num_classes(&self) -> usize {
        self.ds.num_classes
    }

    pub fn image(&self, i: usize) -> &'a Tensor<f32> {
        &self.ds.images[self.indices[i]]
    }

    pub fn label(&self, i: usize) -> usize {
        self.ds.labels[self.indices[i]]
    }

    /// Drop the labels.
    pub fn images_only(&self) -> ImagesView<'a> {
        ImagesView {
            ds: self.ds,
            indices: self.indices.clone(),
        }
    }

    pub fn subset(&self, indices: Vec<usize>) -> LabeledView<'a> {
        LabeledView {
            ds: self.ds,
            indices: indices.into_iter().map(|i| self.indices[i]).collect(),
        }
    }
}

/// Deterministic train/validation index split: shuffle by seed, carve off
/// `val_fraction` for validation.
pub fn split_indices(
    n: usize,
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), Error> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::BadSplit {
            reason: format!("val_fraction {val_fraction} outside [0, 1)"),
        });
    }
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((n as f64) * val_fraction).round() as usize;
    let val = order.split_off(n - n_val);
    Ok((order, val))
}

/// Stack per-example `[C, H, W]` tensors into one `[N, C, H, W]` batch.
pub fn stack_batch(images: &[Tensor<f32>]) -> Tensor<f32> {
    let shape = images[0].shape();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let mut data = Vec::with_capacity(images.len() * c * h * w);
    for im in images {
        data.extend_from_slice(im.data());
    }
    Tensor::new(vec![images.len(), c, h, w], data).expect("consistent shapes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let (tr1, va1) = split_indices(100, 0.2, 7).unwrap();
        let (tr2, va2) = split_indices(100, 0.2, 7).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(va1, va2);
        assert_eq!(tr1.len(), 80);
        assert_eq!(va1.len(), 20);
        let mut all: Vec<usize> = tr1.iter().chain(va1.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn views_share_data_but_not_labels() {
        let ds = synthetic_dataset(&SyntheticSpec {
            classes: 4,
            n: 10,
            hw: 8,
            seed: 1,
        });
        let labeled = ds.labeled_view(ds.all_indices());
        let images = labeled.images_only();
        assert_eq!(images.len(), 10);
        assert_eq!(images.image(3).data(), labeled.image(3).data());
        // ImagesView has no label accessor; this is a compile-time property.
    }
}
