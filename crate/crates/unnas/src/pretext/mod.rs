//! Self-supervised pretext tasks: deterministic, seeded transforms that turn
//! unlabeled images into (input, label) pairs. None of them can see human
//! annotations: everything here operates on pixel-only views.

mod color;
mod jigsaw;
mod rotation;
mod stream;

pub use color::{color_example, dequantize, pool_majority, quantize};
pub use jigsaw::{jigsaw_example, jigsaw_permutation_set, JigsawConfig};
pub use rotation::{rot90, rotate_label};
pub use stream::{make_pretext_stream, PretextStream};

use crate::autograd::Tensor;

/// The label a pretext transform attaches to an input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Class(usize),
    /// Per-pixel class map at the network's prediction resolution.
    Map {
        classes: Vec<usize>,
        h: usize,
        w: usize,
    },
}

/// A transformed example.
#[derive(Debug, Clone)]
pub struct PretextExample {
    pub input: Tensor<f32>,
    pub target: Target,
}

/// The three pretext objectives.
#[derive(Debug, Clone, PartialEq)]
pub enum PretextTask {
    Rot,
    Color { bins: usize, pool_factor: usize },
    Jigsaw(JigsawConfig),
}

impl PretextTask {
    pub fn num_classes(&self) -> usize {
        match self {
            PretextTask::Rot => 4,
            PretextTask::Color { bins, .. } => bins * bins,
            PretextTask::Jigsaw(cfg) => cfg.k(),
        }
    }

    /// Channels the network must accept for this task.
    pub fn in_channels(&self, dataset_channels: usize) -> usize {
        match self {
            PretextTask::Color { .. } => 1,
            _ => dataset_channels,
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, PretextTask::Color { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    NonSquareImage { shape: Vec<usize> },
    NotThreeChannel { shape: Vec<usize> },
    BadLabelIndex { index: usize, count: usize },
    BadPermutationCount { k: usize, max: usize },
    GridTooLargeForSelection { grid: usize },
    ImageTooSmall { hw: usize, grid: usize },
    TooFewColorBins { bins: usize },
    BadPoolFactor { hw: usize, factor: usize },
}

impl std::fmt::Display for Error {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Error::NonSquareImage { shape } => write!(f, "rotation needs square images, got {shape:?}"),
            Error::NotThreeChannel { shape } => {
                write!(f, "colorization needs 3-channel images, got {shape:?}")
            }
            Error::BadLabelIndex { index, count } => {
                write!(f, "label index {index} out of range for {count} presets")
            }
            Error::BadPermutationCount { k, max } => {
                write!(f, "K = {k} exceeds the {max} permutations available")
            }
            Error::GridTooLargeForSelection { grid } => write!(
                f,
                "greedy selection enumerates the full pool; grid {grid} is too large (use 2 or 3)"
            ),
            Error::ImageTooSmall { hw, grid } => {
                write!(f, "{hw} px images cannot host a {grid}x{grid} patch grid")
            }
            Error::TooFewColorBins { bins } => write!(f, "need at least 2 color bins, got {bins}"),
            Error::BadPoolFactor { hw, factor } => {
                write!(f, "pool factor {factor} does not divide {hw} px images")
            }
        }
    }
}

impl std::error::Error for Error {}
