//! Task vocabulary shared by search and training: the supervised objective
//! plus the three pretext objectives, their head shapes, and a stream type
//! that dispatches to labeled or pixel-only pipelines.

use serde::{Deserialize, Serialize};

use crate::data::{Batch, ImagesView, LabeledView, SupervisedStream};
use crate::nn::HeadKind;
use crate::pretext::{jigsaw_permutation_set, PretextStream, PretextTask};
use crate::util::derive_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    SupvCls,
    Rot,
    Color,
    Jigsaw,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::SupvCls,
        TaskKind::Rot,
        TaskKind::Color,
        TaskKind::Jigsaw,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::SupvCls => "supv_cls",
            TaskKind::Rot => "rot",
            TaskKind::Color => "color",
            TaskKind::Jigsaw => "jigsaw",
        }
    }

    pub fn parse(s: &str) -> Option<TaskKind> {
        TaskKind::ALL.into_iter().find(|t| t.name() == s)
    }

    pub fn is_pretext(&self) -> bool {
        !matches!(self, TaskKind::SupvCls)
    }
}

/// Knobs of the pretext transforms; fixed per experiment and recorded in the
/// manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSettings {
    /// Color quantizer bins per opponent axis (classes = bins^2).
    pub color_bins: usize,
    /// Dense color prediction at 1/pool of the input resolution.
    pub color_pool: usize,
    /// Jigsaw grid side (g x g patches).
    pub jigsaw_grid: usize,
    /// Number of preset jigsaw permutations.
    pub jigsaw_k: usize,
    /// Seed for the greedy permutation-set selection.
    pub jigsaw_seed: u64,
}

impl Default for TaskSettings {
    fn default() -> Self {
        TaskSettings {
            color_bins: 8,
            color_pool: 4,
            jigsaw_grid: 2,
            jigsaw_k: 24,
            jigsaw_seed: 0,
        }
    }
}

impl TaskSettings {
    /// Instantiate the pretext transform for a task (None for supervised).
    pub fn pretext(&self, kind: TaskKind) -> Result<Option<PretextTask>, crate::pretext::Error> {
        Ok(match kind {
            TaskKind::SupvCls => None,
            TaskKind::Rot => Some(PretextTask::Rot),
            TaskKind::Color => Some(PretextTask::Color {
                bins: self.color_bins,
                pool_factor: self.color_pool,
            }),
            TaskKind::Jigsaw => Some(PretextTask::Jigsaw(jigsaw_permutation_set(
                self.jigsaw_grid,
                self.jigsaw_k,
                &mut derive_rng(self.jigsaw_seed, "jigsaw-presets", 0),
            )?)),
        })
    }

    /// Output width of the task head ("4 neurons or 1000 neurons").
    pub fn num_classes(&self, kind: TaskKind, dataset_classes: usize) -> usize {
        match kind {
            TaskKind::SupvCls => dataset_classes,
            TaskKind::Rot => 4,
            TaskKind::Color => self.color_bins * self.color_bins,
            TaskKind::Jigsaw => self.jigsaw_k,
        }
    }

    pub fn head_kind(&self, kind: TaskKind) -> HeadKind {
        match kind {
            TaskKind::Color => HeadKind::Dense {
                downsample: self.color_pool,
            },
            _ => HeadKind::Global,
        }
    }

    pub fn in_channels(&self, kind: TaskKind, dataset_channels: usize) -> usize {
        match kind {
            TaskKind::Color => 1,
            _ => dataset_channels,
        }
    }
}

/// A dataset mounted for a task: label-free objectives get pixels only.
pub enum TaskData<'a> {
    Labeled(LabeledView<'a>),
    Unlabeled(ImagesView<'a>),
}

impl<'a> TaskData<'a> {
    pub fn len(&self) -> usize {
        match self {
            TaskData::Labeled(v) => v.len(),
            TaskData::Unlabeled(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hw(&self) -> usize {
        match self {
            TaskData::Labeled(v) => v.hw(),
            TaskData::Unlabeled(v) => v.hw(),
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            TaskData::Labeled(v) => v.channels(),
            TaskData::Unlabeled(v) => v.channels(),
        }
    }

    pub fn subset(&self, indices: Vec<usize>) -> TaskData<'a> {
        match self {
            TaskData::Labeled(v) => TaskData::Labeled(v.subset(indices)),
            TaskData::Unlabeled(v) => TaskData::Unlabeled(v.subset(indices)),
        }
    }
}

/// A stream for either task family.
pub enum TaskStream<'a> {
    Supervised(SupervisedStream<'a>),
    Pretext(PretextStream<'a>),
}

impl TaskStream<'_> {
    pub fn len(&self) -> usize {
        match self {
            TaskStream::Supervised(s) => s.len(),
            TaskStream::Pretext(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn epoch(&self, epoch: usize) -> Box<dyn Iterator<Item = Batch> + '_> {
        match self {
            TaskStream::Supervised(s) => Box::new(s.epoch(epoch)),
            TaskStream::Pretext(s) => Box::new(s.epoch(epoch)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A label-free objective was handed a labeled view.
    LabelsRefused { task: &'static str },
    /// A supervised objective was handed a pixels-only view.
    LabelsRequired,
    Pretext(crate::pretext::Error),
}

impl From<crate::pretext::Error> for Error {
    fn from(e: crate::pretext::Error) -> Self {
        Error::Pretext(e)
    }
}

impl std::fmt::Display for Error {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Error::LabelsRefused { task } => write!(
                f,
                "objective {task:?} is label-free; a labeled dataset view is refused"
            ),
            Error::LabelsRequired => {
                write!(f, "supervised objective requires a labeled dataset view")
            }
            Error::Pretext(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for Error {}

/// Build the stream for `kind` over `data`, enforcing the label firewall:
/// pretext objectives refuse labeled views outright, and even a labeled
/// mount only ever reaches them as pixels.
pub fn make_task_stream<'a>(
    data: TaskData<'a>,
    kind: TaskKind,
    settings: &TaskSettings,
    seed: u64,
    batch_size: usize,
    augment: bool,
) -> Result<TaskStream<'a>, Error> {
    match (kind, data) {
        (TaskKind::SupvCls, TaskData::Labeled(view)) => Ok(TaskStream::Supervised(
            SupervisedStream::new(view, seed, batch_size, augment),
        )),
        (TaskKind::SupvCls, TaskData::Unlabeled(_)) => Err(Error::LabelsRequired),
        (pretext_kind, TaskData::Unlabeled(view)) => {
            let task = settings.pretext(pretext_kind)?.expect("pretext kind");
            Ok(TaskStream::Pretext(PretextStream::new(
                view, task, seed, batch_size, augment,
            )?))
        }
        (pretext_kind, TaskData::Labeled(_)) => Err(Error::LabelsRefused {
            task: pretext_kind.name(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic_dataset, SyntheticSpec};

    #[test]
    fn pretext_objectives_refuse_labeled_views() {
        let ds = synthetic_dataset(&SyntheticSpec {
            classes: 4,
            n: 8,
            hw: 16,
            seed: 0,
        });
        let settings = TaskSettings::default();
        for kind in [TaskKind::Rot, TaskKind::Color, TaskKind::Jigsaw] {
            let result = make_task_stream(
                TaskData::Labeled(ds.labeled_view(ds.all_indices())),
                kind,
                &settings,
                0,
                4,
                false,
            );
            assert!(
                matches!(result, Err(Error::LabelsRefused { .. })),
                "{kind:?}"
            );
        }
    }

    #[test]
    fn supervised_objective_requires_labels() {
        let ds = synthetic_dataset(&SyntheticSpec {
            classes: 4,
            n: 8,
            hw: 16,
            seed: 0,
        });
        let result = make_task_stream(
            TaskData::Unlabeled(ds.images_view(ds.all_indices())),
            TaskKind::SupvCls,
            &TaskSettings::default(),
            0,
            4,
            false,
        );
        assert!(matches!(result, Err(Error::LabelsRequired)));
    }

    #[test]
    fn task_names_roundtrip() {
        for kind in TaskKind::ALL {
            assert_eq!(TaskKind::parse(kind.name()), Some(kind));
        }
        assert_eq!(TaskKind::parse("segmentation"), None);
    }
}
