//! The manifest fully determines a run: re-running one reproduces outputs
//! bit-for-bit within a build.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::darts::SearchConfig;
use crate::data::{load_cifar10, synthetic_dataset, Dataset, SyntheticSpec};
use crate::space::SpaceKind;
use crate::task::{TaskKind, TaskSettings};
use crate::train::{CostReference, Recipe};
use crate::util::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Cifar10 {
        dir: PathBuf,
        files: Vec<String>,
        #[serde(default)]
        limit: Option<usize>,
    },
    Synthetic {
        classes: usize,
        n: usize,
        hw: usize,
        seed: u64,
    },
}

impl DatasetSpec {
    pub fn load(&self) -> Result<Dataset, crate::data::Error> {
        match self {
            DatasetSpec::Cifar10 { dir, files, limit } => {
                let paths: Vec<PathBuf> = files.iter().map(|f| dir.join(f)).collect();
                load_cifar10(&paths, *limit)
            }
            DatasetSpec::Synthetic {
                classes,
                n,
                hw,
                seed,
            } => Ok(synthetic_dataset(&SyntheticSpec {
                classes: *classes,
                n: *n,
                hw: *hw,
                seed: *seed,
            })),
        }
    }

    pub fn name(&self) -> String {
        match self {
            DatasetSpec::Cifar10 { limit, .. } => match limit {
                Some(n) => format!("cifar10[{n}]"),
                None => "cifar10".to_string(),
            },
            DatasetSpec::Synthetic {
                classes,
                n,
                hw,
                seed,
            } => {
                format!("synthetic[{classes}c,{n}n,{hw}px,s{seed}]")
            }
        }
    }

    /// (classes, side length, channels) without loading any data.
    pub fn meta(&self) -> (usize, usize, usize) {
        match self {
            DatasetSpec::Cifar10 { .. } => (10, 32, 3),
            DatasetSpec::Synthetic { classes, hw, .. } => (*classes, *hw, 3),
        }
    }
}

/// How the dataset is mounted for search: label-free objectives must use
/// `ImagesOnly`; `Auto` derives the mount from the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DatasetMount {
    #[default]
    Auto,
    ImagesOnly,
    Labeled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub window: (f64, f64),
    pub reference: CostReference,
    #[serde(default = "default_attempts")]
    pub max_attempts_per_sample: usize,
}

fn default_attempts() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub n: usize,
    /// Intermediate nodes per cell for genotype sampling.
    pub nodes: usize,
    #[serde(default)]
    pub filter: Option<FilterSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub name: String,
    pub space: SpaceKind,
    pub dataset: DatasetSpec,
    pub tasks: Vec<TaskKind>,
    pub recipe: Recipe,
    #[serde(default)]
    pub task_settings: TaskSettings,
    pub sample: SampleSpec,
    #[serde(default)]
    pub search: Option<SearchConfig>,
    #[serde(default)]
    pub objective: Option<TaskKind>,
    #[serde(default)]
    pub mount: DatasetMount,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_workers() -> usize {
    1
}

impl Manifest {
    /// Content hash embedded in every output file.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("manifest serializes").as_bytes())[..16]
            .to_string()
    }

    pub fn base_seed(&self) -> u64 {
        self.seeds.first().copied().unwrap_or(0)
    }

    /// Field-path diagnostics for invalid manifests.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut problems = Vec::new();
        if self.schema_version != crate::space::SCHEMA_VERSION {
            problems.push(format!(
                "schema_version: {} unsupported (expected {})",
                self.schema_version,
                crate::space::SCHEMA_VERSION
            ));
        }
        if self.name.is_empty() {
            problems.push("name: must be non-empty".to_string());
        }
        if self.tasks.is_empty() {
            problems.push("tasks: must list at least one task".to_string());
        }
        if self.seeds.is_empty() {
            problems.push("seeds: must list at least one seed".to_string());
        }
        if self.sample.n == 0 {
            problems.push("sample.n: must be positive".to_string());
        }
        if self.sample.nodes == 0 {
            problems.push("sample.nodes: must be positive".to_string());
        }
        if let Some(filter) = &self.sample.filter {
            if filter.window.0 >= filter.window.1 {
                problems.push(format!(
                    "sample.filter.window: lo {} must be below hi {}",
                    filter.window.0, filter.window.1
                ));
            }
        }
        if let Err(e) = self.recipe.validate() {
            problems.push(format!("recipe: {e}"));
        }
        if let Some(search) = &self.search {
            if let Err(e) = search.validate() {
                problems.push(format!("search: {e}"));
            }
        }
        if self.workers == 0 {
            problems.push("workers: must be at least 1".to_string());
        }
        if let DatasetSpec::Cifar10 { files, .. } = &self.dataset {
            if files.is_empty() {
                problems.push("dataset.files: must list at least one batch file".to_string());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems)
        }
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_manifest() -> Manifest {
        Manifest {
            schema_version: 1,
            name: "test".into(),
            space: SpaceKind::Darts,
            dataset: DatasetSpec::Synthetic {
                classes: 4,
                n: 32,
                hw: 16,
                seed: 0,
            },
            tasks: vec![TaskKind::SupvCls, TaskKind::Rot],
            recipe: Recipe::desk_default(),
            task_settings: TaskSettings::default(),
            sample: SampleSpec {
                n: 2,
                nodes: 2,
                filter: None,
            },
            search: None,
            objective: None,
            mount: DatasetMount::Auto,
            seeds: vec![1],
            out_dir: PathBuf::from("/tmp/unnas-test"),
            workers: 1,
        }
    }

    #[test]
    fn manifest_roundtrips_and_hash_is_stable() {
        let m = tiny_manifest();
        let json = serde_json::to_string_pretty(&m).unwrap();
        let back = Manifest::from_json(&json).unwrap();
        assert_eq!(back, m);
        assert_eq!(m.hash(), back.hash());
        assert_eq!(m.hash().len(), 16);
    }

    #[test]
    fn validation_reports_field_paths() {
        let mut m = tiny_manifest();
        m.sample.n = 0;
        m.seeds.clear();
        let problems = m.validate().unwrap_err();
        assert!(problems.iter().any(|p| p.starts_with("sample.n:")));
        assert!(problems.iter().any(|p| p.starts_with("seeds:")));
    }
}
