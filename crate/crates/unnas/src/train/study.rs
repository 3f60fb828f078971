//! Pool sampling and the sample-based study: train every architecture on
//! every task, persistently and resumably.

use std::collections::{BTreeMap, HashSet};
use std::sync::mpsc;
use std::sync::Mutex;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::nn::{
    bench_graph_cost, genotype_cost, resnet56_reference_cost, CostStats, NetworkConfig,
};
use crate::space::{
    sample_bench_graph, sample_filtered, sample_genotype, ArchPayload, ArchRecord, SpaceKind,
};
use crate::store::{ReportLine, ReportStore};
use crate::task::{TaskKind, TaskSettings};
use crate::util::derive_rng;

use super::trainer::{train_and_score, Recipe, TrainReport};
use super::Error;

/// Reference cost against which the sampling window is applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostReference {
    /// The built-in 56-layer residual reference at the pool's input size.
    Resnet56,
    /// Componentwise median cost of unfiltered samples from the same
    /// family, estimated from `probe` draws.
    FamilyMedian { probe: usize },
    Explicit { flops: u64, params: u64 },
}

/// Everything needed to draw a pool of distinct architectures.
#[derive(Debug, Clone)]
pub struct PoolSpec {
    pub space: SpaceKind,
    pub n: usize,
    pub nodes: usize,
    /// Structural config under which costs are computed.
    pub cost_config: NetworkConfig,
    pub input_hw: usize,
    pub filter: Option<(f64, f64, CostReference)>,
    pub max_attempts_per_sample: usize,
    pub seed: u64,
}

fn resolve_reference(
    reference: CostReference,
    spec: &PoolSpec,
) -> CostStats {
    match reference {
        CostReference::Resnet56 => {
            resnet56_reference_cost(spec.input_hw, spec.cost_config.num_classes)
        }
        CostReference::Explicit { flops, params } => CostStats { flops, params },
        CostReference::FamilyMedian { probe } => {
            let mut rng = derive_rng(spec.seed, "family-median-probe", 0);
            let mut flops = Vec::with_capacity(probe);
            let mut params = Vec::with_capacity(probe);
            for _ in 0..probe.max(1) {
                let cost = match spec.space {
                    SpaceKind::Darts => genotype_cost(
                        &sample_genotype(&mut rng, spec.nodes),
                        &spec.cost_config,
                        spec.input_hw,
                    ),
                    SpaceKind::Bench => bench_graph_cost(
                        &sample_bench_graph(&mut rng),
                        &spec.cost_config,
                        spec.input_hw,
                    ),
                };
                flops.push(cost.flops);
                params.push(cost.params);
            }
            flops.sort_unstable();
            params.sort_unstable();
            CostStats {
                flops: flops[flops.len() / 2],
                params: params[params.len() / 2],
            }
        }
    }
}

/// Draw `n` distinct architectures (by canonical id), optionally rejecting
/// those outside the cost window.
pub fn sample_pool(spec: &PoolSpec) -> Result<Vec<(ArchPayload, CostStats)>, Error> {
    let mut rng = derive_rng(spec.seed, "pool", 0);
    let mut seen: HashSet<String> = HashSet::new();
    let mut pool = Vec::with_capacity(spec.n);
    let reference = spec.filter.map(|(_, _, r)| resolve_reference(r, spec));
    let mut duplicate_budget = spec.max_attempts_per_sample.max(100) * spec.n;
    while pool.len() < spec.n {
        let payload = match (spec.space, &spec.filter) {
            (SpaceKind::Darts, None) => ArchPayload::Darts(sample_genotype(&mut rng, spec.nodes)),
            (SpaceKind::Darts, Some((lo, hi, _))) => {
                let drawn = sample_filtered(
                    &mut rng,
                    spec.nodes,
                    (*lo, *hi),
                    reference.expect("filter implies reference"),
                    |g| genotype_cost(g, &spec.cost_config, spec.input_hw),
                    spec.max_attempts_per_sample,
                )?;
                ArchPayload::Darts(drawn.genotype)
            }
            (SpaceKind::Bench, None) => ArchPayload::Bench(sample_bench_graph(&mut rng)),
            (SpaceKind::Bench, Some((lo, hi, _))) => {
                let reference = reference.expect("filter implies reference");
                let mut found = None;
                for _ in 0..spec.max_attempts_per_sample {
                    let g = sample_bench_graph(&mut rng);
                    let cost = bench_graph_cost(&g, &spec.cost_config, spec.input_hw);
                    let ok = cost.flops as f64 >= lo * reference.flops as f64
                        && cost.flops as f64 <= hi * reference.flops as f64
                        && cost.params as f64 >= lo * reference.params as f64
                        && cost.params as f64 <= hi * reference.params as f64;
                    if ok {
                        found = Some(g);
                        break;
                    }
                }
                ArchPayload::Bench(found.ok_or(crate::space::Error::FilterBudgetExhausted {
                    attempts: spec.max_attempts_per_sample,
                })?)
            }
        };
        // duplicates (by canonical id) are resampled so the pool holds
        // distinct architectures
        let id = payload.arch_id();
        if !seen.insert(id) {
            duplicate_budget -= 1;
            if duplicate_budget == 0 {
                return Err(Error::Space(crate::space::Error::FilterBudgetExhausted {
                    attempts: spec.max_attempts_per_sample,
                }));
            }
            continue;
        }
        let cost = match &payload {
            ArchPayload::Darts(g) => genotype_cost(g, &spec.cost_config, spec.input_hw),
            ArchPayload::Bench(g) => bench_graph_cost(g, &spec.cost_config, spec.input_hw),
        };
        pool.push((payload, cost));
    }
    Ok(pool)
}

/// Mean/spread over repeated runs with independent seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatSummary {
    pub mean: f64,
    /// Population standard deviation of the accuracies.
    pub std: f64,
    pub reports: Vec<TrainReport>,
}

/// Run a job once per seed and summarize the validation accuracies.
pub fn repeat_and_average<F>(job: F, seeds: &[u64]) -> Result<RepeatSummary, Error>
where
    F: Fn(u64) -> Result<TrainReport, Error>,
{
    assert!(!seeds.is_empty(), "repeats require at least one seed");
    let mut reports = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        reports.push(job(seed)?);
    }
    let accs: Vec<f64> = reports.iter().map(|r| r.val_accuracy).collect();
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / accs.len() as f64;
    Ok(RepeatSummary {
        mean,
        std: var.sqrt(),
        reports,
    })
}

#[derive(Debug, Clone)]
pub struct StudyOptions {
    pub workers: usize,
}

/// What happened to one (architecture, task, seed) job.
#[derive(Debug, Clone)]
pub enum StudyJobOutcome {
    Completed,
    SkippedDone,
    Failed(String),
}

/// Train every pool architecture on every task across all seeds, appending
/// each finished job to the store immediately (the study is resumable and
/// idempotent per (arch, task, seed)). Failed jobs are recorded and the
/// study continues. Returns one record per architecture with per-task mean
/// accuracies over the seeds that succeeded.
pub fn run_sample_study(
    pool: &[(ArchPayload, CostStats)],
    dataset: &Dataset,
    tasks: &[TaskKind],
    settings: &TaskSettings,
    recipe: &Recipe,
    seeds: &[u64],
    report_store: &mut ReportStore,
    options: &StudyOptions,
) -> Result<Vec<ArchRecord>, Error> {
    assert!(!tasks.is_empty() && !seeds.is_empty());
    recipe.validate()?;

    struct Job {
        arch_index: usize,
        task: TaskKind,
        seed: u64,
    }
    let mut jobs = Vec::new();
    for (arch_index, (payload, _)) in pool.iter().enumerate() {
        let id = payload.arch_id();
        for &task in tasks {
            for &seed in seeds {
                if !report_store.is_done(&id, task, seed) {
                    jobs.push(Job {
                        arch_index,
                        task,
                        seed,
                    });
                }
            }
        }
    }

    let queue = Mutex::new(jobs);
    let (tx, rx) = mpsc::channel::<ReportLine>();
    let workers = options.workers.max(1);
    std::thread::scope(|scope| -> Result<(), Error> {
        for _ in 0..workers {
            let tx = tx.clone();
            let queue = &queue;
            scope.spawn(move || loop {
                let job = {
                    let mut q = queue.lock().expect("queue lock");
                    match q.pop() {
                        Some(j) => j,
                        None => break,
                    }
                };
                let (payload, _) = &pool[job.arch_index];
                let arch_id = payload.arch_id();
                // independent, deterministic seed per (run seed, arch, task)
                let job_seed = derive_rng(
                    job.seed,
                    &format!("job:{arch_id}:{}", job.task.name()),
                    0,
                )
                .next_u64();
                let line = match train_and_score(
                    payload, dataset, job.task, settings, recipe, job_seed,
                ) {
                    Ok(report) => ReportLine {
                        arch_id,
                        task: job.task,
                        seed: job.seed,
                        report: Some(report),
                        error: None,
                    },
                    Err(e) => ReportLine {
                        arch_id,
                        task: job.task,
                        seed: job.seed,
                        report: None,
                        error: Some(e.to_string()),
                    },
                };
                if tx.send(line).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        // the store is the single shared sink; appends are serialized here
        for line in rx {
            report_store
                .append(line)
                .map_err(|e| Error::Store(std::io::Error::other(e.to_string())))?;
        }
        Ok(())
    })?;

    Ok(aggregate_records(pool, tasks, report_store))
}

/// Mean accuracy per (architecture, task) over successful seeds.
pub fn aggregate_records(
    pool: &[(ArchPayload, CostStats)],
    tasks: &[TaskKind],
    report_store: &ReportStore,
) -> Vec<ArchRecord> {
    let mut by_key: BTreeMap<(String, TaskKind), Vec<f64>> = BTreeMap::new();
    for line in report_store.lines() {
        if let Some(report) = &line.report {
            by_key
                .entry((line.arch_id.clone(), line.task))
                .or_default()
                .push(report.val_accuracy);
        }
    }
    pool.iter()
        .map(|(payload, cost)| {
            let id = payload.arch_id();
            let mut accuracies = BTreeMap::new();
            for &task in tasks {
                if let Some(accs) = by_key.get(&(id.clone(), task)) {
                    if !accs.is_empty() {
                        accuracies.insert(
                            task.name().to_string(),
                            accs.iter().sum::<f64>() / accs.len() as f64,
                        );
                    }
                }
            }
            ArchRecord {
                arch_id: id,
                cost: *cost,
                accuracies,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic_dataset, SyntheticSpec};
    use crate::nn::HeadKind;
    use crate::store::{FileHeader, REPORTS_KIND};

    fn cost_cfg() -> NetworkConfig {
        NetworkConfig {
            in_channels: 3,
            width: 8,
            depth: 5,
            num_classes: 10,
            stem_stride_layers: 1,
            auxiliary: false,
            aux_weight: 0.0,
            head: HeadKind::Global,
        }
    }

    #[test]
    fn pool_is_distinct_and_deterministic() {
        let spec = PoolSpec {
            space: SpaceKind::Darts,
            n: 20,
            nodes: 2,
            cost_config: cost_cfg(),
            input_hw: 16,
            filter: None,
            max_attempts_per_sample: 100,
            seed: 3,
        };
        let a = sample_pool(&spec).unwrap();
        let b = sample_pool(&spec).unwrap();
        assert_eq!(a.len(), 20);
        let ids: HashSet<String> = a.iter().map(|(p, _)| p.arch_id()).collect();
        assert_eq!(ids.len(), 20);
        assert_eq!(
            a.iter().map(|(p, _)| p.arch_id()).collect::<Vec<_>>(),
            b.iter().map(|(p, _)| p.arch_id()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn filtered_pool_respects_the_window() {
        let spec = PoolSpec {
            space: SpaceKind::Darts,
            n: 10,
            nodes: 2,
            cost_config: cost_cfg(),
            input_hw: 16,
            filter: Some((0.8, 1.2, CostReference::FamilyMedian { probe: 50 })),
            max_attempts_per_sample: 5_000,
            seed: 4,
        };
        let reference = resolve_reference(CostReference::FamilyMedian { probe: 50 }, &spec);
        let pool = sample_pool(&spec).unwrap();
        for (_, cost) in &pool {
            assert!(cost.flops as f64 >= 0.8 * reference.flops as f64);
            assert!(cost.flops as f64 <= 1.2 * reference.flops as f64);
            assert!(cost.params as f64 >= 0.8 * reference.params as f64);
            assert!(cost.params as f64 <= 1.2 * reference.params as f64);
        }
    }

    #[test]
    fn repeat_summary_matches_direct_recomputation() {
        let fake = |seed: u64| -> Result<TrainReport, Error> {
            Ok(TrainReport {
                task: "rot".into(),
                epochs: 1,
                final_train_loss: 0.1,
                val_accuracy: 0.5 + seed as f64 / 100.0,
                seed,
                wall_time_s: 0.0,
            })
        };
        let summary = repeat_and_average(fake, &[1, 2, 3]).unwrap();
        let accs = [0.51, 0.52, 0.53];
        let mean = accs.iter().sum::<f64>() / 3.0;
        let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / 3.0;
        assert!((summary.mean - mean).abs() < 1e-12);
        assert!((summary.std - var.sqrt()).abs() < 1e-12);
        assert_eq!(summary.reports.len(), 3);

        let single = repeat_and_average(fake, &[7]).unwrap();
        assert!((single.mean - 0.57).abs() < 1e-12);
        assert_eq!(single.std, 0.0);
    }

    #[test]
    fn study_bookkeeping_and_resume() {
        let ds = synthetic_dataset(&SyntheticSpec {
            classes: 4,
            n: 24,
            hw: 16,
            seed: 5,
        });
        let mut recipe = Recipe::desk_default();
        recipe.width = 6;
        recipe.depth = 3;
        recipe.epochs = 1;
        recipe.batch_size = 12;
        let settings = TaskSettings::default();
        let tasks = [TaskKind::SupvCls, TaskKind::Rot];
        let pool = sample_pool(&PoolSpec {
            space: SpaceKind::Darts,
            n: 2,
            nodes: 2,
            cost_config: cost_cfg(),
            input_hw: 16,
            filter: None,
            max_attempts_per_sample: 100,
            seed: 6,
        })
        .unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reports.jsonl");
        let header = FileHeader::new(REPORTS_KIND, "h", 0);
        let mut store = ReportStore::open_or_create(&path, &header, false).unwrap();
        let records = run_sample_study(
            &pool,
            &ds,
            &tasks,
            &settings,
            &recipe,
            &[1],
            &mut store,
            &StudyOptions { workers: 2 },
        )
        .unwrap();
        // 2 archs x 2 tasks x 1 seed = 4 jobs, 2 records
        assert_eq!(store.lines().len(), 4);
        assert_eq!(records.len(), 2);
        for r in &records {
            assert_eq!(r.accuracies.len(), 2);
        }

        // resume: nothing to do, identical records, no duplicate lines
        let mut store2 = ReportStore::open_or_create(&path, &header, false).unwrap();
        let records2 = run_sample_study(
            &pool,
            &ds,
            &tasks,
            &settings,
            &recipe,
            &[1],
            &mut store2,
            &StudyOptions { workers: 1 },
        )
        .unwrap();
        assert_eq!(store2.lines().len(), 4);
        assert_eq!(records, records2);
    }

    #[test]
    fn study_reproduces_exactly_under_fixed_seeds() {
        let ds = synthetic_dataset(&SyntheticSpec {
            classes: 4,
            n: 24,
            hw: 16,
            seed: 7,
        });
        let mut recipe = Recipe::desk_default();
        recipe.width = 6;
        recipe.depth = 3;
        recipe.epochs = 1;
        recipe.batch_size = 12;
        let settings = TaskSettings::default();
        let pool = sample_pool(&PoolSpec {
            space: SpaceKind::Darts,
            n: 2,
            nodes: 2,
            cost_config: cost_cfg(),
            input_hw: 16,
            filter: None,
            max_attempts_per_sample: 100,
            seed: 8,
        })
        .unwrap();
        let run = |dir: &std::path::Path, workers: usize| {
            let header = FileHeader::new(REPORTS_KIND, "h", 0);
            let mut store =
                ReportStore::open_or_create(&dir.join("r.jsonl"), &header, false).unwrap();
            run_sample_study(
                &pool,
                &ds,
                &[TaskKind::Rot],
                &settings,
                &recipe,
                &[1, 2],
                &mut store,
                &StudyOptions { workers },
            )
            .unwrap()
        };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        // golden reproduction, and worker count must not affect results
        assert_eq!(run(d1.path(), 1), run(d2.path(), 2));
    }
}
