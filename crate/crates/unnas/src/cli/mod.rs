//! Command implementations behind the binary: sample, study, search,
//! evaluate, analyze, ingest, dot.
//!
//! File layout under the manifest's `out_dir`:
//!   pool.jsonl       sampled architectures + costs
//!   manifest.json    snapshot of the manifest that produced the outputs
//!   reports.jsonl    per-(arch, task, seed) training reports (append-only)
//!   records.jsonl    aggregated per-architecture records
//!   genotype.json    search result
//!   search_log.jsonl per-epoch search metrics
//!   eval_report.json evaluation-phase result
//!   analysis/        correlation reports, CSV plot tables
//!   dots/            graphviz text per genotype
//!
//! CSV tables carry the `{schema_version, manifest_hash, seed}` stamp as a
//! leading `#` comment line, then a one-line column header.

mod ingest;

pub use ingest::{export_records_csv, ingest_external_records, IngestFormat};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{efficiency_curve, huber_fit, spearman_rho, DEFAULT_DELTA};
use crate::darts::run_search;
use crate::nn::CostStats;
use crate::space::{genotype_to_dot, ArchEnvelope, ArchPayload, Genotype};
use crate::store::{
    read_jsonl, read_records, write_jsonl, DatasetMount, FileHeader, Manifest, ReportStore,
    POOL_KIND, RECORDS_KIND, REPORTS_KIND,
};
use crate::task::{TaskData, TaskKind};
use crate::train::{
    repeat_and_average, run_sample_study, sample_pool, train_and_score, PoolSpec, StudyOptions,
};

#[derive(Debug)]
pub enum CliError {
    InvalidManifest(Vec<String>),
    Io { path: PathBuf, source: std::io::Error },
    MissingInput { path: PathBuf, hint: String },
    Store(crate::store::Error),
    Train(crate::train::Error),
    Search(crate::darts::Error),
    Analysis(crate::analysis::Error),
    Space(crate::space::Error),
    Data(crate::data::Error),
    Ingest { problems: Vec<String> },
    Config(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::InvalidManifest(problems) => {
                writeln!(f, "invalid manifest:")?;
                for p in problems {
                    writeln!(f, "  {p}")?;
                }
                Ok(())
            }
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::MissingInput { path, hint } => {
                write!(f, "{} not found; {hint}", path.display())
            }
            CliError::Store(e) => write!(f, "{e}"),
            CliError::Train(e) => write!(f, "{e}"),
            CliError::Search(e) => write!(f, "{e}"),
            CliError::Analysis(e) => write!(f, "{e}"),
            CliError::Space(e) => write!(f, "{e}"),
            CliError::Data(e) => write!(f, "{e}"),
            CliError::Ingest { problems } => {
                writeln!(f, "ingest rejected:")?;
                for p in problems {
                    writeln!(f, "  {p}")?;
                }
                Ok(())
            }
            CliError::Config(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

macro_rules! from_error {
    ($variant:ident, $ty:ty) => {
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::$variant(e)
            }
        }
    };
}

from_error!(Store, crate::store::Error);
from_error!(Train, crate::train::Error);
from_error!(Search, crate::darts::Error);
from_error!(Analysis, crate::analysis::Error);
from_error!(Space, crate::space::Error);
from_error!(Data, crate::data::Error);

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let manifest =
        Manifest::from_json(&text).map_err(|e| CliError::InvalidManifest(vec![e]))?;
    manifest.validate().map_err(CliError::InvalidManifest)?;
    Ok(manifest)
}

/// One line of the pool file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolLine {
    pub arch_id: String,
    pub cost: CostStats,
    #[serde(flatten)]
    pub envelope: ArchEnvelope,
}

fn pool_path(manifest: &Manifest) -> PathBuf {
    manifest.out_dir.join("pool.jsonl")
}

fn records_path(manifest: &Manifest) -> PathBuf {
    manifest.out_dir.join("records.jsonl")
}

fn snapshot_manifest(manifest: &Manifest) -> Result<(), CliError> {
    let path = manifest.out_dir.join("manifest.json");
    std::fs::create_dir_all(&manifest.out_dir).map_err(|e| io_err(&manifest.out_dir, e))?;
    std::fs::write(
        &path,
        serde_json::to_string_pretty(manifest).expect("manifest serializes"),
    )
    .map_err(|e| io_err(&path, e))
}

fn manifest_pool_spec(manifest: &Manifest) -> PoolSpec {
    let (classes, hw, channels) = manifest.dataset.meta();
    let cost_config = crate::nn::NetworkConfig {
        in_channels: channels,
        width: manifest.recipe.width,
        depth: manifest.recipe.depth,
        num_classes: classes,
        stem_stride_layers: manifest.recipe.stem_stride_layers,
        auxiliary: false,
        aux_weight: 0.0,
        head: crate::nn::HeadKind::Global,
    };
    let filter = manifest
        .sample
        .filter
        .as_ref()
        .map(|f| (f.window.0, f.window.1, f.reference));
    PoolSpec {
        space: manifest.space,
        n: manifest.sample.n,
        nodes: manifest.sample.nodes,
        cost_config,
        input_hw: hw,
        filter,
        max_attempts_per_sample: manifest
            .sample
            .filter
            .as_ref()
            .map(|f| f.max_attempts_per_sample)
            .unwrap_or(10_000),
        seed: manifest.base_seed(),
    }
}

/// Sample the architecture pool and write it (byte-deterministic for a fixed
/// manifest).
pub fn cmd_sample(manifest: &Manifest) -> Result<PathBuf, CliError> {
    manifest.validate().map_err(CliError::InvalidManifest)?;
    snapshot_manifest(manifest)?;
    let spec = manifest_pool_spec(manifest);
    let pool = sample_pool(&spec)?;
    let lines: Vec<PoolLine> = pool
        .into_iter()
        .map(|(payload, cost)| PoolLine {
            arch_id: payload.arch_id(),
            cost,
            envelope: ArchEnvelope::new(payload),
        })
        .collect();
    let path = pool_path(manifest);
    let header = FileHeader::new(POOL_KIND, &manifest.hash(), manifest.base_seed());
    write_jsonl(&path, &header, &lines)?;
    Ok(path)
}

pub fn read_pool(path: &Path) -> Result<(FileHeader, Vec<PoolLine>), CliError> {
    if !path.exists() {
        return Err(CliError::MissingInput {
            path: path.to_path_buf(),
            hint: "run `unnas sample --manifest ...` first".to_string(),
        });
    }
    Ok(read_jsonl(path, POOL_KIND)?)
}

/// Train every pool architecture on every manifest task; resumable.
pub fn cmd_study(manifest: &Manifest, force_mixed: bool) -> Result<PathBuf, CliError> {
    manifest.validate().map_err(CliError::InvalidManifest)?;
    snapshot_manifest(manifest)?;
    let (pool_header, pool_lines) = read_pool(&pool_path(manifest))?;
    if pool_header.manifest_hash != manifest.hash() && !force_mixed {
        return Err(CliError::Config(format!(
            "pool was sampled under manifest {} but the current manifest hashes to {} (pass --force-mixed to override)",
            pool_header.manifest_hash,
            manifest.hash()
        )));
    }
    let pool: Vec<(ArchPayload, CostStats)> = pool_lines
        .into_iter()
        .map(|l| (l.envelope.arch, l.cost))
        .collect();
    let dataset = manifest.dataset.load()?;
    let header = FileHeader::new(REPORTS_KIND, &manifest.hash(), manifest.base_seed());
    let mut report_store = ReportStore::open_or_create(
        &manifest.out_dir.join("reports.jsonl"),
        &header,
        force_mixed,
    )?;
    let records = run_sample_study(
        &pool,
        &dataset,
        &manifest.tasks,
        &manifest.task_settings,
        &manifest.recipe,
        &manifest.seeds,
        &mut report_store,
        &StudyOptions {
            workers: manifest.workers,
        },
    )?;
    let path = records_path(manifest);
    let rec_header = FileHeader::new(RECORDS_KIND, &manifest.hash(), manifest.base_seed());
    write_jsonl(&path, &rec_header, &records)?;
    Ok(path)
}

/// Search output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenotypeFile {
    pub schema_version: u32,
    pub manifest_hash: String,
    pub seed: u64,
    pub dataset: String,
    pub objective: TaskKind,
    pub genotype: Genotype,
}

/// Run differentiable search under the manifest's objective and write the
/// discretized genotype plus the per-epoch log.
pub fn cmd_search(manifest: &Manifest) -> Result<(PathBuf, PathBuf), CliError> {
    manifest.validate().map_err(CliError::InvalidManifest)?;
    snapshot_manifest(manifest)?;
    let objective = manifest
        .objective
        .ok_or_else(|| CliError::Config("manifest.objective is required for search".into()))?;
    let config = manifest
        .search
        .clone()
        .ok_or_else(|| CliError::Config("manifest.search is required for search".into()))?;
    let dataset = manifest.dataset.load()?;
    let indices = dataset.all_indices();
    // the mount decides what the search may see; label-free objectives are
    // refused a labeled mount further down (hard error), enforcing the
    // firewall end to end
    let data = match manifest.mount {
        DatasetMount::Labeled => TaskData::Labeled(dataset.labeled_view(indices)),
        DatasetMount::ImagesOnly => TaskData::Unlabeled(dataset.images_view(indices)),
        DatasetMount::Auto => {
            if objective.is_pretext() {
                TaskData::Unlabeled(dataset.images_view(indices))
            } else {
                TaskData::Labeled(dataset.labeled_view(indices))
            }
        }
    };
    let outcome = run_search(
        data,
        objective,
        &manifest.task_settings,
        &config,
        dataset.num_classes(),
    )?;

    let genotype_path = manifest.out_dir.join("genotype.json");
    let file = GenotypeFile {
        schema_version: crate::space::SCHEMA_VERSION,
        manifest_hash: manifest.hash(),
        seed: config.seed,
        dataset: manifest.dataset.name(),
        objective,
        genotype: outcome.genotype.clone(),
    };
    std::fs::write(
        &genotype_path,
        serde_json::to_string_pretty(&file).expect("genotype serializes"),
    )
    .map_err(|e| io_err(&genotype_path, e))?;

    let log_path = manifest.out_dir.join("search_log.jsonl");
    let header = FileHeader::new("search_log", &manifest.hash(), config.seed);
    write_jsonl(&log_path, &header, &outcome.log)?;
    Ok((genotype_path, log_path))
}

/// Evaluation-phase result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub manifest_hash: String,
    pub seed: u64,
    pub arch_id: String,
    pub search_dataset: String,
    pub eval_dataset: String,
    /// Same-dataset search/evaluate runs are valid to execute but stamped
    /// reference-only.
    pub reference_only: bool,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub reports: Vec<crate::train::TrainReport>,
}

/// Train the searched architecture from scratch on the manifest's dataset
/// (supervised) across the manifest seeds and report accuracy.
pub fn cmd_evaluate(manifest: &Manifest, genotype_path: &Path) -> Result<EvalReport, CliError> {
    manifest.validate().map_err(CliError::InvalidManifest)?;
    snapshot_manifest(manifest)?;
    let text = std::fs::read_to_string(genotype_path).map_err(|e| io_err(genotype_path, e))?;
    let file: GenotypeFile =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", genotype_path.display())))?;
    file.genotype
        .validate()
        .map_err(CliError::Space)?;
    let dataset = manifest.dataset.load()?;
    let payload = ArchPayload::Darts(file.genotype.clone());
    let arch_id = payload.arch_id();
    let summary = repeat_and_average(
        |seed| {
            train_and_score(
                &payload,
                &dataset,
                TaskKind::SupvCls,
                &manifest.task_settings,
                &manifest.recipe,
                seed,
            )
        },
        &manifest.seeds,
    )?;
    let report = EvalReport {
        schema_version: crate::space::SCHEMA_VERSION,
        manifest_hash: manifest.hash(),
        seed: manifest.base_seed(),
        arch_id,
        search_dataset: file.dataset.clone(),
        eval_dataset: manifest.dataset.name(),
        reference_only: file.dataset == manifest.dataset.name(),
        mean_accuracy: summary.mean,
        std_accuracy: summary.std,
        reports: summary.reports,
    };
    let out = manifest.out_dir.join("eval_report.json");
    std::fs::write(
        &out,
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )
    .map_err(|e| io_err(&out, e))?;
    Ok(report)
}

/// One correlation line of the analysis output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationLine {
    pub pretext: String,
    pub target: String,
    /// Absent when the accuracies are constant (rank correlation undefined).
    pub rho: Option<f64>,
    pub n: usize,
    pub huber_slope: Option<f64>,
    pub huber_intercept: Option<f64>,
    /// Records lacking one of the keys, listed and skipped.
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub store_path: Option<PathBuf>,
    pub sizes: Option<Vec<usize>>,
    pub force_mixed: bool,
}

#[derive(Debug, Clone)]
pub struct AnalyzeOutputs {
    pub correlations: Vec<CorrelationLine>,
    pub out_dir: PathBuf,
}

fn default_sizes(n: usize) -> Vec<usize> {
    [1usize, 2, 5, 10, 20, 50, 100, 200, 500]
        .into_iter()
        .filter(|&m| m <= n)
        .collect()
}

fn csv_stamp(header: &FileHeader) -> String {
    format!(
        "# schema_version={} manifest_hash={} seed={}\n",
        header.schema_version, header.manifest_hash, header.seed
    )
}

/// Correlations, efficiency curves, scatter/fit tables and dot files from a
/// record store.
pub fn cmd_analyze(manifest: &Manifest, options: &AnalyzeOptions) -> Result<AnalyzeOutputs, CliError> {
    manifest.validate().map_err(CliError::InvalidManifest)?;
    let store_path = options
        .store_path
        .clone()
        .unwrap_or_else(|| records_path(manifest));
    if !store_path.exists() {
        return Err(CliError::MissingInput {
            path: store_path,
            hint: "run `unnas study --manifest ...` first".to_string(),
        });
    }
    let (header, records) = read_records(
        &store_path,
        Some(&manifest.hash()),
        options.force_mixed,
    )?;
    if records.is_empty() {
        return Err(CliError::Config("record store is empty".into()));
    }
    let analysis_dir = manifest.out_dir.join("analysis");
    std::fs::create_dir_all(&analysis_dir).map_err(|e| io_err(&analysis_dir, e))?;

    let target = TaskKind::SupvCls;
    let pretexts: Vec<TaskKind> = manifest
        .tasks
        .iter()
        .copied()
        .filter(|t| t.is_pretext())
        .collect();

    let mut correlations = Vec::new();
    for pretext in &pretexts {
        let (pk, tk) = (pretext.name(), target.name());
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut ids = Vec::new();
        let mut skipped = Vec::new();
        let mut usable = Vec::new();
        for r in &records {
            match (r.accuracy(pk), r.accuracy(tk)) {
                (Some(p), Some(t)) => {
                    xs.push(p);
                    ys.push(t);
                    ids.push(r.arch_id.clone());
                    usable.push(r.clone());
                }
                _ => skipped.push(r.arch_id.clone()),
            }
        }
        if xs.len() < 2 {
            eprintln!("analyze: skipping {pk} vs {tk}: {} usable records", xs.len());
            continue;
        }
        // constant accuracies make rho/fit undefined on tiny pools; report
        // the pair explicitly as degenerate instead of aborting
        let (rho, n_pairs) = match spearman_rho(&xs, &ys) {
            Ok(report) => (Some(report.rho), report.n),
            Err(crate::analysis::Error::DegenerateRanks { .. }) => (None, xs.len()),
            Err(e) => return Err(e.into()),
        };
        let (huber_slope, huber_intercept) = match huber_fit(&xs, &ys, DEFAULT_DELTA) {
            Ok(fit) => (Some(fit.slope), Some(fit.intercept)),
            Err(crate::analysis::Error::RankDeficient) => (None, None),
            Err(e) => return Err(e.into()),
        };
        let line = CorrelationLine {
            pretext: pk.to_string(),
            target: tk.to_string(),
            rho,
            n: n_pairs,
            huber_slope,
            huber_intercept,
            skipped: skipped.clone(),
        };

        // scatter table
        let scatter_path = analysis_dir.join(format!("scatter_{pk}_{tk}.csv"));
        let mut csv = csv_stamp(&header);
        csv.push_str(&format!("arch_id,{pk},{tk}\n"));
        for ((id, x), y) in ids.iter().zip(&xs).zip(&ys) {
            csv.push_str(&format!("{id},{x},{y}\n"));
        }
        std::fs::write(&scatter_path, csv).map_err(|e| io_err(&scatter_path, e))?;

        // efficiency curve on the usable records, seeded from the store
        let sizes = options
            .sizes
            .clone()
            .unwrap_or_else(|| default_sizes(usable.len()));
        let mut rng = crate::util::derive_rng(header.seed, "efficiency-curve", 0);
        let curve = efficiency_curve(&usable, pk, tk, &sizes, &mut rng)?;
        let curve_path = analysis_dir.join(format!("efficiency_{pk}_{tk}.csv"));
        let mut csv = csv_stamp(&header);
        csv.push_str("m,repeats,mean,band_halfwidth\n");
        for p in &curve.points {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                p.m, p.repeats, p.mean, p.band_halfwidth
            ));
        }
        std::fs::write(&curve_path, csv).map_err(|e| io_err(&curve_path, e))?;

        correlations.push(line);
    }

    let corr_path = analysis_dir.join("correlations.jsonl");
    write_jsonl(
        &corr_path,
        &FileHeader::new("correlations", &header.manifest_hash, header.seed),
        &correlations,
    )?;

    // dot text per pool genotype, when a pool is present
    let pool = pool_path(manifest);
    if pool.exists() {
        let (_, lines) = read_pool(&pool)?;
        let dot_dir = manifest.out_dir.join("dots");
        std::fs::create_dir_all(&dot_dir).map_err(|e| io_err(&dot_dir, e))?;
        for line in lines {
            if let ArchPayload::Darts(genotype) = &line.envelope.arch {
                let path = dot_dir.join(format!("{}.dot", line.arch_id));
                std::fs::write(&path, genotype_to_dot(genotype))
                    .map_err(|e| io_err(&path, e))?;
            }
        }
    }

    Ok(AnalyzeOutputs {
        correlations,
        out_dir: analysis_dir,
    })
}

/// Write dot text for a searched genotype file.
pub fn cmd_dot(genotype_path: &Path, out_path: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(genotype_path).map_err(|e| io_err(genotype_path, e))?;
    let file: GenotypeFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", genotype_path.display())))?;
    std::fs::write(out_path, genotype_to_dot(&file.genotype)).map_err(|e| io_err(out_path, e))
}

/// Re-export the record store as the documented CSV table.
pub fn cmd_export_csv(manifest: &Manifest, out_path: &Path) -> Result<(), CliError> {
    let (_, records) = read_records(&records_path(manifest), Some(&manifest.hash()), false)?;
    let csv = export_records_csv(&records);
    std::fs::write(out_path, csv).map_err(|e| io_err(out_path, e))
}

pub use ingest::read_arch_records_csv;
