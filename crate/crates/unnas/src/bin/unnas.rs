use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use unnas::cli::{
    self, cmd_analyze, cmd_dot, cmd_evaluate, cmd_sample, cmd_search, cmd_study, AnalyzeOptions,
    IngestFormat,
};
use unnas::store::Manifest;

#[derive(Parser)]
#[command(
    name = "unnas",
    about = "Desk-scale lab for label-free neural architecture search"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ManifestArgs {
    /// Experiment manifest (JSON).
    #[arg(long)]
    manifest: PathBuf,
    /// Override the manifest's seed list with a single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the manifest's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ManifestArgs {
    fn load(&self) -> Result<Manifest, cli::CliError> {
        let mut manifest = cli::load_manifest(&self.manifest)?;
        if let Some(seed) = self.seed {
            manifest.seeds = vec![seed];
        }
        if let Some(out) = &self.out {
            manifest.out_dir = out.clone();
        }
        Ok(manifest)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample an architecture pool (with optional cost filtering).
    Sample {
        #[command(flatten)]
        args: ManifestArgs,
    },
    /// Train every pool architecture on every task; resumable.
    Study {
        #[command(flatten)]
        args: ManifestArgs,
        /// Continue even when stores come from a different manifest.
        #[arg(long)]
        force_mixed: bool,
    },
    /// Differentiable search under the manifest's objective.
    Search {
        #[command(flatten)]
        args: ManifestArgs,
    },
    /// Train a searched genotype from scratch and report accuracy.
    Evaluate {
        #[command(flatten)]
        args: ManifestArgs,
        /// Genotype file produced by `search`.
        #[arg(long)]
        genotype: PathBuf,
    },
    /// Correlations, efficiency curves, plot tables, dot files.
    Analyze {
        #[command(flatten)]
        args: ManifestArgs,
        /// Record store to analyze (default: <out_dir>/records.jsonl).
        #[arg(long)]
        store: Option<PathBuf>,
        /// Experiment sizes for the efficiency curves.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        /// Accept stores whose manifest hash differs.
        #[arg(long)]
        force_mixed: bool,
    },
    /// Validate external records into the store format.
    Ingest {
        /// Input file.
        #[arg(long)]
        path: PathBuf,
        /// Input format (csv).
        #[arg(long, default_value = "csv")]
        format: String,
        /// Where to write the validated records (JSON lines).
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit graphviz text for a searched genotype.
    Dot {
        /// Genotype file produced by `search`.
        #[arg(long)]
        genotype: PathBuf,
        /// Output .dot path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run() -> Result<(), cli::CliError> {
    let cli_args = Cli::parse();
    match cli_args.command {
        Command::Sample { args } => {
            let manifest = args.load()?;
            let path = cmd_sample(&manifest)?;
            println!("pool written to {}", path.display());
        }
        Command::Study { args, force_mixed } => {
            let manifest = args.load()?;
            let path = cmd_study(&manifest, force_mixed)?;
            println!("records written to {}", path.display());
        }
        Command::Search { args } => {
            let manifest = args.load()?;
            let (genotype, log) = cmd_search(&manifest)?;
            println!("genotype written to {}", genotype.display());
            println!("search log written to {}", log.display());
        }
        Command::Evaluate { args, genotype } => {
            let manifest = args.load()?;
            let report = cmd_evaluate(&manifest, &genotype)?;
            let flag = if report.reference_only {
                " (reference-only: search and evaluation datasets match)"
            } else {
                ""
            };
            println!(
                "accuracy {:.4} +/- {:.4} over {} runs{flag}",
                report.mean_accuracy,
                report.std_accuracy,
                report.reports.len()
            );
        }
        Command::Analyze {
            args,
            store,
            sizes,
            force_mixed,
        } => {
            let manifest = args.load()?;
            let outputs = cmd_analyze(
                &manifest,
                &AnalyzeOptions {
                    store_path: store,
                    sizes,
                    force_mixed,
                },
            )?;
            for line in &outputs.correlations {
                match (line.rho, line.huber_slope, line.huber_intercept) {
                    (Some(rho), Some(slope), Some(intercept)) => println!(
                        "{} vs {}: rho = {rho:.4} (n = {}, fit y = {slope:.3}x + {intercept:.3})",
                        line.pretext, line.target, line.n
                    ),
                    _ => println!(
                        "{} vs {}: degenerate (constant accuracies, n = {})",
                        line.pretext, line.target, line.n
                    ),
                }
            }
            println!("tables written to {}", outputs.out_dir.display());
        }
        Command::Ingest { path, format, out } => {
            let format = IngestFormat::parse(&format)
                .ok_or_else(|| cli::CliError::Config(format!("unknown format {format:?}")))?;
            let records = cli::ingest_external_records(&path, format)?;
            let lines: Vec<String> = records
                .iter()
                .map(|r| serde_json::to_string(r).expect("record serializes"))
                .collect();
            std::fs::write(&out, lines.join("\n") + "\n").map_err(|e| cli::CliError::Io {
                path: out.clone(),
                source: e,
            })?;
            println!("{} records written to {}", records.len(), out.display());
        }
        Command::Dot { genotype, out } => {
            cmd_dot(&genotype, &out)?;
            println!("dot written to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
