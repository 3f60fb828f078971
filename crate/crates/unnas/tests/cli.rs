//! End-to-end command flows: pool sampling, studies with resume, search,
//! evaluation, analysis and ingestion, all against tiny synthetic datasets.

mod common;

use std::path::PathBuf;

use unnas::autograd::Schedule;
use unnas::cli::{
    cmd_analyze, cmd_dot, cmd_evaluate, cmd_sample, cmd_search, cmd_study, read_pool,
    AnalyzeOptions, CliError, GenotypeFile,
};
use unnas::darts::SearchConfig;
use unnas::nn::CostStats;
use unnas::space::{ArchRecord, SpaceKind};
use unnas::store::{
    read_records, write_jsonl, DatasetMount, DatasetSpec, FileHeader, Manifest, SampleSpec,
    RECORDS_KIND,
};
use unnas::task::{TaskKind, TaskSettings};
use unnas::train::Recipe;

fn tiny_recipe() -> Recipe {
    let mut r = Recipe::desk_default();
    r.width = 6;
    r.depth = 3;
    r.epochs = 1;
    r.batch_size = 16;
    r
}

fn tiny_manifest(out_dir: PathBuf) -> Manifest {
    Manifest {
        schema_version: 1,
        name: "cli-test".into(),
        space: SpaceKind::Darts,
        dataset: DatasetSpec::Synthetic {
            classes: 4,
            n: 40,
            hw: 16,
            seed: 5,
        },
        tasks: vec![TaskKind::SupvCls, TaskKind::Rot],
        recipe: tiny_recipe(),
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
        out_dir,
        workers: 2,
    }
}

fn search_config(seed: u64) -> SearchConfig {
    SearchConfig {
        epochs: 2,
        batch_size: 8,
        w_lr: Schedule::cosine(0.05, 0, 2).unwrap(),
        w_momentum: 0.9,
        w_weight_decay: 3e-5,
        alpha_lr: 3e-3,
        alpha_weight_decay: 1e-3,
        postpone_fraction: 0.5,
        input_crop: 16,
        stem_stride_layers: 1,
        width: 4,
        depth: 3,
        nodes: 2,
        seed,
    }
}

#[test]
fn sample_writes_valid_records_and_identical_bytes_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let mut manifest = tiny_manifest(dir.path().to_path_buf());
    manifest.sample.n = 10;
    let path = cmd_sample(&manifest).unwrap();
    let bytes_a = std::fs::read(&path).unwrap();
    let (header, lines) = read_pool(&path).unwrap();
    assert_eq!(header.manifest_hash, manifest.hash());
    assert_eq!(lines.len(), 10);
    for line in &lines {
        line.envelope.arch.validate().unwrap();
        assert_eq!(line.arch_id, line.envelope.arch.arch_id());
        assert!(line.cost.params > 0);
    }
    cmd_sample(&manifest).unwrap();
    let bytes_b = std::fs::read(&path).unwrap();
    assert_eq!(bytes_a, bytes_b, "pool bytes must be reproducible");
}

#[test]
fn filtered_pool_stays_inside_the_window() {
    let dir = tempfile::tempdir().unwrap();
    let mut manifest = tiny_manifest(dir.path().to_path_buf());
    manifest.sample.n = 6;
    manifest.sample.filter = Some(unnas::store::FilterSpec {
        window: (0.8, 1.2),
        reference: unnas::train::CostReference::FamilyMedian { probe: 64 },
        max_attempts_per_sample: 5_000,
    });
    let path = cmd_sample(&manifest).unwrap();
    let (_, lines) = read_pool(&path).unwrap();
    assert_eq!(lines.len(), 6);
    let costs: Vec<CostStats> = lines.iter().map(|l| l.cost).collect();
    // window bounds hold relative to each other: max/min within (1.2/0.8)
    let (fmin, fmax) = (
        costs.iter().map(|c| c.flops).min().unwrap() as f64,
        costs.iter().map(|c| c.flops).max().unwrap() as f64,
    );
    assert!(fmax / fmin <= 1.2 / 0.8 + 1e-9);
}

#[test]
fn study_completes_resumes_and_analyze_reports_correlations() {
    let dir = tempfile::tempdir().unwrap();
    let mut manifest = tiny_manifest(dir.path().to_path_buf());
    manifest.sample.n = 4;
    manifest.recipe.epochs = 2;
    manifest.dataset = DatasetSpec::Synthetic {
        classes: 4,
        n: 60,
        hw: 16,
        seed: 5,
    };
    cmd_sample(&manifest).unwrap();
    let records_path = cmd_study(&manifest, false).unwrap();
    let (_, records) = read_records(&records_path, Some(&manifest.hash()), false).unwrap();
    assert_eq!(records.len(), 4);
    for r in &records {
        assert_eq!(r.accuracies.len(), 2);
        r.validate(&vec!["supv_cls".into(), "rot".into()]).unwrap();
    }
    let reports_bytes = std::fs::read(dir.path().join("reports.jsonl")).unwrap();

    // resume is a no-op: reports file unchanged, records identical
    let records_path2 = cmd_study(&manifest, false).unwrap();
    let (_, records2) = read_records(&records_path2, Some(&manifest.hash()), false).unwrap();
    assert_eq!(records, records2);
    assert_eq!(
        reports_bytes,
        std::fs::read(dir.path().join("reports.jsonl")).unwrap()
    );

    let outputs = cmd_analyze(
        &manifest,
        &AnalyzeOptions {
            store_path: None,
            sizes: Some(vec![1, 2]),
            force_mixed: false,
        },
    )
    .unwrap();
    assert_eq!(outputs.correlations.len(), 1);
    assert_eq!(outputs.correlations[0].pretext, "rot");
    // scatter table re-parses and re-aggregates to the same rho
    let scatter = std::fs::read_to_string(
        outputs.out_dir.join("scatter_rot_supv_cls.csv"),
    )
    .unwrap();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for line in scatter.lines().skip(2) {
        let f: Vec<&str> = line.split(',').collect();
        xs.push(f[1].parse::<f64>().unwrap());
        ys.push(f[2].parse::<f64>().unwrap());
    }
    if let Some(reported) = outputs.correlations[0].rho {
        let rho = unnas::analysis::spearman_rho(&xs, &ys).unwrap().rho;
        assert_eq!(rho, reported);
    }
    // dots were emitted for the pool
    assert!(dir.path().join("dots").read_dir().unwrap().count() == 4);
}

#[test]
fn analyze_on_synthetic_rank_noisy_store_recovers_high_rho() {
    // records with target = rank-noisy pretext: rho should come out high
    let dir = tempfile::tempdir().unwrap();
    let manifest = tiny_manifest(dir.path().to_path_buf());
    use rand::Rng;
    let mut rng = unnas::util::derive_rng(3, "rank-noise", 0);
    let records: Vec<ArchRecord> = (0..40)
        .map(|i| {
            let x = i as f64 / 40.0;
            let y = (x + rng.gen_range(-0.05..0.05)).clamp(0.0, 1.0);
            ArchRecord {
                arch_id: format!("d-{i:03}"),
                cost: CostStats {
                    flops: 1,
                    params: 1,
                },
                accuracies: std::collections::BTreeMap::from([
                    ("rot".to_string(), x),
                    ("supv_cls".to_string(), y),
                ]),
            }
        })
        .collect();
    let path = dir.path().join("records.jsonl");
    let header = FileHeader::new(RECORDS_KIND, &manifest.hash(), 0);
    write_jsonl(&path, &header, &records).unwrap();
    let outputs = cmd_analyze(
        &manifest,
        &AnalyzeOptions {
            store_path: Some(path),
            sizes: Some(vec![1, 5, 10]),
            force_mixed: false,
        },
    )
    .unwrap();
    let rho = outputs.correlations[0].rho.expect("varied data");
    assert!(rho > 0.8, "rho = {rho}");
}

#[test]
fn analyze_refuses_mixed_manifest_stores_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = tiny_manifest(dir.path().to_path_buf());
    let records = vec![ArchRecord {
        arch_id: "d-0".into(),
        cost: CostStats { flops: 1, params: 1 },
        accuracies: std::collections::BTreeMap::from([
            ("rot".to_string(), 0.5),
            ("supv_cls".to_string(), 0.5),
        ]),
    }, ArchRecord {
        arch_id: "d-1".into(),
        cost: CostStats { flops: 1, params: 1 },
        accuracies: std::collections::BTreeMap::from([
            ("rot".to_string(), 0.6),
            ("supv_cls".to_string(), 0.7),
        ]),
    }];
    let path = dir.path().join("records.jsonl");
    let header = FileHeader::new(RECORDS_KIND, "someone-else", 0);
    write_jsonl(&path, &header, &records).unwrap();
    let opts = AnalyzeOptions {
        store_path: Some(path.clone()),
        sizes: Some(vec![1]),
        force_mixed: false,
    };
    assert!(matches!(
        cmd_analyze(&manifest, &opts),
        Err(CliError::Store(unnas::store::Error::MixedManifest { .. }))
    ));
    let forced = AnalyzeOptions {
        force_mixed: true,
        ..opts
    };
    cmd_analyze(&manifest, &forced).unwrap();
}

#[test]
fn search_firewall_refuses_labels_for_pretext_objectives() {
    let dir = tempfile::tempdir().unwrap();
    let mut manifest = tiny_manifest(dir.path().to_path_buf());
    manifest.objective = Some(TaskKind::Jigsaw);
    manifest.search = Some(search_config(1));
    manifest.mount = DatasetMount::Labeled;
    let err = cmd_search(&manifest).unwrap_err();
    match err {
        CliError::Search(unnas::darts::Error::Task(
            unnas::task::Error::LabelsRefused { task },
        )) => assert_eq!(task, "jigsaw"),
        other => panic!("expected the label firewall, got: {other}"),
    }
}

#[test]
fn search_then_evaluate_stamps_dataset_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let mut search_manifest = tiny_manifest(dir.path().join("search"));
    search_manifest.objective = Some(TaskKind::Rot);
    search_manifest.search = Some(search_config(2));
    let (genotype_path, log_path) = cmd_search(&search_manifest).unwrap();
    let file: GenotypeFile =
        serde_json::from_str(&std::fs::read_to_string(&genotype_path).unwrap()).unwrap();
    file.genotype.validate().unwrap();
    assert!(log_path.exists());

    // disjoint evaluation dataset: valid, not reference-only
    let mut eval_manifest = tiny_manifest(dir.path().join("eval"));
    eval_manifest.dataset = DatasetSpec::Synthetic {
        classes: 4,
        n: 40,
        hw: 16,
        seed: 99,
    };
    let report = cmd_evaluate(&eval_manifest, &genotype_path).unwrap();
    assert!(!report.reference_only);
    assert!((0.0..=1.0).contains(&report.mean_accuracy));

    // same dataset: allowed but stamped reference-only
    let mut same_manifest = tiny_manifest(dir.path().join("eval-same"));
    same_manifest.dataset = search_manifest.dataset.clone();
    let report_same = cmd_evaluate(&same_manifest, &genotype_path).unwrap();
    assert!(report_same.reference_only);

    // determinism: same seeds, same accuracy
    let report_again = cmd_evaluate(&eval_manifest, &genotype_path).unwrap();
    assert_eq!(report.mean_accuracy, report_again.mean_accuracy);

    // dot emission for the searched genotype
    let dot_path = dir.path().join("cells.dot");
    cmd_dot(&genotype_path, &dot_path).unwrap();
    let dot = std::fs::read_to_string(&dot_path).unwrap();
    assert!(dot.contains("digraph normal"));
    assert!(dot.contains("digraph reduce"));
}

#[test]
fn invalid_manifest_reports_field_paths() {
    let dir = tempfile::tempdir().unwrap();
    let mut manifest = tiny_manifest(dir.path().to_path_buf());
    manifest.sample.n = 0;
    let err = cmd_sample(&manifest).unwrap_err();
    let CliError::InvalidManifest(problems) = err else {
        panic!("wrong error kind");
    };
    assert!(problems.iter().any(|p| p.starts_with("sample.n:")));
}

#[test]
fn binary_smoke_sample_and_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = tiny_manifest(dir.path().to_path_buf());
    let manifest_path = dir.path().join("manifest.json");
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).unwrap(),
    )
    .unwrap();
    let bin = env!("CARGO_BIN_EXE_unnas");
    let out = std::process::Command::new(bin)
        .args(["sample", "--manifest"])
        .arg(&manifest_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("pool.jsonl").exists());

    let csv_path = dir.path().join("ext.csv");
    std::fs::write(&csv_path, "arch_id,flops,params,rot\nd-a,1,1,0.5\n").unwrap();
    let records_out = dir.path().join("ingested.jsonl");
    let out = std::process::Command::new(bin)
        .args(["ingest", "--path"])
        .arg(&csv_path)
        .args(["--out"])
        .arg(&records_out)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(records_out.exists());

    // malformed accuracy fails with a line-numbered message
    std::fs::write(&csv_path, "arch_id,flops,params,rot\nd-a,1,1,1.5\n").unwrap();
    let out = std::process::Command::new(bin)
        .args(["ingest", "--path"])
        .arg(&csv_path)
        .args(["--out"])
        .arg(&records_out)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "{stderr}");
}
