//! Experiment persistence: manifests, headered JSONL files, and the
//! append-only report/record stores that make studies resumable.
//!
//! Every output file starts with a header line carrying
//! `{schema_version, manifest_hash, seed, kind}`; consumers refuse to mix
//! files from different manifests unless forced.

mod manifest;

pub use manifest::{DatasetMount, DatasetSpec, FilterSpec, Manifest, SampleSpec};

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::space::{ArchRecord, SCHEMA_VERSION};
use crate::task::TaskKind;
use crate::train::TrainReport;

#[derive(Debug)]
pub enum Error {
    Io { path: PathBuf, source: std::io::Error },
    BadHeader { path: PathBuf, reason: String },
    MixedManifest { path: PathBuf, expected: String, found: String },
    BadLine { path: PathBuf, line: usize, reason: String },
}

impl std::fmt::Display for Error {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Error::Io { path, source } => write!(f, "{}: {source}", path.display()),
            Error::BadHeader { path, reason } => {
                write!(f, "{}: bad header: {reason}", path.display())
            }
            Error::MixedManifest {
                path,
                expected,
                found,
            } => write!(
                f,
                "{}: manifest hash {found} does not match {expected} (pass --force-mixed to override)",
                path.display()
            ),
            Error::BadLine { path, line, reason } => {
                write!(f, "{}:{line}: {reason}", path.display())
            }
        }
    }
}

impl std::error::Error for Error {}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// First line of every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHeader {
    pub schema_version: u32,
    pub manifest_hash: String,
    pub seed: u64,
    pub kind: String,
}

impl FileHeader {
    pub fn new(kind: &str, manifest_hash: &str, seed: u64) -> Self {
        FileHeader {
            schema_version: SCHEMA_VERSION,
            manifest_hash: manifest_hash.to_string(),
            seed,
            kind: kind.to_string(),
        }
    }
}

/// Write a whole headered JSONL file at once (byte-deterministic for fixed
/// inputs).
pub fn write_jsonl<T: Serialize>(path: &Path, header: &FileHeader, items: &[T]) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err(path, e))?;
    }
    let mut out = String::new();
    out.push_str(&serde_json::to_string(header).expect("header serializes"));
    out.push('\n');
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("item serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Read a headered JSONL file, checking the expected kind.
pub fn read_jsonl<T: DeserializeOwned>(
    path: &Path,
    expected_kind: &str,
) -> Result<(FileHeader, Vec<T>), Error> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut header: Option<FileHeader> = None;
    let mut items = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if header.is_none() {
            let h: FileHeader = serde_json::from_str(&line).map_err(|e| Error::BadHeader {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
            if h.kind != expected_kind {
                return Err(Error::BadHeader {
                    path: path.to_path_buf(),
                    reason: format!("kind {:?}, expected {expected_kind:?}", h.kind),
                });
            }
            header = Some(h);
            continue;
        }
        items.push(serde_json::from_str(&line).map_err(|e| Error::BadLine {
            path: path.to_path_buf(),
            line: idx + 1,
            reason: e.to_string(),
        })?);
    }
    let header = header.ok_or_else(|| Error::BadHeader {
        path: path.to_path_buf(),
        reason: "empty file".to_string(),
    })?;
    Ok((header, items))
}

/// One line of the training-report store; failed jobs carry `error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportLine {
    pub arch_id: String,
    pub task: TaskKind,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<TrainReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub const REPORTS_KIND: &str = "train_reports";
pub const RECORDS_KIND: &str = "arch_records";
pub const POOL_KIND: &str = "arch_pool";

/// Append-only store of per-(architecture, task, seed) training reports.
/// Reopening with the same manifest hash resumes: completed jobs are skipped.
pub struct ReportStore {
    path: PathBuf,
    file: File,
    lines: Vec<ReportLine>,
    completed: HashSet<(String, TaskKind, u64)>,
}

impl ReportStore {
    pub fn open_or_create(path: &Path, header: &FileHeader, force_mixed: bool) -> Result<Self, Error> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(path, e))?;
        }
        let exists = path.exists() && std::fs::metadata(path).map(|m| m.len() > 0).unwrap_or(false);
        let mut lines = Vec::new();
        if exists {
            let (found, items): (FileHeader, Vec<ReportLine>) = read_jsonl(path, REPORTS_KIND)?;
            if found.manifest_hash != header.manifest_hash && !force_mixed {
                return Err(Error::MixedManifest {
                    path: path.to_path_buf(),
                    expected: header.manifest_hash.clone(),
                    found: found.manifest_hash,
                });
            }
            lines = items;
        } else {
            let mut file = File::create(path).map_err(|e| io_err(path, e))?;
            writeln!(file, "{}", serde_json::to_string(header).expect("header")).map_err(|e| io_err(path, e))?;
        }
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| io_err(path, e))?;
        let completed = lines
            .iter()
            .map(|l| (l.arch_id.clone(), l.task, l.seed))
            .collect();
        Ok(ReportStore {
            path: path.to_path_buf(),
            file,
            lines,
            completed,
        })
    }

    pub fn is_done(&self, arch_id: &str, task: TaskKind, seed: u64) -> bool {
        self.completed
            .contains(&(arch_id.to_string(), task, seed))
    }

    pub fn append(&mut self, line: ReportLine) -> Result<(), Error> {
        let key = (line.arch_id.clone(), line.task, line.seed);
        if self.completed.contains(&key) {
            return Ok(());
        }
        writeln!(
            self.file,
            "{}",
            serde_json::to_string(&line).expect("line serializes")
        )
        .map_err(|e| io_err(&self.path, e))?;
        self.file.flush().map_err(|e| io_err(&self.path, e))?;
        self.completed.insert(key);
        self.lines.push(line);
        Ok(())
    }

    pub fn lines(&self) -> &[ReportLine] {
        &self.lines
    }
}

/// Load an architecture-record store, refusing mixed manifests unless forced.
pub fn read_records(
    path: &Path,
    expected_hash: Option<&str>,
    force_mixed: bool,
) -> Result<(FileHeader, Vec<ArchRecord>), Error> {
    let (header, records) = read_jsonl::<ArchRecord>(path, RECORDS_KIND)?;
    if let Some(hash) = expected_hash {
        if header.manifest_hash != hash && !force_mixed {
            return Err(Error::MixedManifest {
                path: path.to_path_buf(),
                expected: hash.to_string(),
                found: header.manifest_hash,
            });
        }
    }
    Ok((header, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_store_resumes_without_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reports.jsonl");
        let header = FileHeader::new(REPORTS_KIND, "abc", 1);
        let line = ReportLine {
            arch_id: "d-1".into(),
            task: TaskKind::Rot,
            seed: 7,
            report: Some(TrainReport {
                task: "rot".into(),
                epochs: 1,
                final_train_loss: 0.5,
                val_accuracy: 0.8,
                seed: 7,
                wall_time_s: 0.1,
            }),
            error: None,
        };
        {
            let mut store = ReportStore::open_or_create(&path, &header, false).unwrap();
            assert!(!store.is_done("d-1", TaskKind::Rot, 7));
            store.append(line.clone()).unwrap();
            store.append(line.clone()).unwrap(); // no-op duplicate
        }
        let store = ReportStore::open_or_create(&path, &header, false).unwrap();
        assert!(store.is_done("d-1", TaskKind::Rot, 7));
        assert_eq!(store.lines().len(), 1);
    }

    #[test]
    fn mixed_manifest_is_refused_unless_forced() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reports.jsonl");
        let header_a = FileHeader::new(REPORTS_KIND, "aaa", 1);
        ReportStore::open_or_create(&path, &header_a, false).unwrap();
        let header_b = FileHeader::new(REPORTS_KIND, "bbb", 1);
        assert!(matches!(
            ReportStore::open_or_create(&path, &header_b, false),
            Err(Error::MixedManifest { .. })
        ));
        assert!(ReportStore::open_or_create(&path, &header_b, true).is_ok());
    }

    #[test]
    fn jsonl_roundtrip_preserves_items() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        let header = FileHeader::new("arch_records", "h", 0);
        let items = vec![serde_json::json!({"a": 1}), serde_json::json!({"a": 2})];
        write_jsonl(&path, &header, &items).unwrap();
        let (h2, back): (FileHeader, Vec<serde_json::Value>) =
            read_jsonl(&path, "arch_records").unwrap();
        assert_eq!(h2, header);
        assert_eq!(back, items);
    }
}
