//! External record ingestion.
//!
//! CSV column mapping: `arch_id,flops,params,<task>...` where each `<task>`
//! column holds that task's accuracy in [0, 1] (empty cell = not measured).
//! Values are plain (unquoted) fields; this matches the exporter's output.

use std::collections::BTreeMap;
use std::path::Path;

use crate::nn::CostStats;
use crate::space::ArchRecord;
use crate::task::TaskKind;

use super::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestFormat {
    Csv,
}

impl IngestFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(IngestFormat::Csv),
            _ => None,
        }
    }
}

/// Parse records from the documented CSV mapping; malformed rows are
/// rejected with their line numbers.
pub fn read_arch_records_csv(text: &str) -> Result<Vec<ArchRecord>, CliError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    let (_, header) = lines.next().ok_or_else(|| CliError::Ingest {
        problems: vec!["empty file".to_string()],
    })?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let mut problems = Vec::new();
    if columns.len() < 4 || columns[0] != "arch_id" || columns[1] != "flops" || columns[2] != "params"
    {
        problems.push(format!(
            "header must start with arch_id,flops,params and name at least one task; got {header:?}"
        ));
    }
    let task_columns: Vec<(usize, String)> = columns
        .iter()
        .enumerate()
        .skip(3)
        .map(|(i, c)| (i, c.to_string()))
        .collect();
    for (_, name) in &task_columns {
        if TaskKind::parse(name).is_none() {
            problems.push(format!("unknown task column {name:?}"));
        }
    }
    if !problems.is_empty() {
        return Err(CliError::Ingest { problems });
    }

    let mut records = Vec::new();
    for (idx, line) in lines {
        let row = idx + 1; // 1-based line numbers
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            problems.push(format!(
                "line {row}: {} fields, expected {}",
                fields.len(),
                columns.len()
            ));
            continue;
        }
        let arch_id = fields[0].to_string();
        if arch_id.is_empty() {
            problems.push(format!("line {row}: empty arch_id"));
            continue;
        }
        let flops = match fields[1].parse::<u64>() {
            Ok(v) => v,
            Err(e) => {
                problems.push(format!("line {row}: flops: {e}"));
                continue;
            }
        };
        let params = match fields[2].parse::<u64>() {
            Ok(v) => v,
            Err(e) => {
                problems.push(format!("line {row}: params: {e}"));
                continue;
            }
        };
        let mut accuracies = BTreeMap::new();
        for (col, name) in &task_columns {
            let cell = fields[*col];
            if cell.is_empty() {
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if (0.0..=1.0).contains(&v) => {
                    accuracies.insert(name.clone(), v);
                }
                Ok(v) => {
                    problems.push(format!(
                        "line {row}: {name} accuracy {v} outside [0, 1]"
                    ));
                }
                Err(e) => {
                    problems.push(format!("line {row}: {name}: {e}"));
                }
            }
        }
        records.push(ArchRecord {
            arch_id,
            cost: CostStats { flops, params },
            accuracies,
        });
    }
    if !problems.is_empty() {
        return Err(CliError::Ingest { problems });
    }
    Ok(records)
}

pub fn ingest_external_records(path: &Path, format: IngestFormat) -> Result<Vec<ArchRecord>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| super::io_err(path, e))?;
    match format {
        IngestFormat::Csv => read_arch_records_csv(&text),
    }
}

/// Export records to the same CSV mapping (task columns sorted by name).
pub fn export_records_csv(records: &[ArchRecord]) -> String {
    let mut tasks: Vec<String> = records
        .iter()
        .flat_map(|r| r.accuracies.keys().cloned())
        .collect();
    tasks.sort();
    tasks.dedup();
    let mut out = String::from("arch_id,flops,params");
    for t in &tasks {
        out.push(',');
        out.push_str(t);
    }
    out.push('\n');
    for r in records {
        out.push_str(&format!("{},{},{}", r.arch_id, r.cost.flops, r.cost.params));
        for t in &tasks {
            out.push(',');
            if let Some(a) = r.accuracy(t) {
                out.push_str(&format!("{a}"));
            }
        }
        out.push('\n');
    }
    out
}
