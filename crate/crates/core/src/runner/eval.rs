use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::Serialize;

use super::record::RunRecord;
use crate::error::{Error, Result};

/// Aggregates for one `(task_type, method)` group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub task_type: String,
    pub method: String,
    pub runs: usize,
    pub mean_weighted_pass_at_1: f64,
    /// Over runs that produced an answer; empty when none did.
    pub mean_coherency: Option<f64>,
    pub pass_rate: f64,
    pub error_rate: f64,
    pub mean_retries: f64,
}

/// Parse record files. Every line must match the record schema.
pub fn read_records(paths: &[impl AsRef<Path>]) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        for (i, line) in file.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| {
                Error::parse(format!("{}:{}", path.display(), i + 1), e.to_string())
            })?);
        }
    }
    Ok(out)
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, s) = xs.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| s / n as f64)
}

/// Group by task type and method, in sorted key order.
pub fn aggregate(records: &[RunRecord]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(&str, &str), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((&r.task_type, &r.method)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((task_type, method), rs)| {
            let n = rs.len() as f64;
            AggregateRow {
                task_type: task_type.to_string(),
                method: method.to_string(),
                runs: rs.len(),
                mean_weighted_pass_at_1: mean(rs.iter().map(|r| r.weighted_pass_at_1))
                    .unwrap_or(0.0),
                mean_coherency: mean(rs.iter().filter_map(|r| r.coherency_proxy)),
                pass_rate: rs.iter().filter(|r| r.passed).count() as f64 / n,
                error_rate: rs.iter().filter(|r| r.error.is_some()).count() as f64 / n,
                mean_retries: mean(rs.iter().map(|r| r.retries_used as f64)).unwrap_or(0.0),
            }
        })
        .collect()
}

const HEADERS: [&str; 8] = [
    "task_type",
    "method",
    "runs",
    "pass@1",
    "coherency",
    "pass_rate",
    "error_rate",
    "retries",
];

fn cells(row: &AggregateRow) -> [String; 8] {
    [
        row.task_type.clone(),
        row.method.clone(),
        row.runs.to_string(),
        format!("{:.4}", row.mean_weighted_pass_at_1),
        row.mean_coherency
            .map_or_else(|| "-".to_string(), |c| format!("{c:.4}")),
        format!("{:.4}", row.pass_rate),
        format!("{:.4}", row.error_rate),
        format!("{:.2}", row.mean_retries),
    ]
}

/// Fixed-width text table, one line per group.
pub fn render_table(rows: &[AggregateRow]) -> String {
    let body: Vec<[String; 8]> = rows.iter().map(cells).collect();
    let mut widths = HEADERS.map(str::len);
    for r in &body {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cols: &[String]| {
        let padded: Vec<String> = cols
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| {
                if i < 2 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        padded.join("  ").trim_end().to_string()
    };
    let mut out = line(&HEADERS.map(String::from));
    out.push('\n');
    for r in &body {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

pub fn write_csv(rows: &[AggregateRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
