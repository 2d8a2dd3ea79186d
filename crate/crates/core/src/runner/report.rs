//! Aggregate reports, per-type breakdowns and run comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{RunError, SampleResult};
use crate::backend::replay::sha256_hex;

pub const UNTYPED: &str = "other";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeStat {
    pub mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub count: usize,
    pub errors: usize,
    /// `None` when no samples were scored.
    pub mean: Option<f64>,
    pub per_type: BTreeMap<String, TypeStat>,
    pub config: Value,
    pub run_digest: String,
    pub dataset_digest: String,
    pub sample_set_digest: String,
}

/// Per-type means; samples without a type are grouped under `other`.
pub fn report_by_type(results: &[SampleResult]) -> BTreeMap<String, TypeStat> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in results {
        let key = r.question_type.clone().unwrap_or_else(|| UNTYPED.to_string());
        let e = sums.entry(key).or_insert((0.0, 0));
        e.0 += r.score;
        e.1 += 1;
    }
    sums.into_iter()
        .map(|(k, (sum, count))| (k, TypeStat { mean: sum / count as f64, count }))
        .collect()
}

pub fn mean_score(results: &[SampleResult]) -> Option<f64> {
    if results.is_empty() {
        return None;
    }
    Some(results.iter().map(|r| r.score).sum::<f64>() / results.len() as f64)
}

pub fn sample_set_digest<S: AsRef<str>>(ids: &[S]) -> String {
    let mut ids: Vec<&str> = ids.iter().map(AsRef::as_ref).collect();
    ids.sort_unstable();
    sha256_hex(ids.join("\n").as_bytes())
}

impl Report {
    /// Folds results into a report. Results are re-sorted by id first so
    /// completion order never shows up in the output.
    pub fn build(
        name: Option<String>,
        results: &[SampleResult],
        config: Value,
        run_digest: String,
        dataset_digest: String,
    ) -> Self {
        let mut sorted: Vec<&SampleResult> = results.iter().collect();
        sorted.sort_by(|a, b| a.id.cmp(&b.id));
        let owned: Vec<SampleResult> = sorted.into_iter().cloned().collect();
        let ids: Vec<&str> = owned.iter().map(|r| r.id.as_str()).collect();
        Report {
            name,
            count: owned.len(),
            errors: owned.iter().filter(|r| r.error.is_some()).count(),
            mean: mean_score(&owned),
            per_type: report_by_type(&owned),
            config,
            sample_set_digest: sample_set_digest(&ids),
            run_digest,
            dataset_digest,
        }
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        if let Some(name) = &self.name {
            let _ = writeln!(out, "run: {name}");
        }
        let _ = writeln!(out, "samples: {}  errors: {}", self.count, self.errors);
        let _ = writeln!(out, "run digest: {}", self.run_digest);
        let width = self.per_type.keys().map(String::len).max().unwrap_or(0).max(8);
        let _ = writeln!(out, "{:<width$}  {:>8}  {:>6}", "type", "accuracy", "count");
        for (ty, stat) in &self.per_type {
            let _ = writeln!(out, "{:<width$}  {:>8.2}  {:>6}", ty, stat.mean * 100.0, stat.count);
        }
        let overall = match self.mean {
            Some(m) => format!("{:.2}", m * 100.0),
            None => "n/a".into(),
        };
        let _ = writeln!(out, "{:<width$}  {:>8}  {:>6}", "overall", overall, self.count);
        out
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
    }

    /// Writes `<stem>.json` and `<stem>.txt`, each replaced atomically.
    pub fn write(&self, json_path: &Path) -> Result<(), RunError> {
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        write_atomic(json_path, format!("{json}\n").as_bytes())?;
        write_atomic(&json_path.with_extension("txt"), self.to_table().as_bytes())
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| RunError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| RunError::io(path, e))?;
    tmp.persist(path).map_err(|e| RunError::io(path, e.error))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    /// `b - a`; `None` when either side has no mean.
    pub overall: Option<f64>,
    /// Types present in both runs.
    pub per_type: BTreeMap<String, f64>,
    pub count: usize,
}

impl DeltaReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let width = self.per_type.keys().map(String::len).max().unwrap_or(0).max(8);
        let _ = writeln!(out, "{:<width$}  {:>8}", "type", "delta");
        for (ty, d) in &self.per_type {
            let _ = writeln!(out, "{:<width$}  {:>+8.2}", ty, d * 100.0);
        }
        let overall = match self.overall {
            Some(d) => format!("{:+.2}", d * 100.0),
            None => "n/a".into(),
        };
        let _ = writeln!(out, "{:<width$}  {:>8}", "overall", overall);
        out
    }
}

/// Differences `b - a`. Both runs must cover the same dataset and samples.
pub fn compare(a: &Report, b: &Report) -> Result<DeltaReport, RunError> {
    if a.dataset_digest != b.dataset_digest {
        return Err(RunError::CompareMismatch("runs use different datasets".into()));
    }
    if a.sample_set_digest != b.sample_set_digest {
        return Err(RunError::CompareMismatch("runs cover different sample sets".into()));
    }
    let per_type = a
        .per_type
        .iter()
        .filter_map(|(ty, sa)| b.per_type.get(ty).map(|sb| (ty.clone(), sb.mean - sa.mean)))
        .collect();
    Ok(DeltaReport {
        overall: a.mean.zip(b.mean).map(|(x, y)| y - x),
        per_type,
        count: a.count,
    })
}
