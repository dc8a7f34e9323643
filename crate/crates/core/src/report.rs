//! Report and result-file emission.
//!
//! Criterion reports are written as JSON
//!
//! ```json
//! {"provenance": {"tool": "paic", "version": "...", "config_hash": "...", "seed": 7},
//!  "reports": [{"criterion": "paic", "value": ..., "fit": ..., "penalty": ...,
//!               "n": ..., "S": ..., "seed": ..., "warnings": []},
//!              {"criterion": "bpic", "error": "...", "kind": "validation"}]}
//! ```
//!
//! or as CSV with a leading `# tool=... version=... config_hash=... seed=...`
//! line and the fixed header `criterion,value,fit,penalty,n,S,seed,warnings,error`.
//! Floating-point fields are written with 17 significant digits.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::criteria::CriterionReport;
use crate::error::{Error, Result};
use crate::experiments::ExperimentResult;

pub const TOOL: &str = "paic";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    /// Hashes the JSON serialization of `config`.
    pub fn new<C: Serialize>(config: &C, seed: u64) -> Self {
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            config_hash: config_hash(config),
            seed,
        }
    }

    fn comment_line(&self) -> String {
        format!(
            "# tool={} version={} config_hash={} seed={}",
            self.tool, self.version, self.config_hash, self.seed
        )
    }

    fn parse_comment_line(line: &str) -> Option<Self> {
        let rest = line.strip_prefix("# ")?;
        let get = |key: &str| {
            rest.split_whitespace()
                .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
                .map(str::to_string)
        };
        Some(Self {
            tool: get("tool")?,
            version: get("version")?,
            config_hash: get("config_hash")?,
            seed: get("seed")?.parse().ok()?,
        })
    }
}

/// SHA-256 of the JSON serialization, hex encoded.
pub fn config_hash<C: Serialize>(config: &C) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureKind {
    Validation,
    Numerical,
}

/// A criterion that could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionFailure {
    pub criterion: String,
    pub error: String,
    pub kind: FailureKind,
}

impl CriterionFailure {
    pub fn new(criterion: &str, err: &Error) -> Self {
        Self {
            criterion: criterion.into(),
            error: err.to_string(),
            kind: if err.is_validation() { FailureKind::Validation } else { FailureKind::Numerical },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReportEntry {
    Report(CriterionReport),
    Failure(CriterionFailure),
}

impl ReportEntry {
    pub fn criterion(&self) -> &str {
        match self {
            ReportEntry::Report(r) => &r.criterion,
            ReportEntry::Failure(f) => &f.criterion,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub provenance: Provenance,
    pub reports: Vec<ReportEntry>,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// 17 significant digits; round-trips every finite f64.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn render_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("report serializes");
    out.push(b'\n');
    out
}

pub fn render_report(file: &ReportFile, format: Format) -> Vec<u8> {
    match format {
        Format::Json => render_json(file),
        Format::Csv => {
            let mut out = Vec::new();
            writeln!(out, "{}", file.provenance.comment_line()).unwrap();
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["criterion", "value", "fit", "penalty", "n", "S", "seed", "warnings", "error"])
                .unwrap();
            for e in &file.reports {
                let row = match e {
                    ReportEntry::Report(r) => [
                        r.criterion.clone(),
                        fmt_f64(r.value),
                        fmt_f64(r.fit),
                        fmt_f64(r.penalty),
                        r.n.to_string(),
                        r.s.to_string(),
                        r.seed.map(|s| s.to_string()).unwrap_or_default(),
                        r.warnings.join("; "),
                        String::new(),
                    ],
                    ReportEntry::Failure(f) => [
                        f.criterion.clone(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        format!("{}: {}", serde_json::to_value(f.kind).unwrap().as_str().unwrap(), f.error),
                    ],
                };
                w.write_record(&row).unwrap();
            }
            w.flush().unwrap();
            drop(w);
            out
        }
    }
}

pub fn write_report(file: &ReportFile, format: Format, path: &Path) -> Result<()> {
    write_bytes(path, &render_report(file, format))
}

/// Parses a file written by [`write_report`].
pub fn read_report(path: &Path, format: Format) -> Result<ReportFile> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let label = path.display().to_string();
    let parse_err = |line: usize, msg: String| Error::Parse { path: label.clone(), line: line as u64, msg };
    match format {
        Format::Json => serde_json::from_str(&text).map_err(|e| parse_err(e.line(), e.to_string())),
        Format::Csv => {
            let (first, body) = text.split_once('\n').ok_or_else(|| parse_err(1, "empty file".into()))?;
            let provenance =
                Provenance::parse_comment_line(first).ok_or_else(|| parse_err(1, "missing provenance line".into()))?;
            let mut rdr = csv::Reader::from_reader(body.as_bytes());
            let mut reports = Vec::new();
            for (k, rec) in rdr.records().enumerate() {
                let line = k + 3;
                let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
                let field = |i: usize| rec.get(i).unwrap_or("");
                let num = |i: usize| field(i).parse::<f64>().map_err(|e| parse_err(line, e.to_string()));
                let int = |i: usize| field(i).parse::<usize>().map_err(|e| parse_err(line, e.to_string()));
                if !field(8).is_empty() {
                    let (kind, msg) = field(8).split_once(": ").ok_or_else(|| parse_err(line, "bad error field".into()))?;
                    let kind = match kind {
                        "validation" => FailureKind::Validation,
                        "numerical" => FailureKind::Numerical,
                        other => return Err(parse_err(line, format!("unknown failure kind {other}"))),
                    };
                    reports.push(ReportEntry::Failure(CriterionFailure { criterion: field(0).into(), error: msg.into(), kind }));
                    continue;
                }
                let seed = if field(6).is_empty() {
                    None
                } else {
                    Some(field(6).parse().map_err(|e: std::num::ParseIntError| parse_err(line, e.to_string()))?)
                };
                reports.push(ReportEntry::Report(CriterionReport {
                    criterion: field(0).into(),
                    value: num(1)?,
                    fit: num(2)?,
                    penalty: num(3)?,
                    n: int(4)?,
                    s: int(5)?,
                    seed,
                    warnings: if field(7).is_empty() { Vec::new() } else { field(7).split("; ").map(String::from).collect() },
                }));
            }
            Ok(ReportFile { provenance, reports })
        }
    }
}

#[derive(Serialize)]
struct AggregateFile<'a> {
    provenance: &'a Provenance,
    study: &'a str,
    scale: &'static str,
    cells: &'a [crate::experiments::CellInfo],
    aggregates: &'a [crate::experiments::Aggregate],
    failed_replications: &'a [(usize, usize)],
    warnings: &'a [String],
}

/// Tidy per-replication CSV: one row per replication per estimator.
pub fn render_records_csv(result: &ExperimentResult, provenance: &Provenance) -> Vec<u8> {
    let mut out = Vec::new();
    writeln!(out, "{}", provenance.comment_line()).unwrap();
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record([
        "study", "cell", "n", "prior", "sigma_a2", "replication", "estimator", "estimate", "realized_bias", "error",
    ])
    .unwrap();
    for r in &result.records {
        let c = &result.cells[r.cell];
        w.write_record([
            result.study.clone(),
            r.cell.to_string(),
            c.n.to_string(),
            c.prior.clone(),
            c.sigma_a2.map(fmt_f64).unwrap_or_default(),
            r.replication.to_string(),
            r.estimator.clone(),
            fmt_f64(r.estimate),
            fmt_f64(r.realized_bias),
            fmt_f64(r.error),
        ])
        .unwrap();
    }
    w.flush().unwrap();
    drop(w);
    out
}

pub fn render_aggregates_json(result: &ExperimentResult, provenance: &Provenance) -> Vec<u8> {
    render_json(&AggregateFile {
        provenance,
        study: &result.study,
        scale: "per observation: estimates, realized bias and errors are divided by the number of observations",
        cells: &result.cells,
        aggregates: &result.aggregates,
        failed_replications: &result.failed_replications,
        warnings: &result.warnings,
    })
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

/// Two-column (n, mean bias) series, one per panel and estimator, plus the
/// closed-form expected bias where known. Returns (file name, contents).
pub fn render_plot_data(result: &ExperimentResult, provenance: &Provenance) -> Vec<(String, Vec<u8>)> {
    let mut panels: Vec<(String, Option<f64>)> = Vec::new();
    for c in &result.cells {
        if !panels.iter().any(|(p, s)| *p == c.prior && *s == c.sigma_a2) {
            panels.push((c.prior.clone(), c.sigma_a2));
        }
    }
    let mut estimators: Vec<&str> = Vec::new();
    for a in &result.aggregates {
        if !estimators.contains(&a.estimator.as_str()) {
            estimators.push(&a.estimator);
        }
    }
    let mut files = Vec::new();
    for (prior, sa2) in &panels {
        let cells: Vec<_> = result.cells.iter().filter(|c| c.prior == *prior && c.sigma_a2 == *sa2).collect();
        let panel = match sa2 {
            Some(v) => format!("{}_sigma_a2={}", slug(prior), v),
            None => slug(prior),
        };
        let mut series: Vec<(String, Vec<(usize, f64)>)> = estimators
            .iter()
            .map(|e| {
                let pts = cells
                    .iter()
                    .filter_map(|c| result.aggregate_for(c.index, e).map(|a| (c.n, a.mean_estimate)))
                    .collect();
                (e.to_string(), pts)
            })
            .collect();
        if cells.iter().all(|c| c.expected_bias.is_some()) {
            series.push(("true_bias".into(), cells.iter().map(|c| (c.n, c.expected_bias.unwrap())).collect()));
        }
        for (name, pts) in series {
            if pts.is_empty() {
                continue;
            }
            let mut body = format!("{}\nn,mean_bias\n", provenance.comment_line());
            for (n, v) in pts {
                body.push_str(&format!("{n},{}\n", fmt_f64(v)));
            }
            files.push((format!("{panel}__{name}.csv"), body.into_bytes()));
        }
    }
    files
}

/// Writes `records.csv`, `aggregates.json` and `plot/*.csv` under `dir`.
pub fn write_experiment(result: &ExperimentResult, provenance: &Provenance, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let records = dir.join("records.csv");
    write_bytes(&records, &render_records_csv(result, provenance))?;
    written.push(records);
    let agg = dir.join("aggregates.json");
    write_bytes(&agg, &render_aggregates_json(result, provenance))?;
    written.push(agg);
    for (name, body) in render_plot_data(result, provenance) {
        let p = dir.join("plot").join(name);
        write_bytes(&p, &body)?;
        written.push(p);
    }
    Ok(written)
}
