//! On-disk campaign layout:
//!
//! - `manifest.json`: configuration, hash, status, aggregates, checks
//! - `results.csv`: every observation row
//! - `trials.jsonl`: completed units, appended as they finish (resume log)
//! - `records.jsonl`: per-trial records, eigenpair experiments only
//! - `histogram.csv` / `sweep.csv`: experiment-specific tables

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::stats::Aggregate;
use super::{aggregate_rows, summarize, CampaignResult, Check, HistBin, Row, SweepPoint, TrialOutcome, TrialRecord};
use crate::config::{CampaignConfig, Experiment, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::theory::{fluctuation_lambda, probability_bound_fr, FluctuationParams, Prediction};

pub const CSV_HEADER: [&str; 7] = ["trial", "quantity", "index_i", "index_j", "observed", "predicted", "deviation"];
pub const HISTOGRAM_HEADER: [&str; 4] = ["bin_left", "bin_right", "count", "semicircle_density"];
pub const SWEEP_HEADER: [&str; 7] = [
    "theta",
    "mean_overlap_sq",
    "std_overlap_sq",
    "predicted_overlap_sq",
    "mean_lambda1",
    "predicted_lambda1",
    "trials",
];

const MANIFEST: &str = "manifest.json";
const RESULTS: &str = "results.csv";
const TRIALS: &str = "trials.jsonl";
const RECORDS: &str = "records.jsonl";
const HISTOGRAM: &str = "histogram.csv";
const SWEEP: &str = "sweep.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

/// Closed-form context for the configured model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheorySummary {
    pub predictions: Vec<Prediction>,
    pub tau: f64,
    pub np_eff: f64,
    /// `Λ` with default constants; absent when `τ ≤ 1` or `np ≤ 1`.
    pub fluctuation_lambda: Option<f64>,
    pub probability_bound: Option<f64>,
}

impl TheorySummary {
    fn for_config(cfg: &CampaignConfig) -> Option<Self> {
        let m = &cfg.model;
        if m.n < 2 || m.q <= 0.0 {
            return None;
        }
        let predictions = m.thetas.iter().map(|&t| Prediction::for_theta(t)).collect::<Result<_>>().ok()?;
        let np_eff = if m.r > 0 { m.np_eff() } else { f64::NAN };
        let fp = FluctuationParams::for_model(m.n, np_eff, m.q, &m.thetas);
        Some(TheorySummary {
            predictions,
            tau: m.tau(),
            np_eff: if np_eff.is_nan() { 0.0 } else { np_eff },
            fluctuation_lambda: fluctuation_lambda(&fp).ok(),
            probability_bound: if m.r > 0 { probability_bound_fr(&fp, m.n).ok() } else { None },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub generator: String,
    pub experiment: Experiment,
    pub config_hash: String,
    pub config: Value,
    pub status: RunStatus,
    pub units_total: u64,
    pub units_completed: u64,
    pub warnings: Vec<String>,
    pub theory: Option<TheorySummary>,
    pub aggregates: Vec<Aggregate>,
    pub summary: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub error: Option<String>,
}

impl Manifest {
    fn new(cfg: &CampaignConfig, warnings: &[String], total: u64, status: RunStatus) -> Self {
        Manifest {
            schema_version: SCHEMA_VERSION,
            generator: concat!("sparse-bbp ", env!("CARGO_PKG_VERSION")).to_string(),
            experiment: cfg.experiment,
            config_hash: cfg.config_hash(),
            config: cfg.to_value(),
            status,
            units_total: total,
            units_completed: 0,
            warnings: warnings.to_vec(),
            theory: TheorySummary::for_config(cfg),
            aggregates: Vec::new(),
            summary: BTreeMap::new(),
            checks: Vec::new(),
            error: None,
        }
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_manifest(dir: &Path, m: &Manifest) -> Result<()> {
    let mut s = serde_json::to_string_pretty(m)?;
    s.push('\n');
    write_atomic(&dir.join(MANIFEST), s.as_bytes())
}

/// 17 significant digits: exact round trip for every finite `f64`.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt<T: ToString>(x: Option<T>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

fn write_csv<W: Write>(w: W, rows: &[Row]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in rows {
        out.write_record([
            r.trial.to_string(),
            r.quantity.clone(),
            fmt_opt(r.index_i),
            fmt_opt(r.index_j),
            fmt_f64(r.observed),
            r.predicted.map_or_else(String::new, fmt_f64),
            r.deviation.map_or_else(String::new, fmt_f64),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn corrupt(dir: &Path, message: impl Into<String>) -> Error {
    Error::Corrupt {
        dir: dir.to_path_buf(),
        message: message.into(),
    }
}

fn read_csv_rows(dir: &Path) -> Result<Vec<Row>> {
    let mut rdr = csv::Reader::from_path(dir.join(RESULTS))?;
    if rdr.headers()?.iter().ne(CSV_HEADER) {
        return Err(corrupt(dir, "results.csv has an unexpected header"));
    }
    let opt_usize = |s: &str| -> Result<Option<usize>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| corrupt(dir, format!("bad index {s:?}")))
        }
    };
    let opt_f64 = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| corrupt(dir, format!("bad number {s:?}")))
        }
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        rows.push(Row {
            trial: field(0).parse().map_err(|_| corrupt(dir, "bad trial index"))?,
            quantity: field(1).to_string(),
            index_i: opt_usize(field(2))?,
            index_j: opt_usize(field(3))?,
            observed: opt_f64(field(4))?.ok_or_else(|| corrupt(dir, "missing observed value"))?,
            predicted: opt_f64(field(5))?,
            deviation: opt_f64(field(6))?,
        });
    }
    Ok(rows)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// An open campaign directory.
pub(crate) struct Store {
    dir: PathBuf,
    log: Mutex<File>,
    resumed: BTreeMap<u64, TrialOutcome>,
}

impl Store {
    /// Creates or reopens `dir`. An existing campaign with a different
    /// configuration hash is refused; a torn final log line is discarded.
    pub(crate) fn open(dir: &Path, cfg: &CampaignConfig, warnings: &[String], total: u64) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let hash = cfg.config_hash();
        let manifest_path = dir.join(MANIFEST);
        if manifest_path.exists() {
            let old: Manifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)
                .map_err(|e| corrupt(dir, format!("unreadable manifest: {e}")))?;
            if old.config_hash != hash {
                return Err(corrupt(
                    dir,
                    format!("holds campaign {} but the configuration hashes to {hash}", old.config_hash),
                ));
            }
        }

        let log_path = dir.join(TRIALS);
        let mut resumed = BTreeMap::new();
        if log_path.exists() && manifest_path.exists() {
            let text = fs::read_to_string(&log_path)?;
            let lines: Vec<&str> = text.lines().collect();
            for (i, line) in lines.iter().enumerate() {
                match serde_json::from_str::<TrialOutcome>(line) {
                    Ok(o) if o.unit < total => {
                        resumed.insert(o.unit, o);
                    }
                    Ok(o) => return Err(corrupt(dir, format!("trials.jsonl holds unit {} beyond {total}", o.unit))),
                    // A kill mid-append leaves at most one torn line, at the end.
                    Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => {}
                    Err(e) => return Err(corrupt(dir, format!("trials.jsonl line {}: {e}", i + 1))),
                }
            }
        }
        let mut manifest = Manifest::new(cfg, warnings, total, RunStatus::Running);
        manifest.units_completed = resumed.len() as u64;
        write_manifest(dir, &manifest)?;
        // Rewrite the log without any torn tail, then append.
        write_jsonl(&log_path, &resumed.values().collect::<Vec<_>>())?;
        let log = OpenOptions::new().append(true).open(&log_path)?;
        Ok(Store {
            dir: dir.to_path_buf(),
            log: Mutex::new(log),
            resumed,
        })
    }

    pub(crate) fn completed(&self) -> Result<BTreeMap<u64, TrialOutcome>> {
        Ok(self.resumed.clone())
    }

    pub(crate) fn append(&self, outcome: &TrialOutcome) -> Result<()> {
        let mut line = serde_json::to_vec(outcome)?;
        line.push(b'\n');
        let mut f = self.log.lock().unwrap_or_else(|e| e.into_inner());
        f.write_all(&line)?;
        f.flush()?;
        Ok(())
    }

    pub(crate) fn fail(&self, cfg: &CampaignConfig, warnings: &[String], total: u64, completed: u64, message: &str) -> Result<()> {
        let mut m = Manifest::new(cfg, warnings, total, RunStatus::Failed);
        m.units_completed = completed;
        m.error = Some(message.to_string());
        write_manifest(&self.dir, &m)
    }

    pub(crate) fn finish(&self, result: &CampaignResult, total: u64) -> Result<()> {
        let dir = &self.dir;
        let mut buf = Vec::new();
        write_csv(&mut buf, &result.rows)?;
        write_atomic(&dir.join(RESULTS), &buf)?;
        if !result.records.is_empty() {
            write_jsonl(&dir.join(RECORDS), &result.records)?;
        }
        if let Some(h) = &result.histogram {
            let mut w = csv::Writer::from_path(dir.join(HISTOGRAM))?;
            w.write_record(HISTOGRAM_HEADER)?;
            for b in h {
                w.write_record([
                    fmt_f64(b.bin_left),
                    fmt_f64(b.bin_right),
                    b.count.to_string(),
                    fmt_f64(b.semicircle_density),
                ])?;
            }
            w.flush()?;
        }
        if let Some(s) = &result.sweep {
            let mut w = csv::Writer::from_path(dir.join(SWEEP))?;
            w.write_record(SWEEP_HEADER)?;
            for p in s {
                w.write_record([
                    fmt_f64(p.theta),
                    fmt_f64(p.mean_overlap_sq),
                    fmt_f64(p.std_overlap_sq),
                    fmt_f64(p.predicted_overlap_sq),
                    fmt_f64(p.mean_lambda1),
                    fmt_f64(p.predicted_lambda1),
                    p.trials.to_string(),
                ])?;
            }
            w.flush()?;
        }
        let mut m = Manifest::new(&result.config, &result.warnings, total, RunStatus::Complete);
        m.units_completed = total;
        m.aggregates = result.aggregates.clone();
        m.summary = result.summary.clone();
        m.checks = result.checks.clone();
        write_manifest(dir, &m)
    }
}

/// Reloads a completed campaign and verifies that the stored aggregates
/// match a recomputation from `results.csv`.
pub fn load_campaign(dir: &Path) -> Result<CampaignResult> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)
        .map_err(|e| corrupt(dir, format!("unreadable manifest: {e}")))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(corrupt(dir, format!("schema version {} is not {SCHEMA_VERSION}", manifest.schema_version)));
    }
    if manifest.status != RunStatus::Complete {
        return Err(corrupt(dir, format!("campaign status is {:?}", manifest.status)));
    }
    let config = CampaignConfig::from_value(&manifest.config)?;
    if config.config_hash() != manifest.config_hash {
        return Err(corrupt(dir, "configuration does not match its recorded hash"));
    }
    let rows = read_csv_rows(dir)?;
    let aggregates = aggregate_rows(&rows);
    if aggregates != manifest.aggregates {
        return Err(corrupt(dir, "aggregates differ from a recomputation over results.csv"));
    }
    let summary = summarize(&config, &rows);
    if summary != manifest.summary {
        return Err(corrupt(dir, "summary differs from a recomputation over results.csv"));
    }
    let records: Vec<TrialRecord> = if dir.join(RECORDS).exists() {
        read_jsonl(&dir.join(RECORDS))?
    } else {
        Vec::new()
    };
    let histogram = if dir.join(HISTOGRAM).exists() {
        let mut rdr = csv::Reader::from_path(dir.join(HISTOGRAM))?;
        Some(rdr.deserialize::<HistBin>().collect::<std::result::Result<Vec<_>, _>>()?)
    } else {
        None
    };
    let sweep = if dir.join(SWEEP).exists() {
        let mut rdr = csv::Reader::from_path(dir.join(SWEEP))?;
        let mut pts = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let f = |i: usize| -> Result<f64> { rec[i].parse().map_err(|_| corrupt(dir, "bad sweep value")) };
            pts.push(SweepPoint {
                theta: f(0)?,
                mean_overlap_sq: f(1)?,
                std_overlap_sq: f(2)?,
                predicted_overlap_sq: f(3)?,
                mean_lambda1: f(4)?,
                predicted_lambda1: f(5)?,
                trials: rec[6].parse().map_err(|_| corrupt(dir, "bad sweep count"))?,
            });
        }
        Some(pts)
    } else {
        None
    };
    Ok(CampaignResult {
        schema_version: manifest.schema_version,
        config_hash: manifest.config_hash,
        config,
        records,
        rows,
        aggregates,
        summary,
        histogram,
        sweep,
        warnings: manifest.warnings,
        checks: manifest.checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_text() {
        for x in [1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.1 + 0.2] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_f64(2.0), "2.0000000000000000e0");
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            Row::new(0, "eigenvalue", Some(0), None, 10.0 / 3.0, Some(3.3)),
            Row::new(1, "overlap", Some(2), Some(1), -0.125, None),
        ];
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("trial,quantity,index_i,index_j,observed,predicted,deviation\n"));
        assert!(text.contains("1,overlap,2,1,-1.2500000000000000e-1,,\n"));
        fs::write(dir.path().join(RESULTS), buf).unwrap();
        assert_eq!(read_csv_rows(dir.path()).unwrap(), rows);
    }
}
