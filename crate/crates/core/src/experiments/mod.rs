//! Monte Carlo campaigns over the spiked model.
//!
//! A campaign is a list of independent units (usually one per trial). Each
//! unit draws from its own derived streams, so the result does not depend on
//! the number of workers or the order in which units finish. Completed units
//! are appended to `trials.jsonl` as they finish and an interrupted campaign
//! resumes from there.

mod persist;
pub mod stats;
mod tolerances;
mod trial;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use persist::{load_campaign, Manifest, RunStatus, TheorySummary, CSV_HEADER, HISTOGRAM_HEADER, SWEEP_HEADER};
pub use stats::{aggregate_rows, ks_semicircle, Aggregate};
pub use tolerances::{Tolerances, TOLERANCE_VERSION};
pub use trial::{
    run_trial_with, spike_norm_bound, support_window, theta_blocks, Deviation, TrialOutcome, TrialRecord,
    COUNT_INTERVAL,
};

use crate::config::{CampaignConfig, Experiment, SolverConfig, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::theory::{bbp_eigenvalue, bbp_overlap, semicircle_cdf};
use persist::Store;
use stats::{histogram, mean};
use trial::{execute_unit, same_theta, unit_count};

/// One observation: a CSV line `trial,quantity,index_i,index_j,observed,predicted,deviation`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub trial: u64,
    pub quantity: String,
    pub index_i: Option<usize>,
    pub index_j: Option<usize>,
    pub observed: f64,
    pub predicted: Option<f64>,
    /// `observed − predicted`.
    pub deviation: Option<f64>,
}

impl Row {
    pub fn new(
        trial: u64,
        quantity: &str,
        index_i: Option<usize>,
        index_j: Option<usize>,
        observed: f64,
        predicted: Option<f64>,
    ) -> Self {
        Row {
            trial,
            quantity: quantity.to_string(),
            index_i,
            index_j,
            observed,
            predicted,
            deviation: predicted.map(|p| observed - p),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: usize,
    /// Semicircle density averaged over the bin.
    pub semicircle_density: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub theta: f64,
    pub mean_overlap_sq: f64,
    pub std_overlap_sq: f64,
    pub predicted_overlap_sq: f64,
    pub mean_lambda1: f64,
    pub predicted_lambda1: f64,
    pub trials: usize,
}

/// A tolerance comparison: passes when `observed ≤ limit`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: impl Into<String>, observed: f64, limit: f64) -> Self {
        Check {
            name: name.into(),
            observed,
            limit,
            passed: observed <= limit,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CampaignResult {
    pub schema_version: u32,
    pub config_hash: String,
    pub config: CampaignConfig,
    /// Per-trial records (eigenpair experiments only), ordered by trial.
    pub records: Vec<TrialRecord>,
    /// All observations in canonical order.
    pub rows: Vec<Row>,
    pub aggregates: Vec<Aggregate>,
    /// Experiment-level rates and extremes, derived from `rows`.
    pub summary: BTreeMap<String, f64>,
    pub histogram: Option<Vec<HistBin>>,
    pub sweep: Option<Vec<SweepPoint>>,
    pub warnings: Vec<String>,
    pub checks: Vec<Check>,
}

impl CampaignResult {
    pub fn aggregate(&self, quantity: &str, index_i: Option<usize>, index_j: Option<usize>) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.quantity == quantity && a.index_i == index_i && a.index_j == index_j)
    }

    pub fn summary_value(&self, key: &str) -> Option<f64> {
        self.summary.get(key).copied()
    }

    /// Observed values of one quantity in trial order.
    pub fn observed(&self, quantity: &str, index_i: Option<usize>, index_j: Option<usize>) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.quantity == quantity && r.index_i == index_i && r.index_j == index_j)
            .map(|r| r.observed)
            .collect()
    }
}

/// Runs a validated campaign on `config.workers` threads, persisting to
/// `config.output_dir` when set.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignResult> {
    config.validate()?;
    if config.experiment == Experiment::Theory {
        return Err(Error::config("the theory experiment has no trials; use the theory module"));
    }
    if config.experiment == Experiment::Recover {
        let ties: Vec<f64> = config
            .model
            .thetas
            .windows(2)
            .filter(|w| same_theta(w[0], w[1]))
            .map(|w| w[0])
            .collect();
        if !ties.is_empty() {
            return Err(Error::TiedSignals(ties));
        }
    }
    let warnings = config.validate_regime()?;
    let tolerances = match &config.tolerance_file {
        Some(path) => Tolerances::load(path)?,
        None => Tolerances::default(),
    };

    let total = unit_count(config);
    let store = match &config.output_dir {
        Some(dir) => Some(Store::open(dir, config, &warnings, total)?),
        None => None,
    };
    let mut done: BTreeMap<u64, TrialOutcome> = match &store {
        Some(s) => s.completed()?,
        None => BTreeMap::new(),
    };
    let todo: Vec<u64> = (0..total).filter(|u| !done.contains_key(u)).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    let abort = AtomicBool::new(false);
    let results: Vec<(u64, Option<Result<TrialOutcome>>)> = pool.install(|| {
        todo.par_iter()
            .map(|&unit| {
                if abort.load(Ordering::Relaxed) {
                    return (unit, None);
                }
                let res = execute_unit(config, unit).and_then(|outcome| {
                    if let Some(s) = &store {
                        s.append(&outcome)?;
                    }
                    Ok(outcome)
                });
                if res.is_err() {
                    abort.store(true, Ordering::Relaxed);
                }
                (unit, Some(res))
            })
            .collect()
    });

    let mut failure = None;
    for (unit, res) in results {
        match res {
            Some(Ok(outcome)) => {
                done.insert(unit, outcome);
            }
            Some(Err(e)) if failure.is_none() => failure = Some((unit, e)),
            _ => {}
        }
    }
    if let Some((unit, e)) = failure {
        let err = Error::Trial {
            trial: unit as usize,
            source: Box::new(e),
        };
        if let Some(s) = &store {
            s.fail(config, &warnings, total, done.len() as u64, &err.to_string())?;
        }
        return Err(err);
    }

    let result = finalize(config, done.into_values().collect(), warnings, &tolerances);
    if let Some(s) = &store {
        s.finish(&result, total)?;
    }
    Ok(result)
}

fn finalize(
    config: &CampaignConfig,
    outcomes: Vec<TrialOutcome>,
    warnings: Vec<String>,
    tolerances: &Tolerances,
) -> CampaignResult {
    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut spectra = Vec::new();
    for o in outcomes {
        rows.extend(o.rows);
        records.extend(o.record);
        spectra.extend(o.spectrum);
    }
    let aggregates = aggregate_rows(&rows);
    let summary = summarize(config, &rows);
    let histogram = (config.experiment == Experiment::Esd).then(|| build_histogram(&spectra, config.bins));
    let sweep = (config.experiment == Experiment::Sweep).then(|| build_sweep(config, &aggregates));
    let mut result = CampaignResult {
        schema_version: SCHEMA_VERSION,
        config_hash: config.config_hash(),
        config: config.clone(),
        records,
        rows,
        aggregates,
        summary,
        histogram,
        sweep,
        warnings,
        checks: Vec::new(),
    };
    result.checks = evaluate_checks(&result, tolerances);
    result
}

fn values<'a>(rows: &'a [Row], quantity: &'a str) -> impl Iterator<Item = &'a Row> + 'a {
    rows.iter().filter(move |r| r.quantity == quantity)
}

/// Experiment-level statistics; a pure function of the rows so it can be
/// recomputed from the CSV.
pub fn summarize(config: &CampaignConfig, rows: &[Row]) -> BTreeMap<String, f64> {
    let mut s = BTreeMap::new();
    let obs = |q: &str| values(rows, q).map(|r| r.observed).collect::<Vec<_>>();
    let max = |xs: &[f64]| xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    match config.experiment {
        Experiment::Detect => {
            let type_i = mean(&obs("null_detected"));
            let planted = mean(&obs("planted_detected"));
            s.insert("type_i_rate".into(), type_i);
            s.insert("planted_detection_rate".into(), planted);
            s.insert("type_ii_rate".into(), 1.0 - planted);
            s.insert("error_rate".into(), type_i + 1.0 - planted);
        }
        Experiment::Esd => {
            let ks = obs("ks_distance");
            if !ks.is_empty() {
                s.insert("ks_distance_max".into(), max(&ks));
            }
            let rel: Vec<f64> = values(rows, "interval_count")
                .map(|r| (r.observed - r.predicted.unwrap_or(0.0)).abs() / r.predicted.unwrap_or(1.0))
                .collect();
            s.insert("interval_count_rel_dev_max".into(), max(&rel));
            let miss: Vec<f64> = values(rows, "outliers_above")
                .map(|r| r.deviation.unwrap_or(0.0).abs())
                .collect();
            s.insert("outlier_count_mismatch_max".into(), max(&miss));
        }
        Experiment::LocalLaw => {
            s.insert("max_deviation".into(), max(&obs("max_deviation")));
        }
        Experiment::Support => {
            let v: Vec<&Row> = values(rows, "support_violation").collect();
            if !v.is_empty() {
                s.insert("violation_fraction".into(), mean(&v.iter().map(|r| r.observed).collect::<Vec<_>>()));
                s.insert(
                    "violation_bound".into(),
                    mean(&v.iter().map(|r| r.predicted.unwrap_or(0.0)).collect::<Vec<_>>()),
                );
            }
        }
        Experiment::Norm => {
            s.insert("exceedance_fraction".into(), mean(&obs("norm_bound_exceeded")));
        }
        _ => {}
    }
    s
}

fn build_histogram(spectra: &[Vec<f64>], bins: usize) -> Vec<HistBin> {
    let all: Vec<f64> = spectra.iter().flatten().copied().collect();
    if all.is_empty() {
        return Vec::new();
    }
    let lo = all.iter().copied().fold(-2.5, f64::min);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 0.1;
    let counts = histogram(&all, lo, hi, bins);
    let width = (hi - lo) / bins as f64;
    counts
        .into_iter()
        .enumerate()
        .map(|(b, count)| {
            let left = lo + b as f64 * width;
            let right = if b + 1 == bins { hi } else { lo + (b + 1) as f64 * width };
            HistBin {
                bin_left: left,
                bin_right: right,
                count,
                semicircle_density: (semicircle_cdf(right) - semicircle_cdf(left)) / (right - left),
            }
        })
        .collect()
}

fn build_sweep(config: &CampaignConfig, aggregates: &[Aggregate]) -> Vec<SweepPoint> {
    let grid = config.theta_grid.as_deref().unwrap_or_default();
    let find = |q: &str, g: usize| aggregates.iter().find(|a| a.quantity == q && a.index_i == Some(g));
    grid.iter()
        .enumerate()
        .filter_map(|(g, &theta)| {
            let o = find("sweep_overlap_sq", g)?;
            let l = find("sweep_lambda1", g)?;
            Some(SweepPoint {
                theta,
                mean_overlap_sq: o.mean,
                std_overlap_sq: o.std,
                predicted_overlap_sq: bbp_overlap(theta).ok()?,
                mean_lambda1: l.mean,
                predicted_lambda1: bbp_eigenvalue(theta).ok()?,
                trials: o.count,
            })
        })
        .collect()
}

/// Compares a campaign against tolerance ceilings.
pub fn evaluate_checks(result: &CampaignResult, tol: &Tolerances) -> Vec<Check> {
    let cfg = &result.config;
    let thetas = &cfg.model.thetas;
    let mut checks = Vec::new();
    let summary = |k: &str| result.summary_value(k);
    match cfg.experiment {
        Experiment::Simulate | Experiment::Recover | Experiment::Subspace => {
            let k = cfg.solver.k;
            let blocks = theta_blocks(thetas);
            let block_of = |i: usize| blocks.iter().position(|&(s, e)| (s..e).contains(&i));
            for (i, &theta) in thetas.iter().enumerate().take(k) {
                let ev = result.aggregate("eigenvalue", Some(i), None);
                let ov = result.aggregate("overlap_sq", Some(i), Some(i));
                if theta > 1.0 {
                    if let Some(a) = ev {
                        checks.push(Check::new(
                            format!("eigenvalue[{i}] mean |deviation|"),
                            a.mean_abs_deviation.unwrap_or(f64::NAN),
                            tol.outlier_location,
                        ));
                    }
                    let subspace = cfg.experiment == Experiment::Subspace;
                    if subspace {
                        if let Some(a) = result.aggregate("block_overlap_sq", Some(i), Some(blocks[block_of(i).unwrap()].0)) {
                            checks.push(Check::new(
                                format!("block_overlap_sq[{i}] |mean - prediction|"),
                                (a.mean - a.mean_predicted.unwrap_or(f64::NAN)).abs(),
                                tol.overlap,
                            ));
                        }
                    } else if let Some(a) = ov {
                        checks.push(Check::new(
                            format!("overlap_sq[{i},{i}] |mean - prediction|"),
                            (a.mean - a.mean_predicted.unwrap_or(f64::NAN)).abs(),
                            tol.overlap,
                        ));
                    }
                    for j in 0..thetas.len() {
                        if j == i || (subspace && block_of(i) == block_of(j)) {
                            continue;
                        }
                        if let Some(a) = result.aggregate("overlap_sq", Some(i), Some(j)) {
                            checks.push(Check::new(format!("overlap_sq[{i},{j}] mean"), a.mean, tol.cross_overlap));
                        }
                    }
                } else {
                    if let Some(a) = ov {
                        checks.push(Check::new(format!("overlap_sq[{i},{i}] mean (subcritical)"), a.mean, tol.subcritical_overlap));
                    }
                    if i == 0 {
                        if let Some(a) = ev {
                            checks.push(Check::new("eigenvalue[0] mean (subcritical)", a.mean, tol.subcritical_eigenvalue));
                        }
                    }
                }
            }
        }
        Experiment::Detect => {
            let detectable = thetas.first().is_some_and(|&t| bbp_eigenvalue(t).is_ok_and(|l| l > 2.0 + cfg.epsilon));
            if detectable {
                checks.push(Check::new("error_rate", summary("error_rate").unwrap_or(f64::NAN), tol.detection_error));
            } else {
                checks.push(Check::new(
                    "planted_detection_rate (subcritical)",
                    summary("planted_detection_rate").unwrap_or(f64::NAN),
                    tol.subcritical_detection,
                ));
            }
        }
        Experiment::Esd => {
            if let Some(ks) = summary("ks_distance_max") {
                checks.push(Check::new("ks_distance_max", ks, tol.ks_distance));
            }
            checks.push(Check::new(
                "interval_count relative deviation",
                summary("interval_count_rel_dev_max").unwrap_or(f64::NAN),
                tol.interval_count_relative,
            ));
            checks.push(Check::new(
                "outlier count mismatch",
                summary("outlier_count_mismatch_max").unwrap_or(f64::NAN),
                0.0,
            ));
        }
        Experiment::LocalLaw => {
            checks.push(Check::new("max_deviation", summary("max_deviation").unwrap_or(f64::NAN), tol.local_law));
        }
        Experiment::Support => {
            if let Some(v) = summary("violation_fraction") {
                checks.push(Check::new("violation_fraction", v, tol.support_violation));
            }
        }
        Experiment::Norm => {
            checks.push(Check::new(
                "exceedance_fraction",
                summary("exceedance_fraction").unwrap_or(f64::NAN),
                tol.norm_exceedance,
            ));
        }
        Experiment::Sweep | Experiment::Theory => {}
    }
    checks
}

fn library_config(params: &ModelParams, experiment: Experiment, trials: usize) -> CampaignConfig {
    CampaignConfig::new(params.clone(), experiment).with_trials(trials)
}

/// One trial of the spiked model with the top `k` eigenpairs.
pub fn run_trial(params: &ModelParams, k: usize, trial: u64) -> Result<TrialRecord> {
    params.validate()?;
    let solver = SolverConfig {
        k,
        ..SolverConfig::for_model(params)
    };
    if k == 0 || k > params.n {
        return Err(Error::config(format!("k = {k} must lie in [1, n = {}]", params.n)));
    }
    run_trial_with(params, &solver, trial, false).map_err(|e| Error::Trial {
        trial: trial as usize,
        source: Box::new(e),
    })
}

/// Paired planted/null trials classified by `λ₁ > 2 + ε`.
pub fn detection_experiment(params: &ModelParams, epsilon: f64, trials: usize) -> Result<CampaignResult> {
    let mut cfg = library_config(params, Experiment::Detect, trials);
    cfg.epsilon = epsilon;
    run_campaign(&cfg)
}

/// Squared self- and cross-overlaps for distinct signal strengths.
pub fn recovery_experiment(params: &ModelParams, trials: usize) -> Result<CampaignResult> {
    run_campaign(&library_config(params, Experiment::Recover, trials))
}

/// Summed squared overlaps against each block of equal signal strengths.
pub fn subspace_recovery_experiment(params: &ModelParams, trials: usize) -> Result<CampaignResult> {
    run_campaign(&library_config(params, Experiment::Subspace, trials))
}

/// Full spectrum of one instance: histogram, KS distance to the semicircle
/// law on the bulk, outlier count and an interval count.
pub fn esd_experiment(params: &ModelParams, bins: usize) -> Result<CampaignResult> {
    let mut cfg = library_config(params, Experiment::Esd, 1);
    cfg.bins = bins;
    run_campaign(&cfg)
}

/// `max_i |R_ii(z) − m(z)|` over a random sample of diagonal resolvent entries.
pub fn local_law_experiment(params: &ModelParams, z: f64, sample_indices: usize) -> Result<CampaignResult> {
    let mut cfg = library_config(params, Experiment::LocalLaw, 1);
    cfg.z = z;
    cfg.indices = sample_indices;
    run_campaign(&cfg)
}

/// Fraction of (trial, spike) pairs whose support leaves `np ± log(np)√(np)`.
pub fn support_concentration_experiment(params: &ModelParams, trials: usize) -> Result<CampaignResult> {
    run_campaign(&library_config(params, Experiment::Support, trials))
}

/// `(1/np)‖V‖₂²` against `r` and the fraction of trials beyond the concentration bound.
pub fn spike_norm_experiment(params: &ModelParams, trials: usize) -> Result<CampaignResult> {
    run_campaign(&library_config(params, Experiment::Norm, trials))
}

/// Single-spike recovery at every grid value of θ.
pub fn theta_sweep(params: &ModelParams, theta_grid: &[f64], trials: usize) -> Result<CampaignResult> {
    let mut cfg = library_config(params, Experiment::Sweep, trials);
    cfg.theta_grid = Some(theta_grid.to_vec());
    run_campaign(&cfg)
}
