//! One unit of work per experiment: sample, solve, compare with predictions.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::stats::ks_semicircle;
use super::Row;
use crate::config::{CampaignConfig, Experiment, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg::{
    count_eigs_in_interval, densify, dot, lanczos_topk, resolvent_diag_entries, tridiagonalize_householder,
    SpikedOperator, TopSpectrum,
};
use crate::model::{sample_sparse_wigner, sample_spike_ensemble, ModelParams, SpikeEnsemble};
use crate::rng::derive_stream;
use crate::theory::{bbp_eigenvalue, bbp_overlap, semicircle_cdf, stieltjes_m, Prediction};

/// Resolvent solves run to this relative residual.
const RESOLVENT_TOL: f64 = 1e-10;
/// Interval used for the eigenvalue-counting diagnostic.
pub const COUNT_INTERVAL: (f64, f64) = (-0.5, 0.5);

/// Observed minus predicted for one spike; `None` when fewer than `r`
/// eigenpairs were requested.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub eigenvalue: Option<f64>,
    pub overlap: Option<f64>,
}

/// One Monte Carlo draw of the spiked model and its top-k spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub params: ModelParams,
    pub top_eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `overlaps[j][i] = ⟨u_i, v_j/√(n p_j)⟩`.
    pub overlaps: Vec<Vec<f64>>,
    pub overlaps_sq: Vec<Vec<f64>>,
    /// `unit_overlaps[j][i] = ⟨u_i, v_j/‖v_j‖⟩`.
    pub unit_overlaps: Vec<Vec<f64>>,
    pub unit_overlaps_sq: Vec<Vec<f64>>,
    pub predictions: Vec<Prediction>,
    /// Aligned with `predictions`.
    pub deviations: Vec<Deviation>,
    pub support_sizes: Vec<usize>,
    pub wall_time: f64,
    pub solver_iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvectors: Option<Vec<Vec<f64>>>,
}

pub(crate) fn sample_instance(params: &ModelParams, trial: u64) -> Result<SpikedOperator> {
    let noise = sample_sparse_wigner(params, &mut derive_stream(params.seed, "wigner", trial))?;
    let spikes = sample_spikes(params, trial)?;
    SpikedOperator::new(params, noise, spikes)
}

fn sample_spikes(params: &ModelParams, trial: u64) -> Result<SpikeEnsemble> {
    sample_spike_ensemble(params, &mut derive_stream(params.seed, "spike", trial))
}

fn solve(op: &SpikedOperator, solver: &SolverConfig, k: usize, seed: u64, label: &str, trial: u64) -> Result<TopSpectrum> {
    lanczos_topk(op, k, solver.tol, solver.max_iter, &mut derive_stream(seed, label, trial))
}

/// Samples one instance, extracts its top `solver.k` eigenpairs and compares
/// them with the limiting predictions.
pub fn run_trial_with(params: &ModelParams, solver: &SolverConfig, trial: u64, store_vectors: bool) -> Result<TrialRecord> {
    let start = Instant::now();
    let op = sample_instance(params, trial)?;
    let top = solve(&op, solver, solver.k, params.seed, "lanczos", trial)?;
    let spikes = &op.spikes;
    let r = spikes.r();

    let mut overlaps = Vec::with_capacity(r);
    let mut unit_overlaps = Vec::with_capacity(r);
    for j in 0..r {
        let scale = params.np_of(j).sqrt();
        let norm = spikes.norm_sq(j).sqrt();
        let raw: Vec<f64> = top.eigenvectors.iter().map(|u| spikes.dot(j, u)).collect();
        overlaps.push(raw.iter().map(|x| x / scale).collect::<Vec<_>>());
        unit_overlaps.push(
            raw.iter()
                .map(|x| if norm > 0.0 { x / norm } else { 0.0 })
                .collect::<Vec<_>>(),
        );
    }
    let square = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> { m.iter().map(|row| row.iter().map(|x| x * x).collect()).collect() };

    let predictions = params
        .thetas
        .iter()
        .map(|&t| Prediction::for_theta(t))
        .collect::<Result<Vec<_>>>()?;
    let overlaps_sq = square(&overlaps);
    let deviations = predictions
        .iter()
        .enumerate()
        .map(|(i, p)| Deviation {
            eigenvalue: top.eigenvalues.get(i).map(|l| l - p.lambda),
            overlap: overlaps_sq[i].get(i).map(|o| o - p.overlap),
        })
        .collect();

    Ok(TrialRecord {
        trial_index: trial,
        params: params.clone(),
        top_eigenvalues: top.eigenvalues.clone(),
        residuals: top.residuals.clone(),
        unit_overlaps_sq: square(&unit_overlaps),
        overlaps,
        overlaps_sq,
        unit_overlaps,
        predictions,
        deviations,
        support_sizes: spikes.support_sizes.clone(),
        wall_time: start.elapsed().as_secs_f64(),
        solver_iterations: top.iterations,
        eigenvectors: store_vectors.then(|| top.eigenvectors.clone()),
    })
}

/// Prediction for the `i`-th largest eigenvalue: the outlier location for a
/// spike, the bulk edge otherwise.
fn eigenvalue_prediction(thetas: &[f64], i: usize) -> Result<f64> {
    match thetas.get(i) {
        Some(&t) => bbp_eigenvalue(t),
        None => Ok(2.0),
    }
}

pub(crate) fn record_rows(rec: &TrialRecord) -> Result<Vec<Row>> {
    let t = rec.trial_index;
    let thetas = &rec.params.thetas;
    let mut rows = Vec::new();
    for (i, &l) in rec.top_eigenvalues.iter().enumerate() {
        rows.push(Row::new(t, "eigenvalue", Some(i), None, l, Some(eigenvalue_prediction(thetas, i)?)));
    }
    for (j, row) in rec.overlaps.iter().enumerate() {
        for (i, &o) in row.iter().enumerate() {
            rows.push(Row::new(t, "overlap", Some(i), Some(j), o, None));
        }
    }
    for (j, row) in rec.overlaps_sq.iter().enumerate() {
        let pred = bbp_overlap(thetas[j])?;
        for (i, &o) in row.iter().enumerate() {
            rows.push(Row::new(t, "overlap_sq", Some(i), Some(j), o, Some(if i == j { pred } else { 0.0 })));
        }
    }
    for (j, row) in rec.unit_overlaps_sq.iter().enumerate() {
        for (i, &o) in row.iter().enumerate() {
            rows.push(Row::new(t, "unit_overlap_sq", Some(i), Some(j), o, None));
        }
    }
    for (j, &s) in rec.support_sizes.iter().enumerate() {
        rows.push(Row::new(t, "support_size", Some(j), None, s as f64, Some(rec.params.np_of(j))));
    }
    Ok(rows)
}

/// Contiguous runs of equal signal strengths, as half-open index ranges.
pub fn theta_blocks(thetas: &[f64]) -> Vec<(usize, usize)> {
    let mut blocks = Vec::new();
    let mut start = 0;
    for i in 1..=thetas.len() {
        if i == thetas.len() || !same_theta(thetas[i], thetas[start]) {
            blocks.push((start, i));
            start = i;
        }
    }
    blocks
}

pub(crate) fn same_theta(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

fn subspace_rows(rec: &TrialRecord) -> Result<Vec<Row>> {
    let t = rec.trial_index;
    let k = rec.top_eigenvalues.len();
    let mut rows = Vec::new();
    for (s, e) in theta_blocks(&rec.params.thetas) {
        let pred = bbp_overlap(rec.params.thetas[s])?;
        for i in s..e.min(k) {
            let sum: f64 = (s..e).map(|l| rec.overlaps_sq[l][i]).sum();
            rows.push(Row::new(t, "block_overlap_sq", Some(i), Some(s), sum, Some(pred)));
            for j in (0..rec.overlaps_sq.len()).filter(|j| !(s..e).contains(j)) {
                rows.push(Row::new(t, "out_of_block_overlap_sq", Some(i), Some(j), rec.overlaps_sq[j][i], Some(0.0)));
            }
        }
    }
    Ok(rows)
}

/// Result of one unit of a campaign, as persisted for resumption.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub unit: u64,
    pub rows: Vec<Row>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<TrialRecord>,
    /// Full ascending spectrum (spectral-density experiment only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<Vec<f64>>,
}

impl TrialOutcome {
    fn rows(unit: u64, rows: Vec<Row>) -> Self {
        TrialOutcome {
            unit,
            rows,
            record: None,
            spectrum: None,
        }
    }
}

/// Number of independent work units in a campaign.
pub(crate) fn unit_count(cfg: &CampaignConfig) -> u64 {
    let trials = cfg.trials as u64;
    match cfg.experiment {
        Experiment::Sweep => trials * cfg.theta_grid.as_ref().map_or(0, |g| g.len() as u64),
        Experiment::Theory => 0,
        _ => trials,
    }
}

pub(crate) fn execute_unit(cfg: &CampaignConfig, unit: u64) -> Result<TrialOutcome> {
    let params = &cfg.model;
    match cfg.experiment {
        Experiment::Simulate | Experiment::Recover | Experiment::Subspace => {
            let rec = run_trial_with(params, &cfg.solver, unit, cfg.store_vectors)?;
            let mut rows = record_rows(&rec)?;
            if cfg.experiment == Experiment::Subspace {
                rows.extend(subspace_rows(&rec)?);
            }
            Ok(TrialOutcome {
                unit,
                rows,
                record: Some(rec),
                spectrum: None,
            })
        }
        Experiment::Sweep => sweep_unit(cfg, unit),
        Experiment::Detect => detect_unit(cfg, unit),
        Experiment::Esd => esd_unit(cfg, unit),
        Experiment::LocalLaw => local_law_unit(cfg, unit),
        Experiment::Support => support_unit(cfg, unit),
        Experiment::Norm => norm_unit(cfg, unit),
        Experiment::Theory => Err(Error::config("the theory experiment has no trials")),
    }
}

fn sweep_unit(cfg: &CampaignConfig, unit: u64) -> Result<TrialOutcome> {
    let grid = cfg.theta_grid.as_ref().expect("validated");
    let trials = cfg.trials as u64;
    let (g, t) = ((unit / trials) as usize, unit % trials);
    let theta = grid[g];
    // Common random numbers: trial t uses the same noise and spike draws at every grid point.
    let params = ModelParams {
        r: 1,
        thetas: vec![theta],
        ..cfg.model.clone()
    };
    let solver = SolverConfig {
        k: cfg.solver.k.max(1),
        ..cfg.solver.clone()
    };
    let rec = run_trial_with(&params, &solver, t, cfg.store_vectors)?;
    let rows = vec![
        Row::new(t, "sweep_overlap_sq", Some(g), None, rec.overlaps_sq[0][0], Some(bbp_overlap(theta)?)),
        Row::new(t, "sweep_unit_overlap_sq", Some(g), None, rec.unit_overlaps_sq[0][0], None),
        Row::new(t, "sweep_lambda1", Some(g), None, rec.top_eigenvalues[0], Some(bbp_eigenvalue(theta)?)),
    ];
    Ok(TrialOutcome {
        unit,
        rows,
        record: Some(rec),
        spectrum: None,
    })
}

/// Paired trial: the null instance is the planted one with the spikes removed.
fn detect_unit(cfg: &CampaignConfig, t: u64) -> Result<TrialOutcome> {
    let params = &cfg.model;
    let planted = sample_instance(params, t)?;
    let null = SpikedOperator::noise_only(planted.noise.clone(), params.q);
    let threshold = 2.0 + cfg.epsilon;
    let l_null = solve(&null, &cfg.solver, 1, params.seed, "lanczos-null", t)?.eigenvalues[0];
    let l_planted = solve(&planted, &cfg.solver, 1, params.seed, "lanczos", t)?.eigenvalues[0];
    let predicted = eigenvalue_prediction(&params.thetas, 0)?;
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let rows = vec![
        Row::new(t, "null_lambda1", None, None, l_null, Some(2.0)),
        Row::new(t, "planted_lambda1", None, None, l_planted, Some(predicted)),
        Row::new(t, "null_detected", None, None, flag(l_null > threshold), Some(0.0)),
        Row::new(t, "planted_detected", None, None, flag(l_planted > threshold), Some(flag(predicted > threshold))),
    ];
    Ok(TrialOutcome::rows(t, rows))
}

fn esd_unit(cfg: &CampaignConfig, t: u64) -> Result<TrialOutcome> {
    let params = &cfg.model;
    let op = sample_instance(params, t)?;
    let tri = tridiagonalize_householder(&densify(&op)?)?;
    let spectrum = tri.eigenvalues();
    let n = spectrum.len();
    let threshold = 2.0 + cfg.epsilon;
    let mut rows = Vec::new();
    for i in 0..cfg.solver.k.min(n) {
        let l = spectrum[n - 1 - i];
        rows.push(Row::new(t, "eigenvalue", Some(i), None, l, Some(eigenvalue_prediction(&params.thetas, i)?)));
    }
    let above = count_eigs_in_interval(&tri.diag, &tri.off, threshold, f64::MAX);
    let expected_outliers = params
        .thetas
        .iter()
        .map(|&th| bbp_eigenvalue(th))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|&l| l > threshold)
        .count();
    rows.push(Row::new(t, "outliers_above", None, None, above as f64, Some(expected_outliers as f64)));
    let bulk = &spectrum[..n - params.r.min(n)];
    if !bulk.is_empty() {
        rows.push(Row::new(t, "ks_distance", None, None, ks_semicircle(bulk), Some(0.0)));
    }
    let (a, b) = COUNT_INTERVAL;
    let count = count_eigs_in_interval(&tri.diag, &tri.off, a, b);
    let expected = n as f64 * (semicircle_cdf(b) - semicircle_cdf(a));
    rows.push(Row::new(t, "interval_count", None, None, count as f64, Some(expected)));
    Ok(TrialOutcome {
        unit: t,
        rows,
        record: None,
        spectrum: Some(spectrum),
    })
}

fn local_law_unit(cfg: &CampaignConfig, t: u64) -> Result<TrialOutcome> {
    let params = &cfg.model;
    let noise = sample_sparse_wigner(params, &mut derive_stream(params.seed, "wigner", t))?;
    let op = SpikedOperator::noise_only(noise, params.q);
    let mut rng = derive_stream(params.seed, "indices", t);
    let mut idx = rand::seq::index::sample(&mut rng, params.n, cfg.indices).into_vec();
    idx.sort_unstable();
    let entries = resolvent_diag_entries(&op, cfg.z, &idx, RESOLVENT_TOL)?;
    let m = stieltjes_m(cfg.z)?;
    let mut rows: Vec<Row> = idx
        .iter()
        .zip(&entries)
        .map(|(&i, &r)| Row::new(t, "resolvent_diag", Some(i), None, r, Some(m)))
        .collect();
    let max_dev = entries.iter().map(|r| (r - m).abs()).fold(0.0, f64::max);
    rows.push(Row::new(t, "max_deviation", None, None, max_dev, None));
    Ok(TrialOutcome::rows(t, rows))
}

/// Half-width `log(np)·√(np)` of the support-size concentration window.
pub fn support_window(np: f64) -> f64 {
    np.ln() * np.sqrt()
}

fn support_unit(cfg: &CampaignConfig, t: u64) -> Result<TrialOutcome> {
    let params = &cfg.model;
    let spikes = sample_spikes(params, t)?;
    let mut rows = Vec::new();
    for (j, &s) in spikes.support_sizes.iter().enumerate() {
        let np = params.np_of(j);
        let outside = (s as f64 - np).abs() > support_window(np);
        rows.push(Row::new(t, "support_size", Some(j), None, s as f64, Some(np)));
        rows.push(Row::new(t, "support_violation", Some(j), None, if outside { 1.0 } else { 0.0 }, Some(np.powi(-2))));
    }
    Ok(TrialOutcome::rows(t, rows))
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power iteration.
pub(crate) fn psd_top_eigenvalue(m: &[Vec<f64>]) -> f64 {
    let r = m.len();
    if r == 0 {
        return 0.0;
    }
    let mut x = vec![1.0 / (r as f64).sqrt(); r];
    let mut lambda = 0.0;
    for _ in 0..100_000 {
        let y: Vec<f64> = m.iter().map(|row| dot(row, &x)).collect();
        let ny = dot(&y, &y).sqrt();
        if ny == 0.0 {
            return 0.0;
        }
        let next = dot(&x, &y);
        x = y.iter().map(|v| v / ny).collect();
        if (next - lambda).abs() <= 1e-15 * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Bound on `(1/np)‖V‖₂² − r` with `γ = 1`: `r/(np·log np) + r·log(np)/√(np)`.
pub fn spike_norm_bound(np: f64, r: usize) -> f64 {
    let r = r as f64;
    r / (np * np.ln()) + r * np.ln() * np.sqrt() / np
}

/// `(1/np)‖V‖₂²`, with column `j` scaled by `1/√(n p_j)`.
pub(crate) fn scaled_spike_norm(params: &ModelParams, spikes: &SpikeEnsemble) -> f64 {
    let gram = spikes.gram();
    let scaled: Vec<Vec<f64>> = gram
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, g)| g / (params.np_of(i) * params.np_of(j)).sqrt())
                .collect()
        })
        .collect();
    psd_top_eigenvalue(&scaled)
}

fn norm_unit(cfg: &CampaignConfig, t: u64) -> Result<TrialOutcome> {
    let params = &cfg.model;
    let spikes = sample_spikes(params, t)?;
    let value = scaled_spike_norm(params, &spikes);
    let r = params.r;
    let exceeded = r > 0 && value - r as f64 > spike_norm_bound(params.np_eff(), r);
    let rows = vec![
        Row::new(t, "spike_norm", None, None, value, Some(r as f64)),
        Row::new(t, "norm_bound_exceeded", None, None, if exceeded { 1.0 } else { 0.0 }, None),
    ];
    Ok(TrialOutcome::rows(t, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Prior;

    #[test]
    fn blocks_of_equal_thetas() {
        assert_eq!(theta_blocks(&[3.0, 3.0, 2.0]), vec![(0, 2), (2, 3)]);
        assert_eq!(theta_blocks(&[5.0, 4.0]), vec![(0, 1), (1, 2)]);
        assert!(theta_blocks(&[]).is_empty());
    }

    #[test]
    fn power_iteration_matches_two_by_two_formula() {
        let (a, b, d): (f64, f64, f64) = (3.0, 1.2, 2.0);
        let m = vec![vec![a, b], vec![b, d]];
        let exact = 0.5 * (a + d) + (0.25 * (a - d) * (a - d) + b * b).sqrt();
        assert!((psd_top_eigenvalue(&m) - exact).abs() < 1e-12);
        assert_eq!(psd_top_eigenvalue(&[]), 0.0);
    }

    #[test]
    fn dense_rademacher_spike_norm_is_one() {
        let params = ModelParams::new(300, 1.0, 0.1, vec![2.0]).with_priors(Prior::Rademacher, Prior::Gaussian);
        let spikes = sample_spikes(&params, 0).unwrap();
        assert_eq!(scaled_spike_norm(&params, &spikes), 1.0);
    }

    #[test]
    fn record_is_reproducible_apart_from_timing() {
        let params = ModelParams::new(300, 0.5, 0.2, vec![3.0]).with_seed(4);
        let solver = SolverConfig::for_model(&params);
        let mut a = run_trial_with(&params, &solver, 2, false).unwrap();
        let mut b = run_trial_with(&params, &solver, 2, false).unwrap();
        a.wall_time = 0.0;
        b.wall_time = 0.0;
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn null_trial_has_no_overlaps() {
        let params = ModelParams::new(200, 1.0, 0.3, vec![]);
        let rec = run_trial_with(&params, &SolverConfig::for_model(&params), 0, false).unwrap();
        assert!(rec.overlaps.is_empty() && rec.predictions.is_empty());
        assert_eq!(rec.top_eigenvalues.len(), 3);
    }

    #[test]
    fn unit_overlaps_bounded_by_one() {
        let params = ModelParams::new(400, 0.3, 0.3, vec![4.0, 2.5, 1.5]).with_seed(1);
        let solver = SolverConfig { k: 5, ..SolverConfig::for_model(&params) };
        let rec = run_trial_with(&params, &solver, 0, true).unwrap();
        assert_eq!(rec.top_eigenvalues.len(), 5);
        for row in &rec.unit_overlaps_sq {
            // u_1..u_k are orthonormal, so the squared coordinates of a unit vector sum to at most 1.
            assert!(row.iter().sum::<f64>() <= 1.0 + 1e-8);
        }
        // The two normalisations differ by the spike-dependent factor ‖v_j‖/√(np_j) only.
        for j in 0..3 {
            let ratio = rec.overlaps[j][0] / rec.unit_overlaps[j][0];
            for i in 1..5 {
                let r = rec.overlaps[j][i] / rec.unit_overlaps[j][i];
                assert!((r - ratio).abs() <= 1e-9 * ratio.abs(), "spike {j}: {r} vs {ratio}");
            }
        }
        assert_eq!(rec.eigenvectors.as_ref().unwrap().len(), 5);
    }
}
