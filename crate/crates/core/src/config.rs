//! Campaign configuration: a flat JSON object mixing model, solver and
//! experiment keys. Parsing reports every problem at once.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{DENSE_LIMIT, SPECTRUM_MARGIN};
use crate::model::{default_spike_prior, ModelParams, Prior, Sparsity};
use crate::theory::bbp_eigenvalue;

/// Bumped whenever the persisted CSV/manifest layout changes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Simulate,
    Detect,
    Recover,
    Subspace,
    Esd,
    LocalLaw,
    Support,
    Norm,
    Sweep,
    Theory,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::Simulate,
        Experiment::Detect,
        Experiment::Recover,
        Experiment::Subspace,
        Experiment::Esd,
        Experiment::LocalLaw,
        Experiment::Support,
        Experiment::Norm,
        Experiment::Sweep,
        Experiment::Theory,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::Detect => "detect",
            Experiment::Recover => "recover",
            Experiment::Subspace => "subspace",
            Experiment::Esd => "esd",
            Experiment::LocalLaw => "locallaw",
            Experiment::Support => "support",
            Experiment::Norm => "norm",
            Experiment::Sweep => "sweep",
            Experiment::Theory => "theory",
        }
    }

    /// Experiments whose trials solve for the top eigenpairs with Lanczos.
    pub fn uses_lanczos(self) -> bool {
        matches!(
            self,
            Experiment::Simulate | Experiment::Detect | Experiment::Recover | Experiment::Subspace | Experiment::Sweep
        )
    }
}

impl std::str::FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::config(format!("unknown experiment {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub k: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl SolverConfig {
    /// `k = max(r, 1) + 2`, capped at `n`.
    pub fn for_model(model: &ModelParams) -> Self {
        let defaults = crate::linalg::LanczosSettings::default();
        SolverConfig {
            k: (model.r.max(1) + 2).min(model.n.max(1)),
            tol: defaults.tol,
            max_iter: defaults.max_iter,
        }
    }
}

/// A fully resolved campaign.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CampaignConfig {
    #[serde(flatten)]
    pub model: ModelParams,
    #[serde(flatten)]
    pub solver: SolverConfig,
    pub experiment: Experiment,
    pub trials: usize,
    /// Detection margin: the test statistic is `λ₁ > 2 + ε`.
    pub epsilon: f64,
    pub theta_grid: Option<Vec<f64>>,
    pub output_dir: Option<PathBuf>,
    pub workers: usize,
    pub tolerance_file: Option<PathBuf>,
    pub store_vectors: bool,
    /// Histogram bins for the spectral-density experiment.
    pub bins: usize,
    /// Real evaluation point of the resolvent.
    pub z: f64,
    /// Number of sampled diagonal resolvent entries.
    pub indices: usize,
}

pub const DEFAULT_TRIALS: usize = 30;
pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_BINS: usize = 60;
pub const DEFAULT_Z: f64 = 3.0;
pub const DEFAULT_INDICES: usize = 50;

const KEYS: &[&str] = &[
    "n",
    "p",
    "q",
    "r",
    "thetas",
    "spike_prior",
    "wigner_prior",
    "seed",
    "k",
    "tol",
    "max_iter",
    "experiment",
    "trials",
    "epsilon",
    "theta_grid",
    "output_dir",
    "workers",
    "tolerance_file",
    "store_vectors",
    "bins",
    "z",
    "indices",
];

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl CampaignConfig {
    /// Defaults for everything except the model and experiment.
    pub fn new(model: ModelParams, experiment: Experiment) -> Self {
        CampaignConfig {
            solver: SolverConfig::for_model(&model),
            model,
            experiment,
            trials: DEFAULT_TRIALS,
            epsilon: DEFAULT_EPSILON,
            theta_grid: None,
            output_dir: None,
            workers: default_workers(),
            tolerance_file: None,
            store_vectors: false,
            bins: DEFAULT_BINS,
            z: DEFAULT_Z,
            indices: DEFAULT_INDICES,
        }
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_output(mut self, dir: impl Into<PathBuf>) -> Self {
        self.output_dir = Some(dir.into());
        self
    }

    /// Parses a flat JSON object, collecting unknown keys, type mismatches,
    /// missing fields and invariant violations into a single error.
    pub fn from_value(value: &Value) -> Result<Self> {
        let Some(map) = value.as_object() else {
            return Err(Error::config("configuration must be a JSON object"));
        };
        let mut problems = Vec::new();
        for key in map.keys() {
            if !KEYS.contains(&key.as_str()) {
                problems.push(format!("unknown key {key:?}"));
            }
        }

        let mut get = Fields { map, problems: &mut problems };
        let experiment: Option<Experiment> = get.field("experiment");
        let n: Option<usize> = get.field("n");
        let p: Option<Sparsity> = get.field("p");
        let q: Option<f64> = get.field("q");
        let r: Option<usize> = get.field("r");
        let thetas: Option<Vec<f64>> = get.field("thetas");
        let spike_prior: Option<Prior> = get.field("spike_prior");
        let wigner_prior: Option<Prior> = get.field("wigner_prior");
        let seed: Option<u64> = get.field("seed");
        let k: Option<usize> = get.field("k");
        let tol: Option<f64> = get.field("tol");
        let max_iter: Option<usize> = get.field("max_iter");
        let trials: Option<usize> = get.field("trials");
        let epsilon: Option<f64> = get.field("epsilon");
        let theta_grid: Option<Vec<f64>> = get.field("theta_grid");
        let output_dir: Option<PathBuf> = get.field("output_dir");
        let workers: Option<usize> = get.field("workers");
        let tolerance_file: Option<PathBuf> = get.field("tolerance_file");
        let store_vectors: Option<bool> = get.field("store_vectors");
        let bins: Option<usize> = get.field("bins");
        let z: Option<f64> = get.field("z");
        let indices: Option<usize> = get.field("indices");

        let missing = |problems: &mut Vec<String>, key: &str| {
            if !map.contains_key(key) {
                problems.push(format!("missing required field {key:?}"));
            }
        };
        missing(&mut problems, "experiment");
        let theory = experiment == Some(Experiment::Theory);
        let sweep = experiment == Some(Experiment::Sweep);
        if !theory {
            missing(&mut problems, "n");
            missing(&mut problems, "q");
        }
        if theory {
            missing(&mut problems, "thetas");
        }
        let thetas = thetas.unwrap_or_default();
        let r = r.unwrap_or(thetas.len());
        if !theory && (r > 0 || sweep) {
            missing(&mut problems, "p");
        }

        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }

        let model = ModelParams {
            n: n.unwrap_or(1),
            p: p.unwrap_or(Sparsity::Uniform(1.0)),
            q: q.unwrap_or(1.0),
            r,
            thetas,
            spike_prior: spike_prior.unwrap_or_else(default_spike_prior),
            wigner_prior: wigner_prior.unwrap_or_default(),
            seed: seed.unwrap_or(0),
        };
        let experiment = experiment.expect("checked above");
        let mut cfg = CampaignConfig::new(model, experiment);
        if let Some(k) = k {
            cfg.solver.k = k;
        }
        if let Some(tol) = tol {
            cfg.solver.tol = tol;
        }
        if let Some(m) = max_iter {
            cfg.solver.max_iter = m;
        }
        cfg.trials = trials.unwrap_or(cfg.trials);
        cfg.epsilon = epsilon.unwrap_or(cfg.epsilon);
        cfg.theta_grid = theta_grid;
        cfg.output_dir = output_dir;
        cfg.workers = workers.unwrap_or(cfg.workers);
        cfg.tolerance_file = tolerance_file;
        cfg.store_vectors = store_vectors.unwrap_or(false);
        cfg.bins = bins.unwrap_or(cfg.bins);
        cfg.z = z.unwrap_or(cfg.z);
        cfg.indices = indices.unwrap_or(cfg.indices);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(s)?;
        Self::from_value(&value)
    }

    /// Flat JSON form, the same shape `from_value` reads.
    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("configuration serializes")
    }

    /// Checks experiment-specific requirements on top of the model invariants.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let m = &self.model;
        if self.experiment == Experiment::Theory {
            if m.thetas.is_empty() {
                problems.push("theory needs at least one theta".into());
            }
            for (i, t) in m.thetas.iter().enumerate() {
                if !(*t > 0.0 && t.is_finite()) {
                    problems.push(format!("theta[{i}] = {t} must be positive"));
                }
            }
            return finish(problems);
        }
        if let Err(Error::Config(mut model_problems)) = m.validate() {
            problems.append(&mut model_problems);
        }
        if self.trials == 0 {
            problems.push("trials must be at least 1".into());
        }
        if self.workers == 0 {
            problems.push("workers must be at least 1".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            problems.push(format!("epsilon = {} must be positive", self.epsilon));
        }
        if self.experiment.uses_lanczos() {
            if self.solver.k == 0 || self.solver.k > m.n {
                problems.push(format!("k = {} must lie in [1, n = {}]", self.solver.k, m.n));
            }
            if !(self.solver.tol > 0.0) {
                problems.push(format!("tol = {} must be positive", self.solver.tol));
            }
            if self.solver.max_iter == 0 {
                problems.push("max_iter must be at least 1".into());
            }
        }
        match self.experiment {
            Experiment::Sweep => {
                match &self.theta_grid {
                    None => problems.push("sweep needs theta_grid".into()),
                    Some(g) if g.is_empty() => problems.push("theta_grid must not be empty".into()),
                    Some(g) => {
                        for (i, t) in g.iter().enumerate() {
                            if !(*t > 0.0 && t.is_finite()) {
                                problems.push(format!("theta_grid[{i}] = {t} must be positive"));
                            }
                        }
                    }
                }
                if m.r > 1 || m.p.is_per_spike() {
                    problems.push("sweep varies a single spike: use r <= 1 with a scalar p".into());
                }
            }
            Experiment::Esd => {
                if m.n > DENSE_LIMIT {
                    problems.push(format!("esd needs the dense path: n = {} exceeds {DENSE_LIMIT}", m.n));
                }
                if self.bins == 0 {
                    problems.push("bins must be at least 1".into());
                }
            }
            Experiment::LocalLaw => {
                if m.r != 0 {
                    problems.push("locallaw is defined for the noise matrix: set r = 0".into());
                }
                if m.q <= 0.0 {
                    problems.push("locallaw needs q > 0".into());
                }
                if !(self.z.abs() > 2.0 + SPECTRUM_MARGIN && self.z.is_finite()) {
                    problems.push(format!("z = {} must satisfy |z| > {}", self.z, 2.0 + SPECTRUM_MARGIN));
                }
                if self.indices == 0 || self.indices > m.n {
                    problems.push(format!("indices = {} must lie in [1, n = {}]", self.indices, m.n));
                }
            }
            Experiment::Support | Experiment::Norm if m.validate().is_ok() => {
                for i in 0..m.r {
                    if m.np_of(i) <= std::f64::consts::E {
                        problems.push(format!("np[{i}] = {} must exceed e", m.np_of(i)));
                    }
                }
            }
            _ => {}
        }
        finish(problems)
    }

    /// SHA-256 over the canonical JSON of everything that determines results
    /// (execution details like workers and paths are excluded).
    pub fn config_hash(&self) -> String {
        let mut v = self.to_value();
        if let Value::Object(map) = &mut v {
            map.remove("output_dir");
            map.remove("workers");
            map.remove("tolerance_file");
        }
        let canonical = serde_json::to_string(&v).expect("value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Non-fatal regime warnings; fails only when the detection threshold
    /// cannot separate a supercritical outlier from the bulk edge.
    pub fn validate_regime(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if self.experiment == Experiment::Theory {
            return Ok(warnings);
        }
        let m = &self.model;
        if m.n >= 2 && m.q > 0.0 {
            let tau = m.tau();
            if tau <= 3.0 {
                warnings.push(format!(
                    "tau = qn/log n = {tau:.4} <= 3: noise sparsity outside the regime the limit theorems address"
                ));
            }
        }
        if m.r > 0 || self.experiment == Experiment::Sweep {
            let np = m.np_eff();
            if np <= 20.0 {
                warnings.push(format!("np = {np:.4} <= 20: spike support too small for the asymptotic regime"));
            }
        }
        if self.experiment == Experiment::Detect {
            let threshold = 2.0 + self.epsilon;
            let edge = m
                .thetas
                .iter()
                .filter(|t| **t > 1.0)
                .map(|t| bbp_eigenvalue(*t))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            if edge.is_finite() && threshold >= edge {
                return Err(Error::config(format!(
                    "detection threshold 2 + epsilon = {threshold} is not below the smallest predicted outlier {edge}; decrease epsilon"
                )));
            }
        }
        Ok(warnings)
    }
}

fn finish(problems: Vec<String>) -> Result<()> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(problems))
    }
}

struct Fields<'a> {
    map: &'a Map<String, Value>,
    problems: &'a mut Vec<String>,
}

impl Fields<'_> {
    fn field<T: DeserializeOwned>(&mut self, key: &str) -> Option<T> {
        let v = self.map.get(key)?;
        if v.is_null() {
            return None;
        }
        match T::deserialize(v) {
            Ok(t) => Some(t),
            Err(e) => {
                self.problems.push(format!("{key}: {e} (got {v})"));
                None
            }
        }
    }
}

/// Overlays `overrides` onto `base` key by key (flags over file values).
pub fn merge_overrides(base: &mut Map<String, Value>, overrides: BTreeMap<String, Value>) {
    for (k, v) in overrides {
        base.insert(k, v);
    }
}
