//! Pilot-calibrated ceilings for quantities whose limiting constants are not
//! pinned down by the theory. Kept in a versioned JSON file rather than code.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TOLERANCE_VERSION: u32 = 1;

const DEFAULT_FILE: &str = include_str!("../../data/tolerances.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Mean `|λ_i − (θ_i + 1/θ_i)|` for supercritical spikes.
    pub outlier_location: f64,
    /// `|mean overlap² − (1 − 1/θ²)|`.
    pub overlap: f64,
    /// Mean squared overlap between an outlier eigenvector and another spike.
    pub cross_overlap: f64,
    /// Type I + type II error rate for supercritical detection.
    pub detection_error: f64,
    /// Fraction of subcritical planted trials flagged as planted.
    pub subcritical_detection: f64,
    pub subcritical_overlap: f64,
    /// Ceiling on the mean top eigenvalue below the transition.
    pub subcritical_eigenvalue: f64,
    pub ks_distance: f64,
    /// `|N_I − n∫_I f_sc| / (n∫_I f_sc)`.
    pub interval_count_relative: f64,
    /// `max_i |R_ii(z) − m(z)|`.
    pub local_law: f64,
    pub support_violation: f64,
    pub norm_exceedance: f64,
    pub solver_oracle: f64,
    pub rate_function_oracle: f64,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct TolFile {
    version: u32,
    tolerances: Tolerances,
}

impl Tolerances {
    pub fn parse(s: &str) -> Result<Self> {
        let f: TolFile = serde_json::from_str(s)?;
        if f.version != TOLERANCE_VERSION {
            return Err(Error::config(format!(
                "tolerance file version {} (expected {TOLERANCE_VERSION})",
                f.version
            )));
        }
        Ok(f.tolerances)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::parse(DEFAULT_FILE).expect("bundled tolerance file is valid")
    }
}
