//! Simulation and theory toolkit for the doubly sparse spiked Wigner model
//!
//! `X = Σ_i θ_i/(n p_i) · v_i v_iᵀ + (1/√(nq)) · W⊙A`
//!
//! with sparse spikes (Bernoulli(p) supports) and sparse noise (Bernoulli(q) mask).

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
pub use linalg::{
    dense_eigs_jacobi, densify, lanczos_topk, resolvent_diag_entries, DenseSym, LanczosSettings, SpikedOperator,
    SymOperator, TopSpectrum,
};
pub use model::{
    default_spike_prior, sample_sparse_wigner, sample_spike_ensemble, ModelParams, Prior, SparseSymMatrix, Sparsity, SpikeEnsemble,
};
pub use rng::{derive_stream, Stream};
pub use config::{CampaignConfig, Experiment, SolverConfig, SCHEMA_VERSION};
pub use experiments::{
    detection_experiment, esd_experiment, load_campaign, local_law_experiment, recovery_experiment, run_campaign,
    run_trial, spike_norm_experiment, subspace_recovery_experiment, support_concentration_experiment, theta_sweep,
    CampaignResult, Row, Tolerances, TrialRecord,
};
