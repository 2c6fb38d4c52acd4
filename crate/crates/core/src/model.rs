//! Random objects of the doubly sparse spiked Wigner model.
//!
//! A spike is `v = ṽ ⊙ b` with `b` i.i.d. Bernoulli(p) and `ṽ` i.i.d. from a
//! centred unit-variance prior. The noise is `W ⊙ A` with `A` a symmetric
//! Bernoulli(q) mask, off-diagonal `W` entries of variance 1 and diagonal
//! entries of variance 2. Values are stored unscaled; the operator applies
//! `1/(np)` and `1/√(nq)`.

use rand::Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Centred, unit-variance entry distribution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prior {
    #[default]
    #[serde(alias = "Gaussian")]
    Gaussian,
    #[serde(alias = "Rademacher")]
    Rademacher,
}

impl Prior {
    pub fn sample(self, rng: &mut Stream) -> f64 {
        match self {
            Prior::Gaussian => rng.sample(StandardNormal),
            Prior::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

/// Spike sparsity: one `p` for every spike, or one `p_i` per spike.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sparsity {
    Uniform(f64),
    PerSpike(Vec<f64>),
}

impl Sparsity {
    pub fn is_per_spike(&self) -> bool {
        matches!(self, Sparsity::PerSpike(_))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub n: usize,
    pub p: Sparsity,
    pub q: f64,
    pub r: usize,
    pub thetas: Vec<f64>,
    #[serde(default = "default_spike_prior")]
    pub spike_prior: Prior,
    #[serde(default)]
    pub wigner_prior: Prior,
    #[serde(default)]
    pub seed: u64,
}

/// Sparse Rademacher spikes: the usual convention in the sparse-PCA literature.
pub fn default_spike_prior() -> Prior {
    Prior::Rademacher
}

impl ModelParams {
    /// Single-sparsity parameters, Rademacher spikes, Gaussian noise, seed 0.
    pub fn new(n: usize, p: f64, q: f64, thetas: Vec<f64>) -> Self {
        ModelParams {
            n,
            p: Sparsity::Uniform(p),
            q,
            r: thetas.len(),
            thetas,
            spike_prior: default_spike_prior(),
            wigner_prior: Prior::Gaussian,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_priors(mut self, spike: Prior, wigner: Prior) -> Self {
        self.spike_prior = spike;
        self.wigner_prior = wigner;
        self
    }

    /// Collects every violated invariant into one `Error::Config`.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n == 0 {
            problems.push("n must be at least 1".to_string());
        }
        let in_unit = |x: f64| x > 0.0 && x <= 1.0;
        match &self.p {
            Sparsity::Uniform(p) => {
                if !in_unit(*p) {
                    problems.push(format!("p = {p} must lie in (0, 1]"));
                }
            }
            Sparsity::PerSpike(ps) => {
                if ps.len() != self.r {
                    problems.push(format!(
                        "per-spike sparsity list has {} entries but r = {}",
                        ps.len(),
                        self.r
                    ));
                }
                for (i, p) in ps.iter().enumerate() {
                    if !in_unit(*p) {
                        problems.push(format!("p[{i}] = {p} must lie in (0, 1]"));
                    }
                }
            }
        }
        // q = 0 is accepted as the noiseless degenerate model.
        if !(0.0..=1.0).contains(&self.q) {
            problems.push(format!("q = {} must lie in [0, 1]", self.q));
        }
        if self.thetas.len() != self.r {
            problems.push(format!(
                "thetas has {} entries but r = {}",
                self.thetas.len(),
                self.r
            ));
        }
        for (i, t) in self.thetas.iter().enumerate() {
            if !(*t > 0.0 && t.is_finite()) {
                problems.push(format!("theta[{i}] = {t} must be positive"));
            }
        }
        if self.thetas.windows(2).any(|w| w[1] > w[0]) {
            problems.push(format!("thetas {:?} must be non-increasing", self.thetas));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Sparsity of spike `i`.
    pub fn p_of(&self, i: usize) -> f64 {
        match &self.p {
            Sparsity::Uniform(p) => *p,
            Sparsity::PerSpike(ps) => ps[i],
        }
    }

    /// `n·p_i`, the expected support size of spike `i`.
    pub fn np_of(&self, i: usize) -> f64 {
        self.n as f64 * self.p_of(i)
    }

    /// `n·p`, or `n·p_min` with per-spike sparsities (the rate-controlling scale).
    pub fn np_eff(&self) -> f64 {
        let p = match &self.p {
            Sparsity::Uniform(p) => *p,
            Sparsity::PerSpike(ps) => ps.iter().copied().fold(f64::INFINITY, f64::min),
        };
        self.n as f64 * p
    }

    /// `τ = qn / log n`.
    pub fn tau(&self) -> f64 {
        self.q * self.n as f64 / (self.n as f64).ln()
    }
}

/// The `r` sparse spike columns together with their signal strengths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeEnsemble {
    pub n: usize,
    pub thetas: Vec<f64>,
    /// Per column: strictly increasing indices with nonzero values.
    pub columns: Vec<Vec<(usize, f64)>>,
    pub support_sizes: Vec<usize>,
}

impl SpikeEnsemble {
    pub fn from_columns(n: usize, thetas: Vec<f64>, columns: Vec<Vec<(usize, f64)>>) -> Self {
        let support_sizes = columns.iter().map(Vec::len).collect();
        SpikeEnsemble {
            n,
            thetas,
            columns,
            support_sizes,
        }
    }

    pub fn r(&self) -> usize {
        self.columns.len()
    }

    pub fn norm_sq(&self, i: usize) -> f64 {
        self.columns[i].iter().map(|(_, v)| v * v).sum()
    }

    pub fn dot(&self, i: usize, x: &[f64]) -> f64 {
        self.columns[i].iter().map(|&(j, v)| v * x[j]).sum()
    }

    pub fn to_dense(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for &(j, v) in &self.columns[i] {
            out[j] = v;
        }
        out
    }

    /// Gram matrix `VᵀV` (r × r).
    pub fn gram(&self) -> Vec<Vec<f64>> {
        let r = self.r();
        let dense: Vec<Vec<f64>> = (0..r).map(|i| self.to_dense(i)).collect();
        (0..r)
            .map(|a| (0..r).map(|b| self.dot(a, &dense[b])).collect())
            .collect()
    }
}

pub fn sample_spike_ensemble(params: &ModelParams, stream: &mut Stream) -> Result<SpikeEnsemble> {
    params.validate()?;
    let n = params.n;
    let columns = (0..params.r)
        .map(|i| {
            let p = params.p_of(i);
            let mut col = Vec::with_capacity((n as f64 * p * 1.1) as usize + 8);
            for j in 0..n {
                if p >= 1.0 || stream.random::<f64>() < p {
                    let v = params.spike_prior.sample(stream);
                    // A zero draw carries no support; only possible for atom-at-zero priors.
                    if v != 0.0 {
                        col.push((j, v));
                    }
                }
            }
            col
        })
        .collect();
    Ok(SpikeEnsemble::from_columns(n, params.thetas.clone(), columns))
}

/// Symmetric matrix in compressed-sparse-row form with both triangles stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseSymMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseSymMatrix {
    pub fn zeros(n: usize) -> Self {
        SparseSymMatrix {
            n,
            row_ptr: vec![0; n + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds the full pattern from upper-triangle triplets `(i, j, v)` with `i ≤ j`,
    /// given in row-major order without duplicates.
    pub fn from_upper_triplets(n: usize, upper: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; n];
        let mut prev: Option<(usize, usize)> = None;
        for &(i, j, _) in upper {
            if i > j || j >= n {
                return Err(Error::config(format!("triplet ({i}, {j}) is not in the upper triangle of a {n}×{n} matrix")));
            }
            if prev.is_some_and(|pr| pr >= (i, j)) {
                return Err(Error::config("upper triplets must be strictly row-major ordered"));
            }
            prev = Some((i, j));
            counts[i] += 1;
            if i != j {
                counts[j] += 1;
            }
        }
        let mut row_ptr = vec![0usize; n + 1];
        for i in 0..n {
            row_ptr[i + 1] = row_ptr[i] + counts[i];
        }
        let nnz = row_ptr[n];
        let mut col_idx = vec![0usize; nnz];
        let mut values = vec![0.0; nnz];
        let mut fill = row_ptr[..n].to_vec();
        // Row-major emission order keeps every row's columns sorted: lower entries of
        // row j arrive while processing rows k < j, its upper entries at row j.
        for &(i, j, v) in upper {
            col_idx[fill[i]] = j;
            values[fill[i]] = v;
            fill[i] += 1;
            if i != j {
                col_idx[fill[j]] = i;
                values[fill[j]] = v;
                fill[j] += 1;
            }
        }
        Ok(SparseSymMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let upper: Vec<_> = diag
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, &v)| (i, i, v))
            .collect();
        Self::from_upper_triplets(diag.len(), &upper).expect("diagonal triplets are ordered")
    }

    pub fn nnz(&self) -> usize {
        self.row_ptr[self.n]
    }

    /// Stored entries with `i ≤ j`.
    pub fn upper_count(&self) -> usize {
        (0..self.n)
            .map(|i| self.row(i).0.iter().filter(|&&j| j >= i).count())
            .sum()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[range.clone()], &self.values[range])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    /// `y = scale · A x`. Rows are independent, so any row partition gives the same bits.
    pub fn matvec_into(&self, x: &[f64], scale: f64, y: &mut [f64]) {
        use rayon::prelude::*;
        let row = |i: usize| -> f64 {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            scale * acc
        };
        if self.nnz() > 1 << 16 {
            y.par_iter_mut()
                .with_min_len(256)
                .enumerate()
                .for_each(|(i, yi)| *yi = row(i));
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = row(i);
            }
        }
    }

    /// Number of entries whose mirror is missing or differs.
    pub fn symmetry_violations(&self) -> usize {
        let mut bad = 0;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            bad += cols.windows(2).filter(|w| w[0] >= w[1]).count();
            for (&j, &v) in cols.iter().zip(vals) {
                let (mcols, mvals) = self.row(j);
                match mcols.binary_search(&i) {
                    Ok(k) if mvals[k] == v => {}
                    _ => bad += 1,
                }
            }
        }
        bad
    }

    /// Diagonal entries and off-diagonal upper entries, for variance checks.
    pub fn split_values(&self) -> (Vec<f64>, Vec<f64>) {
        let mut diag = Vec::new();
        let mut off = Vec::new();
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j == i {
                    diag.push(v);
                } else if j > i {
                    off.push(v);
                }
            }
        }
        (diag, off)
    }
}

pub fn sample_sparse_wigner(params: &ModelParams, stream: &mut Stream) -> Result<SparseSymMatrix> {
    params.validate()?;
    let n = params.n;
    let q = params.q;
    if q == 0.0 {
        return Ok(SparseSymMatrix::zeros(n));
    }
    let expected = (q * (n as f64) * (n as f64 + 1.0) / 2.0) as usize;
    let mut upper = Vec::with_capacity(expected + expected / 16 + 16);
    let prior = params.wigner_prior;
    let mut emit = |i: usize, j: usize, stream: &mut Stream| {
        let v = prior.sample(stream);
        let v = if i == j { std::f64::consts::SQRT_2 * v } else { v };
        if v != 0.0 {
            upper.push((i, j, v));
        }
    };
    if q >= 1.0 {
        for i in 0..n {
            for j in i..n {
                emit(i, j, stream);
            }
        }
    } else {
        // Gaps between kept upper-triangle positions (row-major) are Geometric(q).
        let gap = Geometric::new(q).map_err(|e| Error::config(format!("q = {q}: {e}")))?;
        let mut skip = gap.sample(stream);
        for i in 0..n {
            let row_len = (n - i) as u64;
            let mut offset = 0u64;
            while offset + skip < row_len {
                let j = i + (offset + skip) as usize;
                emit(i, j, stream);
                offset += skip + 1;
                skip = gap.sample(stream);
            }
            skip -= row_len - offset;
        }
    }
    SparseSymMatrix::from_upper_triplets(n, &upper)
}
