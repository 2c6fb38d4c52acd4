//! Lanczos iteration with full reorthogonalization for the algebraically
//! largest eigenpairs of a symmetric operator.
//!
//! The Krylov basis is kept in memory and every new direction is
//! orthogonalized twice against all previous ones (classical Gram-Schmidt,
//! repeated), so no spurious copies of converged Ritz values appear. When the
//! recurrence breaks down (an invariant subspace was found) a fresh random
//! direction orthogonal to the basis is drawn and the iteration continues with
//! a zero coupling coefficient.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

use super::tridiag::{tridiagonal_eigen, TridiagonalVectors};
use super::{axpy, dot, fix_sign, norm, SymOperator};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanczosSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LanczosSettings {
    fn default() -> Self {
        LanczosSettings {
            tol: 1e-10,
            max_iter: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopSpectrum {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    /// `‖X u_i − λ_i u_i‖`, recomputed with the operator.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

impl TopSpectrum {
    /// Number of distinct eigenvalues when values closer than
    /// `1e-6 · max|λ|` are merged.
    pub fn distinct_count(&self) -> usize {
        let scale = self.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let tol = 1e-6 * scale;
        let mut count = 0;
        let mut last = f64::INFINITY;
        for &v in &self.eigenvalues {
            if last - v > tol || count == 0 {
                count += 1;
                last = v;
            }
        }
        count
    }
}

/// Top-`k` eigenpairs; converged when `‖X u − λ u‖ ≤ tol · max(1, |λ|)` for all `k`.
pub fn lanczos_topk<A: SymOperator + ?Sized>(
    op: &A,
    k: usize,
    tol: f64,
    max_iter: usize,
    stream: &mut Stream,
) -> Result<TopSpectrum> {
    lanczos_inner(op, k, tol, max_iter, 0, stream)
}

/// Ritz pairs after exactly `steps` iterations (fewer only on exhaustion).
pub(crate) fn lanczos_fixed_steps<A: SymOperator + ?Sized>(
    op: &A,
    k: usize,
    steps: usize,
    stream: &mut Stream,
) -> Result<TopSpectrum> {
    lanczos_inner(op, k, f64::INFINITY, steps, steps, stream)
}

fn lanczos_inner<A: SymOperator + ?Sized>(
    op: &A,
    k: usize,
    tol: f64,
    max_iter: usize,
    min_steps: usize,
    stream: &mut Stream,
) -> Result<TopSpectrum> {
    let n = op.dim();
    if k == 0 || k > n {
        return Err(Error::config(format!("k = {k} must lie in [1, n = {n}]")));
    }
    if !(tol > 0.0) {
        return Err(Error::config(format!("tol = {tol} must be positive")));
    }
    let max_dim = max_iter.max(k).min(n);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_dim.min(1024));
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut coeffs = Vec::new();
    let mut best = vec![f64::INFINITY; k];
    let mut restarts = 0;

    let Some(start) = random_orthogonal_direction(&basis, n, stream) else {
        unreachable!("empty basis always admits a direction")
    };
    basis.push(start);

    loop {
        let j = basis.len() - 1;
        op.apply_into(&basis[j], &mut w);
        let alpha = dot(&basis[j], &w);
        alphas.push(alpha);
        axpy(-alpha, &basis[j], &mut w);
        if j > 0 {
            axpy(-betas[j - 1], &basis[j - 1], &mut w);
        }
        for _ in 0..2 {
            orthogonalize(&basis, &mut w, &mut coeffs);
        }
        let beta = norm(&w);
        let m = basis.len();

        // Ritz residual estimates |β_m · s_{m,i}| for the top k.
        if m >= k.max(min_steps.min(n)) {
            let (vals, last) = tridiagonal_eigen(&alphas, &betas, TridiagonalVectors::LastRow);
            let order = descending(&vals);
            let mut all = true;
            for (slot, &i) in order.iter().take(k).enumerate() {
                let est = (beta * last[0][i]).abs();
                best[slot] = est;
                if est > tol * vals[i].abs().max(1.0) {
                    all = false;
                }
            }
            let exhausted = m == n;
            if all || exhausted {
                let spectrum = ritz_pairs(op, &basis, &alphas, &betas, k, m);
                let ok = spectrum
                    .residuals
                    .iter()
                    .zip(&spectrum.eigenvalues)
                    .all(|(r, l)| *r <= tol * l.abs().max(1.0));
                if ok || exhausted {
                    return Ok(spectrum);
                }
            }
            if m >= max_dim {
                return Err(Error::NonConvergence {
                    iterations: m,
                    residuals: best,
                });
            }
        }

        let breakdown_tol = 1e-12 * alphas.iter().fold(1e-300f64, |a, x| a.max(x.abs()));
        if beta > breakdown_tol {
            w.iter_mut().for_each(|x| *x /= beta);
            betas.push(beta);
            basis.push(std::mem::replace(&mut w, vec![0.0; n]));
        } else {
            // Invariant subspace: continue from a fresh direction, uncoupled.
            restarts += 1;
            match random_orthogonal_direction(&basis, n, stream) {
                Some(v) => {
                    betas.push(0.0);
                    basis.push(v);
                }
                None => {
                    return Ok(ritz_pairs(op, &basis, &alphas, &betas, k, m));
                }
            }
            if restarts > n {
                return Err(Error::NonConvergence {
                    iterations: m,
                    residuals: best,
                });
            }
        }
    }
}

fn descending(vals: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    order
}

/// `w -= Q (Qᵀ w)`
fn orthogonalize(basis: &[Vec<f64>], w: &mut [f64], coeffs: &mut Vec<f64>) {
    coeffs.clear();
    coeffs.extend(basis.iter().map(|q| dot(q, w)));
    for (q, c) in basis.iter().zip(coeffs.iter()) {
        axpy(-c, q, w);
    }
}

fn random_orthogonal_direction(basis: &[Vec<f64>], n: usize, stream: &mut Stream) -> Option<Vec<f64>> {
    if basis.len() >= n {
        return None;
    }
    let mut coeffs = Vec::new();
    for _ in 0..8 {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(stream)).collect();
        let before = norm(&v);
        for _ in 0..2 {
            orthogonalize(basis, &mut v, &mut coeffs);
        }
        let after = norm(&v);
        if after > 1e-8 * before {
            v.iter_mut().for_each(|x| *x /= after);
            return Some(v);
        }
    }
    None
}

fn ritz_pairs<A: SymOperator + ?Sized>(
    op: &A,
    basis: &[Vec<f64>],
    alphas: &[f64],
    betas: &[f64],
    k: usize,
    m: usize,
) -> TopSpectrum {
    let n = op.dim();
    let (vals, z) = tridiagonal_eigen(&alphas[..m], &betas[..m - 1], TridiagonalVectors::Full);
    let order = descending(&vals);
    let mut eigenvalues = Vec::with_capacity(k);
    let mut eigenvectors = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    let mut y = vec![0.0; n];
    for &i in order.iter().take(k) {
        let mut u = vec![0.0; n];
        for (row, q) in z.iter().zip(basis) {
            axpy(row[i], q, &mut u);
        }
        let nu = norm(&u);
        u.iter_mut().for_each(|x| *x /= nu);
        fix_sign(&mut u);
        op.apply_into(&u, &mut y);
        let lambda = dot(&u, &y);
        axpy(-lambda, &u, &mut y);
        residuals.push(norm(&y));
        eigenvalues.push(lambda);
        eigenvectors.push(u);
    }
    TopSpectrum {
        eigenvalues,
        eigenvectors,
        residuals,
        iterations: m,
    }
}
