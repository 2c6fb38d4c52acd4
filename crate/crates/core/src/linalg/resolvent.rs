use crate::error::{Error, Result};
use crate::rng::derive_stream;

use super::lanczos::lanczos_fixed_steps;
use super::{axpy, dot, norm, SpikedOperator, SymOperator};

/// Resolvent evaluation points must satisfy `|z| > 2 + SPECTRUM_MARGIN`.
pub const SPECTRUM_MARGIN: f64 = 0.05;

const EDGE_PROBE_STEPS: usize = 20;

/// `s · (A − c I)` as an operator; `s = ±1` picks the definite side.
struct Shifted<'a, A: SymOperator + ?Sized> {
    inner: &'a A,
    shift: f64,
    sign: f64,
}

impl<A: SymOperator + ?Sized> SymOperator for Shifted<'_, A> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.inner.apply_into(x, y);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = self.sign * (*yi - self.shift * xi);
        }
    }
}

struct Negated<'a, A: SymOperator + ?Sized>(&'a A);

impl<A: SymOperator + ?Sized> SymOperator for Negated<'_, A> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.0.apply_into(x, y);
        y.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Solves `A x = b` for symmetric positive definite `A`. Returns the solution
/// and the iteration count, or the final relative residual on failure.
pub fn conjugate_gradient<A: SymOperator + ?Sized>(
    op: &A,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> std::result::Result<(Vec<f64>, usize), (usize, f64)> {
    let n = op.dim();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for it in 1..=max_iter {
        op.apply_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            // Not positive definite along p.
            return Err((it, f64::NAN));
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= tol * bnorm {
            return Ok((x, it));
        }
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }
    Err((max_iter, rr.sqrt() / bnorm))
}

/// Diagonal entries `R_ii(z) = e_iᵀ (H − zI)⁻¹ e_i` of the noise resolvent at a
/// real point outside the spectrum.
pub fn resolvent_diag_entries(
    op: &SpikedOperator,
    z: f64,
    indices: &[usize],
    tol: f64,
) -> Result<Vec<f64>> {
    if op.has_spikes() {
        return Err(Error::config("resolvent entries are defined for the noise operator only (r = 0)"));
    }
    let edge = 2.0 + SPECTRUM_MARGIN;
    if z.abs() <= edge || !z.is_finite() {
        return Err(Error::SpectrumGuard { z, bound: edge });
    }
    let n = op.n;
    if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: bad + 1,
        });
    }

    // Extreme eigenvalue on the side of z, from a short Lanczos run. The Ritz
    // value plus its residual bounds the nearest eigenvalue from above.
    let mut stream = derive_stream(0, "resolvent-edge", 0);
    let steps = EDGE_PROBE_STEPS.min(n);
    let probe = if z > 0.0 {
        edge_estimate(op, steps, &mut stream)
    } else {
        edge_estimate(&Negated(op), steps, &mut stream)
    };
    if z.abs() <= probe {
        return Err(Error::SpectrumGuard { z, bound: probe });
    }

    // z above the spectrum: (zI − H) is positive definite and R_ii = −x_i.
    // z below: (H − zI) is positive definite and R_ii = x_i.
    let sign = if z > 0.0 { -1.0 } else { 1.0 };
    let shifted = Shifted {
        inner: op,
        shift: z,
        sign,
    };
    let max_iter = (10 * n).max(100);
    let mut out = Vec::with_capacity(indices.len());
    let mut e = vec![0.0; n];
    for &i in indices {
        e[i] = 1.0;
        let solved = conjugate_gradient(&shifted, &e, tol, max_iter);
        e[i] = 0.0;
        match solved {
            Ok((x, _)) => out.push(sign * x[i]),
            Err((_, residual)) if residual.is_nan() => {
                return Err(Error::SpectrumGuard { z, bound: probe });
            }
            Err((iterations, residual)) => {
                return Err(Error::CgNonConvergence {
                    index: i,
                    iterations,
                    residual,
                })
            }
        }
    }
    Ok(out)
}

/// Upper estimate of the largest eigenvalue: top Ritz value plus its residual.
fn edge_estimate<A: SymOperator + ?Sized>(op: &A, steps: usize, stream: &mut crate::rng::Stream) -> f64 {
    let top = lanczos_fixed_steps(op, 1, steps, stream).expect("fixed-step Lanczos cannot fail for k = 1");
    top.eigenvalues[0] + top.residuals[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dense_eigs_jacobi, densify};
    use crate::model::{sample_sparse_wigner, ModelParams, SparseSymMatrix};

    #[test]
    fn zero_noise_is_scalar_resolvent() {
        let op = SpikedOperator::noise_only(SparseSymMatrix::zeros(20), 0.0);
        let r = resolvent_diag_entries(&op, 3.0, &[0, 5, 19], 1e-12).unwrap();
        for v in r {
            assert!((v + 1.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn one_by_one() {
        let noise = SparseSymMatrix::from_diagonal(&[1.0]);
        let op = SpikedOperator::noise_only(noise, 1.0);
        let r = resolvent_diag_entries(&op, 3.0, &[0], 1e-12).unwrap();
        assert!((r[0] + 0.5).abs() < 1e-14);
    }

    #[test]
    fn refuses_inside_bulk() {
        let op = SpikedOperator::noise_only(SparseSymMatrix::zeros(5), 0.0);
        assert!(matches!(
            resolvent_diag_entries(&op, 1.5, &[0], 1e-10),
            Err(Error::SpectrumGuard { .. })
        ));
    }

    #[test]
    fn refuses_below_top_eigenvalue() {
        // Spectrum {0, 4}: z = 3 lies between eigenvalues.
        let noise = SparseSymMatrix::from_diagonal(&[0.0, 4.0]);
        let op = SpikedOperator::noise_only(noise, 0.5);
        assert!(matches!(
            resolvent_diag_entries(&op, 3.0, &[0], 1e-10),
            Err(Error::SpectrumGuard { .. })
        ));
    }

    #[test]
    fn matches_dense_inverse() {
        let n = 500;
        let q = (n as f64).ln().powi(2) / n as f64;
        let params = ModelParams::new(n, 1.0, q, vec![]);
        let w = sample_sparse_wigner(&params, &mut derive_stream(8, "wigner", 0)).unwrap();
        let op = SpikedOperator::noise_only(w, q);
        let idx: Vec<usize> = (0..n).step_by(37).collect();
        for z in [3.0, -3.0] {
            let r = resolvent_diag_entries(&op, z, &idx, 1e-13).unwrap();
            // Oracle: spectral decomposition R_ii = Σ_k U_ik² / (λ_k − z).
            let eig = dense_eigs_jacobi(&densify(&op).unwrap(), 1e-14).unwrap();
            for (got, &i) in r.iter().zip(&idx) {
                let expect: f64 = eig
                    .values
                    .iter()
                    .zip(&eig.vectors)
                    .map(|(l, u)| u[i] * u[i] / (l - z))
                    .sum();
                assert!((got - expect).abs() < 1e-8, "i={i}: {got} vs {expect}");
                if z > 0.0 {
                    assert!(*got < 0.0);
                }
            }
        }
    }
}
