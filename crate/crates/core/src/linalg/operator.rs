use crate::error::{Error, Result};
use crate::model::{ModelParams, SparseSymMatrix, SpikeEnsemble};

use super::{dense_guard, DenseSym};

/// A real symmetric linear map applied matrix-free.
pub trait SymOperator: Sync {
    fn dim(&self) -> usize;

    /// `y = A x`; both slices have length `dim()`.
    fn apply_into(&self, x: &[f64], y: &mut [f64]);

    fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply_into(x, &mut y);
        y
    }
}

impl SymOperator for DenseSym {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = super::dot(self.row(i), x);
        }
    }
}

/// `X = Σ_i θ_i/(n p_i) · v_i v_iᵀ + (1/√(nq)) · W⊙A`, never materialised.
#[derive(Clone, Debug)]
pub struct SpikedOperator {
    pub noise: SparseSymMatrix,
    pub spikes: SpikeEnsemble,
    pub n: usize,
    pub q: f64,
    /// `1/(n p_i)` per spike.
    pub spike_scales: Vec<f64>,
    /// `1/√(nq)`, zero for the noiseless model `q = 0`.
    pub noise_scale: f64,
}

impl SpikedOperator {
    pub fn new(params: &ModelParams, noise: SparseSymMatrix, spikes: SpikeEnsemble) -> Result<Self> {
        params.validate()?;
        let n = params.n;
        if noise.n != n || spikes.n != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: if noise.n != n { noise.n } else { spikes.n },
            });
        }
        if spikes.r() != params.r {
            return Err(Error::DimensionMismatch {
                expected: params.r,
                found: spikes.r(),
            });
        }
        let spike_scales = (0..params.r).map(|i| 1.0 / params.np_of(i)).collect();
        Ok(SpikedOperator {
            noise,
            spikes,
            n,
            q: params.q,
            spike_scales,
            noise_scale: noise_scale(n, params.q),
        })
    }

    /// The noise part alone, `H = W⊙A / √(nq)`.
    pub fn noise_only(noise: SparseSymMatrix, q: f64) -> Self {
        let n = noise.n;
        SpikedOperator {
            spikes: SpikeEnsemble::from_columns(n, Vec::new(), Vec::new()),
            noise_scale: noise_scale(n, q),
            noise,
            n,
            q,
            spike_scales: Vec::new(),
        }
    }

    pub fn has_spikes(&self) -> bool {
        self.spikes.r() > 0
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            });
        }
        Ok(self.apply_vec(x))
    }
}

fn noise_scale(n: usize, q: f64) -> f64 {
    if q > 0.0 {
        1.0 / (n as f64 * q).sqrt()
    } else {
        0.0
    }
}

impl SymOperator for SpikedOperator {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.noise.matvec_into(x, self.noise_scale, y);
        for (i, col) in self.spikes.columns.iter().enumerate() {
            let coef = self.spike_scales[i] * self.spikes.thetas[i] * self.spikes.dot(i, x);
            for &(j, v) in col {
                y[j] += coef * v;
            }
        }
    }
}

/// Entrywise materialisation of `X`.
pub fn densify(op: &SpikedOperator) -> Result<DenseSym> {
    dense_guard(op.n)?;
    let mut m = DenseSym::zeros(op.n)?;
    for i in 0..op.n {
        let (cols, vals) = op.noise.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            if j >= i {
                m.set(i, j, op.noise_scale * v);
            }
        }
    }
    for (s, col) in op.spikes.columns.iter().enumerate() {
        let c = op.spike_scales[s] * op.spikes.thetas[s];
        for (a, &(i, vi)) in col.iter().enumerate() {
            for &(j, vj) in &col[..=a] {
                m.add(i, j, c * vi * vj);
            }
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;
    use crate::model::{sample_sparse_wigner, sample_spike_ensemble, Prior};
    use crate::rng::derive_stream;
    use rand::Rng;

    fn instance(n: usize, p: f64, q: f64, thetas: Vec<f64>, seed: u64) -> SpikedOperator {
        let params = ModelParams::new(n, p, q, thetas).with_seed(seed);
        let w = sample_sparse_wigner(&params, &mut derive_stream(seed, "wigner", 0)).unwrap();
        let v = sample_spike_ensemble(&params, &mut derive_stream(seed, "spike", 0)).unwrap();
        SpikedOperator::new(&params, w, v).unwrap()
    }

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = derive_stream(seed, "probe", 0);
        (0..n).map(|_| rng.random::<f64>() - 0.5).collect()
    }

    #[test]
    fn pure_noise_returns_scaled_column() {
        let op = instance(40, 0.5, 0.3, vec![], 1);
        for j in [0, 7, 39] {
            let mut e = vec![0.0; 40];
            e[j] = 1.0;
            let y = op.apply(&e).unwrap();
            for (i, yi) in y.iter().enumerate() {
                assert_eq!(*yi, op.noise_scale * op.noise.get(i, j));
            }
        }
    }

    #[test]
    fn pure_rank_one_action() {
        let params = ModelParams::new(30, 0.4, 0.0, vec![2.5]);
        let w = sample_sparse_wigner(&params, &mut derive_stream(2, "wigner", 0)).unwrap();
        let v = sample_spike_ensemble(&params, &mut derive_stream(2, "spike", 0)).unwrap();
        let op = SpikedOperator::new(&params, w, v).unwrap();
        let v1 = op.spikes.to_dense(0);
        let y = op.apply(&v1).unwrap();
        let c = 2.5 / 12.0 * op.spikes.norm_sq(0);
        for (yi, vi) in y.iter().zip(&v1) {
            assert!((yi - c * vi).abs() <= 1e-12 * c.abs().max(1.0));
        }
    }

    #[test]
    fn matches_dense_assembly() {
        let op = instance(300, 0.3, 0.1, vec![3.0, 1.5], 3);
        // Independent oracle: assemble X entry by entry from the raw samples.
        let n = 300;
        let mut dense = vec![vec![0.0; n]; n];
        for (i, row) in dense.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = op.noise.get(i, j) / (n as f64 * 0.1).sqrt();
            }
        }
        for s in 0..2 {
            let v = op.spikes.to_dense(s);
            let c = op.spikes.thetas[s] / (n as f64 * 0.3);
            for i in 0..n {
                for j in 0..n {
                    dense[i][j] += c * v[i] * v[j];
                }
            }
        }
        for probe in 0..5 {
            let x = random_vec(n, probe);
            let y = op.apply(&x).unwrap();
            for i in 0..n {
                let expect: f64 = dense[i].iter().zip(&x).map(|(a, b)| a * b).sum();
                assert!((y[i] - expect).abs() <= 1e-12 * expect.abs().max(1.0), "row {i}");
            }
        }
    }

    #[test]
    fn densify_agrees_with_apply() {
        let op = instance(120, 0.5, 0.2, vec![2.0], 4);
        let m = densify(&op).unwrap();
        for probe in 0..20 {
            let x = random_vec(120, 100 + probe);
            let a = op.apply(&x).unwrap();
            let b = m.matvec(&x);
            for (ai, bi) in a.iter().zip(&b) {
                assert!((ai - bi).abs() <= 1e-12 * ai.abs().max(1.0));
            }
        }
    }

    #[test]
    fn densify_small_cases() {
        let op = instance(10, 1.0, 0.0, vec![], 5);
        assert!(densify(&op).unwrap().frobenius() == 0.0);

        let params = ModelParams::new(3, 1.0, 1.0, vec![]);
        let noise = SparseSymMatrix::from_upper_triplets(
            3,
            &[(0, 0, 1.0), (0, 1, 2.0), (0, 2, -1.0), (1, 1, 0.5), (1, 2, 3.0), (2, 2, -2.0)],
        )
        .unwrap();
        let spikes = SpikeEnsemble::from_columns(3, vec![], vec![]);
        let op = SpikedOperator::new(&params, noise.clone(), spikes).unwrap();
        let m = densify(&op).unwrap();
        let s = 1.0 / 3f64.sqrt();
        for i in 0..3 {
            for j in 0..3 {
                assert!((m.get(i, j) - s * noise.get(i, j)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn symmetric_on_random_probes() {
        let op = instance(400, 0.2, 0.05, vec![4.0, 2.0], 6);
        for k in 0..100 {
            let x = random_vec(400, 2 * k);
            let y = random_vec(400, 2 * k + 1);
            let lhs = dot(&op.apply(&x).unwrap(), &y);
            let rhs = dot(&x, &op.apply(&y).unwrap());
            let scale = dot(&x, &x).sqrt() * dot(&y, &y).sqrt();
            assert!((lhs - rhs).abs() <= 1e-12 * scale, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn dimension_mismatch() {
        let op = instance(10, 1.0, 0.5, vec![], 7);
        assert!(matches!(op.apply(&[1.0; 9]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn rademacher_dense_spike_norm() {
        let params = ModelParams::new(50, 1.0, 0.0, vec![3.0]).with_priors(Prior::Rademacher, Prior::Gaussian);
        let v = sample_spike_ensemble(&params, &mut derive_stream(1, "spike", 0)).unwrap();
        assert_eq!(v.norm_sq(0), 50.0);
    }
}
