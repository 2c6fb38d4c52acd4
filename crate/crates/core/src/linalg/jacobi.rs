use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::{dense_guard, fix_sign, DenseSym};

/// Full eigendecomposition, eigenvalues descending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseEigen {
    pub values: Vec<f64>,
    /// `vectors[i]` is the unit eigenvector of `values[i]`.
    pub vectors: Vec<Vec<f64>>,
    pub sweeps: usize,
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm is at most
/// `tol · max(1, ‖A‖_F)`.
pub fn dense_eigs_jacobi(matrix: &DenseSym, tol: f64) -> Result<DenseEigen> {
    let n = matrix.n();
    dense_guard(n)?;
    let mut a = matrix.clone();
    let mut v = DenseSym::identity(n)?;
    let target = tol * matrix.frobenius().max(1.0);
    let a_data = a.data_mut();
    let mut sweeps = 0;
    // V is not symmetric; only its storage is reused.
    let v_data = v.data_mut();

    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..i {
                s += 2.0 * a[i * n + j] * a[i * n + j];
            }
        }
        s.sqrt()
    };

    while sweeps < MAX_SWEEPS && off_norm(a_data) > target {
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a_data[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a_data[p * n + p];
                let aqq = a_data[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                // A ← A J
                for k in 0..n {
                    let akp = a_data[k * n + p];
                    let akq = a_data[k * n + q];
                    a_data[k * n + p] = c * akp - s * akq;
                    a_data[k * n + q] = s * akp + c * akq;
                }
                // A ← Jᵀ A
                for k in 0..n {
                    let apk = a_data[p * n + k];
                    let aqk = a_data[q * n + k];
                    a_data[p * n + k] = c * apk - s * aqk;
                    a_data[q * n + k] = s * apk + c * aqk;
                }
                a_data[p * n + q] = 0.0;
                a_data[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v_data[k * n + p];
                    let vkq = v_data[k * n + q];
                    v_data[k * n + p] = c * vkp - s * vkq;
                    v_data[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a_data[j * n + j].total_cmp(&a_data[i * n + i]));
    let values = order.iter().map(|&i| a_data[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut col: Vec<f64> = (0..n).map(|k| v_data[k * n + i]).collect();
            fix_sign(&mut col);
            col
        })
        .collect();
    Ok(DenseEigen {
        values,
        vectors,
        sweeps,
    })
}
