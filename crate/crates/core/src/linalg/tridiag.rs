//! Householder reduction to tridiagonal form, implicit-shift QL on the
//! tridiagonal, and Sturm-sequence counting / bisection.

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::{dense_guard, DenseSym};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    /// `off[i]` couples rows `i` and `i + 1`.
    pub off: Vec<f64>,
}

impl Tridiagonal {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn count_in(&self, a: f64, b: f64) -> usize {
        count_eigs_in_interval(&self.diag, &self.off, a, b)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        tridiagonal_eigenvalues(&self.diag, &self.off)
    }
}

/// Orthogonal similarity reduction `QᵀAQ = T`.
///
/// Only the lower triangle of a working copy is touched. Each step's rank-2
/// trailing update is fused with the symmetric matvec of the next step, so the
/// trailing block is streamed once per column.
pub fn tridiagonalize_householder(a: &DenseSym) -> Result<Tridiagonal> {
    let n = a.n();
    dense_guard(n)?;
    match n {
        0 => {
            return Ok(Tridiagonal {
                diag: vec![],
                off: vec![],
            })
        }
        1 => {
            return Ok(Tridiagonal {
                diag: vec![a.get(0, 0)],
                off: vec![],
            })
        }
        _ => {}
    }
    let mut m = a.clone();
    let m = m.data_mut();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n - 1];
    let mut w = vec![0.0; n];
    let mut pending: Option<Reflector> = None;

    for k in 0..n - 1 {
        d[k] = m[k * n + k];
        if k == n - 2 {
            e[k] = m[(n - 1) * n + k];
            d[n - 1] = m[(n - 1) * n + n - 1];
            break;
        }
        let refl = match pending.take() {
            Some(r) => r,
            None => {
                let mut r = Reflector::from_column(m, n, k);
                if !r.trivial {
                    symv_lower(m, n, k + 1, &r.v, &mut r.p);
                }
                r
            }
        };
        e[k] = refl.alpha;
        if refl.trivial {
            continue;
        }
        let v = &refl.v;
        let beta = refl.beta;
        let lo = k + 1;
        // w = βp − (β²/2)(pᵀv) v
        let ptv: f64 = (lo..n).map(|i| refl.p[i] * v[i]).sum();
        let kk = 0.5 * beta * beta * ptv;
        for i in lo..n {
            w[i] = beta * refl.p[i] - kk * v[i];
        }
        // Column k+1 first, so the next reflector is known before the fused pass.
        for i in lo..n {
            m[i * n + lo] -= v[i] * w[lo] + w[i] * v[lo];
        }
        let next_needed = lo < n - 2;
        let mut next = if next_needed {
            Some(Reflector::from_column(m, n, lo))
        } else {
            None
        };
        let fuse = next.as_ref().is_some_and(|r| !r.trivial);
        let start = lo + 1;
        if fuse {
            let nr = next.as_mut().unwrap();
            for i in start..n {
                let row = &mut m[i * n + start..i * n + i + 1];
                let (vi, wi, vni) = (v[i], w[i], nr.v[i]);
                let len = i - start;
                let acc = fused_row(
                    &mut row[..len],
                    &w[start..i],
                    &v[start..i],
                    &nr.v[start..i],
                    &mut nr.p[start..i],
                    vi,
                    wi,
                    vni,
                );
                let diag = row[len] - 2.0 * vi * wi;
                row[len] = diag;
                nr.p[i] += acc + diag * vni;
            }
        } else {
            for i in start..n {
                let row = &mut m[i * n + start..i * n + i + 1];
                let (vi, wi) = (v[i], w[i]);
                for ((a, wj), vj) in row.iter_mut().zip(&w[start..=i]).zip(&v[start..=i]) {
                    *a -= vi * wj + wi * vj;
                }
            }
        }
        pending = next.filter(|r| r.trivial || fuse);
    }
    Ok(Tridiagonal { diag: d, off: e })
}

struct Reflector {
    /// Householder vector on global indices; zero outside the active block.
    v: Vec<f64>,
    /// `A_sub · v`, valid only when produced by a fused pass or `symv_lower`.
    p: Vec<f64>,
    beta: f64,
    alpha: f64,
    trivial: bool,
}

impl Reflector {
    /// Reflector zeroing column `k` below the subdiagonal.
    fn from_column(m: &[f64], n: usize, k: usize) -> Self {
        let lo = k + 1;
        let x0 = m[lo * n + k];
        let sigma: f64 = (lo + 1..n).map(|i| m[i * n + k] * m[i * n + k]).sum();
        let mut v = vec![0.0; n];
        let p = vec![0.0; n];
        if sigma == 0.0 {
            return Reflector {
                v,
                p,
                beta: 0.0,
                alpha: x0,
                trivial: true,
            };
        }
        let norm = (x0 * x0 + sigma).sqrt();
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        v[lo] = x0 - alpha;
        for i in lo + 1..n {
            v[i] = m[i * n + k];
        }
        let vtv = v[lo] * v[lo] + sigma;
        Reflector {
            v,
            p,
            beta: 2.0 / vtv,
            alpha,
            trivial: false,
        }
    }
}

/// `p = A[lo.., lo..] · v` reading only the lower triangle.
fn symv_lower(m: &[f64], n: usize, lo: usize, v: &[f64], p: &mut [f64]) {
    p.iter_mut().for_each(|x| *x = 0.0);
    for i in lo..n {
        let row = &m[i * n + lo..i * n + i];
        let vi = v[i];
        let mut acc = 0.0;
        for ((a, vj), pj) in row.iter().zip(&v[lo..i]).zip(&mut p[lo..i]) {
            acc += a * vj;
            *pj += a * vi;
        }
        p[i] += acc + m[i * n + i] * vi;
    }
}

/// Applies the rank-2 update to one row segment and accumulates the next matvec.
/// Returns the row's dot product with `vn` over the segment.
#[allow(clippy::too_many_arguments)]
#[inline]
fn fused_row(
    row: &mut [f64],
    w: &[f64],
    v: &[f64],
    vn: &[f64],
    pn: &mut [f64],
    vi: f64,
    wi: f64,
    vni: f64,
) -> f64 {
    let len = row.len();
    let mut acc = [0.0f64; 4];
    let chunks = len / 4 * 4;
    let mut j = 0;
    while j < chunks {
        for l in 0..4 {
            let a = row[j + l] - (vi * w[j + l] + wi * v[j + l]);
            row[j + l] = a;
            acc[l] += a * vn[j + l];
            pn[j + l] += a * vni;
        }
        j += 4;
    }
    let mut tail = 0.0;
    while j < len {
        let a = row[j] - (vi * w[j] + wi * v[j]);
        row[j] = a;
        tail += a * vn[j];
        pn[j] += a * vni;
        j += 1;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Number of eigenvalues `≤ x` of the symmetric tridiagonal `(diag, off)`.
pub fn sturm_count_le(diag: &[f64], off: &[f64], x: f64) -> usize {
    let scale = diag.iter().chain(off).fold(x.abs(), |acc, v| acc.max(v.abs()));
    sturm_count_guarded(diag, off, x, f64::EPSILON * scale.max(f64::MIN_POSITIVE))
}

/// Pivots with magnitude below `guard` are pushed to `±guard` (zero counts as negative).
fn sturm_count_guarded(diag: &[f64], off: &[f64], x: f64, guard: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for (i, &d) in diag.iter().enumerate() {
        q = if i == 0 {
            d - x
        } else {
            d - x - off[i - 1] * off[i - 1] / q
        };
        if q <= 0.0 {
            count += 1;
            if q > -guard {
                q = -guard;
            }
        } else if q < guard {
            q = guard;
        }
    }
    count
}

/// Exact count of eigenvalues in `(a, b]`; zero when `a ≥ b`.
pub fn count_eigs_in_interval(diag: &[f64], off: &[f64], a: f64, b: f64) -> usize {
    if a >= b {
        return 0;
    }
    sturm_count_le(diag, off, b).saturating_sub(sturm_count_le(diag, off, a))
}

/// All eigenvalues in ascending order by Sturm bisection.
pub fn tridiagonal_eigenvalues(diag: &[f64], off: &[f64]) -> Vec<f64> {
    let n = diag.len();
    if n == 0 {
        return vec![];
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let left = if i > 0 { off[i - 1].abs() } else { 0.0 };
        let right = if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - left - right);
        hi = hi.max(diag[i] + left + right);
    }
    let pad = (hi - lo).abs().max(1.0) * 1e-3;
    lo -= pad;
    hi += pad;

    let width = hi - lo;
    let guard = f64::EPSILON * lo.abs().max(hi.abs());
    let mut out = Vec::with_capacity(n);
    let mut floor = lo;
    for k in 0..n {
        // smallest x with count_le(x) ≥ k + 1
        let (mut a, mut b) = (floor, hi);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b || b - a <= f64::EPSILON * (2.0 * a.abs().max(b.abs()) + width) {
                break;
            }
            if sturm_count_guarded(diag, off, mid, guard) > k {
                b = mid;
            } else {
                a = mid;
            }
        }
        let val = 0.5 * (a + b);
        out.push(val);
        floor = a;
    }
    out
}

/// Which rows of the eigenvector matrix `Z` to accumulate during QL.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TridiagonalVectors {
    None,
    /// Last components only (Ritz residual estimates).
    LastRow,
    Full,
}

/// Implicit-shift QL. Returns eigenvalues (unsorted) and the requested rows of
/// `Z`, where column `j` of `Z` is the eigenvector of eigenvalue `j`.
pub fn tridiagonal_eigen(
    diag: &[f64],
    off: &[f64],
    vectors: TridiagonalVectors,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    let mut z: Vec<Vec<f64>> = match vectors {
        TridiagonalVectors::None => vec![],
        TridiagonalVectors::LastRow => {
            let mut row = vec![0.0; n];
            if n > 0 {
                row[n - 1] = 1.0;
            }
            vec![row]
        }
        TridiagonalVectors::Full => (0..n)
            .map(|i| {
                let mut row = vec![0.0; n];
                row[i] = 1.0;
                row
            })
            .collect(),
    };

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 200 {
                break;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for row in z.iter_mut() {
                    let f = row[i + 1];
                    row[i + 1] = s * row[i] + c * f;
                    row[i] = c * row[i] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    (d, z)
}
