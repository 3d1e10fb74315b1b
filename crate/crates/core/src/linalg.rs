//! Internal dense/sparse linear algebra helpers.
//!
//! The edge-correlation matrix can reach dimension N(N-1)/2 (thousands), so
//! its factorization uses a blocked right-looking Cholesky with a GEMM
//! trailing update; everything block-parameter sized (MxM) goes through
//! nalgebra's symmetric eigendecomposition.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// In-place blocked Cholesky of a symmetric positive definite matrix stored
/// row-major in `a` (n x n). On success the lower triangle holds L with
/// `A = L L^T`; the strict upper triangle is left stale.
pub(crate) fn blocked_cholesky(a: &mut [f64], n: usize) -> Result<()> {
    const BLOCK: usize = 128;
    assert_eq!(a.len(), n * n);
    let mut k = 0usize;
    while k < n {
        let kb = BLOCK.min(n - k);
        // Unblocked factorization of the diagonal block.
        for j in k..k + kb {
            let mut d = a[j * n + j];
            for p in k..j {
                d -= a[j * n + p] * a[j * n + p];
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::Numerical(format!(
                    "cholesky failed at pivot {j}: leading minor not positive definite (d = {d:.3e})"
                )));
            }
            let d = d.sqrt();
            a[j * n + j] = d;
            let inv = 1.0 / d;
            for i in j + 1..k + kb {
                let mut s = a[i * n + j];
                for p in k..j {
                    s -= a[i * n + p] * a[j * n + p];
                }
                a[i * n + j] = s * inv;
            }
        }
        let rest = k + kb;
        if rest < n {
            // Panel solve: L21 = A21 L11^{-T}.
            for i in rest..n {
                for j in k..k + kb {
                    let mut s = a[i * n + j];
                    for p in k..j {
                        s -= a[i * n + p] * a[j * n + p];
                    }
                    a[i * n + j] = s / a[j * n + j];
                }
            }
            // Trailing update: A22 -= L21 L21^T.
            let m = n - rest;
            let mut panel = vec![0.0f64; m * kb];
            for i in 0..m {
                panel[i * kb..(i + 1) * kb]
                    .copy_from_slice(&a[(rest + i) * n + k..(rest + i) * n + k + kb]);
            }
            unsafe {
                matrixmultiply::dgemm(
                    m,
                    kb,
                    m,
                    -1.0,
                    panel.as_ptr(),
                    kb as isize,
                    1,
                    panel.as_ptr(),
                    1,
                    kb as isize,
                    1.0,
                    a.as_mut_ptr().add(rest * n + rest),
                    n as isize,
                    1,
                );
            }
        }
        k += kb;
    }
    Ok(())
}

/// y = L x for a lower-triangular factor stored row-major in `l` (strict
/// upper triangle ignored).
pub(crate) fn lower_tri_matvec(l: &[f64], n: usize, x: &[f64], y: &mut [f64]) {
    for i in 0..n {
        let row = &l[i * n..i * n + i + 1];
        let mut s = 0.0;
        for (p, &lv) in row.iter().enumerate() {
            s += lv * x[p];
        }
        y[i] = s;
    }
}

/// Sparse symmetric matrix in coordinate form over the strict upper triangle.
/// The implied matrix is hollow (zero diagonal); callers add any diagonal.
#[derive(Debug, Clone, Default)]
pub(crate) struct SparseSym {
    pub dim: usize,
    pub rows: Vec<u32>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl SparseSym {
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for t in 0..self.vals.len() {
            let (i, j, v) = (self.rows[t] as usize, self.cols[t] as usize, self.vals[t]);
            y[i] += v * x[j];
            y[j] += v * x[i];
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.vals.iter_mut().for_each(|v| *v *= factor);
    }
}

/// Extremal eigenvalues (min, max) of a sparse symmetric hollow matrix via
/// Lanczos with full reorthogonalization. Deterministic given `seed`.
pub(crate) fn lanczos_extremes(op: &SparseSym, max_steps: usize, seed: u64) -> (f64, f64) {
    let n = op.dim;
    if n == 0 || op.vals.is_empty() {
        return (0.0, 0.0);
    }
    if n == 1 {
        return (0.0, 0.0);
    }
    let steps = max_steps.min(n);

    // Deterministic pseudo-random start vector.
    let mut state = seed ^ 0x9E37_79B9_7F4A_7C15;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state as f64 / u64::MAX as f64) - 0.5
    };
    let mut q: Vec<f64> = (0..n).map(|_| next()).collect();
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    q.iter_mut().for_each(|v| *v /= norm);

    let mut basis: Vec<Vec<f64>> = vec![q.clone()];
    let mut alphas: Vec<f64> = Vec::with_capacity(steps);
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0f64; n];

    for step in 0..steps {
        op.matvec(&basis[step], &mut w);
        let alpha: f64 = w.iter().zip(&basis[step]).map(|(a, b)| a * b).sum();
        alphas.push(alpha);
        for (wi, qi) in w.iter_mut().zip(&basis[step]) {
            *wi -= alpha * qi;
        }
        if step > 0 {
            let beta_prev = betas[step - 1];
            for (wi, qi) in w.iter_mut().zip(&basis[step - 1]) {
                *wi -= beta_prev * qi;
            }
        }
        // Full reorthogonalization keeps the extremal Ritz values clean.
        for q_prev in &basis {
            let c: f64 = w.iter().zip(q_prev).map(|(a, b)| a * b).sum();
            for (wi, qi) in w.iter_mut().zip(q_prev) {
                *wi -= c * qi;
            }
        }
        let beta = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if beta < 1e-13 || step + 1 == steps {
            break;
        }
        betas.push(beta);
        basis.push(w.iter().map(|v| v / beta).collect());
    }

    // Eigenvalues of the tridiagonal Ritz matrix.
    let m = alphas.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m && i < betas.len() {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = t.symmetric_eigenvalues();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in eig.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Smallest eigenvalue of a dense symmetric matrix.
pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Symmetric square root of a positive semidefinite matrix via
/// eigendecomposition; tiny negative eigenvalues are truncated at zero.
pub(crate) fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut scaled = eig.eigenvectors.clone();
    for j in 0..n {
        let s = eig.eigenvalues[j].max(0.0).sqrt();
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    &scaled * eig.eigenvectors.transpose()
}

/// Euclidean projection onto {X symmetric : X >= floor * I}: eigenvalues are
/// floored, the basis kept.
pub(crate) fn floor_eigenvalues(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut scaled = eig.eigenvectors.clone();
    for j in 0..n {
        let s = eig.eigenvalues[j].max(floor);
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    let out = &scaled * eig.eigenvectors.transpose();
    // Exact symmetry despite rounding in the reconstruction.
    let mut sym = out.clone();
    for i in 0..n {
        for j in 0..n {
            sym[(i, j)] = 0.5 * (out[(i, j)] + out[(j, i)]);
        }
    }
    sym
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn random_spd(n: usize, seed: u64) -> Vec<f64> {
        let mut state = seed | 1;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state as f64 / u64::MAX as f64) - 0.5
        };
        let mut a = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..i {
                let v = next() * 0.3 / n as f64;
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
            a[i * n + i] = 1.0;
        }
        a
    }

    #[test]
    fn blocked_cholesky_matches_nalgebra() {
        let n = 200;
        let a = random_spd(n, 42);
        let mut l = a.clone();
        blocked_cholesky(&mut l, n).unwrap();

        let am = DMatrix::from_fn(n, n, |i, j| a[i * n + j]);
        let reference = am.cholesky().unwrap();
        let lr = reference.l();
        let mut max_diff = 0.0f64;
        for i in 0..n {
            for j in 0..=i {
                max_diff = max_diff.max((l[i * n + j] - lr[(i, j)]).abs());
            }
        }
        assert!(max_diff < 1e-12, "max diff {max_diff}");
    }

    #[test]
    fn blocked_cholesky_rejects_indefinite() {
        let n = 4;
        let mut a = vec![0.0; 16];
        for i in 0..4 {
            a[i * 4 + i] = 1.0;
        }
        a[1] = 2.0;
        a[4] = 2.0; // |off| > 1 makes it indefinite
        assert!(blocked_cholesky(&mut a, n).is_err());
    }

    #[test]
    fn lower_tri_matvec_works() {
        let l = vec![2.0, 99.0, 1.0, 3.0];
        let x = vec![1.0, 2.0];
        let mut y = vec![0.0; 2];
        lower_tri_matvec(&l, 2, &x, &mut y);
        assert_eq!(y, vec![2.0, 7.0]);
    }

    #[test]
    fn lanczos_matches_dense_extremes() {
        let n = 80;
        let mut op = SparseSym { dim: n, ..Default::default() };
        let mut state = 7u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state as f64 / u64::MAX as f64) - 0.5
        };
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                if next() > 0.2 {
                    let v = next();
                    op.rows.push(i as u32);
                    op.cols.push(j as u32);
                    op.vals.push(v);
                    dense[(i, j)] = v;
                    dense[(j, i)] = v;
                }
            }
        }
        let (lo, hi) = lanczos_extremes(&op, 80, 1);
        let eigs = dense.symmetric_eigenvalues();
        let lo_ref = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi_ref = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_abs_diff_eq!(lo, lo_ref, epsilon = 1e-8);
        assert_abs_diff_eq!(hi, hi_ref, epsilon = 1e-8);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.0]);
        let s = psd_sqrt(&a);
        let back = &s * &s;
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(back[(i, j)], a[(i, j)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn floor_eigenvalues_projects() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.999, 0.999, 1.0]);
        let f = floor_eigenvalues(&a, 0.01);
        assert!(min_eigenvalue(&f) >= 0.01 - 1e-12);
        // already-feasible input passes through
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0]);
        let fb = floor_eigenvalues(&b, 1e-6);
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(fb[(i, j)], b[(i, j)], epsilon = 1e-12);
            }
        }
    }
}
