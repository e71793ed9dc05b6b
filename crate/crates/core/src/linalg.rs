//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Relative singular-value threshold used for numeric rank decisions.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Numeric rank: number of singular values above `RANK_TOLERANCE` times the largest.
pub fn numeric_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let largest = sv.iter().cloned().fold(0.0_f64, f64::max);
    if largest == 0.0 || !largest.is_finite() {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * largest).count()
}

/// Replace `m` by `(m + m') / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Cholesky factorization of a symmetric positive definite matrix after
/// symmetric diagonal equilibration.
///
/// `A = D S D` with `D = diag(sqrt(A_ii))`; only `S` (unit diagonal) is factored.
/// Near the horizon the entries of M-dagger span many orders of magnitude
/// (for hypo-elliptic models the smooth coordinates shrink like `(T-t)^3` or
/// faster), and the equilibrated matrix stays well conditioned where `A` is not.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    inv_scale: DVector<f64>,
    log_scale_sum: f64,
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    /// Returns `None` when `a` is not (numerically) positive definite.
    pub fn new(a: &DMatrix<f64>) -> Option<Self> {
        let n = a.nrows();
        let mut inv_scale = DVector::zeros(n);
        let mut log_scale_sum = 0.0;
        for i in 0..n {
            let d = a[(i, i)];
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let s = d.sqrt();
            inv_scale[i] = 1.0 / s;
            log_scale_sum += s.ln();
        }
        let mut scaled = a.clone();
        for i in 0..n {
            for j in 0..n {
                scaled[(i, j)] *= inv_scale[i] * inv_scale[j];
            }
        }
        symmetrize(&mut scaled);
        let chol = Cholesky::new(scaled)?;
        if chol.l_dirty().diagonal().iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return None;
        }
        Some(Self {
            inv_scale,
            log_scale_sum,
            chol,
        })
    }

    pub fn dim(&self) -> usize {
        self.inv_scale.len()
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut y = b.component_mul(&self.inv_scale);
        self.chol.solve_mut(&mut y);
        y.component_mul_assign(&self.inv_scale);
        y
    }

    /// Solve `A X = B` column by column.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = b.clone();
        for (i, mut row) in y.row_iter_mut().enumerate() {
            row *= self.inv_scale[i];
        }
        self.chol.solve_mut(&mut y);
        for (i, mut row) in y.row_iter_mut().enumerate() {
            row *= self.inv_scale[i];
        }
        y
    }

    /// `log det A`.
    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        let inner: f64 = l.diagonal().iter().map(|d| d.ln()).sum();
        2.0 * (inner + self.log_scale_sum)
    }

    /// `b' A^{-1} b`.
    pub fn inverse_quadratic_form(&self, b: &DVector<f64>) -> f64 {
        b.dot(&self.solve(b))
    }
}

/// Extreme eigenvalues `(min, max)` of a symmetric matrix.
pub fn symmetric_eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    let mut s = m.clone();
    symmetrize(&mut s);
    let ev = s.symmetric_eigenvalues();
    let min = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}
