//! Independent reference computations for the integration and acceptance tests.
#![allow(dead_code, clippy::too_many_arguments)]

use nalgebra::{DMatrix, DVector};

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.iter().map(|x| x.abs()).sum::<f64>().max(1e-300);
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    let s = a * scale;
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..=24 {
        term = &term * &s / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// `int_0^u e^{B s} a e^{B' s} ds` via the block exponential
/// `exp([[-B, a], [0, B']] u) = [[., F12], [0, F22]]`, integral `= F22' F12`.
pub fn gramian(b: &DMatrix<f64>, a: &DMatrix<f64>, u: f64) -> DMatrix<f64> {
    let d = b.nrows();
    let mut c = DMatrix::zeros(2 * d, 2 * d);
    c.view_mut((0, 0), (d, d)).copy_from(&(-b));
    c.view_mut((0, d), (d, d)).copy_from(a);
    c.view_mut((d, d), (d, d)).copy_from(&b.transpose());
    let e = expm(&(c * u));
    let f12 = e.view((0, d), (d, d)).into_owned();
    let f22 = e.view((d, d), (d, d)).into_owned();
    let g = f22.transpose() * f12;
    (&g + g.transpose()) * 0.5
}

/// `int_0^u e^{B s} beta ds` via `exp([[B, beta], [0, 0]] u)`.
pub fn offset_integral(b: &DMatrix<f64>, beta: &DVector<f64>, u: f64) -> DVector<f64> {
    let d = b.nrows();
    let mut c = DMatrix::zeros(d + 1, d + 1);
    c.view_mut((0, 0), (d, d)).copy_from(b);
    c.view_mut((0, d), (d, 1)).copy_from(beta);
    let e = expm(&(c * u));
    e.view((0, d), (d, 1)).into_owned().column(0).into_owned()
}

/// Backward quantities for constant coefficients at remaining time `u`:
/// `(L e^{B u}, L G(u) L' + eps I, L int e^{Bs} beta)`.
pub fn exact_backward(
    l: &DMatrix<f64>,
    b: &DMatrix<f64>,
    beta: &DVector<f64>,
    a: &DMatrix<f64>,
    u: f64,
    eps: f64,
) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let m = l.nrows();
    let lt = l * expm(&(b * u));
    let mdag = l * gramian(b, a, u) * l.transpose() + DMatrix::identity(m, m) * eps;
    let mu = l * offset_integral(b, beta, u);
    (lt, mdag, mu)
}

/// Law of `X_s` given `L X_T + N(0, eps I) = v` for `dX = B X dt + sigma dW`, `X_0 = x0`.
/// Returns `(mean, covariance)`, using dense inverses.
pub fn linear_bridge_marginal(
    b: &DMatrix<f64>,
    a: &DMatrix<f64>,
    l: &DMatrix<f64>,
    x0: &DVector<f64>,
    v: &DVector<f64>,
    s: f64,
    horizon: f64,
    eps: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let beta = DVector::zeros(b.nrows());
    linear_bridge_marginal_with_offset(b, &beta, a, l, x0, v, s, horizon, eps)
}

/// As [`linear_bridge_marginal`] for `dX = (B X + beta) dt + sigma dW`.
pub fn linear_bridge_marginal_with_offset(
    b: &DMatrix<f64>,
    beta: &DVector<f64>,
    a: &DMatrix<f64>,
    l: &DMatrix<f64>,
    x0: &DVector<f64>,
    v: &DVector<f64>,
    s: f64,
    horizon: f64,
    eps: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let m = l.nrows();
    let mean_s = expm(&(b * s)) * x0 + offset_integral(b, beta, s);
    let mean_t = expm(&(b * horizon)) * x0 + offset_integral(b, beta, horizon);
    let q_s = gramian(b, a, s);
    let q_t = gramian(b, a, horizon);
    // Cov(X_s, X_T) = Q(s) e^{B'(T - s)}
    let c_st = &q_s * expm(&(b.transpose() * (horizon - s)));
    let s_obs = l * &q_t * l.transpose() + DMatrix::identity(m, m) * eps;
    let s_inv = s_obs.try_inverse().expect("observation covariance is invertible");
    let k = &c_st * l.transpose() * &s_inv;
    let mean = mean_s + &k * (v - l * mean_t);
    let cov = q_s - &k * l * c_st.transpose();
    (mean, cov)
}

/// Mean and covariance of a sample of vectors.
pub fn sample_moments(samples: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n = samples.len() as f64;
    let d = samples[0].len();
    let mean = samples.iter().fold(DVector::zeros(d), |acc, x| acc + x) / n;
    let cov = samples
        .iter()
        .fold(DMatrix::zeros(d, d), |acc, x| acc + (x - &mean) * (x - &mean).transpose())
        / (n - 1.0);
    (mean, cov)
}

/// Log-density of `N(mean, cov)` at `0`, using an explicit inverse and determinant.
pub fn gaussian_log_density_at_zero(mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let m = mean.len() as f64;
    let inv = cov.clone().try_inverse().expect("covariance is invertible");
    let q = (mean.transpose() * inv * mean)[(0, 0)];
    -0.5 * (m * (2.0 * std::f64::consts::PI).ln() + cov.determinant().ln() + q)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Complementary error function (Numerical Recipes `erfcc`, relative error < 1.2e-7).
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398 + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277)))))))))
            .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

pub fn column(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v)
}

pub fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}
