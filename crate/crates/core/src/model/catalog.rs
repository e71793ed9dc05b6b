//! Benchmark models, each paired with the auxiliary process that satisfies
//! the matching conditions for guided proposals.
//!
//! Models of the form `b(t, x) = B x + (0, beta(t, x))`, `sigma = (0, gamma)'`
//! are paired with `B~ = B`, `beta~ = 0`, `sigma~ = sigma`. Matching `B~` on the
//! smooth coordinates is what keeps `L_Delta(t) (b~ - b)` bounded as `t -> T`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{DiffusionModel, LinearAuxiliary, ScalarFn};
use crate::error::{Error, Result};

/// `beta(t, x) = 0`.
pub fn zero_nonlinearity() -> ScalarFn {
    Arc::new(|_, _| 0.0)
}

/// `beta(t, x) = c`.
pub fn constant_nonlinearity(c: f64) -> ScalarFn {
    Arc::new(move |_, _| c)
}

/// `beta(t, x) = amplitude * sin(frequency * x[index])`.
pub fn sine_nonlinearity(amplitude: f64, frequency: f64, index: usize) -> ScalarFn {
    Arc::new(move |_, x| amplitude * (frequency * x[index]).sin())
}

/// The multi-well nonlinearity `-6 sin(2 pi x_1)` used with NLCAR(3).
pub fn nlcar_wells() -> ScalarFn {
    sine_nonlinearity(-6.0, 2.0 * PI, 0)
}

fn column(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(values.len(), 1, values)
}

/// Standard Brownian motion in `R^dim`; the auxiliary is the process itself.
pub fn brownian(dim: usize) -> (DiffusionModel, LinearAuxiliary) {
    let model = DiffusionModel::new(
        "brownian",
        dim,
        dim,
        move |_, _| DVector::zeros(dim),
        move |_, _| DMatrix::identity(dim, dim),
    );
    let aux = LinearAuxiliary::constant(
        DMatrix::zeros(dim, dim),
        DVector::zeros(dim),
        DMatrix::identity(dim, dim),
    )
    .expect("shapes are consistent");
    (model, aux)
}

/// Linear SDE `dX = (B X + beta) dt + sigma dW` with the matching auxiliary.
///
/// Guided proposals are exact for this model: the likelihood ratio is identically one.
pub fn linear(
    name: &str,
    b: DMatrix<f64>,
    beta: DVector<f64>,
    sigma: DMatrix<f64>,
) -> Result<(DiffusionModel, LinearAuxiliary)> {
    let aux = LinearAuxiliary::constant(b.clone(), beta.clone(), sigma.clone())?;
    let d = b.nrows();
    let noise_dim = sigma.ncols();
    let model = DiffusionModel::new(
        name,
        d,
        noise_dim,
        move |_, x| &b * x + &beta,
        move |_, _| sigma.clone(),
    );
    Ok((model, aux))
}

/// Integrated diffusion: `dX1 = X2 dt`, `dX2 = beta(t, X) dt + gamma dW`.
pub fn integrated_diffusion(gamma: f64, beta: ScalarFn) -> (DiffusionModel, LinearAuxiliary) {
    let sigma = column(&[0.0, gamma]);
    let s = sigma.clone();
    let model = DiffusionModel::new(
        "integrated_diffusion",
        2,
        1,
        move |t, x| DVector::from_vec(vec![x[1], beta(t, x)]),
        move |_, _| s.clone(),
    );
    let aux = LinearAuxiliary::constant(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        DVector::zeros(2),
        sigma,
    )
    .expect("shapes are consistent");
    (model, aux)
}

/// NLCAR(3): third-order chain `X1' = X2`, `X2' = X3`, `dX3 = beta(t, X) dt + gamma dW`.
///
/// The auxiliary uses the chain matrix with `beta~ = 0`.
pub fn nlcar3(gamma: f64, beta: ScalarFn) -> (DiffusionModel, LinearAuxiliary) {
    let sigma = column(&[0.0, 0.0, gamma]);
    let s = sigma.clone();
    let model = DiffusionModel::new(
        "nlcar3",
        3,
        1,
        move |t, x| DVector::from_vec(vec![x[1], x[2], beta(t, x)]),
        move |_, _| s.clone(),
    );
    let aux = LinearAuxiliary::constant(
        DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]),
        DVector::zeros(3),
        sigma,
    )
    .expect("shapes are consistent");
    (model, aux)
}

/// Parameters of the stochastic FitzHugh–Nagumo model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FhnParams {
    pub eps: f64,
    pub s: f64,
    pub gamma: f64,
    pub beta: f64,
    pub sigma: f64,
}

impl Default for FhnParams {
    /// `(eps, s, gamma, beta, sigma) = (0.1, 0, 1.5, 0.8, 0.3)`.
    fn default() -> Self {
        Self {
            eps: 0.1,
            s: 0.0,
            gamma: 1.5,
            beta: 0.8,
            sigma: 0.3,
        }
    }
}

/// Hypo-elliptic FitzHugh–Nagumo model
/// `dX1 = (X1 - X2 - X1^3 + s) / eps dt`, `dX2 = (gamma X1 - X2 + beta) dt + sigma dW`.
///
/// The auxiliary linearizes the cubic at `v_lin` using `-x^3 ~ 2 a^3 - 3 a^2 x`,
/// which is exact in value at `x1 = v_lin`.
pub fn fitzhugh_nagumo(p: FhnParams, v_lin: f64) -> Result<(DiffusionModel, LinearAuxiliary)> {
    if p.eps == 0.0 || !p.eps.is_finite() {
        return Err(Error::InvalidInput("FitzHugh-Nagumo eps must be non-zero".into()));
    }
    let FhnParams {
        eps,
        s,
        gamma,
        beta,
        sigma,
    } = p;
    let disp = column(&[0.0, sigma]);
    let d2 = disp.clone();
    let model = DiffusionModel::new(
        "fitzhugh_nagumo",
        2,
        1,
        move |_, x| {
            let x1 = x[0];
            DVector::from_vec(vec![
                (x1 - x[1] - x1 * x1 * x1 + s) / eps,
                gamma * x1 - x[1] + beta,
            ])
        },
        move |_, _| d2.clone(),
    );
    let b = DMatrix::from_row_slice(
        2,
        2,
        &[(1.0 - 3.0 * v_lin * v_lin) / eps, -1.0 / eps, gamma, -1.0],
    );
    let offset = DVector::from_vec(vec![(2.0 * v_lin.powi(3) + s) / eps, beta]);
    let aux = LinearAuxiliary::constant(b, offset, disp)?;
    Ok((model, aux))
}

/// Dispersion variants of the nonlinear two-dimensional benchmark.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Nonlinear2dVariant {
    /// `sigma = (0, 2)'`, auxiliary matches exactly.
    ConstantSigma,
    /// `sigma(t, x) = (0, 2 + cos(x2) / 2)'`, auxiliary frozen at `sigma(0, (0, 0))`.
    StateSigmaX2,
    /// `sigma(t, x) = (0, 2 + cos(x1 + x2) / 2)'`, auxiliary matched at the
    /// observed value `v` of `L x = x1 + x2`.
    StateSigmaLx { v: f64 },
}

/// Nonlinear hypo-elliptic 2d system:
/// `b(t, x) = B x + (0, sin(t/4)/2) + (0, sin(x2)/2)` with `B = [[-1, 1], [0, -1]] / 10`.
/// The auxiliary drops the `sin(x2)/2` term.
pub fn nonlinear2d(variant: Nonlinear2dVariant) -> (DiffusionModel, LinearAuxiliary) {
    let b = DMatrix::from_row_slice(2, 2, &[-0.1, 0.1, 0.0, -0.1]);
    let offset = |t: f64| DVector::from_vec(vec![0.0, 0.5 * (t / 4.0).sin()]);
    let bm = b.clone();
    let drift = move |t: f64, x: &DVector<f64>| {
        let mut y = &bm * x + offset(t);
        y[1] += 0.5 * x[1].sin();
        y
    };
    let (name, dispersion, aux_sigma): (&str, super::DispersionFn, DMatrix<f64>) = match variant {
        Nonlinear2dVariant::ConstantSigma => (
            "nonlinear2d_constant_sigma",
            Arc::new(|_, _| column(&[0.0, 2.0])),
            column(&[0.0, 2.0]),
        ),
        Nonlinear2dVariant::StateSigmaX2 => (
            "nonlinear2d_state_sigma_x2",
            Arc::new(|_, x| column(&[0.0, 2.0 + 0.5 * x[1].cos()])),
            column(&[0.0, 2.5]),
        ),
        Nonlinear2dVariant::StateSigmaLx { v } => (
            "nonlinear2d_state_sigma_lx",
            Arc::new(|_, x| column(&[0.0, 2.0 + 0.5 * (x[0] + x[1]).cos()])),
            column(&[0.0, 2.0 + 0.5 * v.cos()]),
        ),
    };
    let model = DiffusionModel::new(name, 2, 1, drift, move |t, x| dispersion(t, x));
    let aux = LinearAuxiliary::new(
        2,
        1,
        move |_| b.clone(),
        offset,
        move |_| aux_sigma.clone(),
    );
    (model, aux)
}

/// Parameters of the FM-demodulation model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FmParams {
    pub alpha: f64,
    pub gamma: f64,
    pub omega: f64,
    pub psi: f64,
}

/// FM demodulation: `dX1 = X2 dt`, `dX2 = -alpha X2 dt + sqrt(2 gamma alpha) dW1`,
/// `dX3 = sqrt(2 gamma) sin(omega t + X1) dt + psi dW2`; observed through `L = [0 0 1]`.
pub fn fm_demodulation(p: FmParams) -> (DiffusionModel, LinearAuxiliary) {
    let FmParams {
        alpha,
        gamma,
        omega,
        psi,
    } = p;
    let b = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, -alpha, 0.0, 0.0, 0.0, 0.0]);
    let sigma = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, (2.0 * gamma * alpha).sqrt(), 0.0, 0.0, psi]);
    let amp = (2.0 * gamma).sqrt();
    let bm = b.clone();
    let s = sigma.clone();
    let model = DiffusionModel::new(
        "fm_demodulation",
        3,
        2,
        move |t, x| {
            let mut y = &bm * x;
            y[2] += amp * (omega * t + x[0]).sin();
            y
        },
        move |_, _| s.clone(),
    );
    let aux = LinearAuxiliary::constant(b, DVector::zeros(3), sigma).expect("shapes are consistent");
    (model, aux)
}

/// Planar particle tracking: positions `(X1, X2)` integrate velocities `(X3, X4)`,
/// which follow `d(X3, X4) = (beta3, beta4) dt + G dW` with
/// `G = [[g1, g2], [g3, g4]]` invertible.
pub fn tracking_2d(g: [f64; 4], beta3: ScalarFn, beta4: ScalarFn) -> Result<(DiffusionModel, LinearAuxiliary)> {
    let det = g[0] * g[3] - g[1] * g[2];
    if det == 0.0 || !det.is_finite() {
        return Err(Error::InvalidInput("tracking dispersion block must be invertible".into()));
    }
    let b = DMatrix::from_row_slice(
        4,
        4,
        &[
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0, //
            0.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 0.0,
        ],
    );
    let sigma = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 0.0, 0.0, g[0], g[1], g[2], g[3]]);
    let s = sigma.clone();
    let model = DiffusionModel::new(
        "tracking_2d",
        4,
        2,
        move |t, x| DVector::from_vec(vec![x[2], x[3], beta3(t, x), beta4(t, x)]),
        move |_, _| s.clone(),
    );
    let aux = LinearAuxiliary::constant(b, DVector::zeros(4), sigma)?;
    Ok((model, aux))
}

/// Damped mechanical system `dX = [[0, 1], [0, theta]] X dt + (0, beta(t, X)) dt + (0, gamma) dW`.
pub fn hairer_stuart_voss(theta: f64, gamma: f64, beta: ScalarFn) -> Result<(DiffusionModel, LinearAuxiliary)> {
    if !(theta > 0.0) {
        return Err(Error::InvalidInput(format!("theta must be positive, got {theta}")));
    }
    let b = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, theta]);
    let sigma = column(&[0.0, gamma]);
    let s = sigma.clone();
    let model = DiffusionModel::new(
        "hairer_stuart_voss",
        2,
        1,
        move |t, x| DVector::from_vec(vec![x[1], theta * x[1] + beta(t, x)]),
        move |_, _| s.clone(),
    );
    let aux = LinearAuxiliary::constant(b, DVector::zeros(2), sigma)?;
    Ok((model, aux))
}

/// Integrated-diffusion drift with noise on both coordinates, `sigma = (1, 1)'`;
/// outside the class where the drift must lie in the range of the dispersion.
pub fn non_delyon_hu(beta: ScalarFn) -> (DiffusionModel, LinearAuxiliary) {
    let sigma = column(&[1.0, 1.0]);
    let s = sigma.clone();
    let model = DiffusionModel::new(
        "non_delyon_hu",
        2,
        1,
        move |t, x| DVector::from_vec(vec![x[1], beta(t, x)]),
        move |_, _| s.clone(),
    );
    let aux = LinearAuxiliary::constant(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        DVector::zeros(2),
        sigma,
    )
    .expect("shapes are consistent");
    (model, aux)
}
