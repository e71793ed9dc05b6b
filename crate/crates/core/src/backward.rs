//! Backward ODEs for the guiding term.
//!
//! For an auxiliary `(B~, beta~, sigma~)` and observation `L x_T = v` the system
//!
//! ```text
//! dL(t)   = -L(t) B~(t) dt,            L(T)   = L
//! dM+(t)  = -L(t) a~(t) L(t)' dt,      M+(T)  = eps_reg I
//! dmu(t)  = -L(t) beta~(t) dt,         mu(T)  = 0
//! ```
//!
//! is integrated from `T` back to `0` with one classical Runge–Kutta step per
//! grid interval. From it `r~(t, x) = L(t)' M(t) (v - mu(t) - L(t) x)` with
//! `M = (M+)^{-1}`, `H~(t) = L(t)' M(t) L(t)`, and the auxiliary observation
//! density `rho~(t, x) = N(0; v - mu(t) - L(t) x, M+(t))`.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetrize, SpdFactor};
use crate::model::{LinearAuxiliary, Observation};

/// Terminal regularization of `M+(T)`.
pub const DEFAULT_EPS_REG: f64 = 1e-10;

/// How knots are placed on `[0, T]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridMode {
    /// `tau(s) = s (2 - s/T)` applied to `s_i = i h`: steps shrink toward `T`.
    #[default]
    Tau,
    Uniform,
}

/// Strictly increasing knots `0 = t_0 < ... < t_N = T`.
#[derive(Clone, Debug)]
pub struct TimeGrid {
    knots: Arc<[f64]>,
}

impl PartialEq for TimeGrid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.knots, &other.knots) || self.knots == other.knots
    }
}

impl TimeGrid {
    /// Grid with base step `h`; `0 < h < T`.
    pub fn new(mode: GridMode, horizon: f64, h: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidInput(format!("horizon must be positive, got {horizon}")));
        }
        if !(h > 0.0) || h >= horizon {
            return Err(Error::InvalidInput(format!(
                "base step must satisfy 0 < h < T, got h = {h}, T = {horizon}"
            )));
        }
        let ratio = horizon / h;
        let nearest = ratio.round();
        let steps = if (ratio - nearest).abs() <= 1e-9 * ratio {
            nearest as usize
        } else {
            ratio.floor() as usize + 1
        };
        let mut knots = Vec::with_capacity(steps + 1);
        for i in 0..steps {
            let s = i as f64 * h;
            let t = match mode {
                GridMode::Uniform => s,
                GridMode::Tau => s * (2.0 - s / horizon),
            };
            knots.push(t);
        }
        knots.push(horizon);
        // rounding can leave a sliver interval just before T
        let min_gap = 1e-12 * horizon;
        while knots.len() > 2 && knots[knots.len() - 1] - knots[knots.len() - 2] <= min_gap {
            let n = knots.len();
            knots.remove(n - 2);
        }
        Self::from_knots(knots)
    }

    pub fn from_knots(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidInput("a grid needs at least two knots".into()));
        }
        if knots[0] != 0.0 {
            return Err(Error::InvalidInput("the first knot must be 0".into()));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::InvalidInput("knots must be finite and strictly increasing".into()));
        }
        Ok(Self { knots: knots.into() })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn horizon(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// Number of knots, `N + 1`.
    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of intervals, `N`.
    pub fn intervals(&self) -> usize {
        self.knots.len() - 1
    }

    /// `t_{i+1} - t_i`.
    pub fn step(&self, i: usize) -> f64 {
        self.knots[i + 1] - self.knots[i]
    }

    /// Index of the knot closest to `t`.
    pub fn nearest_index(&self, t: f64) -> usize {
        let k = self.knots.partition_point(|&s| s < t);
        if k == 0 {
            return 0;
        }
        if k >= self.knots.len() {
            return self.knots.len() - 1;
        }
        if (self.knots[k] - t).abs() < (t - self.knots[k - 1]).abs() {
            k
        } else {
            k - 1
        }
    }
}

#[derive(Clone, Debug)]
struct Knot {
    l: DMatrix<f64>,
    mdag: DMatrix<f64>,
    mu: DVector<f64>,
    factor: Option<SpdFactor>,
    htilde: Option<DMatrix<f64>>,
    aux_b: DMatrix<f64>,
    aux_beta: DVector<f64>,
    aux_a: DMatrix<f64>,
}

/// Solution of the backward system on a grid, plus the auxiliary coefficients
/// evaluated at every knot.
///
/// `L(t)`, `M+(t)` and `mu(t)` do not depend on the observed value `v`, so
/// [`GuidingData::with_value`] rebinds `v` without re-solving.
#[derive(Clone, Debug)]
pub struct GuidingData {
    grid: TimeGrid,
    v: DVector<f64>,
    eps_reg: f64,
    knots: Arc<Vec<Knot>>,
}

struct Derivative {
    l: DMatrix<f64>,
    mdag: DMatrix<f64>,
    mu: DVector<f64>,
}

struct AuxAt {
    b: DMatrix<f64>,
    beta: DVector<f64>,
    a: DMatrix<f64>,
}

impl AuxAt {
    fn eval(aux: &LinearAuxiliary, t: f64) -> Self {
        Self {
            b: aux.drift_matrix(t),
            beta: aux.drift_offset(t),
            a: aux.diffusivity(t),
        }
    }

    // derivatives with respect to remaining time T - t
    fn rhs(&self, l: &DMatrix<f64>) -> Derivative {
        Derivative {
            l: l * &self.b,
            mdag: l * &self.a * l.transpose(),
            mu: l * &self.beta,
        }
    }
}

/// Integrate the backward system on `grid`.
///
/// `eps_reg >= 0` sets `M+(T) = eps_reg I`. Positive definiteness is enforced
/// at every knot before `T`; the terminal knot is exempt when `eps_reg = 0`.
pub fn solve_backward(
    aux: &LinearAuxiliary,
    obs: &Observation,
    grid: &TimeGrid,
    eps_reg: f64,
) -> Result<GuidingData> {
    if grid.horizon() != obs.horizon() {
        return Err(Error::InvalidInput(format!(
            "grid ends at {} but the observation horizon is {}",
            grid.horizon(),
            obs.horizon()
        )));
    }
    if aux.dim() != obs.state_dim() {
        return Err(Error::Dimension {
            what: "auxiliary state dimension",
            expected: obs.state_dim(),
            got: aux.dim(),
        });
    }
    if !(eps_reg >= 0.0) || !eps_reg.is_finite() {
        return Err(Error::InvalidInput(format!("eps_reg must be non-negative, got {eps_reg}")));
    }
    let m = obs.obs_dim();
    let t = grid.knots();
    let n = grid.intervals();

    let mut l = obs.matrix().clone();
    let mut mdag = DMatrix::identity(m, m) * eps_reg;
    let mut mu = DVector::zeros(m);

    let mut at_right = AuxAt::eval(aux, t[n]);
    let mut knots: Vec<Option<Knot>> = vec![None; n + 1];
    knots[n] = Some(make_knot(n, t[n], &l, &mdag, &mu, &at_right, eps_reg > 0.0)?);

    for i in (0..n).rev() {
        let dt = t[i + 1] - t[i];
        let half = 0.5 * dt;
        let at_mid = AuxAt::eval(aux, t[i + 1] - half);
        let at_left = AuxAt::eval(aux, t[i]);

        let k1 = at_right.rhs(&l);
        let k2 = at_mid.rhs(&(&l + &k1.l * half));
        let k3 = at_mid.rhs(&(&l + &k2.l * half));
        let k4 = at_left.rhs(&(&l + &k3.l * dt));

        let w = dt / 6.0;
        l += (&k1.l + (&k2.l + &k3.l) * 2.0 + &k4.l) * w;
        mdag += (&k1.mdag + (&k2.mdag + &k3.mdag) * 2.0 + &k4.mdag) * w;
        mu += (&k1.mu + (&k2.mu + &k3.mu) * 2.0 + &k4.mu) * w;
        symmetrize(&mut mdag);

        knots[i] = Some(make_knot(i, t[i], &l, &mdag, &mu, &at_left, true)?);
        at_right = at_left;
    }

    Ok(GuidingData {
        grid: grid.clone(),
        v: obs.value().clone(),
        eps_reg,
        knots: Arc::new(knots.into_iter().map(|k| k.expect("every knot is filled")).collect()),
    })
}

fn make_knot(
    index: usize,
    time: f64,
    l: &DMatrix<f64>,
    mdag: &DMatrix<f64>,
    mu: &DVector<f64>,
    aux: &AuxAt,
    require_definite: bool,
) -> Result<Knot> {
    if l.iter().chain(mdag.iter()).chain(mu.iter()).any(|z| !z.is_finite()) {
        return Err(Error::NotPositiveDefinite { knot: index, time });
    }
    let factor = if require_definite {
        Some(SpdFactor::new(mdag).ok_or(Error::NotPositiveDefinite { knot: index, time })?)
    } else {
        None
    };
    let htilde = factor.as_ref().map(|f| {
        let mut h = l.transpose() * f.solve_matrix(l);
        symmetrize(&mut h);
        h
    });
    Ok(Knot {
        l: l.clone(),
        mdag: mdag.clone(),
        mu: mu.clone(),
        factor,
        htilde,
        aux_b: aux.b.clone(),
        aux_beta: aux.beta.clone(),
        aux_a: aux.a.clone(),
    })
}

impl GuidingData {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    /// Observed value `v`.
    pub fn value(&self) -> &DVector<f64> {
        &self.v
    }

    pub fn eps_reg(&self) -> f64 {
        self.eps_reg
    }

    pub fn obs_dim(&self) -> usize {
        self.v.len()
    }

    pub fn state_dim(&self) -> usize {
        self.knots[0].l.ncols()
    }

    /// The observation matrix `L = L(T)`.
    pub fn observation_matrix(&self) -> &DMatrix<f64> {
        &self.knots[self.knots.len() - 1].l
    }

    /// Same backward solution, different observed value.
    ///
    /// Valid only when the auxiliary does not itself depend on `v`.
    pub fn with_value(&self, v: DVector<f64>) -> Result<Self> {
        if v.len() != self.v.len() {
            return Err(Error::Dimension {
                what: "observed value",
                expected: self.v.len(),
                got: v.len(),
            });
        }
        Ok(Self {
            grid: self.grid.clone(),
            v,
            eps_reg: self.eps_reg,
            knots: Arc::clone(&self.knots),
        })
    }

    pub fn l_at(&self, i: usize) -> &DMatrix<f64> {
        &self.knots[i].l
    }

    pub fn mdag_at(&self, i: usize) -> &DMatrix<f64> {
        &self.knots[i].mdag
    }

    pub fn mu_at(&self, i: usize) -> &DVector<f64> {
        &self.knots[i].mu
    }

    /// Explicit `M(t_i) = M+(t_i)^{-1}`, for inspection only.
    pub fn m_at(&self, i: usize) -> Result<DMatrix<f64>> {
        let m = self.obs_dim();
        Ok(self.factor(i)?.solve_matrix(&DMatrix::identity(m, m)))
    }

    /// `B~(t_i)`.
    pub fn aux_drift_matrix(&self, i: usize) -> &DMatrix<f64> {
        &self.knots[i].aux_b
    }

    /// `beta~(t_i)`.
    pub fn aux_drift_offset(&self, i: usize) -> &DVector<f64> {
        &self.knots[i].aux_beta
    }

    /// `a~(t_i)`.
    pub fn aux_diffusivity(&self, i: usize) -> &DMatrix<f64> {
        &self.knots[i].aux_a
    }

    /// `b~(t_i, x)`.
    pub fn aux_drift(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        let k = &self.knots[i];
        &k.aux_b * x + &k.aux_beta
    }

    fn factor(&self, i: usize) -> Result<&SpdFactor> {
        self.knots
            .get(i)
            .and_then(|k| k.factor.as_ref())
            .ok_or_else(|| Error::InvalidInput(format!("no guiding factor at knot {i}")))
    }

    /// `v - mu(t_i) - L(t_i) x`.
    pub fn residual(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        let k = &self.knots[i];
        &self.v - &k.mu - &k.l * x
    }

    /// `r~(t_i, x) = L(t_i)' M(t_i) (v - mu(t_i) - L(t_i) x)`, via an SPD solve.
    pub fn guiding_r(&self, i: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_interior(i)?;
        let f = self.factor(i)?;
        Ok(self.knots[i].l.transpose() * f.solve(&self.residual(i, x)))
    }

    /// `H~(t_i) = L(t_i)' M(t_i) L(t_i)`.
    pub fn htilde(&self, i: usize) -> Result<&DMatrix<f64>> {
        self.check_interior(i)?;
        self.knots[i]
            .htilde
            .as_ref()
            .ok_or_else(|| Error::InvalidInput(format!("no guiding factor at knot {i}")))
    }

    /// `log rho~(t_i, x)`: log-density of `0` under `N(v - mu - L(t_i) x, M+(t_i))`.
    pub fn log_aux_density(&self, i: usize, x: &DVector<f64>) -> Result<f64> {
        self.check_interior(i)?;
        let f = self.factor(i)?;
        let res = self.residual(i, x);
        let m = res.len() as f64;
        Ok(-0.5 * (m * (2.0 * PI).ln() + f.log_det() + f.inverse_quadratic_form(&res)))
    }

    fn check_interior(&self, i: usize) -> Result<()> {
        if i >= self.grid.intervals() {
            return Err(Error::InvalidInput(format!(
                "knot index {i} is not before the terminal knot {}",
                self.grid.intervals()
            )));
        }
        Ok(())
    }

    /// CSV dump: `t`, row-major `L(t)`, row-major `M+(t)`, `mu(t)`; one row per knot.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let (m, d) = (self.obs_dim(), self.state_dim());
        let mut header = vec!["t".to_string()];
        for i in 0..m {
            for j in 0..d {
                header.push(format!("l_{}_{}", i + 1, j + 1));
            }
        }
        for i in 0..m {
            for j in 0..m {
                header.push(format!("mdag_{}_{}", i + 1, j + 1));
            }
        }
        for i in 0..m {
            header.push(format!("mu_{}", i + 1));
        }
        writeln!(out, "{}", header.join(","))?;
        for (t, k) in self.grid.knots().iter().zip(self.knots.iter()) {
            let mut row = vec![crate::output::fmt_f64(*t)];
            for i in 0..m {
                for j in 0..d {
                    row.push(crate::output::fmt_f64(k.l[(i, j)]));
                }
            }
            for i in 0..m {
                for j in 0..m {
                    row.push(crate::output::fmt_f64(k.mdag[(i, j)]));
                }
            }
            row.extend(k.mu.iter().map(|&z| crate::output::fmt_f64(z)));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}
