use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{ls_slope, ScalingSpec};
use crate::backward::{solve_backward, GridMode, TimeGrid};
use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, symmetric_eigen_range};
use crate::model::{DiffusionModel, LinearAuxiliary, Observation};

/// Tolerance on the eigenvalue slopes around `-1`.
const EIGEN_SLOPE_TOL: f64 = 0.1;
/// Smallest slope accepted as "no growth" for the bounded quantities.
const GROWTH_SLOPE_FLOOR: f64 = -0.05;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditOptions {
    /// Number of probe times, log-spaced in remaining time.
    pub t_probe_count: usize,
    /// Exponent in the bound on `L_Delta (a~ - a) L_Delta'`.
    pub alpha: f64,
    /// Remaining-time range `[lo, hi]` as fractions of `T`.
    pub remaining_range: (f64, f64),
    /// Number of base steps of the tau grid used for the backward solve.
    pub grid_steps: usize,
    /// Terminal regularization; kept far below `M+` on the probed range.
    pub eps_reg: f64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            t_probe_count: 24,
            alpha: 1.0,
            remaining_range: (1e-4, 0.5),
            grid_steps: 4000,
            eps_reg: 1e-40,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub eigen_min: bool,
    pub eigen_max: bool,
    pub c1: bool,
    pub c2: bool,
    pub c3: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionReport {
    /// Log-log slope of `lambda_min(M_Delta)` against `T - t`.
    pub slope_min: f64,
    /// Log-log slope of `lambda_max(M_Delta)` against `T - t`.
    pub slope_max: f64,
    pub slope_c1: f64,
    pub slope_c2: f64,
    pub slope_c3: f64,
    pub sup_c1: f64,
    pub sup_c2: f64,
    pub sup_c3: f64,
    pub verdict: Verdict,
    pub remaining_times: Vec<f64>,
    pub lambda_min: Vec<f64>,
    pub lambda_max: Vec<f64>,
}

/// Empirical check of the eigenvalue scaling of `M_Delta(t)` and of the three
/// bounded quantities
/// `|L_Delta (b~ - b)|`, `tr(L_Delta a L_Delta')`, `|L_Delta (a~ - a) L_Delta'| / (T - t)^alpha`
/// over the probe states.
pub fn check_assumption(
    model: &DiffusionModel,
    aux: &LinearAuxiliary,
    obs: &Observation,
    spec: &ScalingSpec,
    probes: &[DVector<f64>],
    options: &AuditOptions,
) -> Result<AssumptionReport> {
    obs.check_model(model)?;
    aux.check_compatible(model)?;
    spec.check_dim(obs.obs_dim())?;
    if probes.is_empty() {
        return Err(Error::InvalidInput("at least one probe state is required".into()));
    }
    if let Some(p) = probes.iter().find(|p| p.len() != model.dim()) {
        return Err(Error::Dimension {
            what: "probe state",
            expected: model.dim(),
            got: p.len(),
        });
    }
    let (lo, hi) = options.remaining_range;
    if !(0.0 < lo && lo < hi && hi < 1.0) || options.t_probe_count < 2 || options.grid_steps < 2 {
        return Err(Error::InvalidInput("invalid audit options".into()));
    }

    let horizon = obs.horizon();
    let grid = TimeGrid::new(GridMode::Tau, horizon, horizon / options.grid_steps as f64)?;
    let gd = solve_backward(aux, obs, &grid, options.eps_reg)?;

    let n = grid.intervals();
    let mut knots: Vec<usize> = (0..options.t_probe_count)
        .map(|j| {
            let frac = j as f64 / (options.t_probe_count - 1) as f64;
            let u = horizon * (lo.ln() + frac * (hi.ln() - lo.ln())).exp();
            grid.nearest_index(horizon - u).min(n - 1)
        })
        .collect();
    knots.sort_unstable();
    knots.dedup();

    let mut log_u = Vec::new();
    let (mut lmin, mut lmax) = (Vec::new(), Vec::new());
    let mut q = [Vec::new(), Vec::new(), Vec::new()];
    for &k in &knots {
        let t = grid.knots()[k];
        let u = horizon - t;
        let scale = spec.diagonal(u);
        let l_delta = DMatrix::from_diagonal(&scale) * gd.l_at(k);
        let scaled_mdag = DMatrix::from_fn(scale.len(), scale.len(), |i, j| {
            scale[i] * scale[j] * gd.mdag_at(k)[(i, j)]
        });
        // eigenvalues of M_Delta are reciprocals of those of Delta M+ Delta
        let (e_lo, e_hi) = symmetric_eigen_range(&scaled_mdag);
        lmin.push(1.0 / e_hi);
        lmax.push(if e_lo > 0.0 { 1.0 / e_lo } else { f64::INFINITY });
        log_u.push(u.ln());

        let mut sup = [0.0_f64; 3];
        for x in probes {
            let b = model.drift(t, x);
            let a = model.diffusivity(t, x);
            let db = gd.aux_drift(k, x) - b;
            let da = gd.aux_diffusivity(k) - &a;
            sup[0] = sup[0].max((&l_delta * db).norm());
            sup[1] = sup[1].max((&l_delta * &a * l_delta.transpose()).trace());
            sup[2] = sup[2].max(spectral_norm(&(&l_delta * da * l_delta.transpose())) / u.powf(options.alpha));
        }
        for (qi, s) in q.iter_mut().zip(sup) {
            qi.push(s);
        }
    }

    let slope_of = |vals: &[f64]| -> f64 {
        if vals.iter().any(|v| !v.is_finite()) {
            return f64::NAN;
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = log_u
            .iter()
            .zip(vals)
            .filter(|(_, &v)| v > 0.0)
            .map(|(&x, &v)| (x, v.ln()))
            .unzip();
        // an identically vanishing quantity has no trend
        if xs.len() < 2 {
            0.0
        } else {
            ls_slope(&xs, &ys)
        }
    };
    let slope_min = slope_of(&lmin);
    let slope_max = slope_of(&lmax);
    let slopes: Vec<f64> = q.iter().map(|v| slope_of(v)).collect();
    let sups: Vec<f64> = q.iter().map(|v| v.iter().cloned().fold(0.0, f64::max)).collect();

    let eigen_ok = |s: f64| (s + 1.0).abs() <= EIGEN_SLOPE_TOL;
    let bounded = |i: usize| sups[i].is_finite() && slopes[i] >= GROWTH_SLOPE_FLOOR;
    let mut verdict = Verdict {
        eigen_min: eigen_ok(slope_min),
        eigen_max: eigen_ok(slope_max),
        c1: bounded(0),
        c2: bounded(1),
        c3: bounded(2),
        pass: false,
    };
    verdict.pass = verdict.eigen_min && verdict.eigen_max && verdict.c1 && verdict.c2 && verdict.c3;

    Ok(AssumptionReport {
        slope_min,
        slope_max,
        slope_c1: slopes[0],
        slope_c2: slopes[1],
        slope_c3: slopes[2],
        sup_c1: sups[0],
        sup_c2: sups[1],
        sup_c3: sups[2],
        verdict,
        remaining_times: log_u.iter().map(|l| l.exp()).collect(),
        lambda_min: lmin,
        lambda_max: lmax,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::catalog;

    fn probes2() -> Vec<DVector<f64>> {
        vec![
            DVector::from_vec(vec![0.0, 0.0]),
            DVector::from_vec(vec![1.0, -2.0]),
            DVector::from_vec(vec![-0.5, 3.0]),
        ]
    }

    #[test]
    fn integrated_diffusion_partial_observation_passes() {
        let (model, aux) = catalog::integrated_diffusion(1.0, catalog::zero_nonlinearity());
        let obs = Observation::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DVector::from_element(1, 1.0),
            1.0,
            DVector::zeros(2),
        )
        .unwrap();
        let spec = ScalingSpec::new(vec![1.0]).unwrap();
        let r = check_assumption(&model, &aux, &obs, &spec, &probes2(), &AuditOptions::default()).unwrap();
        assert!(r.verdict.pass, "{r:?}");
        assert!((r.slope_min + 1.0).abs() < 0.05);
        // M_Delta is close to 3 (T - t)^{-1}
        for (u, l) in r.remaining_times.iter().zip(&r.lambda_min) {
            if *u < 1e-2 {
                assert!((l * u / 3.0 - 1.0).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn exponent_length_must_match() {
        let (model, aux) = catalog::integrated_diffusion(1.0, catalog::zero_nonlinearity());
        let obs = Observation::new(DMatrix::identity(2, 2), DVector::zeros(2), 1.0, DVector::zeros(2)).unwrap();
        let spec = ScalingSpec::new(vec![1.0]).unwrap();
        assert!(check_assumption(&model, &aux, &obs, &spec, &probes2(), &AuditOptions::default()).is_err());
    }
}
