use nalgebra::DVector;

use super::{quantile, ScalingSpec};
use crate::backward::GuidingData;
use crate::error::{Error, Result};
use crate::proposal::Path;

/// 95th percentile over `paths` of
/// `max_t |Delta(t)(v - mu(t) - L(t) x_t)| / sqrt((T - t) log(1/(T - t)))`,
/// the maximum running over knots with `t` in `[(1 - window) T, T)`.
///
/// Knots where `(T - t) log(1/(T - t)) <= 0` are skipped.
pub fn endpoint_rate_stat(gd: &GuidingData, spec: &ScalingSpec, paths: &[Path], window: f64) -> Result<f64> {
    spec.check_dim(gd.obs_dim())?;
    if paths.is_empty() {
        return Err(Error::InvalidInput("no paths supplied".into()));
    }
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::InvalidInput(format!("window must lie in (0, 1], got {window}")));
    }
    if paths.iter().any(|p| p.grid() != gd.grid()) {
        return Err(Error::GridMismatch);
    }
    let horizon = gd.horizon();
    let knots = gd.grid().knots();
    let start = (1.0 - window) * horizon;
    let active: Vec<(usize, f64, DVector<f64>)> = (0..gd.grid().intervals())
        .filter(|&i| knots[i] >= start)
        .filter_map(|i| {
            let u = horizon - knots[i];
            let denom = u * (1.0 / u).ln();
            (denom > 0.0).then(|| (i, denom.sqrt(), spec.diagonal(u)))
        })
        .collect();
    if active.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let mut maxima: Vec<f64> = paths
        .iter()
        .map(|p| {
            active
                .iter()
                .map(|(i, denom, scale)| gd.residual(*i, p.state(*i)).component_mul(scale).norm() / denom)
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(quantile(&mut maxima, 0.95))
}
