//! Numerical checks of the guiding construction: scaling assumptions, endpoint
//! convergence rates, observation-density validation and a comparison of two
//! guiding terms.

mod assumption;
mod density;
mod marchand;
mod rate;

pub use assumption::{check_assumption, AssumptionReport, AuditOptions, Verdict};
pub use density::{density_validation, AuxiliarySource, HistogramEstimate, ValidationConfig, ValidationResult};
pub use marchand::{marchand_closed_form, marchand_guidings};
pub use rate::endpoint_rate_stat;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponents `delta_i >= 0` of `Delta(t) = diag((T - t)^{-delta_i})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSpec {
    pub exponents: Vec<f64>,
}

impl ScalingSpec {
    pub fn new(exponents: Vec<f64>) -> Result<Self> {
        if exponents.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "scaling exponents must be finite and non-negative, got {exponents:?}"
            )));
        }
        Ok(Self { exponents })
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    /// Diagonal of `Delta(t)` at remaining time `u = T - t > 0`.
    pub fn diagonal(&self, u: f64) -> DVector<f64> {
        DVector::from_iterator(self.exponents.len(), self.exponents.iter().map(|d| u.powf(-d)))
    }

    pub(crate) fn check_dim(&self, m: usize) -> Result<()> {
        if self.dim() != m {
            return Err(Error::Dimension {
                what: "scaling exponents",
                expected: m,
                got: self.dim(),
            });
        }
        Ok(())
    }
}

/// Least-squares slope of `y` against `x`.
pub(crate) fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Linearly interpolated empirical quantile, `p` in `[0, 1]`.
pub(crate) fn quantile(values: &mut [f64], p: f64) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let pos = p * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    values[lo] + (pos - lo as f64) * (values[hi] - values[lo])
}
