//! Target diffusions, linear auxiliary processes and the endpoint observation.
//!
//! A [`DiffusionModel`] is the SDE `dX = b(t, X) dt + sigma(t, X) dW` on `R^d`
//! driven by a `d'`-dimensional Wiener process. A [`LinearAuxiliary`] is the
//! tractable process `dX~ = (B~(t) X~ + beta~(t)) dt + sigma~(t) dW` whose Gaussian
//! transition densities supply the guiding term. Both are closures over their
//! parameters so user-defined models sit beside the [`catalog`].

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

pub mod catalog;

pub type DriftFn = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type DispersionFn = Arc<dyn Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
/// Scalar state nonlinearity, e.g. the rough-coordinate drift of an integrated diffusion.
pub type ScalarFn = Arc<dyn Fn(f64, &DVector<f64>) -> f64 + Send + Sync>;

type TimeMatrixFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;
type TimeVectorFn = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

/// The target SDE.
#[derive(Clone)]
pub struct DiffusionModel {
    name: String,
    dim: usize,
    noise_dim: usize,
    drift: DriftFn,
    dispersion: DispersionFn,
}

impl DiffusionModel {
    pub fn new<B, S>(name: impl Into<String>, dim: usize, noise_dim: usize, drift: B, dispersion: S) -> Self
    where
        B: Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        S: Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        assert!(dim >= 1 && noise_dim >= 1, "dimensions must be positive");
        Self {
            name: name.into(),
            dim,
            noise_dim,
            drift: Arc::new(drift),
            dispersion: Arc::new(dispersion),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// State dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Wiener dimension `d'`.
    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn drift(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        (self.drift)(t, x)
    }

    pub fn dispersion(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        (self.dispersion)(t, x)
    }

    /// `a(t, x) = sigma(t, x) sigma(t, x)'`.
    pub fn diffusivity(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        let s = self.dispersion(t, x);
        &s * s.transpose()
    }
}

impl fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .finish_non_exhaustive()
    }
}

/// Linear auxiliary process with time-dependent coefficients.
#[derive(Clone)]
pub struct LinearAuxiliary {
    dim: usize,
    noise_dim: usize,
    drift_matrix: TimeMatrixFn,
    drift_offset: TimeVectorFn,
    dispersion: TimeMatrixFn,
}

impl LinearAuxiliary {
    pub fn new<B, O, S>(dim: usize, noise_dim: usize, drift_matrix: B, drift_offset: O, dispersion: S) -> Self
    where
        B: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
        O: Fn(f64) -> DVector<f64> + Send + Sync + 'static,
        S: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self {
            dim,
            noise_dim,
            drift_matrix: Arc::new(drift_matrix),
            drift_offset: Arc::new(drift_offset),
            dispersion: Arc::new(dispersion),
        }
    }

    /// Constant-coefficient auxiliary.
    pub fn constant(b: DMatrix<f64>, beta: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let d = b.nrows();
        if b.ncols() != d {
            return Err(Error::Dimension {
                what: "auxiliary drift matrix columns",
                expected: d,
                got: b.ncols(),
            });
        }
        if beta.len() != d {
            return Err(Error::Dimension {
                what: "auxiliary drift offset",
                expected: d,
                got: beta.len(),
            });
        }
        if sigma.nrows() != d {
            return Err(Error::Dimension {
                what: "auxiliary dispersion rows",
                expected: d,
                got: sigma.nrows(),
            });
        }
        let noise_dim = sigma.ncols();
        Ok(Self::new(
            d,
            noise_dim,
            move |_| b.clone(),
            move |_| beta.clone(),
            move |_| sigma.clone(),
        ))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    /// `B~(t)`.
    pub fn drift_matrix(&self, t: f64) -> DMatrix<f64> {
        (self.drift_matrix)(t)
    }

    /// `beta~(t)`.
    pub fn drift_offset(&self, t: f64) -> DVector<f64> {
        (self.drift_offset)(t)
    }

    /// `sigma~(t)`.
    pub fn dispersion(&self, t: f64) -> DMatrix<f64> {
        (self.dispersion)(t)
    }

    /// `a~(t) = sigma~(t) sigma~(t)'`.
    pub fn diffusivity(&self, t: f64) -> DMatrix<f64> {
        let s = self.dispersion(t);
        &s * s.transpose()
    }

    /// `b~(t, x) = B~(t) x + beta~(t)`.
    pub fn drift(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        self.drift_matrix(t) * x + self.drift_offset(t)
    }

    /// Check that the auxiliary has the same state dimension as `model`.
    pub fn check_compatible(&self, model: &DiffusionModel) -> Result<()> {
        if self.dim != model.dim() {
            return Err(Error::Dimension {
                what: "auxiliary state dimension",
                expected: model.dim(),
                got: self.dim,
            });
        }
        Ok(())
    }
}

impl fmt::Debug for LinearAuxiliary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearAuxiliary")
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .finish_non_exhaustive()
    }
}

/// Linear endpoint observation `v = L x_T` of a path started at `x0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    l: DMatrix<f64>,
    v: DVector<f64>,
    horizon: f64,
    x0: DVector<f64>,
}

impl Observation {
    pub fn new(l: DMatrix<f64>, v: DVector<f64>, horizon: f64, x0: DVector<f64>) -> Result<Self> {
        let (m, d) = l.shape();
        if m == 0 || m > d {
            return Err(Error::InvalidInput(format!(
                "observation matrix must have 1..={d} rows, got {m}"
            )));
        }
        if v.len() != m {
            return Err(Error::Dimension {
                what: "observed value",
                expected: m,
                got: v.len(),
            });
        }
        if x0.len() != d {
            return Err(Error::Dimension {
                what: "initial state",
                expected: d,
                got: x0.len(),
            });
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidInput(format!("horizon must be positive, got {horizon}")));
        }
        if l.iter().chain(v.iter()).chain(x0.iter()).any(|z| !z.is_finite()) {
            return Err(Error::InvalidInput("observation contains non-finite entries".into()));
        }
        let rank = linalg::numeric_rank(&l);
        if rank < m {
            return Err(Error::RankDeficient { rank, rows: m });
        }
        Ok(Self { l, v, horizon, x0 })
    }

    /// Same observation operator, horizon and start, different observed value.
    pub fn with_value(&self, v: DVector<f64>) -> Result<Self> {
        Self::new(self.l.clone(), v, self.horizon, self.x0.clone())
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn value(&self) -> &DVector<f64> {
        &self.v
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn start(&self) -> &DVector<f64> {
        &self.x0
    }

    /// Number of observed linear combinations `m`.
    pub fn obs_dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.l.ncols()
    }

    pub fn check_model(&self, model: &DiffusionModel) -> Result<()> {
        if model.dim() != self.state_dim() {
            return Err(Error::Dimension {
                what: "observation matrix columns",
                expected: model.dim(),
                got: self.state_dim(),
            });
        }
        Ok(())
    }
}

/// Numeric rank of the controllability matrix `[s, B s, ..., B^{d-1} s]`
/// with `B = B~(t)`, `s = sigma~(t)`.
///
/// Rank `d` certifies that the auxiliary has non-degenerate Gaussian
/// transition densities when its coefficients are constant.
pub fn controllability_rank(aux: &LinearAuxiliary, t: f64) -> usize {
    let b = aux.drift_matrix(t);
    let s = aux.dispersion(t);
    let d = aux.dim();
    let k = s.ncols();
    let mut c = DMatrix::zeros(d, d * k);
    let mut block = s;
    for j in 0..d {
        c.columns_mut(j * k, k).copy_from(&block);
        block = &b * block;
    }
    linalg::numeric_rank(&c)
}
