//! Euler–Maruyama simulation of guided proposals and of the unconditioned process.
//!
//! The guided proposal solves `dX = [b + a r~](t, X) dt + sigma(t, X) dW` with
//! `r~` taken from the backward solve at the left knot of each interval. Along
//! the path the log-likelihood ratio
//! `log Psi = sum_i G(t_i, X_i) (t_{i+1} - t_i)` is accumulated, where
//! `G = (b - b~)' r~ - 1/2 tr([a - a~][H~ - r~ r~'])`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::backward::{GuidingData, TimeGrid};
use crate::error::{Error, Result};
use crate::model::DiffusionModel;

/// Wiener increments, one per grid interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Innovations {
    grid: TimeGrid,
    increments: Vec<DVector<f64>>,
}

impl Innovations {
    /// Fresh increments `dW_i ~ N(0, (t_{i+1} - t_i) I)`.
    pub fn sample<R: Rng + ?Sized>(grid: &TimeGrid, noise_dim: usize, rng: &mut R) -> Self {
        let increments = (0..grid.intervals())
            .map(|i| {
                let sd = grid.step(i).sqrt();
                DVector::from_fn(noise_dim, |_, _| sd * rng.sample::<f64, _>(StandardNormal))
            })
            .collect();
        Self {
            grid: grid.clone(),
            increments,
        }
    }

    /// All-zero increments.
    pub fn zeros(grid: &TimeGrid, noise_dim: usize) -> Self {
        Self {
            grid: grid.clone(),
            increments: vec![DVector::zeros(noise_dim); grid.intervals()],
        }
    }

    pub fn from_increments(grid: &TimeGrid, increments: Vec<DVector<f64>>) -> Result<Self> {
        if increments.len() != grid.intervals() {
            return Err(Error::Dimension {
                what: "innovation count",
                expected: grid.intervals(),
                got: increments.len(),
            });
        }
        if let Some(first) = increments.first() {
            if increments.iter().any(|w| w.len() != first.len()) {
                return Err(Error::InvalidInput("increments must share one dimension".into()));
            }
        }
        Ok(Self {
            grid: grid.clone(),
            increments,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn increments(&self) -> &[DVector<f64>] {
        &self.increments
    }

    pub fn noise_dim(&self) -> usize {
        self.increments.first().map_or(0, |w| w.len())
    }
}

/// States at every grid knot.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    grid: TimeGrid,
    states: Vec<DVector<f64>>,
}

impl Path {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn state(&self, i: usize) -> &DVector<f64> {
        &self.states[i]
    }

    pub fn last(&self) -> &DVector<f64> {
        &self.states[self.states.len() - 1]
    }
}

/// A guided path and its log-likelihood ratio `log Psi_T`.
#[derive(Clone, Debug, PartialEq)]
pub struct BridgeResult {
    pub path: Path,
    pub log_psi: f64,
}

fn check_inputs(model: &DiffusionModel, x0: &DVector<f64>, innov: &Innovations) -> Result<()> {
    if x0.len() != model.dim() {
        return Err(Error::Dimension {
            what: "initial state",
            expected: model.dim(),
            got: x0.len(),
        });
    }
    if innov.noise_dim() != model.noise_dim() && innov.grid.intervals() > 0 {
        return Err(Error::Dimension {
            what: "innovation dimension",
            expected: model.noise_dim(),
            got: innov.noise_dim(),
        });
    }
    Ok(())
}

/// `(a - a~)` and `r~` contracted into the integrand `G` at knot `k`.
fn weight_terms(
    gd: &GuidingData,
    k: usize,
    x: &DVector<f64>,
    b: &DVector<f64>,
    a: &DMatrix<f64>,
    r: &DVector<f64>,
) -> Result<f64> {
    let h = gd.htilde(k)?;
    let db = b - gd.aux_drift(k, x);
    let da = a - gd.aux_diffusivity(k);
    let inner = h - r * r.transpose();
    // both factors are symmetric, so tr(A B) is the elementwise product sum
    Ok(db.dot(r) - 0.5 * da.component_mul(&inner).sum())
}

/// `G(t_k, x) = (b - b~)' r~ - 1/2 tr([a - a~][H~ - r~ r~'])`, with the auxiliary
/// coefficients cached in `gd`.
pub fn guiding_weight(model: &DiffusionModel, gd: &GuidingData, k: usize, x: &DVector<f64>) -> Result<f64> {
    let t = gd.grid().knots()[k.min(gd.grid().intervals())];
    let r = gd.guiding_r(k, x)?;
    let b = model.drift(t, x);
    let a = model.diffusivity(t, x);
    weight_terms(gd, k, x, &b, &a, &r)
}

/// Guided Euler–Maruyama path from `x0` driven by `innov`, with `log Psi_T`.
pub fn simulate_guided(
    model: &DiffusionModel,
    gd: &GuidingData,
    x0: &DVector<f64>,
    innov: &Innovations,
) -> Result<BridgeResult> {
    if innov.grid() != gd.grid() {
        return Err(Error::GridMismatch);
    }
    if gd.state_dim() != model.dim() {
        return Err(Error::Dimension {
            what: "guiding state dimension",
            expected: model.dim(),
            got: gd.state_dim(),
        });
    }
    check_inputs(model, x0, innov)?;
    let knots = gd.grid().knots();
    let mut states = Vec::with_capacity(knots.len());
    states.push(x0.clone());
    let mut log_psi = 0.0;
    for (i, dw) in innov.increments().iter().enumerate() {
        let t = knots[i];
        let dt = knots[i + 1] - t;
        let x = &states[i];
        let sigma = model.dispersion(t, x);
        let a = &sigma * sigma.transpose();
        let b = model.drift(t, x);
        let r = gd.guiding_r(i, x)?;
        log_psi += weight_terms(gd, i, x, &b, &a, &r)? * dt;
        let next = x + (b + &a * &r) * dt + sigma * dw;
        if next.iter().any(|z| !z.is_finite()) {
            return Err(Error::non_finite(i + 1, &next));
        }
        states.push(next);
    }
    if !log_psi.is_finite() {
        return Err(Error::NonFiniteLogPsi);
    }
    Ok(BridgeResult {
        path: Path {
            grid: gd.grid().clone(),
            states,
        },
        log_psi,
    })
}

/// Plain Euler–Maruyama path of the target diffusion.
pub fn simulate_forward(model: &DiffusionModel, x0: &DVector<f64>, innov: &Innovations) -> Result<Path> {
    check_inputs(model, x0, innov)?;
    let knots = innov.grid().knots();
    let mut states = Vec::with_capacity(knots.len());
    states.push(x0.clone());
    for (i, dw) in innov.increments().iter().enumerate() {
        let t = knots[i];
        let dt = knots[i + 1] - t;
        let x = &states[i];
        let next = x + model.drift(t, x) * dt + model.dispersion(t, x) * dw;
        if next.iter().any(|z| !z.is_finite()) {
            return Err(Error::non_finite(i + 1, &next));
        }
        states.push(next);
    }
    Ok(Path {
        grid: innov.grid().clone(),
        states,
    })
}

/// `v - L x_N`.
pub fn endpoint_residual(gd: &GuidingData, path: &Path) -> DVector<f64> {
    gd.value() - gd.observation_matrix() * path.last()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backward::{solve_backward, GridMode};
    use crate::model::{catalog, Observation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_obs(v: f64, horizon: f64, x0: f64) -> Observation {
        Observation::new(
            DMatrix::identity(1, 1),
            DVector::from_element(1, v),
            horizon,
            DVector::from_element(1, x0),
        )
        .unwrap()
    }

    #[test]
    fn zero_innovations_follow_the_guiding_ode() {
        let (model, aux) = catalog::brownian(1);
        let (v, x0) = (2.0, -1.0);
        let obs = scalar_obs(v, 1.0, x0);
        let grid = TimeGrid::new(GridMode::Uniform, 1.0, 1e-4).unwrap();
        let gd = solve_backward(&aux, &obs, &grid, 1e-10).unwrap();
        let res = simulate_guided(&model, &gd, obs.start(), &Innovations::zeros(&grid, 1)).unwrap();
        let mid = grid.nearest_index(0.5);
        let t = grid.knots()[mid];
        let expect = v - (v - x0) * (1.0 - t);
        assert!((res.path.state(mid)[0] - expect).abs() <= 1e-3);
        assert_eq!(res.path.state(0)[0], x0);
        assert_eq!(res.log_psi, 0.0);
    }

    #[test]
    fn forward_brownian_telescopes() {
        let (model, _) = catalog::brownian(1);
        let grid = TimeGrid::new(GridMode::Tau, 1.0, 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let innov = Innovations::sample(&grid, 1, &mut rng);
        let path = simulate_forward(&model, &DVector::from_element(1, 0.25), &innov).unwrap();
        let sum: f64 = innov.increments().iter().map(|w| w[0]).sum();
        assert!((path.last()[0] - (0.25 + sum)).abs() < 1e-12);
    }

    #[test]
    fn forward_without_noise_or_drift_is_constant() {
        let model = DiffusionModel::new(
            "still",
            2,
            1,
            |_, _| DVector::zeros(2),
            |_, _| DMatrix::zeros(2, 1),
        );
        let grid = TimeGrid::new(GridMode::Uniform, 1.0, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let innov = Innovations::sample(&grid, 1, &mut rng);
        let x0 = DVector::from_vec(vec![1.5, -2.0]);
        let path = simulate_forward(&model, &x0, &innov).unwrap();
        assert!(path.states().iter().all(|x| x == &x0));
    }

    #[test]
    fn constant_drift_mismatch_weight() {
        // b - b~ = (0, c), a = a~, so G = c r~_2
        let c = 0.7;
        let (model, aux) = catalog::integrated_diffusion(1.0, catalog::constant_nonlinearity(c));
        let obs = Observation::new(
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![1.0, 0.5]),
            1.0,
            DVector::zeros(2),
        )
        .unwrap();
        let grid = TimeGrid::new(GridMode::Tau, 1.0, 0.01).unwrap();
        let gd = solve_backward(&aux, &obs, &grid, 1e-10).unwrap();
        for k in [0, 20, 77] {
            let x = DVector::from_vec(vec![0.3, -0.2 + k as f64 * 0.01]);
            let g = guiding_weight(&model, &gd, k, &x).unwrap();
            let r2 = gd.guiding_r(k, &x).unwrap()[1];
            assert!((g - c * r2).abs() <= 1e-10 * (1.0 + (c * r2).abs()));
        }
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let (model, aux) = catalog::brownian(1);
        let obs = scalar_obs(0.0, 1.0, 0.0);
        let g1 = TimeGrid::new(GridMode::Tau, 1.0, 0.1).unwrap();
        let g2 = TimeGrid::new(GridMode::Uniform, 1.0, 0.1).unwrap();
        let gd = solve_backward(&aux, &obs, &g1, 1e-10).unwrap();
        let err = simulate_guided(&model, &gd, obs.start(), &Innovations::zeros(&g2, 1)).unwrap_err();
        assert!(matches!(err, Error::GridMismatch));
    }

    #[test]
    fn non_finite_state_reports_knot() {
        let model = DiffusionModel::new(
            "blowup",
            1,
            1,
            |_, x: &DVector<f64>| x.map(|z| z * z * 1e200),
            |_, _| DMatrix::identity(1, 1),
        );
        let grid = TimeGrid::new(GridMode::Uniform, 1.0, 0.1).unwrap();
        let err = simulate_forward(&model, &DVector::from_element(1, 1e100), &Innovations::zeros(&grid, 1)).unwrap_err();
        assert!(matches!(err, Error::NonFiniteState { knot: 1, .. }), "{err}");
    }

    #[test]
    fn residual_of_exact_hit_is_zero() {
        let (model, aux) = catalog::brownian(1);
        let obs = scalar_obs(0.4, 1.0, 0.4);
        let grid = TimeGrid::new(GridMode::Uniform, 1.0, 0.1).unwrap();
        let gd = solve_backward(&aux, &obs, &grid, 1e-10).unwrap();
        let res = simulate_guided(&model, &gd, obs.start(), &Innovations::zeros(&grid, 1)).unwrap();
        assert_eq!(endpoint_residual(&gd, &res.path)[0], 0.0);
    }
}
