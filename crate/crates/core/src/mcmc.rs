//! Preconditioned Crank–Nicolson Metropolis–Hastings over innovation space.
//!
//! Each iteration proposes `Z' = rho Z + sqrt(1 - rho^2) W` with fresh `W`,
//! maps `Z'` to a guided path and accepts when `log U < log Psi' - log Psi`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backward::{solve_backward, GridMode, GuidingData, TimeGrid, DEFAULT_EPS_REG};
use crate::error::{Error, Result};
use crate::model::{DiffusionModel, LinearAuxiliary, Observation};
use crate::proposal::{simulate_guided, BridgeResult, Innovations, Path};

/// Iterations over which non-finite proposals are counted.
const DEGENERACY_WINDOW: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub rho_pcn: f64,
    pub iterations: usize,
    pub thin: usize,
    pub seed: u64,
    pub h: f64,
    pub grid_mode: GridMode,
    pub eps_reg: f64,
}

impl SamplerConfig {
    /// Config with default step `0.01`, tau grid, `thin = 100` and `eps_reg = 1e-10`.
    pub fn new(rho_pcn: f64, iterations: usize, seed: u64) -> Self {
        Self {
            rho_pcn,
            iterations,
            thin: 100,
            seed,
            h: 0.01,
            grid_mode: GridMode::Tau,
            eps_reg: DEFAULT_EPS_REG,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rho_pcn) {
            return Err(Error::InvalidInput(format!("rho_pcn must lie in [0, 1), got {}", self.rho_pcn)));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidInput("iterations must be at least 1".into()));
        }
        if self.thin == 0 {
            return Err(Error::InvalidInput("thin must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainSummary {
    pub acceptance_rate: f64,
    pub accepted: usize,
    pub iterations: usize,
    /// `log Psi_T` of the initial state.
    pub initial_log_psi: f64,
    /// `log Psi_T` of the chain state after each iteration.
    pub log_psi_trace: Vec<f64>,
    /// The initial state followed by the state after every `thin`-th iteration.
    pub stored_paths: Vec<Path>,
    pub seed: u64,
}

/// Summary statistics of a `log Psi` trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceStats {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl ChainSummary {
    pub fn log_psi_stats(&self) -> TraceStats {
        let n = self.log_psi_trace.len() as f64;
        let mean = self.log_psi_trace.iter().sum::<f64>() / n;
        let var = self.log_psi_trace.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        TraceStats {
            mean,
            sd: var.sqrt(),
            min: self.log_psi_trace.iter().cloned().fold(f64::INFINITY, f64::min),
            max: self.log_psi_trace.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// `rho Z + sqrt(1 - rho^2) W`, elementwise.
pub fn pcn_blend(z: &Innovations, w: &Innovations, rho_pcn: f64) -> Result<Innovations> {
    if z.grid() != w.grid() {
        return Err(Error::GridMismatch);
    }
    if z.noise_dim() != w.noise_dim() {
        return Err(Error::Dimension {
            what: "innovation dimension",
            expected: z.noise_dim(),
            got: w.noise_dim(),
        });
    }
    let c = (1.0 - rho_pcn * rho_pcn).sqrt();
    let blended = z
        .increments()
        .iter()
        .zip(w.increments())
        .map(|(a, b)| a * rho_pcn + b * c)
        .collect();
    Innovations::from_increments(z.grid(), blended)
}

/// Solve the backward system for `config` and run the chain.
pub fn run_chain(
    model: &DiffusionModel,
    aux: &LinearAuxiliary,
    obs: &Observation,
    config: &SamplerConfig,
) -> Result<ChainSummary> {
    config.validate()?;
    obs.check_model(model)?;
    aux.check_compatible(model)?;
    let grid = TimeGrid::new(config.grid_mode, obs.horizon(), config.h)?;
    let gd = solve_backward(aux, obs, &grid, config.eps_reg)?;
    run_chain_with(model, &gd, obs.start(), config)
}

/// Run the chain on an existing backward solution; the grid fields of `config` are ignored.
pub fn run_chain_with(
    model: &DiffusionModel,
    gd: &GuidingData,
    x0: &DVector<f64>,
    config: &SamplerConfig,
) -> Result<ChainSummary> {
    config.validate()?;
    let grid = gd.grid();
    let noise_dim = model.noise_dim();
    let mut innov_rng = ChaCha8Rng::seed_from_u64(config.seed);
    innov_rng.set_stream(0);
    let mut unif_rng = ChaCha8Rng::seed_from_u64(config.seed);
    unif_rng.set_stream(1);

    let mut z = Innovations::sample(grid, noise_dim, &mut innov_rng);
    let mut current: BridgeResult = simulate_guided(model, gd, x0, &z)?;
    let initial_log_psi = current.log_psi;

    let mut stored_paths = vec![current.path.clone()];
    let mut log_psi_trace = Vec::with_capacity(config.iterations);
    let mut accepted = 0usize;
    let mut non_finite = 0usize;
    let window = DEGENERACY_WINDOW.min(config.iterations);

    for it in 1..=config.iterations {
        let w = Innovations::sample(grid, noise_dim, &mut innov_rng);
        let proposal = pcn_blend(&z, &w, config.rho_pcn)?;
        let u: f64 = unif_rng.random();
        match simulate_guided(model, gd, x0, &proposal) {
            Ok(res) => {
                if u.ln() < res.log_psi - current.log_psi {
                    z = proposal;
                    current = res;
                    accepted += 1;
                }
            }
            Err(e) if e.is_numerical() => {
                if it <= window {
                    non_finite += 1;
                }
            }
            Err(e) => return Err(e),
        }
        if it == window && 2 * non_finite > window {
            return Err(Error::DegenerateChain {
                non_finite,
                checked: window,
            });
        }
        log_psi_trace.push(current.log_psi);
        if it % config.thin == 0 {
            stored_paths.push(current.path.clone());
        }
    }

    Ok(ChainSummary {
        acceptance_rate: accepted as f64 / config.iterations as f64,
        accepted,
        iterations: config.iterations,
        initial_log_psi,
        log_psi_trace,
        stored_paths,
        seed: config.seed,
    })
}
