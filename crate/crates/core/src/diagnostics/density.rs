use std::f64::consts::PI;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::backward::{solve_backward, GridMode, GuidingData, TimeGrid};
use crate::error::{Error, Result};
use crate::model::{DiffusionModel, LinearAuxiliary, Observation};
use crate::proposal::{simulate_forward, simulate_guided, Innovations};

/// Ridge added to the variance of the importance density.
const Q_RIDGE: f64 = 1e-8;
/// Smallest forward-sample variance accepted for the importance density.
const MIN_Q_VARIANCE: f64 = 1e-12;
/// Bin range half-width in forward-sample standard deviations.
const RANGE_SDS: f64 = 5.0;

/// Where the auxiliary process for an importance draw `v` comes from.
#[derive(Clone, Copy)]
pub enum AuxiliarySource<'a> {
    /// One auxiliary for all values; the backward solve is reused.
    Fixed(&'a LinearAuxiliary),
    /// An auxiliary that depends on the observed value; re-solved per draw.
    PerValue(&'a (dyn Fn(f64) -> LinearAuxiliary + Sync)),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationConfig {
    pub n_forward: usize,
    pub n_is: usize,
    pub bins: usize,
    pub seed: u64,
    pub h: f64,
    pub grid_mode: GridMode,
    /// Terminal regularization of the guided proposals; also the variance of
    /// the Gaussian noise added to forward endpoints.
    pub eps_reg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramEstimate {
    pub bin_edges: Vec<f64>,
    pub masses: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub n_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationResult {
    pub forward: HistogramEstimate,
    pub is_weighted: HistogramEstimate,
    pub tv_distance: f64,
    pub q_mean: f64,
    pub q_sd: f64,
    /// Importance draws whose guided path failed numerically (weight 0).
    pub failed_draws: usize,
}

impl HistogramEstimate {
    pub fn bins(&self) -> usize {
        self.masses.len()
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn bin_of(edges: &[f64], v: f64) -> Option<usize> {
    let k = edges.len() - 1;
    if !(v >= edges[0] && v < edges[k]) {
        return None;
    }
    let width = (edges[k] - edges[0]) / k as f64;
    Some((((v - edges[0]) / width) as usize).min(k - 1))
}

/// Compare the forward histogram of `L X_T` with the importance-sampling
/// estimate built from guided proposals,
/// `rho(v) ~ rho~(0, x0; T, v) Psi_T / q(v)` for `v ~ q`.
///
/// Requires a scalar observation.
pub fn density_validation(
    model: &DiffusionModel,
    aux: AuxiliarySource<'_>,
    obs_template: &Observation,
    config: &ValidationConfig,
) -> Result<ValidationResult> {
    obs_template.check_model(model)?;
    if obs_template.obs_dim() != 1 {
        return Err(Error::InvalidInput(format!(
            "density validation needs a scalar observation, got dimension {}",
            obs_template.obs_dim()
        )));
    }
    if config.n_forward < 2 || config.n_is < 1 || config.bins < 1 {
        return Err(Error::InvalidInput("need n_forward >= 2, n_is >= 1 and bins >= 1".into()));
    }
    if let AuxiliarySource::Fixed(a) = aux {
        a.check_compatible(model)?;
    }
    let grid = TimeGrid::new(config.grid_mode, obs_template.horizon(), config.h)?;
    let x0 = obs_template.start();
    let l = obs_template.matrix();
    let noise_sd = config.eps_reg.sqrt();
    let d_noise = model.noise_dim();

    let forward: Vec<f64> = (0..config.n_forward)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut rng = rng_for(config.seed, 2 * i as u64);
            let innov = Innovations::sample(&grid, d_noise, &mut rng);
            let path = simulate_forward(model, x0, &innov)?;
            let z: f64 = StandardNormal.sample(&mut rng);
            Ok((l * path.last())[0] + noise_sd * z)
        })
        .collect::<Result<_>>()?;

    let n_f = forward.len() as f64;
    let mean = forward.iter().sum::<f64>() / n_f;
    let var = forward.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_f - 1.0);
    if !(var >= MIN_Q_VARIANCE) {
        return Err(Error::DegenerateImportanceDensity { variance: var });
    }
    let sd = var.sqrt();
    let q_var = var + Q_RIDGE;
    let q_sd = q_var.sqrt();

    let k = config.bins;
    let (lo, hi) = (mean - RANGE_SDS * sd, mean + RANGE_SDS * sd);
    let edges: Vec<f64> = (0..=k).map(|j| lo + (hi - lo) * j as f64 / k as f64).collect();

    let mut counts = vec![0usize; k];
    for v in &forward {
        if let Some(b) = bin_of(&edges, *v) {
            counts[b] += 1;
        }
    }
    let f_mass: Vec<f64> = counts.iter().map(|&c| c as f64 / n_f).collect();
    let forward_hist = HistogramEstimate {
        std_errors: f_mass.iter().map(|p| (p * (1.0 - p) / n_f).sqrt()).collect(),
        masses: f_mass,
        bin_edges: edges.clone(),
        n_samples: config.n_forward,
    };

    let base = match aux {
        AuxiliarySource::Fixed(a) => Some(solve_backward(a, obs_template, &grid, config.eps_reg)?),
        AuxiliarySource::PerValue(_) => None,
    };
    let guided_for = |v: f64| -> Result<GuidingData> {
        match (&base, aux) {
            (Some(gd), _) => gd.with_value(DVector::from_element(1, v)),
            (None, AuxiliarySource::PerValue(factory)) => {
                let a = factory(v);
                a.check_compatible(model)?;
                solve_backward(&a, &obs_template.with_value(DVector::from_element(1, v))?, &grid, config.eps_reg)
            }
            (None, AuxiliarySource::Fixed(_)) => unreachable!("fixed auxiliaries are solved up front"),
        }
    };

    // (bin, weight) per draw; weight None marks a numerical failure
    let draws: Vec<(Option<usize>, Option<f64>)> = (0..config.n_is)
        .into_par_iter()
        .map(|j| -> Result<(Option<usize>, Option<f64>)> {
            let mut rng = rng_for(config.seed, 2 * j as u64 + 1);
            let z: f64 = StandardNormal.sample(&mut rng);
            let v = mean + q_sd * z;
            let log_q = -0.5 * ((2.0 * PI * q_var).ln() + z * z);
            let bin = bin_of(&edges, v);
            let gd = match guided_for(v) {
                Ok(gd) => gd,
                Err(e) if e.is_numerical() => return Ok((bin, None)),
                Err(e) => return Err(e),
            };
            let innov = Innovations::sample(&grid, d_noise, &mut rng);
            match simulate_guided(model, &gd, x0, &innov) {
                Ok(res) => {
                    let log_w = gd.log_aux_density(0, x0)? + res.log_psi - log_q;
                    Ok((bin, Some(log_w.exp())))
                }
                Err(e) if e.is_numerical() => Ok((bin, None)),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let n_is = config.n_is as f64;
    let mut sums = vec![0.0; k];
    let mut sq = vec![0.0; k];
    let mut failed = 0;
    for (bin, w) in &draws {
        match (bin, w) {
            (_, None) => failed += 1,
            (Some(b), Some(w)) => {
                sums[*b] += w;
                sq[*b] += w * w;
            }
            (None, Some(_)) => {}
        }
    }
    let is_mass: Vec<f64> = sums.iter().map(|s| s / n_is).collect();
    let is_se = is_mass
        .iter()
        .zip(&sq)
        .map(|(m, s2)| ((s2 / n_is - m * m).max(0.0) / (n_is - 1.0).max(1.0)).sqrt())
        .collect();
    let tv = 0.5
        * forward_hist
            .masses
            .iter()
            .zip(&is_mass)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();

    Ok(ValidationResult {
        forward: forward_hist,
        is_weighted: HistogramEstimate {
            bin_edges: edges,
            masses: is_mass,
            std_errors: is_se,
            n_samples: config.n_is,
        },
        tv_distance: tv,
        q_mean: mean,
        q_sd,
        failed_draws: failed,
    })
}

impl ValidationResult {
    /// CSV with columns `bin_left,bin_right,forward_mass,is_mass`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        use crate::output::fmt_f64;
        writeln!(out, "bin_left,bin_right,forward_mass,is_mass")?;
        let e = &self.forward.bin_edges;
        for i in 0..self.forward.bins() {
            writeln!(
                out,
                "{},{},{},{}",
                fmt_f64(e[i]),
                fmt_f64(e[i + 1]),
                fmt_f64(self.forward.masses[i]),
                fmt_f64(self.is_weighted.masses[i])
            )?;
        }
        Ok(())
    }
}
