//! Guided proposals for diffusion bridges conditioned on a linear endpoint
//! observation `V = L X_T`.
//!
//! The crate covers the target and auxiliary models ([`model`]), the backward
//! ODE solve for the guiding term ([`backward`]), Euler–Maruyama simulation of
//! guided and forward paths with the log-likelihood ratio ([`proposal`]), a
//! preconditioned Crank–Nicolson sampler ([`mcmc`]), numerical diagnostics
//! ([`diagnostics`]) and the command-line driver ([`cli`]).

// NaN-rejecting checks are written as `!(x >= y)`
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backward;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod mcmc;
pub mod model;
pub mod output;
pub mod proposal;

pub use backward::{solve_backward, GridMode, GuidingData, TimeGrid, DEFAULT_EPS_REG};
pub use error::{Error, Result};
pub use mcmc::{pcn_blend, run_chain, ChainSummary, SamplerConfig};
pub use model::{controllability_rank, DiffusionModel, LinearAuxiliary, Observation};
pub use proposal::{
    endpoint_residual, guiding_weight, simulate_forward, simulate_guided, BridgeResult, Innovations, Path,
};
