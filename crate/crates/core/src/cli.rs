//! Command-line driver: `forward`, `bridge`, `audit` and `validate`.
//!
//! Each command reads one JSON config, writes fixed-name files into the output
//! directory and echoes the effective config into its JSON output.
//! Exit codes: 0 success, 1 I/O failure, 2 config error, 3 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::backward::{GridMode, TimeGrid, DEFAULT_EPS_REG};
use crate::diagnostics::{
    check_assumption, density_validation, AuditOptions, AuxiliarySource, ScalingSpec, ValidationConfig,
};
use crate::error::Error;
use crate::mcmc::{run_chain, SamplerConfig};
use crate::model::catalog::{self, FhnParams, FmParams, Nonlinear2dVariant};
use crate::model::{DiffusionModel, LinearAuxiliary, Observation, ScalarFn};
use crate::output::{to_sorted_json, write_paths_csv};
use crate::proposal::{simulate_forward, Innovations, Path};

pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "guided-bridge", version, about = "Guided proposals for conditioned diffusions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate unconditioned paths; writes paths.csv and summary.json.
    Forward(CommonArgs),
    /// Run the pCN bridge sampler; writes summary.json and paths.csv.
    Bridge(CommonArgs),
    /// Check the scaling assumption; writes audit.json.
    Audit(CommonArgs),
    /// Validate the observation density; writes histogram.csv and summary.json.
    Validate(CommonArgs),
}

#[derive(Args, Debug)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides every seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub observation: ObservationConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_eps_reg")]
    pub eps_reg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forward: Option<ForwardSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditSection>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    #[serde(default)]
    pub params: Map<String, Value>,
    #[serde(default)]
    pub auxiliary: AuxiliaryChoice,
}

/// `zero_drift` replaces `B~` and `beta~` by zero and keeps `sigma~`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxiliaryChoice {
    #[default]
    Matched,
    ZeroDrift,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    /// Row-major observation matrix.
    #[serde(rename = "L")]
    pub l: Vec<Vec<f64>>,
    pub v: Vec<f64>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub x0: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default)]
    pub mode: GridMode,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            h: default_h(),
            mode: GridMode::Tau,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub rho_pcn: f64,
    pub iterations: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardSection {
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSection {
    pub n_forward: usize,
    pub n_is: usize,
    pub bins: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSection {
    pub exponents: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_probe_count")]
    pub t_probe_count: usize,
    /// Probe states; defaults to `x0` and `x0 +- e_j`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<Vec<Vec<f64>>>,
}

fn default_eps_reg() -> f64 {
    DEFAULT_EPS_REG
}
fn default_h() -> f64 {
    0.01
}
fn default_thin() -> usize {
    100
}
fn default_paths() -> usize {
    1
}
fn default_alpha() -> f64 {
    1.0
}
fn default_probe_count() -> usize {
    24
}

/// Failure of a CLI command, tagged with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) => EXIT_IO,
            e if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_CONFIG,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: EXIT_IO,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parse `args` (including the program name), run the command and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(command: &Command) -> CliResult<()> {
    let (args, kind) = match command {
        Command::Forward(a) => (a, "forward"),
        Command::Bridge(a) => (a, "bridge"),
        Command::Audit(a) => (a, "audit"),
        Command::Validate(a) => (a, "validate"),
    };
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        override_seed(&mut config, seed);
    }
    match command {
        Command::Forward(_) => cmd_forward(&config, &args.out),
        Command::Bridge(_) => cmd_bridge(&config, &args.out),
        Command::Audit(_) => cmd_audit(&config, &args.out),
        Command::Validate(_) => cmd_validate(&config, &args.out),
    }
    .map_err(|e| CliError {
        message: format!("{kind}: {}", e.message),
        ..e
    })
}

pub fn load_config(path: &FsPath) -> CliResult<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("invalid config: {e}")))
}

fn override_seed(config: &mut RunConfig, seed: u64) {
    if let Some(s) = config.sampler.as_mut() {
        s.seed = seed;
    }
    if let Some(f) = config.forward.as_mut() {
        f.seed = seed;
    }
    if let Some(v) = config.validation.as_mut() {
        v.seed = seed;
    }
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> CliResult<&'a T> {
    s.as_ref()
        .ok_or_else(|| CliError::config(format!("missing config section `{name}`")))
}

fn write_outputs(out: &FsPath, files: &[(&str, Vec<u8>)]) -> CliResult<()> {
    fs::create_dir_all(out)?;
    for (name, bytes) in files {
        fs::write(out.join(name), bytes)?;
    }
    Ok(())
}

fn json_bytes(value: &Value) -> CliResult<Vec<u8>> {
    Ok(to_sorted_json(value)?.into_bytes())
}

fn config_value(config: &RunConfig) -> Value {
    serde_json::to_value(config).expect("config is serializable")
}

pub fn cmd_forward(config: &RunConfig, out: &FsPath) -> CliResult<()> {
    let fwd = section(&config.forward, "forward")?;
    let built = build(config)?;
    let grid = TimeGrid::new(config.grid.mode, built.obs.horizon(), config.grid.h)?;
    let mut rng = ChaCha8Rng::seed_from_u64(fwd.seed);
    let paths: Vec<Path> = (0..fwd.paths)
        .map(|_| {
            let innov = Innovations::sample(&grid, built.model.noise_dim(), &mut rng);
            simulate_forward(&built.model, built.obs.start(), &innov)
        })
        .collect::<Result<_, _>>()?;
    let mut csv = Vec::new();
    write_paths_csv(&mut csv, &paths)?;
    let summary = json!({
        "command": "forward",
        "config": config_value(config),
        "knots": grid.len(),
        "paths": paths.len(),
    });
    write_outputs(out, &[("paths.csv", csv), ("summary.json", json_bytes(&summary)?)])
}

pub fn cmd_bridge(config: &RunConfig, out: &FsPath) -> CliResult<()> {
    let s = section(&config.sampler, "sampler")?;
    let built = build(config)?;
    let sampler = SamplerConfig {
        rho_pcn: s.rho_pcn,
        iterations: s.iterations,
        thin: s.thin,
        seed: s.seed,
        h: config.grid.h,
        grid_mode: config.grid.mode,
        eps_reg: config.eps_reg,
    };
    let chain = run_chain(&built.model, &built.aux, &built.obs, &sampler)?;
    let mut csv = Vec::new();
    write_paths_csv(&mut csv, &chain.stored_paths)?;
    let summary = json!({
        "command": "bridge",
        "config": config_value(config),
        "acceptance_rate": chain.acceptance_rate,
        "accepted": chain.accepted,
        "iterations": chain.iterations,
        "seed": chain.seed,
        "initial_log_psi": chain.initial_log_psi,
        "log_psi": chain.log_psi_stats(),
        "stored_paths": chain.stored_paths.len(),
    });
    write_outputs(out, &[("summary.json", json_bytes(&summary)?), ("paths.csv", csv)])
}

pub fn cmd_audit(config: &RunConfig, out: &FsPath) -> CliResult<()> {
    let a = section(&config.audit, "audit")?;
    let built = build(config)?;
    if a.exponents.len() != built.obs.obs_dim() {
        return Err(CliError::config(format!(
            "audit.exponents has length {}, expected {} (rows of observation.L)",
            a.exponents.len(),
            built.obs.obs_dim()
        )));
    }
    let spec = ScalingSpec::new(a.exponents.clone())?;
    let probes = match &a.probes {
        Some(p) => p.iter().map(|x| DVector::from_column_slice(x)).collect(),
        None => default_probes(built.obs.start()),
    };
    let options = AuditOptions {
        t_probe_count: a.t_probe_count,
        alpha: a.alpha,
        ..AuditOptions::default()
    };
    let report = check_assumption(&built.model, &built.aux, &built.obs, &spec, &probes, &options)?;
    let mut value = serde_json::to_value(&report).expect("report is serializable");
    value["config"] = config_value(config);
    value["command"] = json!("audit");
    write_outputs(out, &[("audit.json", json_bytes(&value)?)])
}

pub fn cmd_validate(config: &RunConfig, out: &FsPath) -> CliResult<()> {
    let v = section(&config.validation, "validation")?;
    let built = build(config)?;
    let vc = ValidationConfig {
        n_forward: v.n_forward,
        n_is: v.n_is,
        bins: v.bins,
        seed: v.seed,
        h: config.grid.h,
        grid_mode: config.grid.mode,
        eps_reg: config.eps_reg,
    };
    let source = match &built.per_value {
        Some(f) => AuxiliarySource::PerValue(f.as_ref()),
        None => AuxiliarySource::Fixed(&built.aux),
    };
    let result = density_validation(&built.model, source, &built.obs, &vc)?;
    let mut csv = Vec::new();
    result.write_csv(&mut csv)?;
    let summary = json!({
        "command": "validate",
        "config": config_value(config),
        "tv_distance": result.tv_distance,
        "q_mean": result.q_mean,
        "q_sd": result.q_sd,
        "failed_draws": result.failed_draws,
        "forward_mass": result.forward.masses.iter().sum::<f64>(),
        "is_mass": result.is_weighted.masses.iter().sum::<f64>(),
        "forward_std_errors": result.forward.std_errors,
        "is_std_errors": result.is_weighted.std_errors,
    });
    write_outputs(out, &[("histogram.csv", csv), ("summary.json", json_bytes(&summary)?)])
}

fn default_probes(x0: &DVector<f64>) -> Vec<DVector<f64>> {
    let d = x0.len();
    let mut probes = vec![x0.clone()];
    for j in 0..d {
        for s in [1.0, -1.0] {
            let mut x = x0.clone();
            x[j] += s;
            probes.push(x);
        }
    }
    probes
}

type Factory = Arc<dyn Fn(f64) -> LinearAuxiliary + Send + Sync>;

/// Model, auxiliary and observation assembled from a config.
pub struct Built {
    pub model: DiffusionModel,
    pub aux: LinearAuxiliary,
    pub obs: Observation,
    /// Present when the auxiliary depends on the observed value.
    pub per_value: Option<Factory>,
}

pub fn build(config: &RunConfig) -> CliResult<Built> {
    let o = &config.observation;
    let m = o.l.len();
    if m == 0 {
        return Err(CliError::config("observation.L must have at least one row"));
    }
    let d = o.l[0].len();
    if o.l.iter().any(|row| row.len() != d) {
        return Err(CliError::config("observation.L rows must have equal length"));
    }
    let l = DMatrix::from_row_iterator(m, d, o.l.iter().flatten().copied());
    let obs = Observation::new(l, DVector::from_column_slice(&o.v), o.horizon, DVector::from_column_slice(&o.x0))
        .map_err(|e| CliError::config(format!("observation: {e}")))?;
    if !(config.eps_reg >= 0.0) {
        return Err(CliError::config("eps_reg must be non-negative"));
    }

    let p = Params {
        map: &config.model.params,
    };
    let name = config.model.name.as_str();
    let (model, aux, per_value): (DiffusionModel, LinearAuxiliary, Option<Factory>) = match name {
        "brownian" => {
            p.allow(&["dim"])?;
            let (m, a) = catalog::brownian(p.usize_or("dim", d)?);
            (m, a, None)
        }
        "integrated_diffusion" => {
            p.allow(&["gamma", "beta"])?;
            let (m, a) = catalog::integrated_diffusion(p.num("gamma")?, p.nonlinearity("beta")?);
            (m, a, None)
        }
        "nlcar3" => {
            p.allow(&["gamma", "beta"])?;
            let (m, a) = catalog::nlcar3(p.num("gamma")?, p.nonlinearity("beta")?);
            (m, a, None)
        }
        "fitzhugh_nagumo" => {
            p.allow(&["eps", "s", "gamma", "beta", "sigma", "v_lin"])?;
            let params = FhnParams {
                eps: p.num("eps")?,
                s: p.num("s")?,
                gamma: p.num("gamma")?,
                beta: p.num("beta")?,
                sigma: p.num("sigma")?,
            };
            let v_lin = match p.map.get("v_lin") {
                Some(_) => p.num("v_lin")?,
                None => o.v[0],
            };
            let (m, a) = catalog::fitzhugh_nagumo(params, v_lin).map_err(|e| CliError::config(format!("model.params: {e}")))?;
            (m, a, None)
        }
        "nonlinear2d" => {
            p.allow(&["variant"])?;
            let variant = p.string("variant")?;
            match variant.as_str() {
                "constant_sigma" => {
                    let (m, a) = catalog::nonlinear2d(Nonlinear2dVariant::ConstantSigma);
                    (m, a, None)
                }
                "state_sigma_x2" => {
                    let (m, a) = catalog::nonlinear2d(Nonlinear2dVariant::StateSigmaX2);
                    (m, a, None)
                }
                "state_sigma_lx" => {
                    let (m, a) = catalog::nonlinear2d(Nonlinear2dVariant::StateSigmaLx { v: o.v[0] });
                    let f: Factory = Arc::new(|v| catalog::nonlinear2d(Nonlinear2dVariant::StateSigmaLx { v }).1);
                    (m, a, Some(f))
                }
                other => {
                    return Err(CliError::config(format!(
                        "model.params.variant: unknown variant `{other}` (expected constant_sigma, state_sigma_x2 or state_sigma_lx)"
                    )))
                }
            }
        }
        "fm_demodulation" => {
            p.allow(&["alpha", "gamma", "omega", "psi"])?;
            let (m, a) = catalog::fm_demodulation(FmParams {
                alpha: p.num("alpha")?,
                gamma: p.num("gamma")?,
                omega: p.num("omega")?,
                psi: p.num("psi")?,
            });
            (m, a, None)
        }
        "tracking_2d" => {
            p.allow(&["g", "beta3", "beta4"])?;
            let g = p.array4("g")?;
            let (m, a) = catalog::tracking_2d(g, p.nonlinearity("beta3")?, p.nonlinearity("beta4")?)
                .map_err(|e| CliError::config(format!("model.params.g: {e}")))?;
            (m, a, None)
        }
        "hairer_stuart_voss" => {
            p.allow(&["theta", "gamma", "beta"])?;
            let (m, a) = catalog::hairer_stuart_voss(p.num("theta")?, p.num("gamma")?, p.nonlinearity("beta")?)
                .map_err(|e| CliError::config(format!("model.params.theta: {e}")))?;
            (m, a, None)
        }
        "non_delyon_hu" => {
            p.allow(&["beta"])?;
            let (m, a) = catalog::non_delyon_hu(p.nonlinearity("beta")?);
            (m, a, None)
        }
        other => return Err(CliError::config(format!("model.name: unknown model `{other}`"))),
    };

    let (aux, per_value) = match config.model.auxiliary {
        AuxiliaryChoice::Matched => (aux, per_value),
        AuxiliaryChoice::ZeroDrift => {
            let zeroed = zero_drift(&aux);
            let per_value = per_value.map(|f| -> Factory { Arc::new(move |v| zero_drift(&f(v))) });
            (zeroed, per_value)
        }
    };
    obs.check_model(&model)
        .map_err(|e| CliError::config(format!("observation does not fit model `{name}`: {e}")))?;
    Ok(Built {
        model,
        aux,
        obs,
        per_value,
    })
}

fn zero_drift(aux: &LinearAuxiliary) -> LinearAuxiliary {
    let d = aux.dim();
    let a = aux.clone();
    LinearAuxiliary::new(
        d,
        aux.noise_dim(),
        move |_| DMatrix::zeros(d, d),
        move |_| DVector::zeros(d),
        move |t| a.dispersion(t),
    )
}

struct Params<'a> {
    map: &'a Map<String, Value>,
}

impl Params<'_> {
    fn allow(&self, keys: &[&str]) -> CliResult<()> {
        match self.map.keys().find(|k| !keys.contains(&k.as_str())) {
            Some(k) => Err(CliError::config(format!(
                "model.params.{k}: unknown parameter (expected one of {keys:?})"
            ))),
            None => Ok(()),
        }
    }

    fn num(&self, key: &str) -> CliResult<f64> {
        match self.map.get(key) {
            None => Err(CliError::config(format!("model.params.{key}: missing parameter"))),
            Some(v) => v
                .as_f64()
                .ok_or_else(|| CliError::config(format!("model.params.{key}: expected a number"))),
        }
    }

    fn usize_or(&self, key: &str, default: usize) -> CliResult<usize> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_u64()
                .filter(|&n| n >= 1)
                .map(|n| n as usize)
                .ok_or_else(|| CliError::config(format!("model.params.{key}: expected a positive integer"))),
        }
    }

    fn string(&self, key: &str) -> CliResult<String> {
        match self.map.get(key) {
            None => Err(CliError::config(format!("model.params.{key}: missing parameter"))),
            Some(v) => v
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| CliError::config(format!("model.params.{key}: expected a string"))),
        }
    }

    fn array4(&self, key: &str) -> CliResult<[f64; 4]> {
        let err = || CliError::config(format!("model.params.{key}: expected an array of 4 numbers"));
        let arr = self
            .map
            .get(key)
            .ok_or_else(|| CliError::config(format!("model.params.{key}: missing parameter")))?
            .as_array()
            .ok_or_else(err)?;
        if arr.len() != 4 {
            return Err(err());
        }
        let mut out = [0.0; 4];
        for (o, v) in out.iter_mut().zip(arr) {
            *o = v.as_f64().ok_or_else(err)?;
        }
        Ok(out)
    }

    /// A scalar nonlinearity: absent (zero), a number (constant), or an object
    /// `{"kind": "zero" | "constant" | "sine" | "wells", ...}`.
    fn nonlinearity(&self, key: &str) -> CliResult<ScalarFn> {
        let Some(v) = self.map.get(key) else {
            return Ok(catalog::zero_nonlinearity());
        };
        if let Some(c) = v.as_f64() {
            return Ok(catalog::constant_nonlinearity(c));
        }
        let obj = v
            .as_object()
            .ok_or_else(|| CliError::config(format!("model.params.{key}: expected a number or an object")))?;
        let field = |name: &str| -> CliResult<f64> {
            obj.get(name)
                .and_then(Value::as_f64)
                .ok_or_else(|| CliError::config(format!("model.params.{key}.{name}: missing number")))
        };
        match obj.get("kind").and_then(Value::as_str) {
            Some("zero") => Ok(catalog::zero_nonlinearity()),
            Some("constant") => Ok(catalog::constant_nonlinearity(field("value")?)),
            Some("sine") => {
                let index = field("index")?;
                if index < 0.0 || index.fract() != 0.0 {
                    return Err(CliError::config(format!("model.params.{key}.index: expected a state index")));
                }
                Ok(catalog::sine_nonlinearity(field("amplitude")?, field("frequency")?, index as usize))
            }
            Some("wells") => Ok(catalog::nlcar_wells()),
            Some(other) => Err(CliError::config(format!("model.params.{key}.kind: unknown kind `{other}`"))),
            None => Err(CliError::config(format!("model.params.{key}.kind: missing"))),
        }
    }
}
