//! Configuration-driven front end: resolves a flat TOML config against the
//! case presets, runs the series solver and its reference, and writes CSV
//! tables plus a run manifest.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    cell_moment, compute_moment, contraction_delta, error_bound, weighted_norm, ContractionParams,
    NormParams,
};
use crate::epdtm::{exact_solution_test1, SeriesSolution, MAX_ORDER};
use crate::error::{Error, Result};
use crate::fvm::{fvm_run, FvmConfig, FvmState, TimeIntegrator};
use crate::model::{
    BreakageDistribution, CasePreset, CollisionKernel, InitialCondition, Problem, VolumeGrid,
    DEFAULT_N_MIN,
};
use crate::quadrature::QuadratureSpec;

/// Tag written at the top of every output file.
pub const FORMAT_VERSION: &str = "cbe-output/1";

const GENERIC_TIMES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// The config file as written: every key optional, resolved against the
/// preset named by `case`. A `[manifest]` table is accepted and ignored so
/// that manifests can be fed back in.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub case: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub breakage: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub breakage_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub breakage_j: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points_per_cell: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub singularity_handling: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_n: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_orders: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fvm: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fvm_dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fvm_cells: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fvm_integrator: Option<TimeIntegrator>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stability_safety: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi_max: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub manifest: Option<toml::Value>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FvmSettings {
    pub enabled: bool,
    pub dt: f64,
    pub cells: usize,
    pub integrator: TimeIntegrator,
    pub stability_safety: f64,
}

/// A fully resolved and validated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub case: Option<u8>,
    pub problem: Problem,
    pub grid: VolumeGrid,
    pub quadrature: QuadratureSpec,
    pub order: usize,
    pub times: Vec<f64>,
    pub probe_n: f64,
    pub probe_tau: f64,
    pub error_orders: Vec<usize>,
    pub fvm: FvmSettings,
    pub norm: NormParams,
    pub horizon: f64,
    pub xi_max: u32,
    pub out_dir: Option<PathBuf>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn wrap(field: &str, e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => config_err(format!("{field}: {other}")),
    }
}

fn finite(field: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(config_err(format!("{field} must be finite, got {v}")))
    }
}

fn positive(field: &str, v: f64) -> Result<f64> {
    if finite(field, v)? > 0.0 {
        Ok(v)
    } else {
        Err(config_err(format!("{field} must be positive, got {v}")))
    }
}

fn kernel_name(k: &CollisionKernel) -> &'static str {
    match k {
        CollisionKernel::Product { .. } => "product",
        CollisionKernel::Polymerization { .. } => "polymerization",
    }
}

fn breakage_name(b: &BreakageDistribution) -> &'static str {
    if *b == BreakageDistribution::binary() {
        "binary"
    } else if *b == BreakageDistribution::ternary() {
        "ternary"
    } else {
        "power"
    }
}

fn initial_name(ic: &InitialCondition) -> &'static str {
    match ic {
        InitialCondition::Exponential => "exponential",
        InitialCondition::Gaussian => "gaussian",
        InitialCondition::SquaredExponential => "squared_exponential",
    }
}

fn resolve_kernel(raw: &RawConfig, preset: Option<&Problem>) -> Result<CollisionKernel> {
    let base = preset.map(|p| p.kernel);
    let name = match (&raw.kernel, base) {
        (Some(n), _) => n.as_str(),
        (None, Some(k)) => kernel_name(&k),
        (None, None) => return Err(config_err("kernel is required when no case is given")),
    };
    match name {
        "product" => {
            let default = match base {
                Some(CollisionKernel::Product { scale }) => scale,
                _ => 1.0,
            };
            CollisionKernel::product(raw.kernel_scale.unwrap_or(default))
                .map_err(|e| wrap("kernel_scale", e))
        }
        "polymerization" => {
            let default = match base {
                Some(CollisionKernel::Polymerization { a }) => a,
                _ => 0.0,
            };
            CollisionKernel::polymerization(raw.kernel_a.unwrap_or(default))
                .map_err(|e| wrap("kernel_a", e))
        }
        other => Err(config_err(format!(
            "unknown kernel {other:?}, expected \"product\" or \"polymerization\""
        ))),
    }
}

fn resolve_breakage(raw: &RawConfig, preset: Option<&Problem>) -> Result<BreakageDistribution> {
    let base = preset.map(|p| p.breakage);
    let name = match (&raw.breakage, base) {
        (Some(n), _) => n.as_str(),
        (None, Some(b)) => breakage_name(&b),
        (None, None) => return Err(config_err("breakage is required when no case is given")),
    };
    let named = match name {
        "binary" => Some(BreakageDistribution::binary()),
        "ternary" => Some(BreakageDistribution::ternary()),
        "power" => None,
        other => {
            return Err(config_err(format!(
                "unknown breakage {other:?}, expected \"binary\", \"ternary\" or \"power\""
            )))
        }
    };
    match named {
        Some(b) => {
            let sigma = raw.breakage_sigma.unwrap_or(b.sigma());
            let j = raw.breakage_j.unwrap_or(b.exponent());
            if sigma != b.sigma() || j != b.exponent() {
                return Err(config_err(format!(
                    "breakage {name:?} has sigma = {}, j = {}; use \"power\" for other values",
                    b.sigma(),
                    b.exponent()
                )));
            }
            Ok(b)
        }
        None => {
            let fallback = base.filter(|b| breakage_name(b) == "power");
            let sigma = raw
                .breakage_sigma
                .or(fallback.map(|b| b.sigma()))
                .ok_or_else(|| config_err("breakage_sigma is required for power breakage"))?;
            let j = raw
                .breakage_j
                .or(fallback.map(|b| b.exponent()))
                .ok_or_else(|| config_err("breakage_j is required for power breakage"))?;
            BreakageDistribution::power(sigma, j).map_err(|e| wrap("breakage", e))
        }
    }
}

fn resolve_initial(raw: &RawConfig, preset: Option<&Problem>) -> Result<InitialCondition> {
    match (&raw.initial, preset) {
        (Some(n), _) => match n.as_str() {
            "exponential" => Ok(InitialCondition::Exponential),
            "gaussian" => Ok(InitialCondition::Gaussian),
            "squared_exponential" => Ok(InitialCondition::SquaredExponential),
            other => Err(config_err(format!(
                "unknown initial condition {other:?}, expected \"exponential\", \"gaussian\" or \"squared_exponential\""
            ))),
        },
        (None, Some(p)) => Ok(p.initial),
        (None, None) => Err(config_err("initial is required when no case is given")),
    }
}

/// True when the problem has a closed-form solution available as reference.
pub fn has_exact_solution(problem: &Problem) -> bool {
    CasePreset::get(1)
        .map(|p| p.problem == *problem)
        .unwrap_or(false)
}

impl RunConfig {
    /// Defaults of preset `id`.
    pub fn for_case(id: u8) -> Result<Self> {
        Self::from_raw(&RawConfig {
            case: Some(id),
            ..RawConfig::default()
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        Self::from_raw(&raw)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Resolves and validates every field before anything is computed.
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let preset = match raw.case {
            Some(id) => Some(CasePreset::get(id).map_err(|e| wrap("case", e))?),
            None => None,
        };
        let base = preset.as_ref().map(|p| &p.problem);
        let problem = Problem {
            kernel: resolve_kernel(raw, base)?,
            breakage: resolve_breakage(raw, base)?,
            initial: resolve_initial(raw, base)?,
        };
        let exact = has_exact_solution(&problem);

        let n_min = positive("n_min", raw.n_min.unwrap_or(DEFAULT_N_MIN))?;
        let n_max = positive(
            "n_max",
            raw.n_max.unwrap_or(problem.initial.default_n_max()),
        )?;
        let cells = raw.cells.unwrap_or(256);
        let grid = VolumeGrid::geometric(n_min, n_max, cells).map_err(|e| wrap("grid", e))?;
        let quadrature = QuadratureSpec::new(
            raw.points_per_cell.unwrap_or(4),
            raw.singularity_handling.unwrap_or(true),
        )
        .map_err(|e| wrap("points_per_cell", e))?;

        let order = raw.order.unwrap_or(preset.as_ref().map_or(5, |p| p.order));
        if order > MAX_ORDER {
            return Err(config_err(format!(
                "order must be at most {MAX_ORDER}, got {order}"
            )));
        }

        let times = raw.times.clone().unwrap_or_else(|| {
            preset
                .as_ref()
                .map_or(GENERIC_TIMES.to_vec(), |p| p.times.clone())
        });
        if times.is_empty() {
            return Err(config_err("times must not be empty"));
        }
        for &t in &times {
            if !(finite("times", t)? >= 0.0) {
                return Err(config_err(format!("times must be nonnegative, got {t}")));
            }
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config_err("times must be strictly ascending"));
        }

        let probe_n = positive(
            "probe_n",
            raw.probe_n.unwrap_or(if exact { 6.0 } else { 1.0 }),
        )?;
        if !grid.contains(probe_n) {
            return Err(config_err(format!(
                "probe_n = {probe_n} lies outside the grid [{n_min}, {n_max}]"
            )));
        }
        let probe_tau = finite("probe_tau", raw.probe_tau.unwrap_or(1.0))?;
        if probe_tau < 0.0 {
            return Err(config_err(format!(
                "probe_tau must be nonnegative, got {probe_tau}"
            )));
        }
        let error_orders = raw.error_orders.clone().unwrap_or_else(|| {
            if exact {
                vec![5, 10, 15, 20]
            } else {
                (1..=order.max(1)).collect()
            }
        });
        if let Some(&k) = error_orders.iter().find(|&&k| k > MAX_ORDER) {
            return Err(config_err(format!(
                "error_orders must be at most {MAX_ORDER}, got {k}"
            )));
        }

        let fvm = FvmSettings {
            enabled: raw.fvm.unwrap_or(!exact),
            dt: raw.fvm_dt.unwrap_or(1e-3),
            cells: raw.fvm_cells.unwrap_or(256),
            integrator: raw.fvm_integrator.unwrap_or(TimeIntegrator::Rk2),
            stability_safety: raw.stability_safety.unwrap_or(0.5),
        };
        let t_end = times.last().copied().unwrap_or(0.0).max(probe_tau);
        let fvm_grid =
            VolumeGrid::geometric(n_min, n_max, fvm.cells).map_err(|e| wrap("fvm_cells", e))?;
        FvmConfig::new(
            fvm_grid,
            fvm.dt,
            t_end,
            fvm.integrator,
            fvm.stability_safety,
        )
        .map_err(|e| wrap("fvm", e))?;

        let norm = NormParams::new(
            raw.norm_c.unwrap_or(1.0),
            raw.norm_beta.unwrap_or(1.0),
            raw.tau0.unwrap_or(0.05),
        )
        .map_err(|e| wrap("norm", e))?;
        let horizon = positive("horizon_t", raw.horizon_t.unwrap_or(1.0))?;
        let xi_max = raw.xi_max.unwrap_or(10);
        if xi_max > 1000 {
            return Err(config_err(format!(
                "xi_max must be at most 1000, got {xi_max}"
            )));
        }

        Ok(Self {
            case: raw.case,
            problem,
            grid,
            quadrature,
            order,
            times,
            probe_n,
            probe_tau,
            error_orders,
            fvm,
            norm,
            horizon,
            xi_max,
            out_dir: raw.out_dir.clone(),
        })
    }

    /// Every resolved field in config-file form. Parsing the result yields
    /// the same `RunConfig`, minus the output directory.
    pub fn to_raw(&self) -> RawConfig {
        let (kernel_scale, kernel_a) = match self.problem.kernel {
            CollisionKernel::Product { scale } => (Some(scale), None),
            CollisionKernel::Polymerization { a } => (None, Some(a)),
        };
        RawConfig {
            case: self.case,
            kernel: Some(kernel_name(&self.problem.kernel).into()),
            kernel_scale,
            kernel_a,
            breakage: Some(breakage_name(&self.problem.breakage).into()),
            breakage_sigma: Some(self.problem.breakage.sigma()),
            breakage_j: Some(self.problem.breakage.exponent()),
            initial: Some(initial_name(&self.problem.initial).into()),
            n_min: Some(self.grid.n_min()),
            n_max: Some(self.grid.n_max()),
            cells: Some(self.grid.cell_count()),
            points_per_cell: Some(self.quadrature.points_per_cell()),
            singularity_handling: Some(self.quadrature.singularity_handling()),
            order: Some(self.order),
            times: Some(self.times.clone()),
            probe_n: Some(self.probe_n),
            probe_tau: Some(self.probe_tau),
            error_orders: Some(self.error_orders.clone()),
            fvm: Some(self.fvm.enabled),
            fvm_dt: Some(self.fvm.dt),
            fvm_cells: Some(self.fvm.cells),
            fvm_integrator: Some(self.fvm.integrator),
            stability_safety: Some(self.fvm.stability_safety),
            norm_c: Some(self.norm.c()),
            norm_beta: Some(self.norm.beta()),
            tau0: Some(self.norm.tau0()),
            horizon_t: Some(self.horizon),
            xi_max: Some(self.xi_max),
            out_dir: None,
            manifest: None,
        }
    }

    fn fvm_config(&self) -> Result<FvmConfig> {
        let grid = VolumeGrid::geometric(self.grid.n_min(), self.grid.n_max(), self.fvm.cells)?;
        FvmConfig::new(
            grid,
            self.fvm.dt,
            self.t_end(),
            self.fvm.integrator,
            self.fvm.stability_safety,
        )
    }

    fn t_end(&self) -> f64 {
        self.times
            .last()
            .copied()
            .unwrap_or(0.0)
            .max(self.probe_tau)
    }
}

/// Pipeline stage, reported with every failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Series,
    Reference,
    Moments,
    Diagnostics,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Config => "config",
            Self::Series => "series solver",
            Self::Reference => "reference solution",
            Self::Moments => "moments",
            Self::Diagnostics => "diagnostics",
            Self::Output => "output",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub stage: Stage,
    pub error: Error,
}

impl Failure {
    /// 2 for configuration problems, 1 for file output, 3 for numerics.
    pub fn exit_code(&self) -> i32 {
        match self.stage {
            Stage::Config => 2,
            Stage::Output => 1,
            _ => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for Failure {}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, Failure>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, Failure> {
        self.map_err(|error| Failure { stage, error })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub series_seconds: f64,
    pub reference_seconds: f64,
    pub total_seconds: f64,
}

enum Reference {
    Exact,
    Fvm {
        grid: VolumeGrid,
        states: Vec<FvmState>,
    },
    None,
}

impl Reference {
    fn state_at(&self, tau: f64) -> Option<(&VolumeGrid, &FvmState)> {
        match self {
            Self::Fvm { grid, states } => states.iter().find(|s| s.time == tau).map(|s| (grid, s)),
            _ => None,
        }
    }

    fn density(&self, n: f64, tau: f64) -> f64 {
        match self {
            Self::Exact => exact_solution_test1(n, tau),
            Self::Fvm { .. } => self.state_at(tau).map_or(f64::NAN, |(grid, s)| {
                interpolate_log(grid.centers(), &s.density, n)
            }),
            Self::None => f64::NAN,
        }
    }

    fn moment(&self, k: u32, tau: f64) -> f64 {
        match self {
            Self::Exact => match k {
                0 => tau + 1.0,
                1 => 1.0,
                2 => 2.0 / (tau + 1.0),
                _ => f64::NAN,
            },
            Self::Fvm { .. } => self
                .state_at(tau)
                .map_or(f64::NAN, |(grid, s)| cell_moment(grid, &s.density, k)),
            Self::None => f64::NAN,
        }
    }
}

/// Piecewise linear in `ln n`, constant beyond the end points.
fn interpolate_log(xs: &[f64], ys: &[f64], n: f64) -> f64 {
    let last = xs.len() - 1;
    if n <= xs[0] {
        return ys[0];
    }
    if n >= xs[last] {
        return ys[last];
    }
    let i = xs.partition_point(|&x| x <= n) - 1;
    let t = (n.ln() - xs[i].ln()) / (xs[i + 1].ln() - xs[i].ln());
    ys[i] + t * (ys[i + 1] - ys[i])
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv(header: &str, rows: &[String]) -> String {
    let mut s = format!("# {FORMAT_VERSION}\n{header}\n");
    for r in rows {
        s.push_str(r);
        s.push('\n');
    }
    s
}

/// Writes `contents` next to `path` under a temporary name, then renames.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Runs the configured problem and writes its outputs into `out`.
pub fn run_case(cfg: &RunConfig, out: &Path) -> std::result::Result<RunSummary, Failure> {
    let start = Instant::now();

    let mut sol =
        SeriesSolution::new(cfg.problem, cfg.grid.clone(), cfg.quadrature).at(Stage::Series)?;
    let top = cfg
        .error_orders
        .iter()
        .copied()
        .chain([cfg.order, 1])
        .max()
        .unwrap_or(1);
    let mut elapsed = vec![0.0; top + 1];
    for k in 1..=top {
        sol.extend_to(k).at(Stage::Series)?;
        elapsed[k] = start.elapsed().as_secs_f64();
    }
    let series_seconds = elapsed[top];

    let ref_start = Instant::now();
    let reference = if has_exact_solution(&cfg.problem) {
        Reference::Exact
    } else if cfg.fvm.enabled {
        let fcfg = cfg.fvm_config().at(Stage::Reference)?;
        let mut snaps = cfg.times.clone();
        snaps.push(cfg.probe_tau);
        snaps.sort_by(f64::total_cmp);
        snaps.dedup();
        let states = fvm_run(&fcfg, &cfg.problem, &snaps).at(Stage::Reference)?;
        Reference::Fvm {
            grid: fcfg.grid,
            states,
        }
    } else {
        Reference::None
    };
    let reference_seconds = ref_start.elapsed().as_secs_f64();

    let mut volumes: Vec<(f64, Option<usize>)> = cfg
        .grid
        .centers()
        .iter()
        .copied()
        .map(|n| (n, None))
        .collect();
    if !cfg.grid.centers().contains(&cfg.probe_n) {
        volumes.push((cfg.probe_n, Some(0)));
        volumes.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let probe_density: Vec<f64> = cfg
        .times
        .iter()
        .map(|&tau| sol.evaluate(cfg.order, cfg.probe_n, tau))
        .collect::<Result<_>>()
        .at(Stage::Series)?;

    let mut density_rows = Vec::new();
    for (ti, &tau) in cfg.times.iter().enumerate() {
        let centers = sol.density_at_centers(cfg.order, tau).at(Stage::Series)?;
        let mut ci = 0;
        for &(n, probe) in &volumes {
            let w = match probe {
                Some(_) => probe_density[ti],
                None => {
                    let v = centers[ci];
                    ci += 1;
                    v
                }
            };
            let r = reference.density(n, tau);
            density_rows.push(format!(
                "{},{},{},{},{}",
                num(tau),
                num(n),
                num(w),
                num(r),
                num((w - r).abs())
            ));
        }
    }

    let exponent = sol.exponent_at_zero(cfg.order);
    let mut moment_rows = Vec::new();
    for &tau in &cfg.times {
        let nodes = sol.density_at_nodes(cfg.order, tau).at(Stage::Moments)?;
        for k in 0..=2u32 {
            let m = compute_moment(sol.collocation(), &nodes, k, exponent).at(Stage::Moments)?;
            moment_rows.push(format!(
                "{},{},{},{}",
                num(tau),
                k,
                num(m),
                num(reference.moment(k, tau))
            ));
        }
    }

    let probe_ref = reference.density(cfg.probe_n, cfg.probe_tau);
    let mut error_rows = Vec::new();
    for &k in &cfg.error_orders {
        let v = sol
            .evaluate(k, cfg.probe_n, cfg.probe_tau)
            .at(Stage::Series)?;
        error_rows.push(format!(
            "{},{},{}",
            k,
            num((v - probe_ref).abs()),
            num(elapsed[k])
        ));
    }

    let diagnostic_rows = diagnostics(cfg, &sol).at(Stage::Diagnostics)?;

    fs::create_dir_all(out)
        .map_err(Error::from)
        .at(Stage::Output)?;
    let total_seconds = start.elapsed().as_secs_f64();
    let outputs = [
        (
            "density.csv",
            csv("tau,n,epdtm,reference,abs_error", &density_rows),
        ),
        (
            "moments.csv",
            csv("tau,order,epdtm,reference", &moment_rows),
        ),
        (
            "error_vs_k.csv",
            csv("k,error,wall_time_seconds", &error_rows),
        ),
        (
            "diagnostics.csv",
            csv("xi,delta,big_delta,P,contractive,bound", &diagnostic_rows),
        ),
        (
            "manifest.toml",
            manifest(cfg, series_seconds, reference_seconds, total_seconds).at(Stage::Output)?,
        ),
    ];
    let mut files = Vec::new();
    for (name, contents) in outputs {
        let path = out.join(name);
        write_atomic(&path, &contents).at(Stage::Output)?;
        files.push(path);
    }
    Ok(RunSummary {
        files,
        series_seconds,
        reference_seconds,
        total_seconds,
    })
}

fn diagnostics(cfg: &RunConfig, sol: &SeriesSolution) -> Result<Vec<String>> {
    let colloc = sol.collocation();
    let w0 = sol.term(0)?;
    let w1 = sol.term(1)?;
    let norm_w0 = weighted_norm(colloc, [w0.node_values()], w0.exponent_at_zero(), &cfg.norm)?;
    let mass_w0 = compute_moment(colloc, w0.node_values(), 1, w0.exponent_at_zero())?;
    let norm_w1 = cfg.norm.tau0()
        * weighted_norm(colloc, [w1.node_values()], w1.exponent_at_zero(), &cfg.norm)?;
    let params = ContractionParams::new(
        cfg.problem.breakage.sigma(),
        cfg.norm.beta(),
        cfg.norm.tau0(),
        cfg.horizon,
        norm_w0,
        mass_w0,
    )?;
    let report = contraction_delta(&params);
    (0..=cfg.xi_max)
        .map(|xi| {
            let bound = if report.contractive {
                error_bound(report.delta, xi, norm_w1)?
            } else {
                f64::INFINITY
            };
            Ok(format!(
                "{},{},{},{},{},{}",
                xi,
                num(report.delta),
                num(report.big_delta),
                num(report.p),
                report.contractive,
                num(bound)
            ))
        })
        .collect()
}

fn manifest(cfg: &RunConfig, series: f64, reference: f64, total: f64) -> Result<String> {
    let echo = toml::to_string(&cfg.to_raw()).map_err(|e| Error::Io(e.to_string()))?;
    let mut table = toml::Table::new();
    table.insert("format_version".into(), FORMAT_VERSION.into());
    table.insert("crate_version".into(), env!("CARGO_PKG_VERSION").into());
    table.insert("grid_ratio".into(), cfg.grid.ratio().into());
    table.insert(
        "collocation_nodes".into(),
        ((cfg.grid.cell_count() * cfg.quadrature.points_per_cell()) as i64).into(),
    );
    table.insert(
        "threads".into(),
        (rayon::current_num_threads() as i64).into(),
    );
    table.insert("series_seconds".into(), series.into());
    table.insert("reference_seconds".into(), reference.into());
    table.insert("total_seconds".into(), total.into());
    let mut wrapper = toml::Table::new();
    wrapper.insert("manifest".into(), toml::Value::Table(table));
    let tail = toml::to_string(&wrapper).map_err(|e| Error::Io(e.to_string()))?;
    Ok(format!("{echo}\n{tail}"))
}

/// One line per preset: id, kernel, breakage, initial condition and whether
/// a closed-form solution exists.
pub fn list_presets() -> String {
    let mut s = String::from("case | kernel | breakage | initial | exact\n");
    for p in CasePreset::all() {
        let b = p.problem.breakage;
        s.push_str(&format!(
            "{} | {} | {} ({} daughters) | {} | {}\n",
            p.id,
            p.problem.kernel,
            b,
            b.daughter_count(),
            p.problem.initial,
            if p.has_exact_solution() { "yes" } else { "no" }
        ));
    }
    s
}

#[derive(Debug, Parser)]
#[command(name = "cbe", version, about = "Collisional breakage solvers")]
pub struct Cli {
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a preset or a config file.
    Run {
        #[arg(long, conflicts_with = "case", required_unless_present = "case")]
        config: Option<PathBuf>,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=6))]
        case: Option<u8>,
        /// Output directory; overrides `out_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the preset table.
    List,
}

/// Parses `args` (program name first), runs, and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match cli.command {
        Command::List => {
            print!("{}", list_presets());
            0
        }
        Command::Run { config, case, out } => {
            let cfg = match (config, case) {
                (Some(path), _) => RunConfig::from_path(&path),
                (None, Some(id)) => RunConfig::for_case(id),
                (None, None) => Err(config_err("either --config or --case is required")),
            };
            let cfg = match cfg {
                Ok(c) => c,
                Err(error) => {
                    return report(&Failure {
                        stage: Stage::Config,
                        error,
                    })
                }
            };
            let out = out
                .or_else(|| cfg.out_dir.clone())
                .unwrap_or_else(|| PathBuf::from("cbe-out"));
            let pool = match rayon::ThreadPoolBuilder::new()
                .num_threads(cli.threads)
                .build()
            {
                Ok(p) => p,
                Err(e) => {
                    return report(&Failure {
                        stage: Stage::Config,
                        error: config_err(format!("thread pool: {e}")),
                    })
                }
            };
            match pool.install(|| run_case(&cfg, &out)) {
                Ok(summary) => {
                    for f in &summary.files {
                        println!("wrote {}", f.display());
                    }
                    0
                }
                Err(f) => report(&f),
            }
        }
    }
}

fn report(f: &Failure) -> i32 {
    eprintln!("error: {f}");
    f.exit_code()
}
