//! Mass-conserving finite-volume solver used as the numerical reference.
//!
//! Cell-centered collocation on the geometric grid. A breakage of a mother
//! particle at center `x_j` distributes daughters over cells `i <= j` in
//! proportion to the exact sub-cell integrals of `α(·, x_j)`; the
//! distribution is then rescaled per mother so that the daughters carry
//! exactly the mass `x_j`. The discrete first moment `Σ x_i w_i Δx_i` is
//! therefore invariant up to rounding.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Problem, VolumeGrid};
use crate::quadrature::GaussLegendre;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeIntegrator {
    Euler,
    /// Heun's method.
    Rk2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FvmConfig {
    pub grid: VolumeGrid,
    pub dt: f64,
    pub t_end: f64,
    pub integrator: TimeIntegrator,
    pub stability_safety: f64,
}

impl FvmConfig {
    pub fn new(
        grid: VolumeGrid,
        dt: f64,
        t_end: f64,
        integrator: TimeIntegrator,
        stability_safety: f64,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Construction(format!(
                "dt must be positive, got {dt}"
            )));
        }
        if !(t_end >= 0.0 && t_end.is_finite()) {
            return Err(Error::Construction(format!(
                "t_end must be nonnegative, got {t_end}"
            )));
        }
        if !(stability_safety > 0.0 && stability_safety <= 1.0) {
            return Err(Error::Construction(format!(
                "stability_safety must lie in (0, 1], got {stability_safety}"
            )));
        }
        Ok(Self {
            grid,
            dt,
            t_end,
            integrator,
            stability_safety,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FvmState {
    pub time: f64,
    pub density: Vec<f64>,
}

impl FvmState {
    /// Initial cell values chosen so that each cell carries the exact mass
    /// `∫_cell n w0(n) dn`.
    pub fn initial(problem: &Problem, grid: &VolumeGrid) -> Self {
        let rule = GaussLegendre::new(8);
        let edges = grid.edges();
        let density = (0..grid.cell_count())
            .map(|i| {
                let mass = rule.integrate(edges[i], edges[i + 1], |n| n * problem.initial.eval(n));
                mass / (grid.centers()[i] * grid.widths()[i])
            })
            .collect();
        Self { time: 0.0, density }
    }

    /// `Σ x_i^k w_i Δx_i`.
    pub fn moment(&self, grid: &VolumeGrid, k: u32) -> f64 {
        crate::analysis::cell_moment(grid, &self.density, k)
    }
}

/// Precomputed collision and daughter-redistribution matrices.
#[derive(Debug, Clone)]
pub struct FvmOperator {
    grid: VolumeGrid,
    problem: Problem,
    /// `μ(x_i, x_j) Δx_j`, row-major in `i`.
    collision: Vec<f64>,
    /// Rescaled daughter counts: entry `[i * G + j]` is the number of
    /// daughters landing in cell `i` per breakage of a mother in cell `j`.
    daughters: Vec<f64>,
}

impl FvmOperator {
    pub fn new(grid: VolumeGrid, problem: Problem) -> Self {
        let g = grid.cell_count();
        let x = grid.centers();
        let dx = grid.widths();
        let edges = grid.edges();
        let mut collision = vec![0.0; g * g];
        for i in 0..g {
            for j in 0..g {
                collision[i * g + j] = problem.kernel.rate(x[i], x[j]) * dx[j];
            }
        }
        let mut daughters = vec![0.0; g * g];
        for j in 0..g {
            let mut mass = 0.0;
            for i in 0..=j {
                // daughters below n_min leave the domain; the rescaling
                // below returns their mass to the resolved cells
                let lo = edges[i];
                let hi = if i == j { x[j] } else { edges[i + 1] };
                let count = problem.breakage.daughters_between(lo, hi, x[j]);
                daughters[i * g + j] = count;
                mass += x[i] * count;
            }
            let scale = x[j] / mass;
            for i in 0..=j {
                daughters[i * g + j] *= scale;
            }
        }
        Self {
            grid,
            problem,
            collision,
            daughters,
        }
    }

    pub fn grid(&self) -> &VolumeGrid {
        &self.grid
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    /// Number of daughters from a mother in cell `j` landing in cell `i`.
    pub fn daughter_weight(&self, i: usize, j: usize) -> f64 {
        self.daughters[i * self.grid.cell_count() + j]
    }

    /// Per-cell loss frequency `λ_i = Σ_j μ(x_i, x_j) w_j Δx_j`.
    pub fn loss_frequencies(&self, density: &[f64]) -> Vec<f64> {
        let g = self.grid.cell_count();
        (0..g)
            .into_par_iter()
            .map(|i| {
                self.collision[i * g..(i + 1) * g]
                    .iter()
                    .zip(density)
                    .map(|(m, w)| m * w)
                    .sum()
            })
            .collect()
    }

    /// Time derivative of every cell value.
    pub fn rates(&self, density: &[f64]) -> Vec<f64> {
        let g = self.grid.cell_count();
        let dx = self.grid.widths();
        let loss = self.loss_frequencies(density);
        // breakage events per unit time in each mother cell
        let events: Vec<f64> = (0..g).map(|j| density[j] * dx[j] * loss[j]).collect();
        (0..g)
            .into_par_iter()
            .map(|i| {
                let row = &self.daughters[i * g..(i + 1) * g];
                let birth: f64 = (i..g).map(|j| row[j] * events[j]).sum();
                birth / dx[i] - density[i] * loss[i]
            })
            .collect()
    }
}

/// Time derivative of `state` under the problem held by `op`.
pub fn fvm_rates(state: &FvmState, op: &FvmOperator) -> Vec<f64> {
    op.rates(&state.density)
}

fn stable(op: &FvmOperator, density: &[f64], dt: f64, safety: f64) -> bool {
    op.loss_frequencies(density)
        .iter()
        .zip(density)
        .all(|(l, w)| *w <= 0.0 || dt * l <= safety)
}

fn axpy(w: &[f64], dt: f64, r: &[f64]) -> Vec<f64> {
    w.iter().zip(r).map(|(a, b)| a + dt * b).collect()
}

/// Advances by at most `dt_max`, halving the step while the positivity
/// condition `dt λ_i <= safety` fails.
pub fn fvm_step_with(
    state: &FvmState,
    dt_max: f64,
    cfg: &FvmConfig,
    op: &FvmOperator,
) -> Result<FvmState> {
    let floor = cfg.dt * 1e-6;
    let mut dt = dt_max;
    loop {
        if dt < floor {
            return Err(Error::Stiffness {
                time: state.time,
                dt,
            });
        }
        if !stable(op, &state.density, dt, cfg.stability_safety) {
            dt *= 0.5;
            continue;
        }
        let w = &state.density;
        let k1 = op.rates(w);
        let next = match cfg.integrator {
            TimeIntegrator::Euler => axpy(w, dt, &k1),
            TimeIntegrator::Rk2 => {
                let stage = axpy(w, dt, &k1);
                if !stable(op, &stage, dt, cfg.stability_safety) {
                    dt *= 0.5;
                    continue;
                }
                let k2 = op.rates(&stage);
                w.iter()
                    .zip(k1.iter().zip(&k2))
                    .map(|(a, (r1, r2))| a + 0.5 * dt * (r1 + r2))
                    .collect()
            }
        };
        let density = clip_negatives(next, state.time + dt)?;
        return Ok(FvmState {
            time: state.time + dt,
            density,
        });
    }
}

/// One step of size `cfg.dt` (or smaller, see [`fvm_step_with`]).
pub fn fvm_step(state: &FvmState, cfg: &FvmConfig, op: &FvmOperator) -> Result<FvmState> {
    fvm_step_with(state, cfg.dt, cfg, op)
}

fn clip_negatives(mut density: Vec<f64>, time: f64) -> Result<Vec<f64>> {
    let max = density.iter().cloned().fold(0.0, f64::max);
    for (cell, v) in density.iter_mut().enumerate() {
        if !v.is_finite() {
            return Err(Error::NegativeDensity {
                cell,
                value: *v,
                time,
            });
        }
        if *v < 0.0 {
            if -*v >= 1e-12 * max {
                return Err(Error::NegativeDensity {
                    cell,
                    value: *v,
                    time,
                });
            }
            *v = 0.0;
        }
    }
    Ok(density)
}

/// Integrates from the initial condition and returns the states at the
/// requested (ascending) times. With no snapshots, returns the state at
/// `t_end`.
pub fn fvm_run(cfg: &FvmConfig, problem: &Problem, snapshots: &[f64]) -> Result<Vec<FvmState>> {
    let op = FvmOperator::new(cfg.grid.clone(), *problem);
    run_with(cfg, &op, FvmState::initial(problem, &cfg.grid), snapshots)
}

/// As [`fvm_run`] with a prebuilt operator and starting state.
pub fn run_with(
    cfg: &FvmConfig,
    op: &FvmOperator,
    start: FvmState,
    snapshots: &[f64],
) -> Result<Vec<FvmState>> {
    let default = [cfg.t_end];
    let targets = if snapshots.is_empty() {
        &default[..]
    } else {
        snapshots
    };
    if targets.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("snapshot times must be ascending".into()));
    }
    if targets.iter().any(|&t| !(t >= start.time) || t > cfg.t_end) {
        return Err(Error::Domain(format!(
            "snapshot times must lie in [{}, {}]",
            start.time, cfg.t_end
        )));
    }
    let mut state = start;
    let mut out = Vec::with_capacity(targets.len());
    for &target in targets {
        while state.time < target {
            let remaining = target - state.time;
            if remaining <= 1e-12 * target.max(1.0) {
                state.time = target;
                break;
            }
            let request = cfg.dt.min(remaining);
            let next = fvm_step_with(&state, request, cfg, op)?;
            let landed = next.time - state.time >= request;
            state = next;
            if landed && request == remaining {
                state.time = target;
            }
        }
        out.push(state.clone());
    }
    Ok(out)
}
