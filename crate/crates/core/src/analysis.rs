//! Moments, weighted norms, error tables and convergence diagnostics.

use crate::error::{Error, Result};
use crate::model::VolumeGrid;
use crate::quadrature::Collocation;

/// `N_k = ∫_0^∞ n^k w dn` for a density sampled at collocation nodes.
/// `exponent_at_zero` is the power law of `w` near zero, used for the
/// `(0, n_min)` piece.
pub fn compute_moment(
    colloc: &Collocation,
    density: &[f64],
    k: u32,
    exponent_at_zero: f64,
) -> Result<f64> {
    let weighted: Vec<f64> = colloc
        .nodes()
        .iter()
        .zip(density)
        .map(|(&n, w)| n.powi(k as i32) * w)
        .collect();
    colloc.integrate_from_zero(&weighted, exponent_at_zero + k as f64)
}

/// `Σ_i x_i^k w_i Δx_i` for cell-averaged densities.
pub fn cell_moment(grid: &VolumeGrid, density: &[f64], k: u32) -> f64 {
    grid.centers()
        .iter()
        .zip(grid.widths())
        .zip(density)
        .map(|((x, dx), w)| x.powi(k as i32) * w * dx)
        .sum()
}

/// Trajectory `τ ↦ N_k(τ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSeries {
    order: u32,
    samples: Vec<(f64, f64)>,
}

impl MomentSeries {
    pub fn new(order: u32, samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Construction(
                "moment samples must have ascending times".into(),
            ));
        }
        if samples
            .iter()
            .any(|(t, v)| !t.is_finite() || !v.is_finite())
        {
            return Err(Error::Construction("moment samples must be finite".into()));
        }
        Ok(Self { order, samples })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    /// Largest relative deviation from the first sample.
    pub fn max_relative_drift(&self) -> f64 {
        let Some(&(_, first)) = self.samples.first() else {
            return 0.0;
        };
        self.samples
            .iter()
            .map(|(_, v)| ((v - first) / first).abs())
            .fold(0.0, f64::max)
    }
}

/// Parameters `(c, β, τ0)` of the weighted norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormParams {
    c: f64,
    beta: f64,
    tau0: f64,
}

impl NormParams {
    pub fn new(c: f64, beta: f64, tau0: f64) -> Result<Self> {
        if !(c > 0.0 && beta > 0.0 && tau0 > 0.0)
            || !(c.is_finite() && beta.is_finite() && tau0.is_finite())
        {
            return Err(Error::Construction(format!(
                "norm parameters need c, beta, tau0 > 0, got ({c}, {beta}, {tau0})"
            )));
        }
        Ok(Self { c, beta, tau0 })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn tau0(&self) -> f64 {
        self.tau0
    }
}

/// `sup_τ ∫_0^∞ (c n)^β |w(n, τ)| dn`, the sup taken over the supplied
/// snapshots.
pub fn weighted_norm<'a, I>(
    colloc: &Collocation,
    trajectory: I,
    exponent_at_zero: f64,
    params: &NormParams,
) -> Result<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let weights: Vec<f64> = colloc
        .nodes()
        .iter()
        .map(|&n| (params.c * n).powf(params.beta))
        .collect();
    let mut best: Option<f64> = None;
    for w in trajectory {
        let integrand: Vec<f64> = weights.iter().zip(w).map(|(a, v)| a * v.abs()).collect();
        let v = colloc.integrate_from_zero(&integrand, exponent_at_zero + params.beta)?;
        best = Some(best.map_or(v, |b: f64| b.max(v)));
    }
    best.ok_or_else(|| Error::Domain("weighted norm of an empty trajectory".into()))
}

/// Inputs of the contraction constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionParams {
    pub sigma: f64,
    pub beta: f64,
    pub tau0: f64,
    /// Existence horizon `T`.
    pub horizon: f64,
    /// `‖w0‖` in the weighted norm.
    pub norm_w0: f64,
    /// `‖w0‖₁`, taken as the first-moment norm.
    pub norm_w0_mass: f64,
}

impl ContractionParams {
    pub fn new(
        sigma: f64,
        beta: f64,
        tau0: f64,
        horizon: f64,
        norm_w0: f64,
        norm_w0_mass: f64,
    ) -> Result<Self> {
        let all = [sigma, beta, tau0, horizon, norm_w0, norm_w0_mass];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Construction(format!(
                "contraction parameters must be positive and finite, got {all:?}"
            )));
        }
        Ok(Self {
            sigma,
            beta,
            tau0,
            horizon,
            norm_w0,
            norm_w0_mass,
        })
    }

    /// `P = ‖w0‖ + (σ/β) T ‖w0‖₁²`.
    pub fn p(&self) -> f64 {
        self.norm_w0 + self.sigma / self.beta * self.horizon * self.norm_w0_mass * self.norm_w0_mass
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionReport {
    pub p: f64,
    /// `δ = τ0² exp(2 τ0 P) [‖w0‖ + (4σP/β)(1 + τ0 P)]`.
    pub delta: f64,
    /// `Δ = δ / τ0`.
    pub big_delta: f64,
    pub contractive: bool,
}

pub fn contraction_delta(params: &ContractionParams) -> ContractionReport {
    let p = params.p();
    let t = params.tau0;
    let big_delta = t
        * (2.0 * t * p).exp()
        * (params.norm_w0 + 4.0 * params.sigma * p / params.beta * (1.0 + t * p));
    let delta = big_delta * t;
    ContractionReport {
        p,
        delta,
        big_delta,
        contractive: delta < 1.0,
    }
}

/// A-priori bound `δ^ξ ‖w1‖ / (1 − δ)` on `‖w − ζ_ξ‖`.
pub fn error_bound(delta: f64, xi: u32, norm_w1: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!(
            "error bound needs 0 < delta < 1, got {delta}"
        )));
    }
    if !(norm_w1 >= 0.0) {
        return Err(Error::Domain(format!(
            "norm of w1 must be nonnegative, got {norm_w1}"
        )));
    }
    Ok(delta.powi(xi as i32) * norm_w1 / (1.0 - delta))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRow {
    pub tau: f64,
    pub exact: f64,
    pub approx: f64,
    pub abs_error: f64,
}

/// Absolute errors of `approx` against `exact` at volume `n`.
pub fn error_table<A, E>(approx: A, exact: E, n: f64, times: &[f64]) -> Result<Vec<ErrorRow>>
where
    A: Fn(f64, f64) -> Result<f64>,
    E: Fn(f64, f64) -> Result<f64>,
{
    times
        .iter()
        .map(|&tau| {
            let a = approx(n, tau)?;
            let e = exact(n, tau)?;
            Ok(ErrorRow {
                tau,
                exact: e,
                approx: a,
                abs_error: (a - e).abs(),
            })
        })
        .collect()
}
