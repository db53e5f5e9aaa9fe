//! Series-in-time solution of the collisional breakage equation.
//!
//! The solution is expanded as `w(n, τ) = Σ_k c_k(n) τ^k`. Each correction
//! is obtained from the previous ones by transforming the birth-minus-death
//! rate in time, multiplying by `q` and transforming back. Since every
//! iterate is a monomial in `τ`, that round trip reduces to a scalar factor
//! on the coefficient (see [`ElzakiImage`]), and only the volume profiles
//! `c_k` have to be computed numerically.
//!
//! For kernels `μ(ε, ρ) = g(ε) g(ρ)` and breakage distributions
//! `α(n, ε) = σ n^(j-1) ε^(-j)` the double birth integral factorizes:
//!
//! ```text
//! birth_k(n) = σ n^(j-1) Σ_r T_r(n) M_(k-r),
//! T_r(n) = ∫_n^∞ g(ε) ε^(-j) c_r(ε) dε,   M_r = ∫_0^∞ g(ρ) c_r(ρ) dρ,
//! death_k(n) = g(n) Σ_r c_r(n) M_(k-r).
//! ```
//!
//! `T_r` and `M_r` are cached per order, so adding an order costs `O(k N)`
//! for `N` collocation nodes.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{CasePreset, Problem, VolumeGrid};
use crate::quadrature::{suffix_sums, Collocation, QuadratureSpec};

/// Highest order whose time factor `k!` is representable.
pub const MAX_ORDER: usize = 150;

/// `coeff * τ^degree`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeMonomial {
    pub coeff: f64,
    pub degree: usize,
}

/// `coeff * q^power`, the Elzaki image of a time monomial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElzakiImage {
    pub coeff: f64,
    pub q_power: usize,
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

impl TimeMonomial {
    /// `E[τ^k] = k! q^(k+2)`.
    pub fn elzaki(self) -> ElzakiImage {
        ElzakiImage {
            coeff: self.coeff * factorial(self.degree),
            q_power: self.degree + 2,
        }
    }
}

impl ElzakiImage {
    pub fn times_q(self) -> Self {
        Self {
            coeff: self.coeff,
            q_power: self.q_power + 1,
        }
    }

    /// Inverse transform; `q^power` must be at least `q^2`.
    pub fn inverse(self) -> TimeMonomial {
        assert!(
            self.q_power >= 2,
            "q^{} is not the image of a time monomial",
            self.q_power
        );
        let degree = self.q_power - 2;
        TimeMonomial {
            coeff: self.coeff / factorial(degree),
            degree,
        }
    }
}

/// Coefficient of order `k + 1` produced from a rate `g(n) τ^k`:
/// `E⁻¹[q E[τ^k g]] = τ^(k+1) g / (k + 1)`.
pub fn elzaki_time_integrate(rate: &[f64], k: usize) -> Vec<f64> {
    let factor = TimeMonomial {
        coeff: 1.0,
        degree: k,
    }
    .elzaki()
    .times_q()
    .inverse();
    debug_assert_eq!(factor.degree, k + 1);
    rate.iter().map(|g| g * factor.coeff).collect()
}

/// One coefficient profile `c_k`, sampled at the collocation nodes and at
/// the grid centers.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTerm {
    order: usize,
    nodes: Vec<f64>,
    centers: Vec<f64>,
    exponent_at_zero: f64,
}

impl SeriesTerm {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn node_values(&self) -> &[f64] {
        &self.nodes
    }

    pub fn center_values(&self) -> &[f64] {
        &self.centers
    }

    /// Power law `c_k ~ n^p` as `n -> 0`.
    pub fn exponent_at_zero(&self) -> f64 {
        self.exponent_at_zero
    }
}

#[derive(Debug, Clone)]
struct TermCache {
    /// `g(ε) ε^(-j) c_r(ε)` at nodes.
    weighted: Vec<f64>,
    /// Per-cell suffix sums of `weighted`.
    suffix: Vec<f64>,
    node_tails: Vec<f64>,
    center_tails: Vec<f64>,
    /// `∫_0^∞ g c_r`.
    mass: f64,
}

/// Truncated series `Σ_{i<=K} c_i(n) τ^i` for one problem.
#[derive(Debug, Clone)]
pub struct SeriesSolution {
    problem: Problem,
    colloc: Collocation,
    terms: Vec<SeriesTerm>,
    cache: Vec<TermCache>,
}

impl SeriesSolution {
    /// Starts from the initial condition (order 0).
    pub fn new(problem: Problem, grid: VolumeGrid, spec: QuadratureSpec) -> Result<Self> {
        let colloc = Collocation::new(grid, spec);
        let ic = problem.initial;
        let nodes = colloc.sample(|n| ic.eval(n));
        let centers = colloc
            .grid()
            .centers()
            .iter()
            .map(|&n| ic.eval(n))
            .collect();
        let term = SeriesTerm {
            order: 0,
            nodes,
            centers,
            exponent_at_zero: ic.exponent_at_zero(),
        };
        let mut sol = Self {
            problem,
            colloc,
            terms: Vec::new(),
            cache: Vec::new(),
        };
        sol.push(term)?;
        Ok(sol)
    }

    /// Builds the series of a preset up to its default order.
    pub fn for_preset(preset: &CasePreset, grid: VolumeGrid, spec: QuadratureSpec) -> Result<Self> {
        let mut sol = Self::new(preset.problem, grid, spec)?;
        sol.extend_to(preset.order)?;
        Ok(sol)
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn collocation(&self) -> &Collocation {
        &self.colloc
    }

    pub fn grid(&self) -> &VolumeGrid {
        self.colloc.grid()
    }

    pub fn terms(&self) -> &[SeriesTerm] {
        &self.terms
    }

    pub fn term(&self, k: usize) -> Result<&SeriesTerm> {
        self.terms.get(k).ok_or_else(|| {
            Error::State(format!("order {k} not computed (max {})", self.max_order()))
        })
    }

    pub fn max_order(&self) -> usize {
        self.terms.len() - 1
    }

    /// `∫_0^∞ g c_r`, the collision-weighted mass of order `r`.
    pub fn collision_moment(&self, r: usize) -> Result<f64> {
        self.require(r)?;
        Ok(self.cache[r].mass)
    }

    fn require(&self, k: usize) -> Result<()> {
        if k >= self.terms.len() {
            return Err(Error::State(format!(
                "order {k} requested but only orders 0..={} are available",
                self.max_order()
            )));
        }
        Ok(())
    }

    fn push(&mut self, term: SeriesTerm) -> Result<()> {
        let kernel = self.problem.kernel;
        let breakage = self.problem.breakage;
        let weighted: Vec<f64> = self
            .colloc
            .nodes()
            .iter()
            .zip(&term.nodes)
            .map(|(&e, c)| kernel.factor(e) * breakage.mother_factor(e) * c)
            .collect();
        let suffix = suffix_sums(&self.colloc.cell_integrals(&weighted));
        let node_tails = self.colloc.tail_integrals(&weighted);
        let center_tails = self
            .colloc
            .grid()
            .centers()
            .iter()
            .map(|&x| self.colloc.tail_at_with(&weighted, &suffix, x))
            .collect::<Result<Vec<_>>>()?;
        let g_times_c: Vec<f64> = self
            .colloc
            .nodes()
            .iter()
            .zip(&term.nodes)
            .map(|(&e, c)| kernel.factor(e) * c)
            .collect();
        let mass = self.colloc.integrate_from_zero(
            &g_times_c,
            term.exponent_at_zero + kernel.factor_exponent_at_zero(),
        )?;
        self.cache.push(TermCache {
            weighted,
            suffix,
            node_tails,
            center_tails,
            mass,
        });
        self.terms.push(term);
        Ok(())
    }

    /// Adds orders until `max_order() == order`.
    pub fn extend_to(&mut self, order: usize) -> Result<()> {
        if order > MAX_ORDER {
            return Err(Error::State(format!(
                "order {order} exceeds the supported maximum {MAX_ORDER}"
            )));
        }
        while self.max_order() < order {
            compute_next_term(self)?;
        }
        Ok(())
    }

    /// `c_0(x) ..= c_order(x)` at an arbitrary volume, computed with the
    /// same recursion as the stored terms.
    pub fn coefficients_at(&self, x: f64, order: usize) -> Result<Vec<f64>> {
        self.require(order)?;
        if !self.grid().contains(x) {
            return Err(Error::Domain(format!(
                "volume {x} outside the grid [{}, {}]",
                self.grid().n_min(),
                self.grid().n_max()
            )));
        }
        let kernel = self.problem.kernel;
        let breakage = self.problem.breakage;
        let daughter = breakage.daughter_factor(x);
        let gx = kernel.factor(x);
        let mut coeffs = Vec::with_capacity(order + 1);
        let mut tails = Vec::with_capacity(order);
        coeffs.push(self.problem.initial.eval(x));
        for k in 0..order {
            let cache = &self.cache[k];
            tails.push(
                self.colloc
                    .tail_at_with(&cache.weighted, &cache.suffix, x)?,
            );
            let mut birth = 0.0;
            let mut death = 0.0;
            for r in 0..=k {
                let m = self.cache[k - r].mass;
                birth += tails[r] * m;
                death += coeffs[r] * m;
            }
            let rate = daughter * birth - gx * death;
            coeffs.push(elzaki_time_integrate(&[rate], k)[0]);
        }
        Ok(coeffs)
    }

    /// `ζ_K(n, τ)`.
    pub fn evaluate(&self, order: usize, n: f64, tau: f64) -> Result<f64> {
        let c = self.coefficients_at(n, order)?;
        Ok(horner(&c, tau))
    }

    /// `ζ_K(·, τ)` at every collocation node.
    pub fn density_at_nodes(&self, order: usize, tau: f64) -> Result<Vec<f64>> {
        self.require(order)?;
        let n = self.colloc.len();
        Ok((0..n)
            .map(|i| {
                let mut acc = 0.0;
                for t in self.terms[..=order].iter().rev() {
                    acc = acc * tau + t.nodes[i];
                }
                acc
            })
            .collect())
    }

    /// `ζ_K(·, τ)` at every grid center.
    pub fn density_at_centers(&self, order: usize, tau: f64) -> Result<Vec<f64>> {
        self.require(order)?;
        let n = self.grid().cell_count();
        Ok((0..n)
            .map(|i| {
                let mut acc = 0.0;
                for t in self.terms[..=order].iter().rev() {
                    acc = acc * tau + t.centers[i];
                }
                acc
            })
            .collect())
    }

    /// Small-volume power law of `ζ_K`: the most singular of its terms.
    pub fn exponent_at_zero(&self, order: usize) -> f64 {
        self.terms[..=order.min(self.max_order())]
            .iter()
            .map(|t| t.exponent_at_zero)
            .fold(f64::INFINITY, f64::min)
    }
}

fn horner(coeffs: &[f64], tau: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * tau + c)
}

fn node_of(sol: &SeriesSolution, index: usize) -> Result<f64> {
    sol.colloc.nodes().get(index).copied().ok_or_else(|| {
        Error::Domain(format!(
            "node index {index} out of range ({} nodes)",
            sol.colloc.len()
        ))
    })
}

/// `Σ_{r=0}^{k} c_r(x) c_{k-r}(y)` with `x` the collocation node `x_index`.
pub fn nonlinear_convolution(
    sol: &SeriesSolution,
    k: usize,
    x_index: usize,
    y: f64,
) -> Result<f64> {
    sol.require(k)?;
    let x = node_of(sol, x_index)?;
    let cx: Vec<f64> = sol.terms[..=k].iter().map(|t| t.nodes[x_index]).collect();
    let cy = sol.coefficients_at(y, k)?;
    debug_assert!(x > 0.0);
    Ok(convolve(&cx, &cy, k))
}

/// As [`nonlinear_convolution`] with both factors at arbitrary volumes.
pub fn nonlinear_convolution_at(sol: &SeriesSolution, k: usize, x: f64, y: f64) -> Result<f64> {
    let cx = sol.coefficients_at(x, k)?;
    if x == y {
        // symmetric pairs (r, k-r) and (k-r, r) coincide
        let mut s = 0.0;
        for r in 0..(k + 1) / 2 {
            s += 2.0 * cx[r] * cx[k - r];
        }
        if k % 2 == 0 {
            s += cx[k / 2] * cx[k / 2];
        }
        return Ok(s);
    }
    let cy = sol.coefficients_at(y, k)?;
    Ok(convolve(&cx, &cy, k))
}

fn convolve(cx: &[f64], cy: &[f64], k: usize) -> f64 {
    (0..=k).map(|r| cx[r] * cy[k - r]).sum()
}

fn birth_from_tails(sol: &SeriesSolution, k: usize, x: f64, tails: impl Fn(usize) -> f64) -> f64 {
    let s: f64 = (0..=k).map(|r| tails(r) * sol.cache[k - r].mass).sum();
    sol.problem.breakage.daughter_factor(x) * s
}

fn death_from_coeffs(sol: &SeriesSolution, k: usize, x: f64, coeff: impl Fn(usize) -> f64) -> f64 {
    let s: f64 = (0..=k).map(|r| coeff(r) * sol.cache[k - r].mass).sum();
    sol.problem.kernel.factor(x) * s
}

/// Birth integral of order `k` at collocation node `n_index`.
pub fn birth_integral(sol: &SeriesSolution, k: usize, n_index: usize) -> Result<f64> {
    sol.require(k)?;
    let x = node_of(sol, n_index)?;
    Ok(birth_from_tails(sol, k, x, |r| {
        sol.cache[r].node_tails[n_index]
    }))
}

/// Birth integral of order `k` at an arbitrary volume.
pub fn birth_integral_at(sol: &SeriesSolution, k: usize, x: f64) -> Result<f64> {
    sol.require(k)?;
    let tails = (0..=k)
        .map(|r| {
            let c = &sol.cache[r];
            sol.colloc.tail_at_with(&c.weighted, &c.suffix, x)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(birth_from_tails(sol, k, x, |r| tails[r]))
}

/// Death integral of order `k` at collocation node `n_index`.
pub fn death_integral(sol: &SeriesSolution, k: usize, n_index: usize) -> Result<f64> {
    sol.require(k)?;
    let x = node_of(sol, n_index)?;
    Ok(death_from_coeffs(sol, k, x, |r| {
        sol.terms[r].nodes[n_index]
    }))
}

/// Death integral of order `k` at an arbitrary volume.
pub fn death_integral_at(sol: &SeriesSolution, k: usize, x: f64) -> Result<f64> {
    let c = sol.coefficients_at(x, k)?;
    Ok(death_from_coeffs(sol, k, x, |r| c[r]))
}

/// Birth integral evaluated without the kernel factorization: the inner
/// `ρ` integral is done with `μ(ε, ρ)` at every `ε` node, then integrated
/// over `ε ∈ [x, n_max]`. Costs `O(k N²)`; for validation.
pub fn birth_integral_direct(sol: &SeriesSolution, k: usize, x: f64) -> Result<f64> {
    sol.require(k)?;
    let colloc = &sol.colloc;
    let kernel = sol.problem.kernel;
    let breakage = sol.problem.breakage;
    let nodes = colloc.nodes();
    let mut outer = vec![0.0; nodes.len()];
    for (b, &eps) in nodes.iter().enumerate() {
        let mut inner = 0.0;
        for r in 0..=k {
            let other = &sol.terms[k - r];
            let integrand: Vec<f64> = nodes
                .iter()
                .zip(&other.nodes)
                .map(|(&rho, c)| kernel.rate(eps, rho) * c)
                .collect();
            let p = other.exponent_at_zero + kernel.factor_exponent_at_zero();
            inner += sol.terms[r].nodes[b] * colloc.integrate_from_zero(&integrand, p)?;
        }
        outer[b] = breakage.sigma() * breakage.mother_factor(eps) * inner;
    }
    let tail = colloc.tail_at(&outer, x)?;
    Ok(x.powf(breakage.exponent() - 1.0) * tail)
}

/// Death integral with `μ(x, ε)` evaluated directly.
pub fn death_integral_direct(sol: &SeriesSolution, k: usize, x: f64) -> Result<f64> {
    let cx = sol.coefficients_at(x, k)?;
    let kernel = sol.problem.kernel;
    let nodes = sol.colloc.nodes();
    let mut total = 0.0;
    for r in 0..=k {
        let other = &sol.terms[k - r];
        let integrand: Vec<f64> = nodes
            .iter()
            .zip(&other.nodes)
            .map(|(&e, c)| kernel.rate(x, e) * c)
            .collect();
        let p = other.exponent_at_zero + kernel.factor_exponent_at_zero();
        total += cx[r] * sol.colloc.integrate_from_zero(&integrand, p)?;
    }
    Ok(total)
}

/// Appends order `k + 1`, `c_{k+1} = (birth_k - death_k) / (k + 1)`.
pub fn compute_next_term(sol: &mut SeriesSolution) -> Result<()> {
    let k = sol.max_order();
    if k + 1 > MAX_ORDER {
        return Err(Error::State(format!(
            "order {} exceeds the supported maximum {MAX_ORDER}",
            k + 1
        )));
    }
    let kernel = sol.problem.kernel;
    let breakage = sol.problem.breakage;
    let masses: Vec<f64> = (0..=k).map(|r| sol.cache[k - r].mass).collect();

    let rate = |x: f64, tail: &dyn Fn(usize) -> f64, coeff: &dyn Fn(usize) -> f64| {
        let mut birth = 0.0;
        let mut death = 0.0;
        for (r, m) in masses.iter().enumerate() {
            birth += tail(r) * m;
            death += coeff(r) * m;
        }
        breakage.daughter_factor(x) * birth - kernel.factor(x) * death
    };

    let node_rates: Vec<f64> = sol
        .colloc
        .nodes()
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            rate(x, &|r| sol.cache[r].node_tails[i], &|r| {
                sol.terms[r].nodes[i]
            })
        })
        .collect();
    let center_rates: Vec<f64> = sol
        .grid()
        .centers()
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            rate(x, &|r| sol.cache[r].center_tails[i], &|r| {
                sol.terms[r].centers[i]
            })
        })
        .collect();

    let nodes = elzaki_time_integrate(&node_rates, k);
    if let Some(index) = nodes.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteCoefficient {
            order: k + 1,
            index,
        });
    }
    let centers = elzaki_time_integrate(&center_rates, k);
    if let Some(index) = centers.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteCoefficient {
            order: k + 1,
            index,
        });
    }
    let exponent_at_zero = breakage.exponent_at_zero().min(0.0);
    sol.push(SeriesTerm {
        order: k + 1,
        nodes,
        centers,
        exponent_at_zero,
    })
}

/// `ζ_K(n, τ)`.
pub fn evaluate_series(sol: &SeriesSolution, order: usize, n: f64, tau: f64) -> Result<f64> {
    sol.evaluate(order, n, tau)
}

/// Closed-form solution for the product kernel with binary breakage and
/// exponential initial data: `(τ + 1)² e^{-(τ + 1) n}`.
pub fn exact_solution_test1(n: f64, tau: f64) -> f64 {
    let s = tau + 1.0;
    s * s * (-s * n).exp()
}

/// Closed-form `τ^k` coefficient of the same problem:
/// `(-1)^k / k! e^{-n} (n^k - 2k n^(k-1) + k(k-1) n^(k-2))`.
pub fn general_term_test1(n: f64, k: usize) -> f64 {
    let kf = k as f64;
    let mut poly = n.powi(k as i32);
    if k >= 1 {
        poly -= 2.0 * kf * n.powi(k as i32 - 1);
    }
    if k >= 2 {
        poly += kf * (kf - 1.0) * n.powi(k as i32 - 2);
    }
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    sign / factorial(k) * (-n).exp() * poly
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BreakageDistribution, CollisionKernel, InitialCondition};
    use approx::assert_relative_eq;

    fn case(id: u8, cells: usize, order: usize) -> SeriesSolution {
        let preset = CasePreset::get(id).unwrap();
        let mut sol = SeriesSolution::new(
            preset.problem,
            preset.default_grid(cells),
            QuadratureSpec::default(),
        )
        .unwrap();
        sol.extend_to(order).unwrap();
        sol
    }

    #[test]
    fn elzaki_monomial_rule() {
        let img = TimeMonomial {
            coeff: 1.0,
            degree: 3,
        }
        .elzaki();
        assert_eq!(
            img,
            ElzakiImage {
                coeff: 6.0,
                q_power: 5
            }
        );
        assert_eq!(
            img.inverse(),
            TimeMonomial {
                coeff: 1.0,
                degree: 3
            }
        );
        assert_eq!(elzaki_time_integrate(&[1.0], 0), vec![1.0]);
        let e = (-2.0f64).exp();
        assert_relative_eq!(
            elzaki_time_integrate(&[2.0 * e], 1)[0],
            e,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            elzaki_time_integrate(&[7.5], 4)[0],
            1.5,
            max_relative = 1e-15
        );
    }

    #[test]
    fn elzaki_matches_time_quadrature() {
        // ∫_0^τ s^k ds = τ^{k+1}/(k+1)
        for k in 0..8 {
            let tau: f64 = 1.3;
            let steps = 20_000;
            let h = tau / steps as f64;
            let integral: f64 = (0..steps)
                .map(|i| {
                    let s = (i as f64 + 0.5) * h;
                    s.powi(k as i32) * h
                })
                .sum();
            let c = elzaki_time_integrate(&[1.0], k)[0];
            assert_relative_eq!(c * tau.powi(k as i32 + 1), integral, max_relative = 1e-7);
        }
    }

    #[test]
    fn order_zero_is_initial_condition() {
        let sol = case(6, 64, 0);
        for (x, c) in sol
            .collocation()
            .nodes()
            .iter()
            .zip(sol.terms()[0].node_values())
        {
            assert_eq!(*c, InitialCondition::SquaredExponential.eval(*x));
        }
        assert_eq!(
            sol.evaluate(0, 2.0, 0.7).unwrap(),
            InitialCondition::SquaredExponential.eval(2.0)
        );
    }

    #[test]
    fn convolution_examples() {
        let sol = case(1, 256, 1);
        let e1 = (-1.0f64).exp();
        let c0 = sol.coefficients_at(1.0, 1).unwrap()[0];
        assert_relative_eq!(
            nonlinear_convolution_at(&sol, 0, 1.0, 1.0).unwrap(),
            c0 * c0,
            max_relative = 1e-15
        );
        let v = nonlinear_convolution_at(&sol, 1, 1.0, 1.0).unwrap();
        assert_relative_eq!(v, 2.0 * e1 * e1, max_relative = 1e-6);
        let a = nonlinear_convolution_at(&sol, 1, 0.5, 3.0).unwrap();
        let b = nonlinear_convolution_at(&sol, 1, 3.0, 0.5).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-14);
        let idx = 400;
        let x = sol.collocation().nodes()[idx];
        assert_relative_eq!(
            nonlinear_convolution(&sol, 1, idx, 2.0).unwrap(),
            nonlinear_convolution_at(&sol, 1, x, 2.0).unwrap(),
            max_relative = 1e-12
        );
        assert!(nonlinear_convolution(&sol, 2, idx, 2.0).is_err());
    }

    #[test]
    fn birth_and_death_examples() {
        let sol = case(1, 256, 0);
        assert_relative_eq!(
            birth_integral_at(&sol, 0, 1.0).unwrap(),
            2.0 * (-1.0f64).exp(),
            max_relative = 1e-6
        );
        assert_relative_eq!(
            death_integral_at(&sol, 0, 1.0).unwrap(),
            (-1.0f64).exp(),
            max_relative = 1e-6
        );
        let sol6 = case(6, 256, 0);
        let expected = 2.0 / 20.0 * 4.0 * (-2.0f64).exp() * 6.0;
        assert_relative_eq!(
            death_integral_at(&sol6, 0, 2.0).unwrap(),
            expected,
            max_relative = 1e-6
        );
        assert!((expected - 0.32479).abs() < 5e-5);
    }

    #[test]
    fn zero_density_stays_zero() {
        let problem = Problem {
            kernel: CollisionKernel::Product { scale: 1.0 },
            breakage: BreakageDistribution::binary(),
            initial: InitialCondition::Exponential,
        };
        let mut sol = SeriesSolution::new(
            problem,
            VolumeGrid::geometric(1e-3, 50.0, 32).unwrap(),
            QuadratureSpec::default(),
        )
        .unwrap();
        // replace the initial data by zero
        let zero = SeriesTerm {
            order: 0,
            nodes: vec![0.0; sol.colloc.len()],
            centers: vec![0.0; 32],
            exponent_at_zero: 0.0,
        };
        sol.terms.clear();
        sol.cache.clear();
        sol.push(zero).unwrap();
        sol.extend_to(4).unwrap();
        for t in sol.terms() {
            assert!(t.node_values().iter().all(|&v| v == 0.0));
        }
        assert_eq!(birth_integral(&sol, 2, 5).unwrap(), 0.0);
        assert_eq!(death_integral(&sol, 2, 5).unwrap(), 0.0);
    }

    #[test]
    fn first_two_terms_of_case_one() {
        let sol = case(1, 512, 2);
        let c = sol.coefficients_at(1.0, 2).unwrap();
        assert_relative_eq!(c[1], (-1.0f64).exp(), max_relative = 1e-6);
        let c = sol.coefficients_at(2.0, 2).unwrap();
        assert!(c[1].abs() < 1e-8);
        let c = sol.coefficients_at(sol.grid().n_min(), 2).unwrap();
        assert!((c[2] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn general_term_examples() {
        assert_relative_eq!(
            general_term_test1(3.0, 0),
            (-3.0f64).exp(),
            max_relative = 1e-15
        );
        assert_relative_eq!(general_term_test1(1.0, 1), 0.36788, epsilon = 1e-5);
        assert_relative_eq!(general_term_test1(1.0, 2), -0.18394, epsilon = 1e-5);
    }

    #[test]
    fn exact_solution_examples() {
        assert_eq!(exact_solution_test1(2.0, 0.0), (-2.0f64).exp());
        assert!((exact_solution_test1(6.0, 0.9) - 4.042e-5).abs() < 1e-8);
        assert_relative_eq!(
            exact_solution_test1(6.0, 1.5),
            1.91189e-6,
            max_relative = 1e-5
        );
    }

    #[test]
    fn recursion_consistency_at_nodes_and_centers() {
        let sol = case(4, 128, 4);
        for k in 0..4 {
            let next = sol.term(k + 1).unwrap();
            for idx in (0..sol.collocation().len()).step_by(37) {
                let rate =
                    birth_integral(&sol, k, idx).unwrap() - death_integral(&sol, k, idx).unwrap();
                assert_relative_eq!(
                    (k + 1) as f64 * next.node_values()[idx],
                    rate,
                    max_relative = 1e-12,
                    epsilon = 1e-300
                );
            }
            for (i, &x) in sol.grid().centers().iter().enumerate().step_by(11) {
                let rate =
                    birth_integral_at(&sol, k, x).unwrap() - death_integral_at(&sol, k, x).unwrap();
                assert_relative_eq!(
                    (k + 1) as f64 * next.center_values()[i],
                    rate,
                    max_relative = 1e-10,
                    epsilon = 1e-300
                );
            }
        }
    }

    #[test]
    fn evaluate_rejects_missing_orders_and_outside_points() {
        let sol = case(1, 64, 3);
        assert!(sol.evaluate(4, 1.0, 0.5).is_err());
        assert!(sol.evaluate(3, 60.0, 0.5).is_err());
        assert!(matches!(birth_integral(&sol, 9, 0), Err(Error::State(_))));
    }

    #[test]
    fn direct_integrals_agree_with_factorized() {
        let sol = case(3, 96, 2);
        for k in 0..=2 {
            for x in [0.05, 0.8, 3.0] {
                let fast = birth_integral_at(&sol, k, x).unwrap();
                let slow = birth_integral_direct(&sol, k, x).unwrap();
                assert_relative_eq!(fast, slow, max_relative = 1e-9, epsilon = 1e-12);
                let fast = death_integral_at(&sol, k, x).unwrap();
                let slow = death_integral_direct(&sol, k, x).unwrap();
                assert_relative_eq!(fast, slow, max_relative = 1e-9, epsilon = 1e-12);
            }
        }
    }
}
