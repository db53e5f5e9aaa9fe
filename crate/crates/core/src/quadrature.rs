//! Composite Gauss–Legendre quadrature on a geometric volume grid.
//!
//! Two kinds of integrand are supported: callables, integrated panel by
//! panel, and functions sampled at the collocation nodes of a
//! [`Collocation`]. A sampled function is treated cell by cell as the
//! Lagrange polynomial through its node values, which makes partial-cell
//! integrals (the lower limit of an upper-tail integral falling inside a
//! cell) as accurate as the full panels.
//!
//! The interval `(0, n_min)` that the grid truncates away is recovered for
//! sampled functions by extrapolating the first node value with a known
//! power law `n^p` and integrating that law in closed form.

use crate::error::{Error, Result};
use crate::model::VolumeGrid;

/// Gauss–Legendre rule on the reference interval `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes are the roots of `P_points`, found by Newton iteration from the
    /// usual cosine initial guesses. Nodes come out in ascending order.
    pub fn new(points: usize) -> Self {
        assert!(
            points >= 1,
            "a Gauss-Legendre rule needs at least one point"
        );
        let n = points;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..(n + 1) / 2 {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d.is_finite() {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integral of `f` over `[a, b]`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut sum = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            sum += w * f(mid + half * x);
        }
        half * sum
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Panel rule and singularity treatment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    points_per_cell: usize,
    singularity_handling: bool,
}

impl QuadratureSpec {
    pub fn new(points_per_cell: usize, singularity_handling: bool) -> Result<Self> {
        if points_per_cell < 2 {
            return Err(Error::Construction(format!(
                "points_per_cell must be at least 2, got {points_per_cell}"
            )));
        }
        Ok(Self {
            points_per_cell,
            singularity_handling,
        })
    }

    pub fn points_per_cell(&self) -> usize {
        self.points_per_cell
    }

    pub fn singularity_handling(&self) -> bool {
        self.singularity_handling
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            points_per_cell: 4,
            singularity_handling: true,
        }
    }
}

/// Integral of a callable over the whole truncated domain.
pub fn integrate_cells<F: Fn(f64) -> f64>(
    f: F,
    grid: &VolumeGrid,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let rule = GaussLegendre::new(spec.points_per_cell);
    let edges = grid.edges();
    let mut total = 0.0;
    for cell in 0..grid.cell_count() {
        let v = rule.integrate(edges[cell], edges[cell + 1], &f);
        if !v.is_finite() {
            return Err(Error::NonFiniteIntegrand { cell });
        }
        total += v;
    }
    Ok(total)
}

/// Integral of a callable over `[from, n_max]`. A lower limit in
/// `[0, n_min)` is snapped to `n_min`; the cell containing `from` is split
/// so that `from` is a panel boundary.
pub fn integrate_upper_tail<F: Fn(f64) -> f64>(
    f: F,
    from: f64,
    grid: &VolumeGrid,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if !(from >= 0.0 && from <= grid.n_max()) {
        return Err(Error::Domain(format!(
            "tail lower limit {from} outside [0, {}]",
            grid.n_max()
        )));
    }
    let from = from.max(grid.n_min());
    if from == grid.n_max() {
        return Ok(0.0);
    }
    let rule = GaussLegendre::new(spec.points_per_cell);
    let edges = grid.edges();
    let first = grid.locate(from).expect("from lies inside the grid");
    let mut total = 0.0;
    for cell in (first..grid.cell_count()).rev() {
        let a = if cell == first { from } else { edges[cell] };
        let v = rule.integrate(a, edges[cell + 1], &f);
        if !v.is_finite() {
            return Err(Error::NonFiniteIntegrand { cell });
        }
        total += v;
    }
    Ok(total)
}

/// Closed-form `∫_from^to n^p dn` for integrable powers `-1 < p`.
pub fn integrate_singular_weight(p: f64, from: f64, to: f64) -> Result<f64> {
    if !(p > -1.0) {
        return Err(Error::Domain(format!(
            "n^{p} is not integrable at zero (need p > -1)"
        )));
    }
    if !(from >= 0.0 && to > from) {
        return Err(Error::Domain(format!(
            "singular-weight interval needs 0 <= from < to, got [{from}, {to}]"
        )));
    }
    let q = p + 1.0;
    Ok((to.powf(q) - from.powf(q)) / q)
}

/// Per-cell Gauss–Legendre collocation nodes over a grid, with the
/// operations needed to integrate, interpolate and tail-integrate functions
/// sampled at those nodes.
#[derive(Debug, Clone)]
pub struct Collocation {
    grid: VolumeGrid,
    spec: QuadratureSpec,
    rule: GaussLegendre,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Row `a`: reference-interval integrals `∫_{ξ_a}^{1} L_b`.
    node_tail_weights: Vec<f64>,
    barycentric: Vec<f64>,
}

impl Collocation {
    pub fn new(grid: VolumeGrid, spec: QuadratureSpec) -> Self {
        let rule = GaussLegendre::new(spec.points_per_cell);
        let p = rule.len();
        let mut nodes = Vec::with_capacity(grid.cell_count() * p);
        let mut weights = Vec::with_capacity(grid.cell_count() * p);
        let edges = grid.edges();
        for cell in 0..grid.cell_count() {
            let half = 0.5 * (edges[cell + 1] - edges[cell]);
            let mid = 0.5 * (edges[cell + 1] + edges[cell]);
            for (x, w) in rule.nodes().iter().zip(rule.weights()) {
                nodes.push(mid + half * x);
                weights.push(half * w);
            }
        }
        let barycentric = (0..p)
            .map(|b| {
                let xb = rule.nodes()[b];
                1.0 / (0..p)
                    .filter(|&m| m != b)
                    .map(|m| xb - rule.nodes()[m])
                    .product::<f64>()
            })
            .collect();
        let mut colloc = Self {
            grid,
            spec,
            rule,
            nodes,
            weights,
            node_tail_weights: Vec::new(),
            barycentric,
        };
        let mut tw = Vec::with_capacity(p * p);
        for a in 0..p {
            tw.extend(colloc.reference_tail_weights(colloc.rule.nodes()[a]));
        }
        colloc.node_tail_weights = tw;
        colloc
    }

    pub fn grid(&self) -> &VolumeGrid {
        &self.grid
    }

    pub fn spec(&self) -> &QuadratureSpec {
        &self.spec
    }

    pub fn points_per_cell(&self) -> usize {
        self.rule.len()
    }

    /// All collocation nodes, cell-major, ascending.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Quadrature weights paired with [`Self::nodes`].
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn cell_of_node(&self, index: usize) -> usize {
        index / self.rule.len()
    }

    /// Samples a callable at every node.
    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }

    fn check_len(&self, values: &[f64]) {
        assert_eq!(
            values.len(),
            self.nodes.len(),
            "sampled function does not match the collocation nodes"
        );
    }

    /// Integral over `[n_min, n_max]`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.check_len(values);
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Like [`Self::integrate`] but reports the first cell holding a
    /// non-finite sample.
    pub fn try_integrate(&self, values: &[f64]) -> Result<f64> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteIntegrand {
                cell: self.cell_of_node(i),
            });
        }
        Ok(self.integrate(values))
    }

    /// Contribution of `(0, n_min)`, modelling the sampled function as
    /// `n^exponent (a + b n)` fitted to the first two nodes. Zero when
    /// singularity handling is off.
    pub fn gap_integral(&self, values: &[f64], exponent: f64) -> Result<f64> {
        self.check_len(values);
        if !self.spec.singularity_handling {
            return Ok(0.0);
        }
        let (x0, x1) = (self.nodes[0], self.nodes[1]);
        let u0 = values[0] * x0.powf(-exponent);
        let u1 = values[1] * x1.powf(-exponent);
        if u0 == 0.0 && u1 == 0.0 {
            return Ok(0.0);
        }
        let slope = (u1 - u0) / (x1 - x0);
        let intercept = u0 - slope * x0;
        let n_min = self.grid.n_min();
        Ok(intercept * integrate_singular_weight(exponent, 0.0, n_min)?
            + slope * integrate_singular_weight(exponent + 1.0, 0.0, n_min)?)
    }

    /// Integral over `(0, n_max]`: the truncated domain plus the
    /// extrapolated `(0, n_min)` piece.
    ///
    /// With singularity handling on and a nonzero exponent, each cell uses
    /// product weights `∫ n^exponent L_b(n) dn` applied to
    /// `values * n^-exponent`, so `n^exponent` times a low-degree polynomial
    /// integrates exactly.
    pub fn integrate_from_zero(&self, values: &[f64], exponent: f64) -> Result<f64> {
        let body = if exponent == 0.0 || !self.spec.singularity_handling {
            self.try_integrate(values)?
        } else {
            self.try_integrate(values)?;
            let w = self.power_weights(exponent);
            values
                .iter()
                .zip(&self.nodes)
                .zip(&w)
                .map(|((v, x), w)| v * x.powf(-exponent) * w)
                .sum()
        };
        Ok(body + self.gap_integral(values, exponent)?)
    }

    /// `∫_cell n^p L_b(n) dn` for every node, from a 32-point rule per cell.
    fn power_weights(&self, p: f64) -> Vec<f64> {
        let fine = GaussLegendre::new(32);
        let basis: Vec<Vec<f64>> = fine
            .nodes()
            .iter()
            .map(|&s| self.lagrange_basis(s))
            .collect();
        let k = self.rule.len();
        let edges = self.grid.edges();
        let mut out = Vec::with_capacity(self.nodes.len());
        for cell in 0..self.grid.cell_count() {
            let half = 0.5 * (edges[cell + 1] - edges[cell]);
            let mid = 0.5 * (edges[cell + 1] + edges[cell]);
            let mut w = vec![0.0; k];
            for ((s, ws), l) in fine.nodes().iter().zip(fine.weights()).zip(&basis) {
                let f = half * ws * (mid + half * s).powf(p);
                for (o, lb) in w.iter_mut().zip(l) {
                    *o += f * lb;
                }
            }
            out.extend(w);
        }
        out
    }

    /// `∫_{x_a}^{n_max}` of the sampled function at every node `x_a`.
    pub fn tail_integrals(&self, values: &[f64]) -> Vec<f64> {
        self.check_len(values);
        let p = self.rule.len();
        let cells = self.grid.cell_count();
        let mut out = vec![0.0; values.len()];
        let mut suffix = 0.0;
        for cell in (0..cells).rev() {
            let v = &values[cell * p..(cell + 1) * p];
            let half = 0.5 * self.grid.widths()[cell];
            for a in 0..p {
                let row = &self.node_tail_weights[a * p..(a + 1) * p];
                let partial: f64 = row.iter().zip(v).map(|(s, f)| s * f).sum();
                out[cell * p + a] = suffix + half * partial;
            }
            let full: f64 = v
                .iter()
                .zip(&self.weights[cell * p..(cell + 1) * p])
                .map(|(f, w)| f * w)
                .sum();
            suffix += full;
        }
        out
    }

    /// Per-cell full integrals, used to build tails at arbitrary points.
    pub fn cell_integrals(&self, values: &[f64]) -> Vec<f64> {
        self.check_len(values);
        let p = self.rule.len();
        values
            .chunks(p)
            .zip(self.weights.chunks(p))
            .map(|(v, w)| v.iter().zip(w).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `∫_x^{n_max}` of the sampled function. `suffix[i]` must hold the
    /// integral over cells `i..` (see [`suffix_sums`]).
    pub fn tail_at_with(&self, values: &[f64], suffix: &[f64], x: f64) -> Result<f64> {
        let cell = self.locate(x)?;
        let p = self.rule.len();
        let edges = self.grid.edges();
        let half = 0.5 * (edges[cell + 1] - edges[cell]);
        let mid = 0.5 * (edges[cell + 1] + edges[cell]);
        let xi = ((x - mid) / half).clamp(-1.0, 1.0);
        let s = self.reference_tail_weights(xi);
        let v = &values[cell * p..(cell + 1) * p];
        let partial: f64 = s.iter().zip(v).map(|(a, b)| a * b).sum();
        Ok(suffix[cell + 1] + half * partial)
    }

    /// `∫_x^{n_max}` of the sampled function.
    pub fn tail_at(&self, values: &[f64], x: f64) -> Result<f64> {
        self.check_len(values);
        let suffix = suffix_sums(&self.cell_integrals(values));
        self.tail_at_with(values, &suffix, x)
    }

    /// Value at `x` of the cell-local interpolating polynomial.
    pub fn interpolate(&self, values: &[f64], x: f64) -> Result<f64> {
        self.check_len(values);
        let cell = self.locate(x)?;
        let p = self.rule.len();
        let edges = self.grid.edges();
        let half = 0.5 * (edges[cell + 1] - edges[cell]);
        let mid = 0.5 * (edges[cell + 1] + edges[cell]);
        let xi = (x - mid) / half;
        let basis = self.lagrange_basis(xi);
        Ok(basis
            .iter()
            .zip(&values[cell * p..(cell + 1) * p])
            .map(|(l, v)| l * v)
            .sum())
    }

    fn locate(&self, x: f64) -> Result<usize> {
        self.grid.locate(x).ok_or_else(|| {
            Error::Domain(format!(
                "volume {x} outside the grid [{}, {}]",
                self.grid.n_min(),
                self.grid.n_max()
            ))
        })
    }

    fn lagrange_basis(&self, xi: f64) -> Vec<f64> {
        let nodes = self.rule.nodes();
        if let Some(hit) = nodes.iter().position(|&x| x == xi) {
            let mut out = vec![0.0; nodes.len()];
            out[hit] = 1.0;
            return out;
        }
        let ell: f64 = nodes.iter().map(|x| xi - x).product();
        nodes
            .iter()
            .zip(&self.barycentric)
            .map(|(x, w)| ell * w / (xi - x))
            .collect()
    }

    /// `∫_ξ^1 L_b` for every basis polynomial `b`, exact since `L_b` has
    /// degree `p - 1`.
    fn reference_tail_weights(&self, xi: f64) -> Vec<f64> {
        let p = self.rule.len();
        let mut out = vec![0.0; p];
        if xi >= 1.0 {
            return out;
        }
        let half = 0.5 * (1.0 - xi);
        for (s, w) in self.rule.nodes().iter().zip(self.rule.weights()) {
            let point = xi + half * (s + 1.0);
            for (o, l) in out.iter_mut().zip(self.lagrange_basis(point)) {
                *o += half * w * l;
            }
        }
        out
    }
}

/// `out[i] = Σ_{m >= i} cells[m]`, with a trailing zero.
pub fn suffix_sums(cells: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; cells.len() + 1];
    for i in (0..cells.len()).rev() {
        out[i] = out[i + 1] + cells[i];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn domain(cells: usize) -> VolumeGrid {
        VolumeGrid::geometric(1e-3, 50.0, cells).unwrap()
    }

    #[test]
    fn gauss_legendre_is_exact_on_polynomials() {
        for n in 2..=12 {
            let rule = GaussLegendre::new(n);
            let wsum: f64 = rule.weights().iter().sum();
            assert_relative_eq!(wsum, 2.0, max_relative = 1e-14);
            for deg in 0..(2 * n) {
                let exact = if deg % 2 == 0 {
                    2.0 / (deg as f64 + 1.0)
                } else {
                    0.0
                };
                let v = rule.integrate(-1.0, 1.0, |x| x.powi(deg as i32));
                assert!((v - exact).abs() < 1e-13, "n={n} deg={deg}: {v} vs {exact}");
            }
            assert!(rule.nodes().windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn integrate_cells_examples() {
        let g = domain(256);
        let s = QuadratureSpec::default();
        let v = integrate_cells(|n| (-n).exp(), &g, &s).unwrap();
        let exact = (-1e-3f64).exp() - (-50.0f64).exp();
        assert!((v - exact).abs() < 1e-6);
        assert!((v - 0.99900).abs() < 1e-6);
        let v = integrate_cells(|n| n * (-n).exp(), &g, &s).unwrap();
        assert!((v - 1.0).abs() < 1e-6);
        assert_eq!(integrate_cells(|_| 0.0, &g, &s).unwrap(), 0.0);
    }

    #[test]
    fn integrate_cells_reports_bad_cell() {
        let g = domain(16);
        let err = integrate_cells(
            |n| if n > 10.0 { f64::NAN } else { n },
            &g,
            &QuadratureSpec::default(),
        )
        .unwrap_err();
        let bad = g.locate(10.0).unwrap();
        match err {
            Error::NonFiniteIntegrand { cell } => assert!(cell >= bad),
            e => panic!("unexpected error {e:?}"),
        }
    }

    #[test]
    fn integrate_upper_tail_examples() {
        let g = domain(256);
        let s = QuadratureSpec::default();
        let v = integrate_upper_tail(|e| (-e).exp(), 1.0, &g, &s).unwrap();
        assert!((v - 0.367879).abs() < 1e-6);
        assert_eq!(
            integrate_upper_tail(|e| (-e).exp(), 50.0, &g, &s).unwrap(),
            0.0
        );
        let v = integrate_upper_tail(|e| e * (-e).exp(), 0.0, &g, &s).unwrap();
        assert!((v - 1.0).abs() < 1e-5);
        assert!(integrate_upper_tail(|e| e, 51.0, &g, &s).is_err());
        assert!(integrate_upper_tail(|e| e, -1.0, &g, &s).is_err());
    }

    #[test]
    fn upper_tail_from_n_min_equals_full_integral() {
        let g = domain(128);
        let s = QuadratureSpec::default();
        let f = |n: f64| n * n * (-n).exp();
        let a = integrate_upper_tail(f, g.n_min(), &g, &s).unwrap();
        let b = integrate_cells(f, &g, &s).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn doubling_points_changes_little() {
        let g = domain(256);
        for f in [
            (|n: f64| (-n).exp()) as fn(f64) -> f64,
            |n: f64| n * n * (-n).exp(),
            |n: f64| (-0.5 * n * n).exp(),
        ] {
            let a = integrate_cells(f, &g, &QuadratureSpec::new(4, true).unwrap()).unwrap();
            let b = integrate_cells(f, &g, &QuadratureSpec::new(8, true).unwrap()).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-9);
        }
    }

    #[test]
    fn singular_weight_examples() {
        assert_relative_eq!(
            integrate_singular_weight(-0.5, 0.0, 1.0).unwrap(),
            2.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            integrate_singular_weight(0.0, 1.0, 4.0).unwrap(),
            3.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            integrate_singular_weight(-0.5, 1.0, 4.0).unwrap(),
            2.0,
            max_relative = 1e-12
        );
        assert!(integrate_singular_weight(-1.0, 0.0, 1.0).is_err());
        assert!(integrate_singular_weight(-0.5, 2.0, 1.0).is_err());
    }

    #[test]
    fn singular_panels_match_closed_form() {
        // n^{-1/2} over the geometric cells reproduces 2(√b − √a).
        let g = domain(64);
        let c = Collocation::new(g.clone(), QuadratureSpec::default());
        for p in [-0.5, 0.0] {
            let v = c.sample(|n| n.powf(p));
            let total = c.integrate_from_zero(&v, p).unwrap();
            let exact = integrate_singular_weight(p, 0.0, 50.0).unwrap();
            assert_relative_eq!(total, exact, max_relative = 1e-12);
        }
    }

    #[test]
    fn sampled_tails_match_callable_tails() {
        let g = domain(256);
        let s = QuadratureSpec::default();
        let c = Collocation::new(g.clone(), s);
        let f = |n: f64| n.sqrt() * (-n).exp();
        let v = c.sample(f);
        let tails = c.tail_integrals(&v);
        for idx in [0, 3, 100, 517, 900] {
            let x = c.nodes()[idx];
            let direct = integrate_upper_tail(f, x, &g, &s).unwrap();
            assert_relative_eq!(tails[idx], direct, max_relative = 1e-6);
            assert_relative_eq!(c.tail_at(&v, x).unwrap(), tails[idx], max_relative = 1e-12);
        }
        for x in [0.01, 1.0, 2.5, 7.3] {
            let direct = integrate_upper_tail(f, x, &g, &s).unwrap();
            assert_relative_eq!(c.tail_at(&v, x).unwrap(), direct, max_relative = 1e-6);
        }
        assert_relative_eq!(
            c.tail_at(&v, g.n_min()).unwrap(),
            c.integrate(&v),
            max_relative = 1e-12
        );
        assert_eq!(c.tail_at(&v, g.n_max()).unwrap(), 0.0);
    }

    #[test]
    fn interpolation_is_spectral_within_cells() {
        let c = Collocation::new(domain(256), QuadratureSpec::default());
        let v = c.sample(|n| (-n).exp());
        for x in [0.002, 0.5, 1.0, 6.0, 20.0] {
            assert_relative_eq!(
                c.interpolate(&v, x).unwrap(),
                (-x).exp(),
                epsilon = 1e-10,
                max_relative = 1e-5
            );
        }
        assert!(c.interpolate(&v, 60.0).is_err());
    }
}
