//! Problem definition: volume grid, collision kernels, breakage
//! distributions, initial conditions and the six reference cases.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometric partition of the truncated volume domain `[n_min, n_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeGrid {
    n_min: f64,
    n_max: f64,
    edges: Vec<f64>,
    centers: Vec<f64>,
    widths: Vec<f64>,
    log_ratio: f64,
}

impl VolumeGrid {
    /// Builds a grid whose edges grow by the constant ratio
    /// `(n_max / n_min)^(1 / cell_count)`.
    pub fn geometric(n_min: f64, n_max: f64, cell_count: usize) -> Result<Self> {
        if !(n_min.is_finite() && n_max.is_finite()) || n_min <= 0.0 || n_max <= n_min {
            return Err(Error::Construction(format!(
                "grid bounds must satisfy 0 < n_min < n_max, got [{n_min}, {n_max}]"
            )));
        }
        if cell_count < 2 {
            return Err(Error::Construction(format!(
                "grid needs at least 2 cells, got {cell_count}"
            )));
        }
        let log_ratio = (n_max / n_min).ln() / cell_count as f64;
        let mut edges: Vec<f64> = (0..=cell_count)
            .map(|i| n_min * (log_ratio * i as f64).exp())
            .collect();
        edges[0] = n_min;
        edges[cell_count] = n_max;
        let centers = edges.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect();
        let widths = edges.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self {
            n_min,
            n_max,
            edges,
            centers,
            widths,
            log_ratio,
        })
    }

    pub fn n_min(&self) -> f64 {
        self.n_min
    }

    pub fn n_max(&self) -> f64 {
        self.n_max
    }

    pub fn cell_count(&self) -> usize {
        self.centers.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    /// Constant ratio between consecutive edges.
    pub fn ratio(&self) -> f64 {
        self.log_ratio.exp()
    }

    pub fn contains(&self, n: f64) -> bool {
        n >= self.n_min && n <= self.n_max
    }

    /// Index of the cell containing `n`. Values on an interior edge belong to
    /// the cell on their right; `n_max` belongs to the last cell.
    pub fn locate(&self, n: f64) -> Option<usize> {
        if !self.contains(n) {
            return None;
        }
        let last = self.cell_count() - 1;
        let guess = ((n / self.n_min).ln() / self.log_ratio).floor();
        let mut i = if guess.is_finite() && guess > 0.0 {
            (guess as usize).min(last)
        } else {
            0
        };
        while i > 0 && n < self.edges[i] {
            i -= 1;
        }
        while i < last && n >= self.edges[i + 1] {
            i += 1;
        }
        Some(i)
    }
}

/// Collision kernel `mu(n, eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CollisionKernel {
    /// `scale * n * eps`.
    Product { scale: f64 },
    /// `(n + a)^(1/3) * (eps + a)^(1/3)`.
    Polymerization { a: f64 },
}

impl CollisionKernel {
    pub fn product(scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Construction(format!(
                "product kernel scale must be positive, got {scale}"
            )));
        }
        Ok(Self::Product { scale })
    }

    pub fn polymerization(a: f64) -> Result<Self> {
        if !(a.is_finite() && a >= 0.0) {
            return Err(Error::Construction(format!(
                "polymerization offset must be nonnegative, got {a}"
            )));
        }
        Ok(Self::Polymerization { a })
    }

    /// Collision rate between volumes `n` and `eps`.
    pub fn eval(&self, n: f64, eps: f64) -> Result<f64> {
        if !(n > 0.0 && eps > 0.0) {
            return Err(Error::Domain(format!(
                "collision kernel needs positive volumes, got ({n}, {eps})"
            )));
        }
        Ok(self.rate(n, eps))
    }

    /// Unchecked evaluation for inner loops.
    #[inline]
    pub fn rate(&self, n: f64, eps: f64) -> f64 {
        match *self {
            Self::Product { scale } => scale * (n * eps),
            Self::Polymerization { a } => ((n + a) * (eps + a)).cbrt(),
        }
    }

    /// Every variant factors as `mu(n, eps) = g(n) g(eps)`; this is `g`.
    #[inline]
    pub fn factor(&self, n: f64) -> f64 {
        match *self {
            Self::Product { scale } => scale.sqrt() * n,
            Self::Polymerization { a } => (n + a).cbrt(),
        }
    }

    /// Power of `n` that `g(n)` behaves like as `n -> 0`.
    pub fn factor_exponent_at_zero(&self) -> f64 {
        match *self {
            Self::Product { .. } => 1.0,
            Self::Polymerization { a } if a == 0.0 => 1.0 / 3.0,
            Self::Polymerization { .. } => 0.0,
        }
    }
}

impl fmt::Display for CollisionKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Product { scale } if scale == 1.0 => write!(f, "product n*eps"),
            Self::Product { scale } => write!(f, "product {scale}*n*eps"),
            Self::Polymerization { a } => {
                write!(f, "polymerization (n+{a})^(1/3)*(eps+{a})^(1/3)")
            }
        }
    }
}

/// Breakage distribution `alpha(n, eps, rho) = sigma * n^(j-1) / eps^j`,
/// independent of the collision partner `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreakageDistribution {
    sigma: f64,
    j: f64,
}

impl BreakageDistribution {
    /// A member of the power family. Rejects parameters that violate mass
    /// conservation, i.e. `sigma / (j + 1) != 1`.
    pub fn power(sigma: f64, j: f64) -> Result<Self> {
        if !(sigma.is_finite() && j.is_finite() && sigma > 0.0 && j > 0.0) {
            return Err(Error::Construction(format!(
                "breakage parameters must be positive, got sigma={sigma}, j={j}"
            )));
        }
        if (sigma / (j + 1.0) - 1.0).abs() > 1e-12 {
            return Err(Error::Construction(format!(
                "breakage (sigma={sigma}, j={j}) does not conserve mass: sigma/(j+1) = {}",
                sigma / (j + 1.0)
            )));
        }
        Ok(Self { sigma, j })
    }

    /// `2 / eps`.
    pub fn binary() -> Self {
        Self { sigma: 2.0, j: 1.0 }
    }

    /// `3 / (2 eps^(1/2) n^(1/2))`: three fragments per event.
    pub fn ternary() -> Self {
        Self { sigma: 1.5, j: 0.5 }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn exponent(&self) -> f64 {
        self.j
    }

    /// Density of daughters of volume `n` from a mother of volume `eps`.
    /// Zero outside the support `0 < n <= eps`.
    pub fn eval(&self, n: f64, eps: f64) -> Result<f64> {
        if !(eps > 0.0) {
            return Err(Error::Domain(format!(
                "breakage distribution needs a positive mother volume, got {eps}"
            )));
        }
        if !(n > 0.0 && n <= eps) {
            return Ok(0.0);
        }
        Ok(self.daughter_factor(n) * self.mother_factor(eps))
    }

    /// `sigma * n^(j-1)`.
    #[inline]
    pub fn daughter_factor(&self, n: f64) -> f64 {
        self.sigma * n.powf(self.j - 1.0)
    }

    /// `eps^(-j)`.
    #[inline]
    pub fn mother_factor(&self, eps: f64) -> f64 {
        eps.powf(-self.j)
    }

    /// Expected number of fragments per breakage event, `sigma / j`.
    pub fn daughter_count(&self) -> f64 {
        self.sigma / self.j
    }

    /// Number of daughters from a mother `eps` with volume in `[a, b]`,
    /// clipped to the support.
    pub fn daughters_between(&self, a: f64, b: f64, eps: f64) -> f64 {
        let a = a.max(0.0);
        let b = b.min(eps);
        if b <= a {
            return 0.0;
        }
        self.sigma / self.j * (b.powf(self.j) - a.powf(self.j)) * self.mother_factor(eps)
    }

    /// Power of `n` that the distribution behaves like as `n -> 0`.
    pub fn exponent_at_zero(&self) -> f64 {
        (self.j - 1.0).min(0.0)
    }
}

impl fmt::Display for BreakageDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Self::binary() {
            write!(f, "binary 2/eps")
        } else if *self == Self::ternary() {
            write!(f, "ternary 3/(2 eps^(1/2) n^(1/2))")
        } else {
            write!(
                f,
                "power {}*n^({})/eps^{}",
                self.sigma,
                self.j - 1.0,
                self.j
            )
        }
    }
}

/// Initial number density `w(n, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    /// `e^(-n)`
    Exponential,
    /// `e^(-n^2/2) / sqrt(2 pi)`, used unnormalized on the half line.
    Gaussian,
    /// `n^2 e^(-n)`
    SquaredExponential,
}

impl InitialCondition {
    pub fn eval(&self, n: f64) -> f64 {
        match self {
            Self::Exponential => (-n).exp(),
            Self::Gaussian => (-0.5 * n * n).exp() / (2.0 * PI).sqrt(),
            Self::SquaredExponential => n * n * (-n).exp(),
        }
    }

    pub fn exponent_at_zero(&self) -> f64 {
        match self {
            Self::Exponential | Self::Gaussian => 0.0,
            Self::SquaredExponential => 2.0,
        }
    }

    /// Upper truncation volume that leaves a negligible tail.
    pub fn default_n_max(&self) -> f64 {
        match self {
            Self::Gaussian => 12.0,
            Self::Exponential | Self::SquaredExponential => 50.0,
        }
    }
}

impl fmt::Display for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Exponential => write!(f, "exponential e^(-n)"),
            Self::Gaussian => write!(f, "gaussian e^(-n^2/2)/sqrt(2 pi)"),
            Self::SquaredExponential => write!(f, "n^2 e^(-n)"),
        }
    }
}

/// Kernel, breakage distribution and initial condition of one problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Problem {
    pub kernel: CollisionKernel,
    pub breakage: BreakageDistribution,
    pub initial: InitialCondition,
}

pub const DEFAULT_N_MIN: f64 = 1e-3;

/// One of the six reference configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct CasePreset {
    pub id: u8,
    pub problem: Problem,
    pub times: Vec<f64>,
    pub order: usize,
}

impl CasePreset {
    pub fn get(id: u8) -> Result<Self> {
        let binary = BreakageDistribution::binary();
        let ternary = BreakageDistribution::ternary();
        let product = CollisionKernel::Product { scale: 1.0 };
        let generic_times = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        let (kernel, breakage, initial, times, order) = match id {
            1 => (
                product,
                binary,
                InitialCondition::Exponential,
                vec![0.0, 0.3, 0.54, 0.6, 0.9, 1.02, 1.2, 1.4, 1.5],
                5,
            ),
            2 => (
                product,
                binary,
                InitialCondition::Gaussian,
                generic_times,
                5,
            ),
            3 => (
                CollisionKernel::Polymerization { a: 0.0 },
                binary,
                InitialCondition::Exponential,
                generic_times,
                3,
            ),
            4 => (
                product,
                ternary,
                InitialCondition::Exponential,
                generic_times,
                3,
            ),
            5 => (
                product,
                ternary,
                InitialCondition::Gaussian,
                generic_times,
                5,
            ),
            6 => (
                CollisionKernel::Product { scale: 1.0 / 20.0 },
                ternary,
                InitialCondition::SquaredExponential,
                generic_times,
                4,
            ),
            _ => {
                return Err(Error::Construction(format!(
                    "case id must be in 1..=6, got {id}"
                )))
            }
        };
        Ok(Self {
            id,
            problem: Problem {
                kernel,
                breakage,
                initial,
            },
            times,
            order,
        })
    }

    pub fn all() -> Vec<Self> {
        (1..=6)
            .map(|id| Self::get(id).expect("preset ids are valid"))
            .collect()
    }

    /// Only case 1 has a closed-form solution.
    pub fn has_exact_solution(&self) -> bool {
        self.id == 1
    }

    /// Default grid for this case.
    pub fn default_grid(&self, cells: usize) -> VolumeGrid {
        VolumeGrid::geometric(DEFAULT_N_MIN, self.problem.initial.default_n_max(), cells)
            .expect("default bounds are valid")
    }
}
