//! Quadrature rules and evaluation grids on the unit cube.
//!
//! A [`Grid`] is a set of nodes in `[0,1]^d` with non-negative weights that
//! sum to one. The same type serves as an integration rule (Gram matrices,
//! L2 projections) and as the evaluation grid for function-space distances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

/// Largest number of nodes a tensor rule may have.
pub const MAX_RULE_NODES: usize = 20_000_000;

/// Cap on the number of points of a default tensor evaluation grid.
pub const MAX_TENSOR_GRID_POINTS: usize = 1_000_000;

/// Points of the default one-dimensional evaluation grid.
pub const DEFAULT_GRID_POINTS_1D: usize = 2049;

/// Points of the seeded Monte Carlo grid used when `d > 3`.
pub const DEFAULT_MC_POINTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QuadratureError {
    #[error("quadrature budget exceeded: {requested} nodes requested, limit is {limit}")]
    BudgetExceeded { requested: u128, limit: usize },
    #[error("tensor quadrature is limited to dimension <= 3, got {0}")]
    DimensionTooLarge(usize),
    #[error("invalid quadrature parameter: {0}")]
    InvalidParameter(&'static str),
}

/// How a rule was built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    /// Composite Gauss–Legendre on the given breakpoints of each axis.
    GaussLegendre { nodes_per_interval: usize },
    Trapezoid { points_per_axis: usize },
    MonteCarlo { points: usize, seed: u64 },
}

/// Nodes (row-major, `dim` coordinates each) and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    kind: RuleKind,
}

impl Grid {
    /// Tensor trapezoid rule with `points_per_axis` equispaced points per axis,
    /// endpoints included.
    pub fn trapezoid(dim: usize, points_per_axis: usize) -> Result<Self, QuadratureError> {
        if dim == 0 {
            return Err(QuadratureError::InvalidParameter("dimension must be >= 1"));
        }
        if points_per_axis < 2 {
            return Err(QuadratureError::InvalidParameter("trapezoid rule needs >= 2 points"));
        }
        if dim > 3 {
            return Err(QuadratureError::DimensionTooLarge(dim));
        }
        let m = points_per_axis;
        let h = 1.0 / (m - 1) as f64;
        let axis: Vec<(f64, f64)> = (0..m)
            .map(|i| {
                let x = if i == m - 1 { 1.0 } else { i as f64 * h };
                let w = if i == 0 || i == m - 1 { 0.5 * h } else { h };
                (x, w)
            })
            .collect();
        let axes = vec![axis; dim];
        Self::tensor(&axes, RuleKind::Trapezoid { points_per_axis })
    }

    /// Composite Gauss–Legendre rule: `nodes_per_interval` nodes on every
    /// interval between consecutive distinct breakpoints of each axis.
    ///
    /// With `nodes_per_interval = q` the rule integrates piecewise polynomials
    /// of degree `<= 2q - 1` (between breakpoints) exactly.
    pub fn gauss_legendre(
        breakpoints: &[Vec<f64>],
        nodes_per_interval: usize,
    ) -> Result<Self, QuadratureError> {
        if breakpoints.is_empty() {
            return Err(QuadratureError::InvalidParameter("dimension must be >= 1"));
        }
        if breakpoints.len() > 3 {
            return Err(QuadratureError::DimensionTooLarge(breakpoints.len()));
        }
        if nodes_per_interval == 0 {
            return Err(QuadratureError::InvalidParameter("need >= 1 node per interval"));
        }
        let (ref_nodes, ref_weights) = gauss_legendre_reference(nodes_per_interval);
        let mut axes = Vec::with_capacity(breakpoints.len());
        for bps in breakpoints {
            let mut axis = Vec::new();
            for pair in bps.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                if b <= a {
                    continue;
                }
                let half = 0.5 * (b - a);
                let mid = 0.5 * (a + b);
                for (t, w) in ref_nodes.iter().zip(&ref_weights) {
                    axis.push((mid + half * t, half * w));
                }
            }
            if axis.is_empty() {
                return Err(QuadratureError::InvalidParameter("breakpoints span no interval"));
            }
            axes.push(axis);
        }
        Self::tensor(&axes, RuleKind::GaussLegendre { nodes_per_interval })
    }

    /// `points` iid uniform nodes on `[0,1]^dim`, each with weight `1/points`.
    pub fn monte_carlo(dim: usize, points: usize, seed: u64) -> Result<Self, QuadratureError> {
        if dim == 0 || points == 0 {
            return Err(QuadratureError::InvalidParameter("dimension and points must be >= 1"));
        }
        let total = dim as u128 * points as u128;
        if total > MAX_RULE_NODES as u128 * 4 {
            return Err(QuadratureError::BudgetExceeded { requested: total, limit: MAX_RULE_NODES });
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let nodes = (0..dim * points).map(|_| rng.random::<f64>()).collect();
        Ok(Self {
            dim,
            nodes,
            weights: vec![1.0 / points as f64; points],
            kind: RuleKind::MonteCarlo { points, seed },
        })
    }

    /// The default evaluation grid for distances: 2049 points for `d = 1`,
    /// a tensor grid of at most 10^6 points for `d <= 3`, and a seeded
    /// Monte Carlo grid of 10^5 points beyond.
    pub fn default_for_dim(dim: usize, seed: u64) -> Result<Self, QuadratureError> {
        match dim {
            1 => Self::trapezoid(1, DEFAULT_GRID_POINTS_1D),
            2 | 3 => {
                let per_axis = (MAX_TENSOR_GRID_POINTS as f64).powf(1.0 / dim as f64).floor() as usize;
                Self::trapezoid(dim, per_axis)
            }
            _ => Self::monte_carlo(dim, DEFAULT_MC_POINTS, seed),
        }
    }

    fn tensor(axes: &[Vec<(f64, f64)>], kind: RuleKind) -> Result<Self, QuadratureError> {
        let dim = axes.len();
        let total: u128 = axes.iter().map(|a| a.len() as u128).product();
        if total > MAX_RULE_NODES as u128 {
            return Err(QuadratureError::BudgetExceeded { requested: total, limit: MAX_RULE_NODES });
        }
        let total = total as usize;
        let mut nodes = Vec::with_capacity(total * dim);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            let mut w = 1.0;
            for (axis, &i) in axes.iter().zip(&idx) {
                nodes.push(axis[i].0);
                w *= axis[i].1;
            }
            weights.push(w);
            // row-major: last axis varies fastest
            for ax in (0..dim).rev() {
                idx[ax] += 1;
                if idx[ax] < axes[ax].len() {
                    break;
                }
                idx[ax] = 0;
            }
        }
        Ok(Self { dim, nodes, weights, kind })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn kind(&self) -> &RuleKind {
        &self.kind
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Coordinates of node `i`.
    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.nodes.chunks_exact(self.dim)
    }

    /// Weighted integral of sampled values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on the
/// Legendre polynomial.
pub fn gauss_legendre_reference(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
