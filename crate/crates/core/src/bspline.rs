//! Cardinal B-splines on `[0,1]` and their tensor products.
//!
//! Knots are equispaced, `t_i = i/J`, with `q` copies of each boundary knot.
//! For order `q` and `J` segments there are `J + q - 1` basis functions,
//! indexed `0..J+q-1` here (function `j` is supported on
//! `[t[j], t[j+q]]` of the stored knot vector). The point `x = 1` belongs to
//! the last segment, so the basis is a partition of unity on the closed
//! interval.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisError, BasisSet};
use crate::quadrature::{Grid, QuadratureError};
use crate::synth::TargetFunction;

/// Largest tensor basis accepted by [`make_bspline_basis`].
pub const MAX_BASIS_SIZE: usize = 1_000_000;

/// Smallest Gram eigenvalue accepted by [`project_l2`].
pub const SINGULAR_GRAM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BSplineError {
    #[error("invalid spline parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("basis index {index} out of range (basis has {size} functions)")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("x = {0} lies outside [0, 1]")]
    OutOfDomain(f64),
    #[error("tensor basis too large: {0} functions exceed the limit of 1e6")]
    TooManyFunctions(u128),
    #[error("Gram matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("Gram matrix is numerically singular (smallest eigenvalue {0:e})")]
    SingularGram(f64),
    #[error("target dimension {target} does not match basis dimension {basis}")]
    DimensionMismatch { target: usize, basis: usize },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Basis(#[from] BasisError),
}

/// Clamped equispaced knot vector `t_{-q+1}, ..., t_{J+q-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knots {
    intervals: usize,
    order: usize,
    values: Vec<f64>,
}

impl Knots {
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of basis functions, `J + q - 1`.
    pub fn basis_len(&self) -> usize {
        self.intervals + self.order - 1
    }

    /// Distinct knots `0, 1/J, ..., 1`.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.values[self.order - 1..self.order + self.intervals].to_vec()
    }

    /// Index `s` of the stored knot with `t[s] <= x < t[s+1]`, where
    /// `t[s] < t[s+1]`; `x = 1` maps to the last segment.
    fn span(&self, x: f64) -> usize {
        let j = self.intervals;
        let seg = ((x * j as f64).floor() as usize).min(j - 1);
        // floor(x*J) can be off by one against the stored i/J values
        let mut s = self.order - 1 + seg;
        if x < self.values[s] && seg > 0 {
            s -= 1;
        } else if seg + 1 < j && x >= self.values[s + 1] {
            s += 1;
        }
        s
    }
}

/// Equispaced clamped knots for `J` segments and order `q`.
pub fn knot_vector(intervals: usize, order: usize) -> Result<Knots, BSplineError> {
    if intervals == 0 {
        return Err(BSplineError::InvalidParameter("J must be >= 1"));
    }
    if order == 0 {
        return Err(BSplineError::InvalidParameter("order q must be >= 1"));
    }
    let mut values = Vec::with_capacity(intervals + 2 * order - 1);
    values.extend(std::iter::repeat_n(0.0, order - 1));
    values.extend((0..=intervals).map(|i| i as f64 / intervals as f64));
    values.extend(std::iter::repeat_n(1.0, order - 1));
    Ok(Knots { intervals, order, values })
}

/// Value of basis function `j` at `x` by the Cox–de Boor recursion.
///
/// Ratios with a zero denominator (repeated knots) are taken as zero.
pub fn eval_bspline_1d(knots: &Knots, j: usize, x: f64) -> Result<f64, BSplineError> {
    let size = knots.basis_len();
    if j >= size {
        return Err(BSplineError::IndexOutOfRange { index: j, size });
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(BSplineError::OutOfDomain(x));
    }
    Ok(cox_de_boor(knots, j, knots.order, x))
}

fn cox_de_boor(knots: &Knots, j: usize, order: usize, x: f64) -> f64 {
    let t = &knots.values;
    if order == 1 {
        let inside = t[j] <= x && x < t[j + 1];
        let closes_right = x == 1.0 && t[j] < t[j + 1] && t[j + 1] == 1.0;
        return if inside || closes_right { 1.0 } else { 0.0 };
    }
    let mut value = 0.0;
    let left_den = t[j + order - 1] - t[j];
    if left_den > 0.0 {
        value += (x - t[j]) / left_den * cox_de_boor(knots, j, order - 1, x);
    }
    let right_den = t[j + order] - t[j + 1];
    if right_den > 0.0 {
        value += (t[j + order] - x) / right_den * cox_de_boor(knots, j + 1, order - 1, x);
    }
    value
}

/// The `q` basis functions that can be nonzero at `x`, written into `out`
/// (length `q`); returns the index of the first of them.
///
/// Triangular evaluation of the same recursion, `O(q^2)` per point.
pub fn eval_nonzero(knots: &Knots, x: f64, out: &mut [f64]) -> usize {
    let q = knots.order;
    debug_assert_eq!(out.len(), q);
    let t = &knots.values;
    let s = knots.span(x);
    let mut left = [0.0f64; 32];
    let mut right = [0.0f64; 32];
    out[0] = 1.0;
    for r in 1..q {
        left[r] = x - t[s + 1 - r];
        right[r] = t[s + r] - x;
        let mut saved = 0.0;
        for i in 0..r {
            let den = right[i + 1] + left[r - i];
            let tmp = if den > 0.0 { out[i] / den } else { 0.0 };
            out[i] = saved + right[i + 1] * tmp;
            saved = left[r - i] * tmp;
        }
        out[r] = saved;
    }
    s + 1 - q
}

/// Tensor product of one-dimensional clamped B-spline bases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorBSpline {
    axes: Vec<Knots>,
}

impl TensorBSpline {
    pub fn new(axes: Vec<Knots>) -> Result<Self, BSplineError> {
        if axes.is_empty() {
            return Err(BSplineError::InvalidParameter("need at least one axis"));
        }
        if axes.iter().any(|k| k.order > 31) {
            return Err(BSplineError::InvalidParameter("order q must be <= 31"));
        }
        let k: u128 = axes.iter().map(|a| a.basis_len() as u128).product();
        if k > MAX_BASIS_SIZE as u128 {
            return Err(BSplineError::TooManyFunctions(k));
        }
        Ok(Self { axes })
    }

    pub fn axes(&self) -> &[Knots] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Knots::basis_len).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Writes all `k` values at `x` into `out`. Flattening is row-major in
    /// the per-axis indices (first axis most significant).
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let d = self.axes.len();
        let mut firsts = vec![0usize; d];
        let mut vals: Vec<[f64; 32]> = vec![[0.0; 32]; d];
        for (ax, knots) in self.axes.iter().enumerate() {
            let q = knots.order;
            firsts[ax] = eval_nonzero(knots, x[ax], &mut vals[ax][..q]);
        }
        let mut local = vec![0usize; d];
        loop {
            let mut flat = 0usize;
            let mut value = 1.0;
            for ax in 0..d {
                flat = flat * self.axes[ax].basis_len() + firsts[ax] + local[ax];
                value *= vals[ax][local[ax]];
            }
            out[flat] = value;
            let mut ax = d;
            loop {
                if ax == 0 {
                    return;
                }
                ax -= 1;
                local[ax] += 1;
                if local[ax] < self.axes[ax].order {
                    break;
                }
                local[ax] = 0;
            }
        }
    }

    /// Composite Gauss–Legendre rule on the knot intervals, exact for the
    /// products of two basis functions when `nodes_per_interval >= q`.
    pub fn gauss_rule(&self, nodes_per_interval: usize) -> Result<Grid, QuadratureError> {
        let bps: Vec<Vec<f64>> = self.axes.iter().map(Knots::breakpoints).collect();
        Grid::gauss_legendre(&bps, nodes_per_interval)
    }

    /// Largest order among the axes.
    pub fn max_order(&self) -> usize {
        self.axes.iter().map(|k| k.order).max().unwrap_or(1)
    }
}

/// Tensor B-spline basis with `J` segments and order `q` on every axis of
/// `[0,1]^d`; `k = (J + q - 1)^d`.
pub fn make_bspline_basis(intervals: usize, order: usize, dim: usize) -> Result<BasisSet, BSplineError> {
    if dim == 0 {
        return Err(BSplineError::InvalidParameter("dimension must be >= 1"));
    }
    let knots = knot_vector(intervals, order)?;
    let k = (knots.basis_len() as u128).checked_pow(dim as u32).unwrap_or(u128::MAX);
    if k > MAX_BASIS_SIZE as u128 {
        return Err(BSplineError::TooManyFunctions(k));
    }
    Ok(BasisSet::TensorBSpline(TensorBSpline::new(vec![knots; dim])?))
}

/// How to integrate over `[0,1]^d`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureSpec {
    /// Gauss–Legendre with `q` nodes per knot interval for spline bases,
    /// otherwise a 2048-point-per-axis trapezoid rule (Monte Carlo with 10^5
    /// points, seed 0, when that grid would be too large).
    #[default]
    Auto,
    GaussLegendre { nodes_per_interval: usize },
    Trapezoid { points_per_axis: usize },
    MonteCarlo { points: usize, seed: u64 },
}

pub const DEFAULT_TRAPEZOID_POINTS: usize = 2048;
pub const DEFAULT_MC_QUADRATURE_POINTS: usize = 100_000;

impl QuadratureSpec {
    /// Builds the concrete rule for `basis`.
    pub fn rule_for(&self, basis: &BasisSet) -> Result<Grid, BSplineError> {
        let dim = basis.dim();
        let rule = match *self {
            QuadratureSpec::Auto => match basis.spline_backend() {
                Some(spline) => spline.gauss_rule(spline.max_order())?,
                None => match Grid::trapezoid(dim, DEFAULT_TRAPEZOID_POINTS) {
                    Ok(g) => g,
                    Err(_) => Grid::monte_carlo(dim, DEFAULT_MC_QUADRATURE_POINTS, 0)?,
                },
            },
            QuadratureSpec::GaussLegendre { nodes_per_interval } => match basis.spline_backend() {
                Some(spline) => spline.gauss_rule(nodes_per_interval)?,
                None => {
                    return Err(BSplineError::InvalidParameter(
                        "Gauss-Legendre quadrature needs a spline basis for its breakpoints",
                    ))
                }
            },
            QuadratureSpec::Trapezoid { points_per_axis } => Grid::trapezoid(dim, points_per_axis)?,
            QuadratureSpec::MonteCarlo { points, seed } => Grid::monte_carlo(dim, points, seed)?,
        };
        Ok(rule)
    }
}

/// Symmetric matrix of pairwise L2 inner products of a basis.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub matrix: DMatrix<f64>,
    pub rule: crate::quadrature::RuleKind,
    pub nodes: usize,
}

impl GramMatrix {
    /// Wraps an existing matrix (e.g. an empirical Gram); `rule` describes
    /// where it came from.
    pub fn from_matrix(matrix: DMatrix<f64>, rule: crate::quadrature::RuleKind, nodes: usize) -> Self {
        Self { matrix, rule, nodes }
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    /// The Gram of the basis scaled by `c`, i.e. `c^2 * G`.
    pub fn scaled(&self, c: f64) -> Self {
        Self { matrix: &self.matrix * (c * c), ..self.clone() }
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.matrix.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

/// `(G)_{ij} = ∫ φ_i φ_j` over `[0,1]^d` under `quad`.
pub fn gram_matrix(basis: &BasisSet, quad: &QuadratureSpec) -> Result<GramMatrix, BSplineError> {
    let rule = quad.rule_for(basis)?;
    gram_on_rule(basis, &rule)
}

/// Gram matrix under an explicit rule.
pub fn gram_on_rule(basis: &BasisSet, rule: &Grid) -> Result<GramMatrix, BSplineError> {
    let k = basis.len();
    let mut upper = vec![0.0; k * k];
    let mut phi = vec![0.0; k];
    let mut active = Vec::with_capacity(k);
    for (x, &w) in rule.nodes().zip(rule.weights()) {
        basis.eval_into(x, &mut phi)?;
        active.clear();
        active.extend((0..k).filter(|&j| phi[j] != 0.0));
        for (a, &i) in active.iter().enumerate() {
            let wi = w * phi[i];
            for &j in &active[a..] {
                upper[i * k + j] += wi * phi[j];
            }
        }
    }
    let matrix = DMatrix::from_fn(k, k, |i, j| if i <= j { upper[i * k + j] } else { upper[j * k + i] });
    Ok(GramMatrix { matrix, rule: rule.kind().clone(), nodes: rule.len() })
}

/// Extreme eigenvalues of a Gram matrix against requested bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrthoReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub c1: f64,
    pub c2: f64,
    pub pass: bool,
}

pub fn near_orthogonality(gram: &GramMatrix, c1: f64, c2: f64) -> Result<OrthoReport, BSplineError> {
    if !(c1 > 0.0 && c1 < c2) {
        return Err(BSplineError::InvalidParameter("need 0 < c1 < c2"));
    }
    let m = &gram.matrix;
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(BSplineError::InvalidParameter("Gram matrix must be square and nonempty"));
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(BSplineError::NotSymmetric(asym));
    }
    let ev = gram.eigenvalues();
    let lambda_min = ev[0];
    let lambda_max = ev[ev.len() - 1];
    Ok(OrthoReport { lambda_min, lambda_max, c1, c2, pass: c1 <= lambda_min && lambda_max <= c2 })
}

/// Best L2 approximation of a target in the span of a basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coefficients: DVector<f64>,
    /// `‖f - θ*ᵀφ‖₂` under the same quadrature.
    pub residual: f64,
}

/// L2 projection of `f` onto `basis`: solves `G θ = m`, `m_j = ∫ f φ_j`.
pub fn project_l2(f: &TargetFunction, basis: &BasisSet, quad: &QuadratureSpec) -> Result<Projection, BSplineError> {
    if f.dim() != basis.dim() {
        return Err(BSplineError::DimensionMismatch { target: f.dim(), basis: basis.dim() });
    }
    let rule = quad.rule_for(basis)?;
    let values: Vec<f64> = rule.nodes().map(|x| f.eval_unchecked(x)).collect();
    project_values_on_rule(&values, basis, &rule)
}

/// Projection of a function given by its values at the nodes of `rule`.
/// Rejects numerically singular Gram matrices.
pub fn project_values_on_rule(values: &[f64], basis: &BasisSet, rule: &Grid) -> Result<Projection, BSplineError> {
    let (gram, moments, design) = moment_system(values, basis, rule)?;
    let eig = SymmetricEigen::new(gram.clone());
    let lambda_min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(lambda_min > SINGULAR_GRAM_TOL) {
        return Err(BSplineError::SingularGram(lambda_min));
    }
    let chol = gram.cholesky().ok_or(BSplineError::SingularGram(lambda_min))?;
    let theta = chol.solve(&moments);
    let residual = residual_norm(values, &design, &theta, rule);
    Ok(Projection { coefficients: theta, residual })
}

/// Minimum-norm projection: the same function as [`project_values_on_rule`]
/// when the Gram is nonsingular, and still well defined when the basis has
/// dead or collinear members (eigen-directions below `rel_tol · λ_max` are
/// dropped).
pub fn project_values_min_norm(
    values: &[f64],
    basis: &BasisSet,
    rule: &Grid,
    rel_tol: f64,
) -> Result<Projection, BSplineError> {
    let (gram, moments, design) = moment_system(values, basis, rule)?;
    let eig = SymmetricEigen::new(gram);
    let lambda_max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let cutoff = rel_tol * lambda_max;
    let k = moments.len();
    let mut theta = DVector::zeros(k);
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > cutoff && lambda > 0.0 {
            let v = eig.eigenvectors.column(i);
            theta += v * (v.dot(&moments) / lambda);
        }
    }
    let residual = residual_norm(values, &design, &theta, rule);
    Ok(Projection { coefficients: theta, residual })
}

fn moment_system(
    values: &[f64],
    basis: &BasisSet,
    rule: &Grid,
) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>), BSplineError> {
    if basis.dim() != rule.dim() {
        return Err(BSplineError::DimensionMismatch { target: rule.dim(), basis: basis.dim() });
    }
    if values.len() != rule.len() {
        return Err(BSplineError::InvalidParameter("one value per quadrature node required"));
    }
    let design = basis.eval_grid(rule)?;
    let w = DVector::from_column_slice(rule.weights());
    let mut weighted = design.clone();
    for (mut row, &wi) in weighted.row_iter_mut().zip(w.iter()) {
        row *= wi;
    }
    let gram = design.transpose() * &weighted;
    let gram = (&gram + gram.transpose()) * 0.5;
    let moments = weighted.transpose() * DVector::from_column_slice(values);
    Ok((gram, moments, design))
}

fn residual_norm(values: &[f64], design: &DMatrix<f64>, theta: &DVector<f64>, rule: &Grid) -> f64 {
    let fitted = design * theta;
    let sq: Vec<f64> = values.iter().zip(fitted.iter()).map(|(f, g)| (f - g) * (f - g)).collect();
    rule.integrate(&sq).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn knot_vectors() {
        assert_eq!(knot_vector(4, 1).unwrap().values(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(knot_vector(2, 2).unwrap().values(), &[0.0, 0.0, 0.5, 1.0, 1.0]);
        assert_eq!(knot_vector(1, 3).unwrap().values(), &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert!(knot_vector(0, 2).is_err());
        assert!(knot_vector(3, 0).is_err());
    }

    #[test]
    fn order_one_indicator() {
        let k = knot_vector(4, 1).unwrap();
        for j in 0..4 {
            let v = eval_bspline_1d(&k, j, 0.3).unwrap();
            assert_eq!(v, if j == 1 { 1.0 } else { 0.0 });
        }
        // right-endpoint closure
        assert_eq!(eval_bspline_1d(&k, 3, 1.0).unwrap(), 1.0);
        assert_eq!(eval_bspline_1d(&k, 2, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn hat_peak() {
        let k = knot_vector(2, 2).unwrap();
        assert_eq!(eval_bspline_1d(&k, 1, 0.5).unwrap(), 1.0);
        assert_eq!(eval_bspline_1d(&k, 0, 0.5).unwrap(), 0.0);
        assert_eq!(eval_bspline_1d(&k, 2, 1.0).unwrap(), 1.0);
        assert_eq!(eval_bspline_1d(&k, 0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn index_and_domain_errors() {
        let k = knot_vector(3, 2).unwrap();
        assert!(matches!(eval_bspline_1d(&k, 4, 0.1), Err(BSplineError::IndexOutOfRange { .. })));
        assert!(matches!(eval_bspline_1d(&k, 0, 1.1), Err(BSplineError::OutOfDomain(_))));
    }

    #[test]
    fn triangular_matches_recursion() {
        for q in 1..=5 {
            for j_count in [1, 2, 3, 7, 10] {
                let k = knot_vector(j_count, q).unwrap();
                let mut buf = vec![0.0; q];
                for i in 0..=200 {
                    let x = i as f64 / 200.0;
                    let first = eval_nonzero(&k, x, &mut buf);
                    for j in 0..k.basis_len() {
                        let rec = eval_bspline_1d(&k, j, x).unwrap();
                        let tri = if j >= first && j < first + q { buf[j - first] } else { 0.0 };
                        assert!(close(rec, tri, 1e-13), "q={q} J={j_count} j={j} x={x}: {rec} vs {tri}");
                    }
                }
            }
        }
    }

    #[test]
    fn span_search_at_knots() {
        let k = knot_vector(10, 3).unwrap();
        for i in 0..=10 {
            let x = i as f64 / 10.0;
            let s = k.span(x);
            assert!(k.values[s] <= x && (x < k.values[s + 1] || x == 1.0), "x={x} s={s}");
        }
    }

    #[test]
    fn tensor_sizes_and_guard() {
        assert_eq!(make_bspline_basis(4, 1, 2).unwrap().len(), 16);
        assert_eq!(make_bspline_basis(3, 2, 1).unwrap().len(), 4);
        assert!(matches!(make_bspline_basis(1000, 2, 2), Err(BSplineError::TooManyFunctions(_))));
    }

    #[test]
    fn tensor_indicator_boxes_are_disjoint() {
        let b = make_bspline_basis(4, 1, 2).unwrap();
        let v = b.eval(&[0.1, 0.9]).unwrap();
        assert_eq!(v.iter().filter(|&&x| x == 1.0).count(), 1);
        assert_eq!(v.iter().filter(|&&x| x == 0.0).count(), 15);
        // row-major: axis 0 cell 0, axis 1 cell 3
        assert_eq!(v[3], 1.0);
    }

    #[test]
    fn order_one_gram_is_scaled_identity() {
        let b = make_bspline_basis(4, 1, 1).unwrap();
        let g = gram_matrix(&b, &QuadratureSpec::Auto).unwrap();
        let expected = DMatrix::<f64>::identity(4, 4) * 0.25;
        assert!((&g.matrix - expected).amax() < 1e-15);
        let r = b.clone().rescaled(2.0);
        let g = gram_matrix(&r, &QuadratureSpec::Auto).unwrap();
        assert!((&g.matrix - DMatrix::<f64>::identity(4, 4)).amax() < 1e-15);
    }

    #[test]
    fn hat_self_inner_product() {
        let b = make_bspline_basis(2, 2, 1).unwrap();
        let g = gram_matrix(&b, &QuadratureSpec::Auto).unwrap();
        assert!(close(g.matrix[(1, 1)], 1.0 / 3.0, 1e-15));
        // boundary half-hats and disjoint supports
        assert!(close(g.matrix[(0, 0)], 1.0 / 6.0, 1e-15));
        assert_eq!(g.matrix[(0, 2)], 0.0);
    }

    #[test]
    fn ortho_report_identity_and_duplicate() {
        let g = GramMatrix::from_matrix(DMatrix::identity(3, 3), crate::quadrature::RuleKind::Trapezoid { points_per_axis: 2 }, 0);
        let r = near_orthogonality(&g, 0.5, 2.0).unwrap();
        assert!(r.pass && r.lambda_min == 1.0 && r.lambda_max == 1.0);

        let b = make_bspline_basis(5, 2, 1).unwrap().with_columns(vec![0, 1, 2, 3, 4, 5, 2]).unwrap();
        let g = gram_matrix(&b, &QuadratureSpec::Auto).unwrap();
        let r = near_orthogonality(&g, 1e-6, 10.0).unwrap();
        assert!(r.lambda_min.abs() < 1e-14);
        assert!(!r.pass);
    }

    #[test]
    fn ortho_rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let g = GramMatrix::from_matrix(m, crate::quadrature::RuleKind::Trapezoid { points_per_axis: 2 }, 0);
        assert!(matches!(near_orthogonality(&g, 0.1, 2.0), Err(BSplineError::NotSymmetric(_))));
        assert!(near_orthogonality(&g, 2.0, 1.0).is_err());
    }

    #[test]
    fn projection_of_constant_onto_indicators() {
        let b = make_bspline_basis(6, 1, 1).unwrap();
        let one = TargetFunction::tabulated(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap();
        let p = project_l2(&one, &b, &QuadratureSpec::Auto).unwrap();
        assert!(p.coefficients.iter().all(|&c| close(c, 1.0, 1e-14)));
        assert!(p.residual < 1e-12);
    }

    #[test]
    fn projection_rejects_singular_gram() {
        let b = make_bspline_basis(3, 2, 1).unwrap().with_columns(vec![0, 1, 1, 2, 3]).unwrap();
        let one = TargetFunction::tabulated(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert!(matches!(project_l2(&one, &b, &QuadratureSpec::Auto), Err(BSplineError::SingularGram(_))));
        let rule = QuadratureSpec::Auto.rule_for(&b).unwrap();
        let values = vec![1.0; rule.len()];
        let p = project_values_min_norm(&values, &b, &rule, 1e-12).unwrap();
        assert!(p.residual < 1e-10);
    }
}
