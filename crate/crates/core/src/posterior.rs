//! Conjugate Gaussian posterior on basis coefficients, posterior draws,
//! function-space distances and credible sets.
//!
//! Prior `θ ~ N(0, I_k)`, likelihood `Y | θ ~ N(Φθ, σ² I)`, so the
//! posterior is `N(m, A⁻¹)` with `A = ΦᵀΦ/σ² + I_k` and `A m = ΦᵀY/σ²`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisError, BasisSet};
use crate::quadrature::Grid;
use crate::synth::Dataset;

/// Upper bound on grid-by-draw values held in memory at once.
const BLOCK_BUDGET: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PosteriorError {
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("design matrix contains a non-finite entry")]
    NonFinite,
    #[error("noise standard deviation must be finite and > 0, got {0}")]
    InvalidNoise(f64),
    #[error("precision matrix is not positive definite")]
    Factorization,
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("need at least {needed} draws, got {got}")]
    TooFewDraws { needed: usize, got: usize },
    #[error("inflation factors need n >= 3, got {0}")]
    SampleSizeTooSmall(usize),
    #[error("norm {0:?} has no distance; use a pointwise band")]
    UnsupportedNorm(Norm),
    #[error("radius must be >= 0, got {0}")]
    NegativeRadius(f64),
}

/// `n₂ × k` basis evaluations on the second half of the data.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    phi: DMatrix<f64>,
    empirical_gram: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn from_matrix(phi: DMatrix<f64>) -> Result<Self, PosteriorError> {
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(PosteriorError::NonFinite);
        }
        let rows = phi.nrows();
        let mut empirical_gram = phi.tr_mul(&phi);
        if rows > 0 {
            empirical_gram /= rows as f64;
        }
        // exact symmetry, independent of the product kernel
        for i in 0..empirical_gram.nrows() {
            for j in 0..i {
                empirical_gram[(i, j)] = empirical_gram[(j, i)];
            }
        }
        Ok(Self { phi, empirical_gram })
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    /// `ΦᵀΦ / n₂`; zero when there are no rows.
    pub fn empirical_gram(&self) -> &DMatrix<f64> {
        &self.empirical_gram
    }

    pub fn rows(&self) -> usize {
        self.phi.nrows()
    }

    pub fn k(&self) -> usize {
        self.phi.ncols()
    }
}

pub fn design_matrix(basis: &BasisSet, d2: &Dataset) -> Result<DesignMatrix, PosteriorError> {
    if basis.dim() != d2.dim() {
        return Err(PosteriorError::DimensionMismatch(format!("basis dim {} vs data dim {}", basis.dim(), d2.dim())));
    }
    if d2.is_empty() {
        return DesignMatrix::from_matrix(DMatrix::zeros(0, basis.len()));
    }
    DesignMatrix::from_matrix(basis.eval_points(d2.xs())?)
}

#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
    noise_sd: f64,
}

impl GaussianPosterior {
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// Lower-triangular `L` with `A = L Lᵀ`.
    pub fn factor(&self) -> DMatrix<f64> {
        self.factor.l()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.factor.inverse()
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    pub fn k(&self) -> usize {
        self.mean.len()
    }
}

pub fn fit_posterior(dm: &DesignMatrix, y: &[f64], noise_sd: f64) -> Result<GaussianPosterior, PosteriorError> {
    if !(noise_sd > 0.0 && noise_sd.is_finite()) {
        return Err(PosteriorError::InvalidNoise(noise_sd));
    }
    if y.len() != dm.rows() {
        return Err(PosteriorError::DimensionMismatch(format!("{} responses for {} design rows", y.len(), dm.rows())));
    }
    let k = dm.k();
    let s2 = noise_sd * noise_sd;
    let mut precision = dm.phi.tr_mul(&dm.phi) / s2;
    for i in 0..k {
        for j in 0..i {
            precision[(i, j)] = precision[(j, i)];
        }
        precision[(i, i)] += 1.0;
    }
    let rhs = dm.phi.tr_mul(&DVector::from_column_slice(y)) / s2;
    let factor = Cholesky::new(precision.clone()).ok_or(PosteriorError::Factorization)?;
    let mean = factor.solve(&rhs);
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(PosteriorError::Factorization);
    }
    Ok(GaussianPosterior { mean, precision, factor, noise_sd })
}

/// `S` coefficient vectors, stored draw by draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Draws {
    k: usize,
    values: Vec<f64>,
}

impl Draws {
    pub fn from_rows(k: usize, values: Vec<f64>) -> Result<Self, PosteriorError> {
        if k == 0 || !values.len().is_multiple_of(k) {
            return Err(PosteriorError::DimensionMismatch(format!("{} values for k = {k}", values.len())));
        }
        Ok(Self { k, values })
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn draw(&self, s: usize) -> &[f64] {
        &self.values[s * self.k..(s + 1) * self.k]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.k)
    }

    /// `S × k` matrix, one draw per row.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.k, &self.values)
    }

    /// Sample covariance with divisor `S - 1`.
    pub fn sample_covariance(&self) -> DMatrix<f64> {
        let s = self.len();
        let mut mean = vec![0.0; self.k];
        for d in self.iter() {
            mean.iter_mut().zip(d).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= s as f64);
        let mut cov = DMatrix::zeros(self.k, self.k);
        for d in self.iter() {
            for i in 0..self.k {
                let di = d[i] - mean[i];
                for j in i..self.k {
                    cov[(i, j)] += di * (d[j] - mean[j]);
                }
            }
        }
        let denom = (s.max(2) - 1) as f64;
        for i in 0..self.k {
            for j in i..self.k {
                cov[(i, j)] /= denom;
                cov[(j, i)] = cov[(i, j)];
            }
        }
        cov
    }
}

/// `θ⁽ˢ⁾ = m + L⁻ᵀ z⁽ˢ⁾` with `z⁽ˢ⁾` standard normal from a ChaCha20 stream.
pub fn sample_posterior(post: &GaussianPosterior, draws: usize, seed: u64) -> Result<Draws, PosteriorError> {
    if draws == 0 {
        return Err(PosteriorError::TooFewDraws { needed: 1, got: 0 });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let z: Vec<f64> = (0..draws * post.k()).map(|_| StandardNormal.sample(&mut rng)).collect();
    draws_from_standard_normals(post, z)
}

/// Maps given standard-normal vectors (draw by draw) to posterior draws.
pub fn draws_from_standard_normals(post: &GaussianPosterior, z: Vec<f64>) -> Result<Draws, PosteriorError> {
    let k = post.k();
    if k == 0 || !z.len().is_multiple_of(k) {
        return Err(PosteriorError::DimensionMismatch(format!("{} normals for k = {k}", z.len())));
    }
    let s = z.len() / k;
    // column s of the k × S matrix is draw s
    let mut cols = DMatrix::from_vec(k, s, z);
    let l = post.factor.l();
    if !l.tr_solve_lower_triangular_mut(&mut cols) {
        return Err(PosteriorError::Factorization);
    }
    for mut c in cols.column_iter_mut() {
        c += &post.mean;
    }
    Draws::from_rows(k, cols.as_slice().to_vec())
}

/// Values of a function at the nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve(pub Vec<f64>);

impl Curve {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L2,
    Sup,
    Pointwise,
}

impl Norm {
    pub fn label(self) -> &'static str {
        match self {
            Norm::L2 => "l2",
            Norm::Sup => "sup",
            Norm::Pointwise => "pointwise",
        }
    }
}

/// A basis evaluated once on a grid; turns coefficient vectors into curves.
#[derive(Debug, Clone)]
pub struct GridDesign {
    grid: Grid,
    values: DMatrix<f64>,
}

impl GridDesign {
    pub fn new(basis: &BasisSet, grid: Grid) -> Result<Self, PosteriorError> {
        let values = basis.eval_grid(&grid)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(PosteriorError::NonFinite);
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Grid points × k matrix of basis values.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn k(&self) -> usize {
        self.values.ncols()
    }

    pub fn curve(&self, theta: &[f64]) -> Result<Curve, PosteriorError> {
        if theta.len() != self.k() {
            return Err(PosteriorError::DimensionMismatch(format!("{} coefficients for k = {}", theta.len(), self.k())));
        }
        let v = &self.values * DVector::from_column_slice(theta);
        Ok(Curve(v.as_slice().to_vec()))
    }

    fn check_draws(&self, draws: &Draws) -> Result<(), PosteriorError> {
        if draws.k() != self.k() {
            return Err(PosteriorError::DimensionMismatch(format!("draws of size {} for k = {}", draws.k(), self.k())));
        }
        Ok(())
    }

    /// Calls `f(first, block)` where `block` holds the curves of draws
    /// `first..first + block.ncols()` minus the curve of `center`, one column
    /// per draw.
    fn for_each_centered_block<F>(&self, draws: &Draws, center: &[f64], mut f: F)
    where
        F: FnMut(usize, &DMatrix<f64>),
    {
        let k = self.k();
        let width = (BLOCK_BUDGET / self.grid.len().max(1)).max(1);
        let mut first = 0;
        while first < draws.len() {
            let count = width.min(draws.len() - first);
            let mut delta = DMatrix::zeros(k, count);
            for c in 0..count {
                let d = draws.draw(first + c);
                for j in 0..k {
                    delta[(j, c)] = d[j] - center[j];
                }
            }
            let block = &self.values * delta;
            f(first, &block);
            first += count;
        }
    }
}

/// `Σ θ_j φ_j` at each grid node.
pub fn eval_on_grid(basis: &BasisSet, theta: &[f64], grid: &Grid) -> Result<Curve, PosteriorError> {
    if theta.len() != basis.len() {
        return Err(PosteriorError::DimensionMismatch(format!("{} coefficients for k = {}", theta.len(), basis.len())));
    }
    if grid.dim() != basis.dim() {
        return Err(PosteriorError::DimensionMismatch(format!("grid dim {} vs basis dim {}", grid.dim(), basis.dim())));
    }
    let mut buf = vec![0.0; basis.len()];
    let mut out = Vec::with_capacity(grid.len());
    for x in grid.nodes() {
        basis.eval_into(x, &mut buf)?;
        out.push(buf.iter().zip(theta).map(|(b, t)| b * t).sum());
    }
    Ok(Curve(out))
}

fn norm_of_difference(diff: impl Iterator<Item = f64>, weights: &[f64], norm: Norm) -> Result<f64, PosteriorError> {
    match norm {
        Norm::L2 => Ok(diff.zip(weights).map(|(d, w)| w * d * d).sum::<f64>().sqrt()),
        Norm::Sup => Ok(diff.fold(0.0, |m, d| m.max(d.abs()))),
        Norm::Pointwise => Err(PosteriorError::UnsupportedNorm(norm)),
    }
}

/// `‖a − b‖` on the grid: quadrature-weighted L2, or the maximum over nodes.
pub fn distance(a: &Curve, b: &Curve, grid: &Grid, norm: Norm) -> Result<f64, PosteriorError> {
    if a.len() != grid.len() || b.len() != grid.len() {
        return Err(PosteriorError::DimensionMismatch(format!(
            "curves of length {} and {} on a grid of {} nodes",
            a.len(),
            b.len(),
            grid.len()
        )));
    }
    norm_of_difference(a.0.iter().zip(&b.0).map(|(x, y)| x - y), grid.weights(), norm)
}

/// Distances from the curve of `center` to the curve of every draw.
pub fn draw_distances(draws: &Draws, center: &[f64], design: &GridDesign, norm: Norm) -> Result<Vec<f64>, PosteriorError> {
    design.check_draws(draws)?;
    if center.len() != design.k() {
        return Err(PosteriorError::DimensionMismatch(format!("center of size {} for k = {}", center.len(), design.k())));
    }
    if norm == Norm::Pointwise {
        return Err(PosteriorError::UnsupportedNorm(norm));
    }
    let weights = design.grid.weights();
    let mut out = Vec::with_capacity(draws.len());
    design.for_each_centered_block(draws, center, |_, block| {
        for col in block.column_iter() {
            out.push(norm_of_difference(col.iter().copied(), weights, norm).expect("norm checked above"));
        }
    });
    Ok(out)
}

/// 1-based rank `⌈p·S⌉`, clamped to `[1, S]`; the small offset keeps exact
/// products such as `0.95 · 100` from rounding up a rank.
fn quantile_rank(p: f64, s: usize) -> usize {
    ((p * s as f64 - 1e-9).ceil() as usize).clamp(1, s)
}

fn check_alpha(alpha: f64) -> Result<(), PosteriorError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(PosteriorError::InvalidAlpha(alpha))
    }
}

fn min_draws(ratio: f64) -> usize {
    (ratio - 1e-9).ceil() as usize
}

/// The `⌈(1−α)S⌉`-th smallest of `distances`.
pub fn radius_from_distances(distances: &[f64], alpha: f64) -> Result<f64, PosteriorError> {
    check_alpha(alpha)?;
    let needed = min_draws(1.0 / alpha);
    if distances.len() < needed.max(1) {
        return Err(PosteriorError::TooFewDraws { needed: needed.max(1), got: distances.len() });
    }
    let mut d = distances.to_vec();
    let rank = quantile_rank(1.0 - alpha, d.len());
    let (_, r, _) = d.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(*r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inflation {
    None,
    SqrtLog,
    Log,
    LogCubed,
}

impl Inflation {
    pub const ALL: [Inflation; 4] = [Inflation::None, Inflation::SqrtLog, Inflation::Log, Inflation::LogCubed];

    /// `1`, `√ln n`, `ln n` or `(ln n)³`.
    pub fn factor(self, n: usize) -> Result<f64, PosteriorError> {
        if n < 3 {
            return Err(PosteriorError::SampleSizeTooSmall(n));
        }
        let l = (n as f64).ln();
        Ok(match self {
            Inflation::None => 1.0,
            Inflation::SqrtLog => l.sqrt(),
            Inflation::Log => l,
            Inflation::LogCubed => l * l * l,
        })
    }

    pub fn label(self) -> &'static str {
        match self {
            Inflation::None => "none",
            Inflation::SqrtLog => "sqrt_log",
            Inflation::Log => "log",
            Inflation::LogCubed => "log_cubed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredibleSummary {
    pub center: Vec<f64>,
    pub norm: Norm,
    pub alpha: f64,
    pub radius: f64,
    pub inflation: Inflation,
    pub inflation_factor: f64,
    pub draws_used: usize,
}

impl CredibleSummary {
    pub fn with_inflation(mut self, kind: Inflation, n: usize) -> Result<Self, PosteriorError> {
        self.inflation = kind;
        self.inflation_factor = kind.factor(n)?;
        Ok(self)
    }

    pub fn inflated_radius(&self) -> f64 {
        self.inflation_factor * self.radius
    }
}

/// Smallest radius of a `norm` ball around `center` holding `⌈(1−α)S⌉` draws.
pub fn credible_radius(
    draws: &Draws,
    center: &[f64],
    design: &GridDesign,
    norm: Norm,
    alpha: f64,
) -> Result<CredibleSummary, PosteriorError> {
    check_alpha(alpha)?;
    let distances = draw_distances(draws, center, design, norm)?;
    let radius = radius_from_distances(&distances, alpha)?;
    Ok(CredibleSummary {
        center: center.to_vec(),
        norm,
        alpha,
        radius,
        inflation: Inflation::None,
        inflation_factor: 1.0,
        draws_used: draws.len(),
    })
}

/// Lower and upper curves of a band on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Band {
    /// Stretches both sides away from `center` by `factor`.
    pub fn inflate(&self, center: &Curve, factor: f64) -> Band {
        let lower = self.lower.iter().zip(&center.0).map(|(l, c)| c - factor * (c - l)).collect();
        let upper = self.upper.iter().zip(&center.0).map(|(u, c)| c + factor * (u - c)).collect();
        Band { lower, upper }
    }

    /// Closed containment at every node.
    pub fn contains(&self, f: &Curve) -> bool {
        f.0.len() == self.lower.len()
            && f.0.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// Quadrature average of the half-width.
    pub fn mean_half_width(&self, grid: &Grid) -> f64 {
        self.lower.iter().zip(&self.upper).zip(grid.weights()).map(|((l, u), w)| w * 0.5 * (u - l)).sum()
    }
}

/// Empirical `α/2` and `1−α/2` quantiles of the draw curves at each node.
pub fn pointwise_band(draws: &Draws, design: &GridDesign, alpha: f64) -> Result<Band, PosteriorError> {
    check_alpha(alpha)?;
    design.check_draws(draws)?;
    let needed = min_draws(2.0 / alpha);
    if draws.len() < needed {
        return Err(PosteriorError::TooFewDraws { needed, got: draws.len() });
    }
    let s = draws.len();
    let lo_rank = quantile_rank(alpha / 2.0, s) - 1;
    let hi_rank = quantile_rank(1.0 - alpha / 2.0, s) - 1;
    let theta = draws.to_matrix().transpose();
    let nodes = design.grid.len();
    let rows_per_block = (BLOCK_BUDGET / s).max(1);
    let mut lower = Vec::with_capacity(nodes);
    let mut upper = Vec::with_capacity(nodes);
    let mut row = vec![0.0; s];
    let mut start = 0;
    while start < nodes {
        let count = rows_per_block.min(nodes - start);
        let block = design.values.rows(start, count) * &theta;
        for r in 0..count {
            for (dst, v) in row.iter_mut().zip(block.row(r).iter()) {
                *dst = *v;
            }
            row.select_nth_unstable_by(lo_rank, f64::total_cmp);
            lower.push(row[lo_rank]);
            // everything above lo_rank is already >= it
            let tail = &mut row[lo_rank..];
            tail.select_nth_unstable_by(hi_rank - lo_rank, f64::total_cmp);
            upper.push(tail[hi_rank - lo_rank]);
        }
        start += count;
    }
    Ok(Band { lower, upper })
}

/// Pointwise range of the draws whose distance to `center` is at most
/// `radius`: the region swept by the retained draws.
pub fn retained_envelope(
    draws: &Draws,
    center: &[f64],
    design: &GridDesign,
    norm: Norm,
    radius: f64,
) -> Result<Band, PosteriorError> {
    let distances = draw_distances(draws, center, design, norm)?;
    let c = design.curve(center)?;
    let mut lower = c.0.clone();
    let mut upper = c.0.clone();
    design.for_each_centered_block(draws, center, |first, block| {
        for (j, col) in block.column_iter().enumerate() {
            if distances[first + j] <= radius {
                for (i, v) in col.iter().enumerate() {
                    lower[i] = lower[i].min(c.0[i] + v);
                    upper[i] = upper[i].max(c.0[i] + v);
                }
            }
        }
    });
    Ok(Band { lower, upper })
}

/// Closed-ball containment: `‖center − f₀‖ <= radius`.
pub fn covers(center: &Curve, radius: f64, f0: &Curve, grid: &Grid, norm: Norm) -> Result<bool, PosteriorError> {
    if !(radius >= 0.0) {
        return Err(PosteriorError::NegativeRadius(radius));
    }
    Ok(distance(center, f0, grid, norm)? <= radius)
}
