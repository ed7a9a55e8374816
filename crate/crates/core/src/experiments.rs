//! Seeded Monte Carlo harness: single repetitions, coverage tables,
//! contraction scans and basis diagnostics.
//!
//! Every repetition derives its randomness from `(master_seed, n, rep)`
//! through [`rep_seed`] and owns all of its state, so repetitions run in
//! parallel and results are gathered in `(n, rep)` order. Output never
//! depends on the thread count.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSet;
use crate::bspline::{
    gram_matrix, make_bspline_basis, near_orthogonality, project_values_min_norm, BSplineError, OrthoReport,
    QuadratureSpec,
};
use crate::neuralnet::{basis_sup_bound, check_sparsity, extract_basis, init_network, train, NetError, SparsityReport, TrainOptions};
use crate::posterior::{
    covers, design_matrix, distance, draw_distances, fit_posterior, pointwise_band, radius_from_distances,
    sample_posterior, Curve, Draws, GaussianPosterior, GridDesign, Inflation, Norm, PosteriorError,
};
use crate::quadrature::{Grid, QuadratureError};
use crate::synth::{generate_dataset, network_shape, sieve_dimension, split_dataset, SynthError, TargetFunction, TargetSpec};

/// Stream tags mixed into a repetition seed.
pub const STREAM_DATA: u64 = 1;
pub const STREAM_INIT: u64 = 2;
pub const STREAM_TRAIN: u64 = 3;
pub const STREAM_DRAWS: u64 = 4;
pub const STREAM_GRID: u64 = 5;

/// Posterior noise level used when the data are noiseless (`noise_sd = 0`).
pub const NOISELESS_FIT_SD: f64 = 1e-8;

/// Near-orthogonality bounds reported by [`basis_diagnostics`].
pub const DEFAULT_ORTHO_BOUNDS: (f64, f64) = (0.01, 10.0);

/// Eigen-directions of the grid Gram below this fraction of the largest
/// are dropped when projecting onto a realized basis.
const PROJECTION_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
    #[error(transparent)]
    BSpline(#[from] BSplineError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("every repetition failed for n = {n}")]
    AllRepsFailed { n: usize },
    #[error("contraction scan needs at least 3 distinct sample sizes, got {0}")]
    TooFewSampleSizes(usize),
}

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `h(h(h(master) ^ n) ^ rep)` with `h` = [`splitmix64`].
pub fn rep_seed(master: u64, n: usize, rep: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ n as u64) ^ rep as u64)
}

/// Independent seed for one consumer (`STREAM_*`) of a repetition.
pub fn stream_seed(rep_seed: u64, stream: u64) -> u64 {
    splitmix64(rep_seed ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisMode {
    /// Train a network on the first half and use its last hidden layer.
    /// The shuffle seed in `train` is replaced by the repetition's stream.
    Dnn {
        #[serde(default)]
        train: TrainOptions,
    },
    /// Cardinal B-splines of the given order with `(J+q-1)^d >= k_n`.
    BsplineOracle {
        #[serde(default = "default_oracle_order")]
        order: usize,
    },
}

fn default_oracle_order() -> usize {
    2
}

impl Default for BasisMode {
    fn default() -> Self {
        BasisMode::Dnn { train: TrainOptions::default() }
    }
}

fn default_beta() -> f64 {
    1.0
}
fn default_d() -> usize {
    1
}
fn default_noise_sd() -> f64 {
    1.0
}
fn default_alpha() -> f64 {
    0.05
}
fn default_norms() -> Vec<Norm> {
    vec![Norm::L2, Norm::Sup]
}
fn default_inflations() -> Vec<Inflation> {
    Inflation::ALL.to_vec()
}
fn default_draws() -> usize {
    2000
}

/// One simulation study. Only `target`, `n_values`, `reps` and
/// `master_seed` are required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub target: TargetSpec,
    pub n_values: Vec<usize>,
    /// Smoothness used to size the basis; default 1.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Input dimension; default 1.
    #[serde(default = "default_d")]
    pub d: usize,
    /// Noise standard deviation; default 1.
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    /// Credible level is `1 - alpha`; default 0.05.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Default `["l2", "sup"]`.
    #[serde(default = "default_norms")]
    pub norms: Vec<Norm>,
    /// Default all four.
    #[serde(default = "default_inflations")]
    pub inflations: Vec<Inflation>,
    pub reps: usize,
    /// Posterior draws per repetition; default 2000.
    #[serde(default = "default_draws")]
    pub draws: usize,
    /// Default: DNN basis with default training options.
    #[serde(default)]
    pub basis_mode: BasisMode,
    pub master_seed: u64,
    /// Worker threads; `None` uses all cores.
    #[serde(default)]
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    /// A config with every optional field at its default.
    pub fn new(target: TargetSpec, n_values: Vec<usize>, reps: usize, master_seed: u64) -> Self {
        Self {
            target,
            n_values,
            beta: default_beta(),
            d: default_d(),
            noise_sd: default_noise_sd(),
            alpha: default_alpha(),
            norms: default_norms(),
            inflations: default_inflations(),
            reps,
            draws: default_draws(),
            basis_mode: BasisMode::default(),
            master_seed,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |field: &'static str, reason: &str| Err(ExperimentError::InvalidConfig { field, reason: reason.to_string() });
        if self.n_values.is_empty() {
            return bad("n_values", "must not be empty");
        }
        if self.n_values.iter().any(|&n| n < 8) {
            return bad("n_values", "every sample size must be >= 8");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta", "must be finite and > 0");
        }
        if self.d == 0 {
            return bad("d", "must be >= 1");
        }
        if self.target.dim() != self.d {
            return Err(ExperimentError::InvalidConfig {
                field: "target",
                reason: format!("target has dimension {}, config has d = {}", self.target.dim(), self.d),
            });
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad("noise_sd", "must be finite and >= 0");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha", "must lie in (0, 1)");
        }
        if self.norms.is_empty() {
            return bad("norms", "must not be empty");
        }
        if self.inflations.is_empty() {
            return bad("inflations", "must not be empty");
        }
        if self.reps == 0 {
            return bad("reps", "must be >= 1");
        }
        let needed = ((2.0 / self.alpha) - 1e-9).ceil() as usize;
        if self.draws < needed {
            return Err(ExperimentError::InvalidConfig {
                field: "draws",
                reason: format!("need at least {needed} draws for alpha = {}", self.alpha),
            });
        }
        if self.threads == Some(0) {
            return bad("threads", "must be >= 1");
        }
        match &self.basis_mode {
            BasisMode::Dnn { train } => {
                if let Err(NetError::InvalidOptions(reason)) = train.validate() {
                    return bad("basis_mode", reason);
                }
            }
            BasisMode::BsplineOracle { order } => {
                if *order == 0 {
                    return bad("basis_mode", "spline order must be >= 1");
                }
            }
        }
        self.target.build()?;
        Ok(())
    }

    pub fn sorted_norms(&self) -> Vec<Norm> {
        let mut v = self.norms.clone();
        v.sort();
        v.dedup();
        v
    }

    pub fn sorted_inflations(&self) -> Vec<Inflation> {
        let mut v = self.inflations.clone();
        v.sort();
        v.dedup();
        v
    }

    fn sorted_n_values(&self) -> Vec<usize> {
        let mut v = self.n_values.clone();
        v.sort();
        v.dedup();
        v
    }
}

/// Smallest `J` with `(J + q - 1)^d >= k`.
pub fn oracle_intervals(k: usize, order: usize, d: usize) -> usize {
    let mut j = 1;
    while ((j + order - 1) as u128).saturating_pow(d as u32) < k as u128 {
        j += 1;
    }
    j
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InflationCheck {
    pub inflation: Inflation,
    pub factor: f64,
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormResult {
    pub norm: Norm,
    /// Center curve to `f₀`. For `pointwise` this is the sup distance.
    pub dist_to_f0: f64,
    pub dist_to_fstar: f64,
    /// `r_α`; for `pointwise`, the mean half-width of the band.
    pub radius: f64,
    pub covered: Vec<InflationCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepResult {
    pub rep_index: usize,
    pub n: usize,
    pub k: usize,
    pub norms: Vec<NormResult>,
    pub train_final_mse: Option<f64>,
    pub gram_lambda_min: f64,
    pub gram_lambda_max: f64,
    /// `‖f₀ − f*‖₂` on the evaluation grid.
    pub projection_residual: f64,
}

impl RepResult {
    pub fn norm(&self, norm: Norm) -> Option<&NormResult> {
        self.norms.iter().find(|r| r.norm == norm)
    }
}

/// State shared by every repetition of one run.
/// Grid on which distances, radii and projections are evaluated.
pub fn evaluation_grid(cfg: &ExperimentConfig) -> Result<Grid, ExperimentError> {
    Ok(Grid::default_for_dim(cfg.d, splitmix64(cfg.master_seed ^ STREAM_GRID))?)
}

struct RunContext {
    f0: TargetFunction,
    grid: Grid,
    f0_curve: Curve,
    norms: Vec<Norm>,
    inflations: Vec<Inflation>,
}

impl RunContext {
    fn new(cfg: &ExperimentConfig) -> Result<Self, ExperimentError> {
        cfg.validate()?;
        let f0 = cfg.target.build()?;
        let grid = evaluation_grid(cfg)?;
        let f0_curve = Curve(grid.nodes().map(|x| f0.eval_unchecked(x)).collect());
        Ok(Self { f0, grid, f0_curve, norms: cfg.sorted_norms(), inflations: cfg.sorted_inflations() })
    }
}

struct BuiltBasis {
    basis: BasisSet,
    train_final_mse: Option<f64>,
    d2: crate::synth::Dataset,
}

fn build_basis(cfg: &ExperimentConfig, ctx: &RunContext, n: usize, rep: usize) -> Result<BuiltBasis, ExperimentError> {
    let seed = rep_seed(cfg.master_seed, n, rep);
    let data = generate_dataset(&ctx.f0, n, cfg.noise_sd, stream_seed(seed, STREAM_DATA))?;
    let (d1, d2) = split_dataset(&data)?;
    match &cfg.basis_mode {
        BasisMode::Dnn { train: opts } => {
            let shape = network_shape(n, cfg.d, cfg.beta);
            let net = init_network(shape, stream_seed(seed, STREAM_INIT));
            let opts = TrainOptions {
                seed: stream_seed(seed, STREAM_TRAIN),
                batch_size: opts.batch_size.min(d1.len()),
                ..opts.clone()
            };
            let outcome = train(net, &d1, &opts)?;
            let mse = outcome.final_mse();
            Ok(BuiltBasis { basis: extract_basis(&outcome.network), train_final_mse: Some(mse), d2 })
        }
        BasisMode::BsplineOracle { order } => {
            let k = sieve_dimension(n, cfg.d, cfg.beta);
            let j = oracle_intervals(k, *order, cfg.d);
            Ok(BuiltBasis { basis: make_bspline_basis(j, *order, cfg.d)?, train_final_mse: None, d2 })
        }
    }
}

/// Fitted posterior of one repetition, evaluated on the run's grid.
pub struct RepPosterior {
    pub n: usize,
    pub rep_index: usize,
    pub basis: BasisSet,
    pub posterior: GaussianPosterior,
    pub draws: Draws,
    pub design: GridDesign,
    pub f0_curve: Curve,
    pub train_final_mse: Option<f64>,
}

impl RepPosterior {
    pub fn grid(&self) -> &Grid {
        self.design.grid()
    }

    pub fn center(&self) -> &[f64] {
        self.posterior.mean().as_slice()
    }
}

fn posterior_with_context(cfg: &ExperimentConfig, ctx: &RunContext, n: usize, rep: usize) -> Result<RepPosterior, ExperimentError> {
    let built = build_basis(cfg, ctx, n, rep)?;
    let dm = design_matrix(&built.basis, &built.d2)?;
    let fit_sd = if cfg.noise_sd > 0.0 { cfg.noise_sd } else { NOISELESS_FIT_SD };
    let posterior = fit_posterior(&dm, built.d2.ys(), fit_sd)?;
    let seed = rep_seed(cfg.master_seed, n, rep);
    let draws = sample_posterior(&posterior, cfg.draws, stream_seed(seed, STREAM_DRAWS))?;
    let design = GridDesign::new(&built.basis, ctx.grid.clone())?;
    Ok(RepPosterior {
        n,
        rep_index: rep,
        basis: built.basis,
        posterior,
        draws,
        design,
        f0_curve: ctx.f0_curve.clone(),
        train_final_mse: built.train_final_mse,
    })
}

/// Basis, posterior and draws of one repetition, without summaries.
pub fn repetition_posterior(cfg: &ExperimentConfig, n: usize, rep_index: usize) -> Result<RepPosterior, ExperimentError> {
    let ctx = RunContext::new(cfg)?;
    posterior_with_context(cfg, &ctx, n, rep_index)
}

fn run_with_context(cfg: &ExperimentConfig, ctx: &RunContext, n: usize, rep: usize) -> Result<RepResult, ExperimentError> {
    let state = posterior_with_context(cfg, ctx, n, rep)?;
    let (basis, draws, design) = (&state.basis, &state.draws, &state.design);
    let k = basis.len();

    let gram = gram_matrix(&basis.clone().sqrt_k_rescaled(), &QuadratureSpec::Auto)?;
    let ev = gram.eigenvalues();

    let center = state.center();
    let center_curve = design.curve(center)?;
    let fstar = project_values_min_norm(&ctx.f0_curve.0, basis, &ctx.grid, PROJECTION_REL_TOL)?;
    let fstar_curve = design.curve(fstar.coefficients.as_slice())?;

    let mut norms = Vec::with_capacity(ctx.norms.len());
    for &norm in &ctx.norms {
        let result = match norm {
            Norm::L2 | Norm::Sup => {
                let distances = draw_distances(draws, center, design, norm)?;
                let radius = radius_from_distances(&distances, cfg.alpha)?;
                let dist_to_f0 = distance(&center_curve, &ctx.f0_curve, &ctx.grid, norm)?;
                let covered = ctx
                    .inflations
                    .iter()
                    .map(|&inflation| {
                        let factor = inflation.factor(n)?;
                        let covered = covers(&center_curve, factor * radius, &ctx.f0_curve, &ctx.grid, norm)?;
                        Ok(InflationCheck { inflation, factor, covered })
                    })
                    .collect::<Result<Vec<_>, PosteriorError>>()?;
                NormResult {
                    norm,
                    dist_to_f0,
                    dist_to_fstar: distance(&center_curve, &fstar_curve, &ctx.grid, norm)?,
                    radius,
                    covered,
                }
            }
            Norm::Pointwise => {
                let band = pointwise_band(draws, design, cfg.alpha)?;
                let covered = ctx
                    .inflations
                    .iter()
                    .map(|&inflation| {
                        let factor = inflation.factor(n)?;
                        let covered = band.inflate(&center_curve, factor).contains(&ctx.f0_curve);
                        Ok(InflationCheck { inflation, factor, covered })
                    })
                    .collect::<Result<Vec<_>, PosteriorError>>()?;
                NormResult {
                    norm,
                    dist_to_f0: distance(&center_curve, &ctx.f0_curve, &ctx.grid, Norm::Sup)?,
                    dist_to_fstar: distance(&center_curve, &fstar_curve, &ctx.grid, Norm::Sup)?,
                    radius: band.mean_half_width(&ctx.grid),
                    covered,
                }
            }
        };
        norms.push(result);
    }

    Ok(RepResult {
        rep_index: rep,
        n,
        k,
        norms,
        train_final_mse: state.train_final_mse,
        gram_lambda_min: ev[0],
        gram_lambda_max: ev[ev.len() - 1],
        projection_residual: fstar.residual,
    })
}

/// One end-to-end repetition for sample size `n`.
pub fn run_repetition(cfg: &ExperimentConfig, n: usize, rep_index: usize) -> Result<RepResult, ExperimentError> {
    let ctx = RunContext::new(cfg)?;
    run_with_context(cfg, &ctx, n, rep_index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRep {
    pub n: usize,
    pub rep_index: usize,
    pub reason: String,
}

/// Raw repetition outcomes of a run, ordered by `(n, rep_index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RepBatch {
    pub results: Vec<RepResult>,
    pub failures: Vec<FailedRep>,
    pub runtime: Duration,
}

fn with_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> T {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.unwrap_or(0)).build().expect("thread pool");
    pool.install(job)
}

/// Runs `reps` repetitions for every `n`, in parallel.
///
/// Diverged trainings are recorded as failures; any other error aborts.
pub fn run_repetitions(cfg: &ExperimentConfig) -> Result<RepBatch, ExperimentError> {
    let start = Instant::now();
    let ctx = RunContext::new(cfg)?;
    let tasks: Vec<(usize, usize)> =
        cfg.sorted_n_values().into_iter().flat_map(|n| (0..cfg.reps).map(move |r| (n, r))).collect();
    let outcomes: Vec<Result<RepResult, ExperimentError>> =
        with_pool(cfg.threads, || tasks.par_iter().map(|&(n, r)| run_with_context(cfg, &ctx, n, r)).collect());
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (&(n, rep_index), outcome) in tasks.iter().zip(outcomes) {
        match outcome {
            Ok(r) => results.push(r),
            Err(ExperimentError::Net(e @ NetError::Diverged { .. })) => {
                failures.push(FailedRep { n, rep_index, reason: e.to_string() })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(RepBatch { results, failures, runtime: start.elapsed() })
}

/// Aggregate over the repetitions of one `(n, norm, inflation)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCell {
    pub n: usize,
    pub norm: Norm,
    pub inflation: Inflation,
    pub coverage: f64,
    pub mean_dist: f64,
    pub sd_dist: f64,
    /// Mean of the inflated radius `L_n · r_α`.
    pub mean_radius: f64,
    pub sd_radius: f64,
    pub reps_used: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub config: ExperimentConfig,
    pub cells: Vec<CoverageCell>,
    pub failed_reps: Vec<FailedRep>,
    /// Wall-clock time; not serialized so reports stay reproducible.
    #[serde(skip)]
    pub runtime: Duration,
}

/// Mean and sample standard deviation (divisor `m - 1`, zero for one value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    (mean, var.sqrt())
}

/// Coverage table from finished repetitions.
pub fn aggregate(cfg: &ExperimentConfig, batch: &RepBatch) -> Result<CoverageReport, ExperimentError> {
    let mut results = batch.results.clone();
    results.sort_by_key(|r| (r.n, r.rep_index));
    let mut cells = Vec::new();
    for n in cfg.sorted_n_values() {
        let reps: Vec<&RepResult> = results.iter().filter(|r| r.n == n).collect();
        let failures = batch.failures.iter().filter(|f| f.n == n).count();
        if reps.is_empty() {
            return Err(ExperimentError::AllRepsFailed { n });
        }
        for norm in cfg.sorted_norms() {
            let per_norm: Vec<&NormResult> = reps.iter().filter_map(|r| r.norm(norm)).collect();
            let dists: Vec<f64> = per_norm.iter().map(|r| r.dist_to_f0).collect();
            let (mean_dist, sd_dist) = mean_sd(&dists);
            for inflation in cfg.sorted_inflations() {
                let checks: Vec<(&NormResult, &InflationCheck)> = per_norm
                    .iter()
                    .filter_map(|r| r.covered.iter().find(|c| c.inflation == inflation).map(|c| (*r, c)))
                    .collect();
                let hits = checks.iter().filter(|(_, c)| c.covered).count();
                let radii: Vec<f64> = checks.iter().map(|(r, c)| c.factor * r.radius).collect();
                let (mean_radius, sd_radius) = mean_sd(&radii);
                cells.push(CoverageCell {
                    n,
                    norm,
                    inflation,
                    coverage: hits as f64 / checks.len() as f64,
                    mean_dist,
                    sd_dist,
                    mean_radius,
                    sd_radius,
                    reps_used: checks.len(),
                    failures,
                });
            }
        }
    }
    let mut failed_reps = batch.failures.clone();
    failed_reps.sort_by_key(|f| (f.n, f.rep_index));
    Ok(CoverageReport { config: cfg.clone(), cells, failed_reps, runtime: batch.runtime })
}

pub fn run_coverage(cfg: &ExperimentConfig) -> Result<CoverageReport, ExperimentError> {
    aggregate(cfg, &run_repetitions(cfg)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionPoint {
    pub n: usize,
    pub mean_l2_dist: f64,
    pub sd_l2_dist: f64,
    /// Mean non-inflated L2 radius `r_α`.
    pub mean_l2_radius: f64,
    pub reps_used: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub config: ExperimentConfig,
    pub points: Vec<ContractionPoint>,
    /// Least-squares slope of `ln(mean L2 distance)` on `ln n`; `None` when
    /// some mean distance is zero or not finite.
    pub slope: Option<f64>,
    /// `-β / (2β + d)`.
    pub expected_slope: f64,
    #[serde(skip)]
    pub runtime: Duration,
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    slope.is_finite().then_some(slope)
}

/// Posterior-mean error as a function of `n`; L2 is always evaluated.
pub fn contraction_scan(cfg: &ExperimentConfig) -> Result<ContractionReport, ExperimentError> {
    let ns = cfg.sorted_n_values();
    if ns.len() < 3 {
        return Err(ExperimentError::TooFewSampleSizes(ns.len()));
    }
    let mut run_cfg = cfg.clone();
    if !run_cfg.norms.contains(&Norm::L2) {
        run_cfg.norms.push(Norm::L2);
    }
    let batch = run_repetitions(&run_cfg)?;
    let mut points = Vec::with_capacity(ns.len());
    for &n in &ns {
        let reps: Vec<&NormResult> =
            batch.results.iter().filter(|r| r.n == n).filter_map(|r| r.norm(Norm::L2)).collect();
        if reps.is_empty() {
            return Err(ExperimentError::AllRepsFailed { n });
        }
        let dists: Vec<f64> = reps.iter().map(|r| r.dist_to_f0).collect();
        let radii: Vec<f64> = reps.iter().map(|r| r.radius).collect();
        let (mean_l2_dist, sd_l2_dist) = mean_sd(&dists);
        points.push(ContractionPoint {
            n,
            mean_l2_dist,
            sd_l2_dist,
            mean_l2_radius: mean_sd(&radii).0,
            reps_used: reps.len(),
            failures: batch.failures.iter().filter(|f| f.n == n).count(),
        });
    }
    let degenerate = points.iter().any(|p| !(p.mean_l2_dist > 1e-12 && p.mean_l2_dist.is_finite()));
    let slope = if degenerate {
        None
    } else {
        let x: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
        let y: Vec<f64> = points.iter().map(|p| p.mean_l2_dist.ln()).collect();
        ls_slope(&x, &y)
    };
    Ok(ContractionReport {
        config: cfg.clone(),
        points,
        slope,
        expected_slope: -cfg.beta / (2.0 * cfg.beta + cfg.d as f64),
        runtime: batch.runtime,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisDiagnostics {
    pub k: usize,
    /// Eigenvalue range of the `√k`-rescaled Gram.
    pub ortho: OrthoReport,
    pub sup_bound: f64,
    pub sparsity: Option<SparsityReport>,
}

/// Diagnostics for an arbitrary basis; `s_bound` applies to network bases.
pub fn diagnose_basis(basis: &BasisSet, grid: &Grid, bounds: (f64, f64), s_bound: usize) -> Result<BasisDiagnostics, ExperimentError> {
    let gram = gram_matrix(&basis.clone().sqrt_k_rescaled(), &QuadratureSpec::Auto)?;
    Ok(BasisDiagnostics {
        k: basis.len(),
        ortho: near_orthogonality(&gram, bounds.0, bounds.1)?,
        sup_bound: basis_sup_bound(basis, grid).map_err(PosteriorError::from)?,
        sparsity: basis.network().map(|net| check_sparsity(net, s_bound)),
    })
}

/// Diagnostics of the basis realized in repetition `rep_index` for size `n`.
/// Failing near-orthogonality is reported, not rejected.
pub fn basis_diagnostics(cfg: &ExperimentConfig, n: usize, rep_index: usize) -> Result<BasisDiagnostics, ExperimentError> {
    let ctx = RunContext::new(cfg)?;
    let built = build_basis(cfg, &ctx, n, rep_index)?;
    let k = built.basis.len();
    let s_bound = (k as f64 * (n as f64).ln()).round() as usize;
    diagnose_basis(&built.basis, &ctx.grid, DEFAULT_ORTHO_BOUNDS, s_bound)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle_cfg(n: usize, reps: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(TargetSpec::F1 { truncation: 200 }, vec![n], reps, 7);
        cfg.basis_mode = BasisMode::BsplineOracle { order: 2 };
        cfg.draws = 400;
        cfg
    }

    #[test]
    fn seeds_are_distinct() {
        let a = rep_seed(1, 1000, 0);
        assert_ne!(a, rep_seed(1, 1000, 1));
        assert_ne!(a, rep_seed(1, 2000, 0));
        assert_ne!(a, rep_seed(2, 1000, 0));
        assert_ne!(stream_seed(a, STREAM_DATA), stream_seed(a, STREAM_DRAWS));
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn oracle_interval_choice() {
        assert_eq!(oracle_intervals(10, 2, 1), 9);
        assert_eq!(oracle_intervals(10, 1, 1), 10);
        assert_eq!(oracle_intervals(10, 2, 2), 3);
        assert_eq!(oracle_intervals(1, 4, 1), 1);
    }

    #[test]
    fn validation_names_fields() {
        let mut cfg = oracle_cfg(100, 1);
        cfg.alpha = 1.5;
        assert!(matches!(cfg.validate(), Err(ExperimentError::InvalidConfig { field: "alpha", .. })));
        let mut cfg = oracle_cfg(4, 1);
        assert!(matches!(cfg.validate(), Err(ExperimentError::InvalidConfig { field: "n_values", .. })));
        cfg.n_values = vec![100];
        cfg.reps = 0;
        assert!(matches!(cfg.validate(), Err(ExperimentError::InvalidConfig { field: "reps", .. })));
        cfg.reps = 1;
        cfg.d = 2;
        assert!(matches!(cfg.validate(), Err(ExperimentError::InvalidConfig { field: "target", .. })));
    }

    #[test]
    fn repetition_is_deterministic() {
        let cfg = oracle_cfg(200, 1);
        let a = run_repetition(&cfg, 200, 3).unwrap();
        assert_eq!(a, run_repetition(&cfg, 200, 3).unwrap());
        assert_ne!(a, run_repetition(&cfg, 200, 4).unwrap());
        assert_eq!(a.k, 6);
        assert!(a.train_final_mse.is_none());
    }

    #[test]
    fn single_rep_report_mirrors_the_rep() {
        let cfg = oracle_cfg(200, 1);
        let report = run_coverage(&cfg).unwrap();
        let rep = run_repetition(&cfg, 200, 0).unwrap();
        let l2 = rep.norm(Norm::L2).unwrap();
        let cell = report.cells.iter().find(|c| c.norm == Norm::L2 && c.inflation == Inflation::Log).unwrap();
        let check = l2.covered.iter().find(|c| c.inflation == Inflation::Log).unwrap();
        assert_eq!(cell.mean_dist, l2.dist_to_f0);
        assert_eq!(cell.sd_dist, 0.0);
        assert_eq!(cell.mean_radius, check.factor * l2.radius);
        assert_eq!(cell.coverage, if check.covered { 1.0 } else { 0.0 });
        assert_eq!(report.cells.len(), 2 * 4);
    }

    #[test]
    fn mean_sd_convention() {
        assert_eq!(mean_sd(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn slope_of_a_line() {
        assert!((ls_slope(&[0.0, 1.0, 2.0], &[1.0, -1.0, -3.0]).unwrap() + 2.0).abs() < 1e-15);
        assert!(ls_slope(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn config_defaults_from_json() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"target":"f1","n_values":[1000],"reps":10,"master_seed":1}"#).unwrap();
        assert_eq!(cfg, ExperimentConfig::new(TargetSpec::F1 { truncation: 1000 }, vec![1000], 10, 1));
        let oracle: BasisMode = serde_json::from_str(r#"{"kind":"bspline_oracle"}"#).unwrap();
        assert_eq!(oracle, BasisMode::BsplineOracle { order: 2 });
        assert!(serde_json::from_str::<BasisMode>(r#"{"kind":"bspline_oracle","q":3}"#).is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"target":"f1","n_values":[1000],"reps":1,"master_seed":1,"extra":0}"#).is_err());
    }
}
