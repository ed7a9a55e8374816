use std::path::PathBuf;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use ebdnn::bspline::{gram_matrix, make_bspline_basis, project_values_on_rule, QuadratureSpec};
use ebdnn::experiments::{
    contraction_scan, evaluation_grid, ls_slope, oracle_intervals, repetition_posterior, run_coverage, BasisMode,
    ExperimentConfig, ExperimentError,
};
use ebdnn::posterior::{credible_radius, pointwise_band, retained_envelope, Curve, Inflation, Norm, PosteriorError};
use ebdnn::synth::sieve_dimension;
use serde::{Deserialize, Serialize};

use crate::config::{parse_config, CliError};
use crate::report::{columns_csv, contraction_csv, coverage_csv, fmt6, to_json, write_files, Format};

#[derive(Debug, Parser)]
#[command(name = "ebdnn", version, about = "Coverage and contraction studies for empirical Bayes network bases")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Coverage table per (n, norm, inflation).
    Coverage(RunArgs),
    /// Mean L2 error against n and its log-log slope.
    Contraction(RunArgs),
    /// Partition of unity, Gram spectrum and approximation rate of the oracle splines.
    BsplineCheck(RunArgs),
    /// Plot-ready curves and bands of one repetition (d = 1).
    Demo(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON experiment config.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; does not change any output.
    #[arg(long, env = "EBDNN_THREADS", value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,
    /// Replaces `master_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "both")]
    pub format: Format,
}

impl Command {
    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Coverage(a) | Command::Contraction(a) | Command::BsplineCheck(a) | Command::Demo(a) => a,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Coverage(_) => "coverage",
            Command::Contraction(_) => "contraction",
            Command::BsplineCheck(_) => "bspline-check",
            Command::Demo(_) => "demo",
        }
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    pub runtime: Duration,
    pub summary: String,
}

/// Config as echoed into reports, and the one actually run. They differ
/// only in `threads`, so reports do not depend on the thread override.
pub fn load(args: &RunArgs) -> Result<(ExperimentConfig, ExperimentConfig), CliError> {
    let mut echo = parse_config(&args.config)?;
    if let Some(seed) = args.seed {
        echo.master_seed = seed;
    }
    let mut run = echo.clone();
    if let Some(t) = args.threads {
        run.threads = Some(t as usize);
    }
    Ok((echo, run))
}

pub fn execute(command: &Command) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let args = command.args();
    let (echo, cfg) = load(args)?;
    let (files, summary) = match command {
        Command::Coverage(_) => coverage_files(&echo, &cfg, args.format)?,
        Command::Contraction(_) => contraction_files(&echo, &cfg, args.format)?,
        Command::BsplineCheck(_) => bspline_files(&echo, args.format)?,
        Command::Demo(_) => demo_files(&echo, args.format)?,
    };
    let written = write_files(&args.out, &files)?;
    Ok(Outcome { written, runtime: start.elapsed(), summary })
}

type Files = Vec<(String, String)>;

fn push_outputs<T: Serialize>(stem: &str, format: Format, csv: impl FnOnce() -> String, report: &T) -> Result<Files, CliError> {
    let mut files = Vec::new();
    if format.csv() {
        files.push((format!("{stem}.csv"), csv()));
    }
    if format.json() {
        files.push((format!("{stem}.json"), to_json(report)?));
    }
    Ok(files)
}

fn coverage_files(echo: &ExperimentConfig, cfg: &ExperimentConfig, format: Format) -> Result<(Files, String), CliError> {
    let mut report = run_coverage(cfg)?;
    report.config = echo.clone();
    let summary = format!("{} cells, {} failed repetitions", report.cells.len(), report.failed_reps.len());
    Ok((push_outputs("coverage", format, || coverage_csv(&report), &report)?, summary))
}

fn contraction_files(echo: &ExperimentConfig, cfg: &ExperimentConfig, format: Format) -> Result<(Files, String), CliError> {
    let mut report = contraction_scan(cfg)?;
    report.config = echo.clone();
    let slope = report.slope.map_or("degenerate".to_string(), fmt6);
    let summary = format!("slope {slope} (expected {})", fmt6(report.expected_slope));
    Ok((push_outputs("contraction", format, || contraction_csv(&report), &report)?, summary))
}

pub const BSPLINE_HEADER: &str =
    "n,k,basis_len,intervals,order,partition_max_dev,lambda_min,lambda_max,projection_residual";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsplineCheckRow {
    pub n: usize,
    /// Target dimension from the sample size.
    pub k: usize,
    pub basis_len: usize,
    pub intervals: usize,
    pub order: usize,
    /// `max |Σ_j B_j(x) − 1|` over the evaluation grid.
    pub partition_max_dev: f64,
    /// Extreme eigenvalues of the `√k`-rescaled Gram.
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// L2 distance from the target to its projection.
    pub projection_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsplineCheckReport {
    pub config: ExperimentConfig,
    pub rows: Vec<BsplineCheckRow>,
    /// Slope of log residual against log basis size.
    pub rate_slope: Option<f64>,
}

pub fn bspline_check(cfg: &ExperimentConfig) -> Result<BsplineCheckReport, CliError> {
    cfg.validate()?;
    let order = match cfg.basis_mode {
        BasisMode::BsplineOracle { order } => order,
        BasisMode::Dnn { .. } => 2,
    };
    let f0 = cfg.target.build().map_err(ExperimentError::from)?;
    let grid = evaluation_grid(cfg)?;
    let values: Vec<f64> = grid.nodes().map(|x| f0.eval_unchecked(x)).collect();
    let mut rows = Vec::with_capacity(cfg.n_values.len());
    for &n in &cfg.n_values {
        let k = sieve_dimension(n, cfg.d, cfg.beta);
        let intervals = oracle_intervals(k, order, cfg.d);
        let basis = make_bspline_basis(intervals, order, cfg.d).map_err(ExperimentError::from)?;
        let design = basis.eval_grid(&grid).map_err(|e| ExperimentError::from(PosteriorError::from(e)))?;
        let partition_max_dev = design.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max);
        let gram = gram_matrix(&basis.clone().sqrt_k_rescaled(), &QuadratureSpec::Auto).map_err(ExperimentError::from)?;
        let ev = gram.eigenvalues();
        let proj = project_values_on_rule(&values, &basis, &grid).map_err(ExperimentError::from)?;
        rows.push(BsplineCheckRow {
            n,
            k,
            basis_len: basis.len(),
            intervals,
            order,
            partition_max_dev,
            lambda_min: ev[0],
            lambda_max: ev[ev.len() - 1],
            projection_residual: proj.residual,
        });
    }
    let usable = rows.len() >= 2 && rows.iter().all(|r| r.projection_residual > 0.0);
    let rate_slope = if usable {
        let x: Vec<f64> = rows.iter().map(|r| (r.basis_len as f64).ln()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.projection_residual.ln()).collect();
        ls_slope(&x, &y)
    } else {
        None
    };
    Ok(BsplineCheckReport { config: cfg.clone(), rows, rate_slope })
}

pub fn bspline_csv(report: &BsplineCheckReport) -> String {
    let mut out = String::from(BSPLINE_HEADER);
    out.push('\n');
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{:.6e},{},{},{}\n",
            r.n,
            r.k,
            r.basis_len,
            r.intervals,
            r.order,
            r.partition_max_dev,
            fmt6(r.lambda_min),
            fmt6(r.lambda_max),
            fmt6(r.projection_residual)
        ));
    }
    out
}

fn bspline_files(echo: &ExperimentConfig, format: Format) -> Result<(Files, String), CliError> {
    let report = bspline_check(echo)?;
    let slope = report.rate_slope.map_or("undefined".to_string(), fmt6);
    let summary = format!("{} sizes, rate slope {slope}", report.rows.len());
    Ok((push_outputs("bspline_check", format, || bspline_csv(&report), &report)?, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoColumn {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub config: ExperimentConfig,
    pub n: usize,
    pub rep_index: usize,
    pub k: usize,
    pub l2_radius: f64,
    pub sup_radius: f64,
    pub inflation_factors: Vec<(Inflation, f64)>,
    pub columns: Vec<DemoColumn>,
}

/// Grid data of repetition 0 at the first sample size.
///
/// Columns: `x`, `f0`, `mean`; the pointwise range of the draws retained
/// by the L∞ and L2 balls; then per inflation the inflated pointwise
/// quantile band and the inflated L∞ ball `mean ± L·r`.
pub fn demo(cfg: &ExperimentConfig) -> Result<DemoReport, CliError> {
    cfg.validate()?;
    if cfg.d != 1 {
        return Err(CliError::Invalid { field: "d".into(), reason: "demo needs d = 1".into() });
    }
    let n = cfg.n_values[0];
    let state = repetition_posterior(cfg, n, 0)?;
    let center = state.center();
    let mean = state.design.curve(center).map_err(ExperimentError::from)?;
    let l2 = credible_radius(&state.draws, center, &state.design, Norm::L2, cfg.alpha).map_err(ExperimentError::from)?;
    let sup = credible_radius(&state.draws, center, &state.design, Norm::Sup, cfg.alpha).map_err(ExperimentError::from)?;
    let sup_env =
        retained_envelope(&state.draws, center, &state.design, Norm::Sup, sup.radius).map_err(ExperimentError::from)?;
    let l2_env =
        retained_envelope(&state.draws, center, &state.design, Norm::L2, l2.radius).map_err(ExperimentError::from)?;
    let band = pointwise_band(&state.draws, &state.design, cfg.alpha).map_err(ExperimentError::from)?;

    let x: Vec<f64> = state.grid().nodes().map(|p| p[0]).collect();
    let mut columns = vec![
        ("x".to_string(), x),
        ("f0".to_string(), state.f0_curve.0.clone()),
        ("mean".to_string(), mean.0.clone()),
        ("sup_retained_lower".to_string(), sup_env.lower),
        ("sup_retained_upper".to_string(), sup_env.upper),
        ("l2_retained_lower".to_string(), l2_env.lower),
        ("l2_retained_upper".to_string(), l2_env.upper),
    ];
    let mut inflation_factors = Vec::new();
    for kind in cfg.sorted_inflations() {
        let factor = kind.factor(n).map_err(ExperimentError::from)?;
        inflation_factors.push((kind, factor));
        let b = band.inflate(&mean, factor);
        let label = kind.label();
        columns.push((format!("band_{label}_lower"), b.lower));
        columns.push((format!("band_{label}_upper"), b.upper));
        let half = factor * sup.radius;
        columns.push((format!("sup_ball_{label}_lower"), shift(&mean, -half)));
        columns.push((format!("sup_ball_{label}_upper"), shift(&mean, half)));
    }
    Ok(DemoReport {
        config: cfg.clone(),
        n,
        rep_index: 0,
        k: state.basis.len(),
        l2_radius: l2.radius,
        sup_radius: sup.radius,
        inflation_factors,
        columns: columns.into_iter().map(|(name, values)| DemoColumn { name, values }).collect(),
    })
}

fn shift(c: &Curve, by: f64) -> Vec<f64> {
    c.0.iter().map(|v| v + by).collect()
}

pub fn demo_csv(report: &DemoReport) -> String {
    let cols: Vec<(String, Vec<f64>)> = report.columns.iter().map(|c| (c.name.clone(), c.values.clone())).collect();
    columns_csv(&cols)
}

fn demo_files(echo: &ExperimentConfig, format: Format) -> Result<(Files, String), CliError> {
    let report = demo(echo)?;
    let summary = format!(
        "n = {}, k = {}, L2 radius {}, sup radius {}",
        report.n,
        report.k,
        fmt6(report.l2_radius),
        fmt6(report.sup_radius)
    );
    Ok((push_outputs("demo", format, || demo_csv(&report), &report)?, summary))
}
