//! Ground-truth regression functions, synthetic data under the random-design
//! model `Y = f0(X) + σZ` with `X ~ U([0,1]^d)`, and network sizing rules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bspline::{knot_vector, BSplineError, TensorBSpline};

/// Terms kept from the Fourier series of `f1`/`f2` unless configured.
pub const DEFAULT_TRUNCATION: usize = 1000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("point has dimension {got}, target expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coordinate {0} lies outside [0, 1]")]
    OutOfDomain(f64),
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("dataset needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error(transparent)]
    Spline(#[from] BSplineError),
}

/// Serializable description of a target function.
///
/// In JSON a bare string `"f1"` or `"f2"` selects the Fourier targets with
/// the default truncation; the object form carries a `"kind"` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
#[serde(from = "TargetSpecRepr")]
pub enum TargetSpec {
    F1 {
        #[serde(default = "default_truncation")]
        truncation: usize,
    },
    F2 {
        #[serde(default = "default_truncation")]
        truncation: usize,
    },
    /// `Σ θ_j B_j` for the tensor B-spline basis with `intervals` segments
    /// and the given order on each of `dim` axes.
    BsplineCombo {
        intervals: usize,
        order: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        coefficients: Vec<f64>,
    },
    /// Piecewise-linear interpolation of `(xs, ys)` on `[0,1]`, `xs`
    /// strictly increasing from 0 to 1.
    Tabulated { xs: Vec<f64>, ys: Vec<f64> },
}

fn default_truncation() -> usize {
    DEFAULT_TRUNCATION
}

fn default_dim() -> usize {
    1
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TargetSpecRepr {
    Name(TargetName),
    Full(TargetSpecFull),
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum TargetName {
    F1,
    F2,
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
enum TargetSpecFull {
    F1 {
        #[serde(default = "default_truncation")]
        truncation: usize,
    },
    F2 {
        #[serde(default = "default_truncation")]
        truncation: usize,
    },
    BsplineCombo {
        intervals: usize,
        order: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        coefficients: Vec<f64>,
    },
    Tabulated {
        xs: Vec<f64>,
        ys: Vec<f64>,
    },
}

impl From<TargetSpecRepr> for TargetSpec {
    fn from(r: TargetSpecRepr) -> Self {
        match r {
            TargetSpecRepr::Name(TargetName::F1) => TargetSpec::F1 { truncation: DEFAULT_TRUNCATION },
            TargetSpecRepr::Name(TargetName::F2) => TargetSpec::F2 { truncation: DEFAULT_TRUNCATION },
            TargetSpecRepr::Full(TargetSpecFull::F1 { truncation }) => TargetSpec::F1 { truncation },
            TargetSpecRepr::Full(TargetSpecFull::F2 { truncation }) => TargetSpec::F2 { truncation },
            TargetSpecRepr::Full(TargetSpecFull::BsplineCombo { intervals, order, dim, coefficients }) => {
                TargetSpec::BsplineCombo { intervals, order, dim, coefficients }
            }
            TargetSpecRepr::Full(TargetSpecFull::Tabulated { xs, ys }) => TargetSpec::Tabulated { xs, ys },
        }
    }
}

impl TargetSpec {
    pub fn dim(&self) -> usize {
        match self {
            TargetSpec::BsplineCombo { dim, .. } => *dim,
            _ => 1,
        }
    }

    pub fn build(&self) -> Result<TargetFunction, SynthError> {
        TargetFunction::from_spec(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FourierKind {
    /// `a_i = sin(i) / i^1.5`
    F1,
    /// `a_i = sin(i^2) / i^1.5`
    F2,
}

/// Evaluable ground truth `f0` on `[0,1]^d`.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetFunction {
    /// `Σ_{i=1}^{T} a_i cos(π(i - 1/2)x)` on `[0,1]`.
    Fourier { kind: FourierKind, coefficients: Vec<f64> },
    BSplineCombo { spline: TensorBSpline, coefficients: Vec<f64> },
    Tabulated { xs: Vec<f64>, ys: Vec<f64> },
}

impl TargetFunction {
    pub fn f1(truncation: usize) -> Result<Self, SynthError> {
        Self::fourier(FourierKind::F1, truncation)
    }

    pub fn f2(truncation: usize) -> Result<Self, SynthError> {
        Self::fourier(FourierKind::F2, truncation)
    }

    fn fourier(kind: FourierKind, truncation: usize) -> Result<Self, SynthError> {
        if truncation == 0 {
            return Err(SynthError::InvalidTarget("truncation must be >= 1".into()));
        }
        let coefficients = (1..=truncation)
            .map(|i| {
                let fi = i as f64;
                let phase = match kind {
                    FourierKind::F1 => fi,
                    FourierKind::F2 => fi * fi,
                };
                phase.sin() / fi.powf(1.5)
            })
            .collect();
        Ok(TargetFunction::Fourier { kind, coefficients })
    }

    pub fn bspline_combo(spline: TensorBSpline, coefficients: Vec<f64>) -> Result<Self, SynthError> {
        if coefficients.len() != spline.len() {
            return Err(SynthError::InvalidTarget(format!(
                "{} coefficients for a basis of size {}",
                coefficients.len(),
                spline.len()
            )));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(SynthError::InvalidTarget("non-finite coefficient".into()));
        }
        Ok(TargetFunction::BSplineCombo { spline, coefficients })
    }

    pub fn tabulated(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self, SynthError> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(SynthError::InvalidTarget("tabulated target needs >= 2 (x, y) pairs".into()));
        }
        if xs[0] != 0.0 || xs[xs.len() - 1] != 1.0 || xs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(SynthError::InvalidTarget("xs must increase strictly from 0 to 1".into()));
        }
        if ys.iter().any(|y| !y.is_finite()) {
            return Err(SynthError::InvalidTarget("non-finite tabulated value".into()));
        }
        Ok(TargetFunction::Tabulated { xs, ys })
    }

    pub fn from_spec(spec: &TargetSpec) -> Result<Self, SynthError> {
        match spec {
            TargetSpec::F1 { truncation } => Self::f1(*truncation),
            TargetSpec::F2 { truncation } => Self::f2(*truncation),
            TargetSpec::BsplineCombo { intervals, order, dim, coefficients } => {
                if *dim == 0 {
                    return Err(SynthError::InvalidTarget("dim must be >= 1".into()));
                }
                let knots = knot_vector(*intervals, *order)?;
                let spline = TensorBSpline::new(vec![knots; *dim])?;
                Self::bspline_combo(spline, coefficients.clone())
            }
            TargetSpec::Tabulated { xs, ys } => Self::tabulated(xs.clone(), ys.clone()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            TargetFunction::BSplineCombo { spline, .. } => spline.dim(),
            _ => 1,
        }
    }

    /// Number of Fourier terms kept (1 for the other kinds).
    pub fn truncation(&self) -> usize {
        match self {
            TargetFunction::Fourier { coefficients, .. } => coefficients.len(),
            _ => 1,
        }
    }

    /// `f(x)` for `x ∈ [0,1]^d`.
    pub fn eval(&self, x: &[f64]) -> Result<f64, SynthError> {
        if x.len() != self.dim() {
            return Err(SynthError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        if let Some(&bad) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(SynthError::OutOfDomain(bad));
        }
        Ok(self.eval_unchecked(x))
    }

    /// `f(x)` without domain checks.
    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            TargetFunction::Fourier { coefficients, .. } => {
                let x = x[0];
                coefficients
                    .iter()
                    .enumerate()
                    .map(|(i, a)| a * cos_pi((i as f64 + 0.5) * x))
                    .sum()
            }
            TargetFunction::BSplineCombo { spline, coefficients } => {
                let mut buf = vec![0.0; coefficients.len()];
                spline.eval_into(x, &mut buf);
                buf.iter().zip(coefficients).map(|(b, c)| b * c).sum()
            }
            TargetFunction::Tabulated { xs, ys } => {
                let x = x[0];
                let i = xs.partition_point(|&t| t <= x).clamp(1, xs.len() - 1);
                let (x0, x1) = (xs[i - 1], xs[i]);
                let w = (x - x0) / (x1 - x0);
                ys[i - 1] + w * (ys[i] - ys[i - 1])
            }
        }
    }
}

/// `cos(π t)` with exact zeros at half-integers.
pub(crate) fn cos_pi(t: f64) -> f64 {
    use std::f64::consts::PI;
    // every subtraction below is exact in binary floating point
    let mut r = t.abs() % 2.0;
    if r > 1.0 {
        r = 2.0 - r;
    }
    let (r, sign) = if r > 0.5 { (1.0 - r, -1.0) } else { (r, 1.0) };
    if r == 0.5 {
        0.0
    } else if r > 0.25 {
        sign * (PI * (0.5 - r)).sin()
    } else {
        sign * (PI * r).cos()
    }
}

/// Observations `(x_i, y_i)` with `x_i ∈ [0,1]^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
    noise_sd: f64,
    seed: u64,
}

impl Dataset {
    pub fn new(dim: usize, xs: Vec<f64>, ys: Vec<f64>, noise_sd: f64, seed: u64) -> Result<Self, SynthError> {
        if dim == 0 {
            return Err(SynthError::InvalidParameter("dimension must be >= 1"));
        }
        if xs.len() != ys.len() * dim {
            return Err(SynthError::InvalidParameter("xs must hold dim coordinates per response"));
        }
        if ys.len() < 2 {
            return Err(SynthError::TooFewPoints { needed: 2, got: ys.len() });
        }
        if let Some(&bad) = xs.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(SynthError::OutOfDomain(bad));
        }
        if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
            return Err(SynthError::InvalidParameter("noise_sd must be finite and >= 0"));
        }
        Ok(Self { dim, xs, ys, noise_sd, seed })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.dim..(i + 1) * self.dim]
    }

    /// All design points, row-major.
    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.xs.chunks_exact(self.dim).zip(self.ys.iter().copied())
    }
}

/// Draws `n` points `X ~ U([0,1]^d)` and `Y = f(X) + σZ` from a ChaCha20
/// stream seeded with `seed`; per point the `d` coordinates are drawn
/// first, then the noise.
pub fn generate_dataset(f: &TargetFunction, n: usize, noise_sd: f64, seed: u64) -> Result<Dataset, SynthError> {
    if n < 2 {
        return Err(SynthError::TooFewPoints { needed: 2, got: n });
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(SynthError::InvalidParameter("noise_sd must be finite and >= 0"));
    }
    let d = f.dim();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n * d);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let start = xs.len();
        for _ in 0..d {
            xs.push(rng.random::<f64>());
        }
        let z: f64 = rng.sample(StandardNormal);
        ys.push(f.eval_unchecked(&xs[start..]) + noise_sd * z);
    }
    Ok(Dataset { dim: d, xs, ys, noise_sd, seed })
}

/// First `⌊n/2⌋` points and the rest, in generation order.
pub fn split_dataset(data: &Dataset) -> Result<(Dataset, Dataset), SynthError> {
    let n = data.len();
    if n < 4 {
        return Err(SynthError::TooFewPoints { needed: 4, got: n });
    }
    let half = n / 2;
    let d = data.dim;
    let part = |range: std::ops::Range<usize>| Dataset {
        dim: d,
        xs: data.xs[range.start * d..range.end * d].to_vec(),
        ys: data.ys[range].to_vec(),
        noise_sd: data.noise_sd,
        seed: data.seed,
    };
    Ok((part(0..half), part(half..n)))
}

/// Sieve dimension `k = round(n^{d/(d+2β)})`, at least 1.
///
/// # Panics
/// If `n < 2`, `d == 0` or `β <= 0`.
pub fn sieve_dimension(n: usize, d: usize, beta: f64) -> usize {
    assert!(n >= 2 && d >= 1 && beta > 0.0, "sieve_dimension needs n >= 2, d >= 1, beta > 0");
    let exponent = d as f64 / (d as f64 + 2.0 * beta);
    ((n as f64).powf(exponent).round() as usize).max(1)
}

/// Layer widths of a dense ReLU network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub input_width: usize,
    pub hidden_widths: Vec<usize>,
    pub output_width: usize,
}

impl NetShape {
    pub fn new(input_width: usize, hidden_widths: Vec<usize>) -> Result<Self, SynthError> {
        if input_width == 0 || hidden_widths.is_empty() || hidden_widths.contains(&0) {
            return Err(SynthError::InvalidParameter("network widths must be >= 1 with at least one hidden layer"));
        }
        Ok(Self { input_width, hidden_widths, output_width: 1 })
    }

    /// Width of the last hidden layer, i.e. the number of basis functions.
    pub fn basis_width(&self) -> usize {
        *self.hidden_widths.last().expect("validated shape has a hidden layer")
    }

    /// Widths `(p_0, ..., p_L)` including input and output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_widths.len() + 2);
        w.push(self.input_width);
        w.extend(&self.hidden_widths);
        w.push(self.output_width);
        w
    }

    pub fn parameter_count(&self) -> usize {
        let w = self.widths();
        let hidden: usize = w.windows(2).take(w.len() - 2).map(|p| (p[0] + 1) * p[1]).sum();
        hidden + self.basis_width() * self.output_width
    }
}

/// Fewest hidden layers [`network_shape`] produces.
pub const MIN_HIDDEN_LAYERS: usize = 2;

/// `H = max(2, ⌈log₂(β)·log₂(n)⌉)` hidden layers: `H - 1` of width `6k`
/// followed by the basis layer of width `k`.
///
/// # Panics
/// Same preconditions as [`sieve_dimension`].
pub fn network_shape(n: usize, d: usize, beta: f64) -> NetShape {
    let k = sieve_dimension(n, d, beta);
    let raw = (beta.log2() * (n as f64).log2()).ceil();
    let hidden = if raw.is_finite() && raw > MIN_HIDDEN_LAYERS as f64 { raw as usize } else { MIN_HIDDEN_LAYERS };
    let mut widths = vec![6 * k; hidden - 1];
    widths.push(k);
    NetShape { input_width: d, hidden_widths: widths, output_width: 1 }
}
