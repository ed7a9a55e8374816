//! Finite sets of real functions on `[0,1]^d` with batch evaluation.

use nalgebra::DMatrix;

use crate::bspline::TensorBSpline;
use crate::neuralnet::Network;
use crate::quadrature::Grid;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BasisError {
    #[error("point has dimension {got}, basis expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coordinate {0} lies outside [0, 1]")]
    OutOfDomain(f64),
    #[error("basis evaluation produced a non-finite value")]
    NonFinite,
    #[error("column {column} out of range for a basis of size {size}")]
    ColumnOutOfRange { column: usize, size: usize },
    #[error("rescaling factor must be finite, got {0}")]
    InvalidFactor(f64),
}

/// `k` real-valued functions on `[0,1]^d`.
#[derive(Debug, Clone, PartialEq)]
pub enum BasisSet {
    /// Last hidden layer of a ReLU network.
    DnnHidden(Network),
    TensorBSpline(TensorBSpline),
    /// Every member of `inner` multiplied by `factor`.
    Rescaled { inner: Box<BasisSet>, factor: f64 },
    /// Members of `inner` picked (and possibly repeated) by index.
    Columns { inner: Box<BasisSet>, columns: Vec<usize> },
}

impl BasisSet {
    pub fn len(&self) -> usize {
        match self {
            BasisSet::DnnHidden(net) => net.shape().basis_width(),
            BasisSet::TensorBSpline(s) => s.len(),
            BasisSet::Rescaled { inner, .. } => inner.len(),
            BasisSet::Columns { columns, .. } => columns.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            BasisSet::DnnHidden(net) => net.shape().input_width,
            BasisSet::TensorBSpline(s) => s.dim(),
            BasisSet::Rescaled { inner, .. } | BasisSet::Columns { inner, .. } => inner.dim(),
        }
    }

    pub fn rescaled(self, factor: f64) -> Self {
        BasisSet::Rescaled { inner: Box::new(self), factor }
    }

    /// The `√k`-rescaled basis, nearly orthonormal for splines.
    pub fn sqrt_k_rescaled(self) -> Self {
        let k = self.len() as f64;
        self.rescaled(k.sqrt())
    }

    pub fn with_columns(self, columns: Vec<usize>) -> Result<Self, BasisError> {
        let size = self.len();
        if let Some(&column) = columns.iter().find(|&&c| c >= size) {
            return Err(BasisError::ColumnOutOfRange { column, size });
        }
        Ok(BasisSet::Columns { inner: Box::new(self), columns })
    }

    /// The underlying tensor spline, if evaluation reduces to one.
    pub fn spline_backend(&self) -> Option<&TensorBSpline> {
        match self {
            BasisSet::TensorBSpline(s) => Some(s),
            BasisSet::Rescaled { inner, .. } | BasisSet::Columns { inner, .. } => inner.spline_backend(),
            BasisSet::DnnHidden(_) => None,
        }
    }

    pub fn network(&self) -> Option<&Network> {
        match self {
            BasisSet::DnnHidden(net) => Some(net),
            BasisSet::Rescaled { inner, .. } | BasisSet::Columns { inner, .. } => inner.network(),
            BasisSet::TensorBSpline(_) => None,
        }
    }

    /// Writes the `k` values at `x` into `out` without checking the domain.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), BasisError> {
        match self {
            BasisSet::DnnHidden(net) => {
                net.hidden_into(x, out);
                if out.iter().any(|v| !v.is_finite()) {
                    return Err(BasisError::NonFinite);
                }
            }
            BasisSet::TensorBSpline(s) => s.eval_into(x, out),
            BasisSet::Rescaled { inner, factor } => {
                if !factor.is_finite() {
                    return Err(BasisError::InvalidFactor(*factor));
                }
                inner.eval_into(x, out)?;
                out.iter_mut().for_each(|v| *v *= factor);
            }
            BasisSet::Columns { inner, columns } => {
                let mut buf = vec![0.0; inner.len()];
                inner.eval_into(x, &mut buf)?;
                for (o, &c) in out.iter_mut().zip(columns) {
                    *o = buf[c];
                }
            }
        }
        Ok(())
    }

    /// Values of all members at `x ∈ [0,1]^d`.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, BasisError> {
        self.check_point(x)?;
        let mut out = vec![0.0; self.len()];
        self.eval_into(x, &mut out)?;
        Ok(out)
    }

    /// `rows × k` matrix of evaluations at `rows` points stored row-major.
    pub fn eval_points(&self, points: &[f64]) -> Result<DMatrix<f64>, BasisError> {
        let d = self.dim();
        let k = self.len();
        if !points.len().is_multiple_of(d) {
            return Err(BasisError::DimensionMismatch { expected: d, got: points.len() % d });
        }
        let rows = points.len() / d;
        let mut data = vec![0.0; rows * k];
        for (x, row) in points.chunks_exact(d).zip(data.chunks_exact_mut(k.max(1))) {
            self.check_point(x)?;
            self.eval_into(x, row)?;
        }
        Ok(DMatrix::from_row_slice(rows, k, &data))
    }

    /// Evaluations at the nodes of a grid, one row per node.
    pub fn eval_grid(&self, grid: &Grid) -> Result<DMatrix<f64>, BasisError> {
        if grid.dim() != self.dim() {
            return Err(BasisError::DimensionMismatch { expected: self.dim(), got: grid.dim() });
        }
        let k = self.len();
        let mut data = vec![0.0; grid.len() * k];
        for (x, row) in grid.nodes().zip(data.chunks_exact_mut(k.max(1))) {
            self.eval_into(x, row)?;
        }
        Ok(DMatrix::from_row_slice(grid.len(), k, &data))
    }

    fn check_point(&self, x: &[f64]) -> Result<(), BasisError> {
        if x.len() != self.dim() {
            return Err(BasisError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        if let Some(&bad) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(BasisError::OutOfDomain(bad));
        }
        Ok(())
    }
}
