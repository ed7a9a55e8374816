//! Dense ReLU feedforward networks.
//!
//! `f(x) = W^L H^{L-1}(x)` with `H^0 = x` and
//! `H^i = ReLU(W^i H^{i-1} + b^i)`; the output map has no bias and no
//! activation. The last hidden layer `H^{L-1}` is the data-driven basis.

mod checkpoint;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use train::{train, Optimizer, TrainOptions, TrainOutcome};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisError, BasisSet};
use crate::quadrature::Grid;
use crate::synth::NetShape;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetError {
    #[error("input has dimension {got}, network expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("input coordinate {0} lies outside [0, 1]")]
    OutOfDomain(f64),
    #[error("forward pass produced a non-finite value")]
    NonFinite,
    #[error("expected {expected} parameters, got {got}")]
    ParameterCount { expected: usize, got: usize },
    #[error("invalid parameter value: {0}")]
    InvalidParameter(&'static str),
    #[error("invalid training options: {0}")]
    InvalidOptions(&'static str),
    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Diverged { epoch: usize, loss_trace: Vec<f64> },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerLayout {
    inputs: usize,
    outputs: usize,
    weights: usize,
    bias: Option<usize>,
}

/// A dense ReLU network with all parameters in one flat vector.
///
/// Per layer the weight matrix is stored row-major (`outputs × inputs`),
/// followed by the bias vector for hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    shape: NetShape,
    layout: Vec<LayerLayout>,
    params: Vec<f64>,
}

fn layout_for(shape: &NetShape) -> Vec<LayerLayout> {
    let widths = shape.widths();
    let last = widths.len() - 2;
    let mut offset = 0;
    widths
        .windows(2)
        .enumerate()
        .map(|(l, w)| {
            let weights = offset;
            offset += w[0] * w[1];
            let bias = (l != last).then(|| {
                let b = offset;
                offset += w[1];
                b
            });
            LayerLayout { inputs: w[0], outputs: w[1], weights, bias }
        })
        .collect()
}

impl Network {
    /// All parameters zero.
    pub fn zeros(shape: NetShape) -> Self {
        let layout = layout_for(&shape);
        let n = shape.parameter_count();
        Self { shape, layout, params: vec![0.0; n] }
    }

    pub fn from_parameters(shape: NetShape, params: Vec<f64>) -> Result<Self, NetError> {
        let mut net = Self::zeros(shape);
        net.set_parameters(&params)?;
        Ok(net)
    }

    /// Builds a network from per-layer `(weights, bias)`; weights row-major
    /// `outputs × inputs`, bias `None` exactly for the output layer.
    pub fn from_layers(shape: NetShape, layers: Vec<(Vec<f64>, Option<Vec<f64>>)>) -> Result<Self, NetError> {
        let mut net = Self::zeros(shape);
        if layers.len() != net.layout.len() {
            return Err(NetError::ParameterCount { expected: net.layout.len(), got: layers.len() });
        }
        let mut flat = Vec::with_capacity(net.params.len());
        for (lay, (w, b)) in net.layout.iter().zip(layers) {
            if w.len() != lay.inputs * lay.outputs {
                return Err(NetError::ParameterCount { expected: lay.inputs * lay.outputs, got: w.len() });
            }
            flat.extend(w);
            match (lay.bias, b) {
                (Some(_), Some(b)) if b.len() == lay.outputs => flat.extend(b),
                (None, None) => {}
                _ => return Err(NetError::InvalidParameter("bias present exactly on hidden layers")),
            }
        }
        net.set_parameters(&flat)?;
        Ok(net)
    }

    pub fn shape(&self) -> &NetShape {
        &self.shape
    }

    /// Number of weight matrices `L`.
    pub fn depth(&self) -> usize {
        self.layout.len()
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<(), NetError> {
        if params.len() != self.params.len() {
            return Err(NetError::ParameterCount { expected: self.params.len(), got: params.len() });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(NetError::InvalidParameter("parameters must be finite"));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Row-major weight matrix of layer `l` (0-based).
    pub fn weights(&self, l: usize) -> &[f64] {
        let lay = &self.layout[l];
        &self.params[lay.weights..lay.weights + lay.inputs * lay.outputs]
    }

    pub fn bias(&self, l: usize) -> Option<&[f64]> {
        let lay = &self.layout[l];
        lay.bias.map(|b| &self.params[b..b + lay.outputs])
    }

    /// Same network with the output map replaced by `theta` (length `k`).
    pub fn with_output_weights(&self, theta: &[f64]) -> Result<Self, NetError> {
        let lay = *self.layout.last().expect("network has an output layer");
        if theta.len() != lay.inputs {
            return Err(NetError::ParameterCount { expected: lay.inputs, got: theta.len() });
        }
        let mut net = self.clone();
        net.params[lay.weights..lay.weights + lay.inputs].copy_from_slice(theta);
        Ok(net)
    }

    /// Output and last hidden layer at `x ∈ [0,1]^d`.
    pub fn forward(&self, x: &[f64]) -> Result<(f64, Vec<f64>), NetError> {
        if x.len() != self.shape.input_width {
            return Err(NetError::DimensionMismatch { expected: self.shape.input_width, got: x.len() });
        }
        if let Some(&bad) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(NetError::OutOfDomain(bad));
        }
        let mut hidden = vec![0.0; self.shape.basis_width()];
        self.hidden_into(x, &mut hidden);
        let out = self.output_from_hidden(&hidden);
        if !out.is_finite() || hidden.iter().any(|h| !h.is_finite()) {
            return Err(NetError::NonFinite);
        }
        Ok((out, hidden))
    }

    /// Network output without domain or finiteness checks.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut hidden = vec![0.0; self.shape.basis_width()];
        self.hidden_into(x, &mut hidden);
        self.output_from_hidden(&hidden)
    }

    /// Writes `H^{L-1}(x)` into `out`.
    pub fn hidden_into(&self, x: &[f64], out: &mut [f64]) {
        let hidden_layers = &self.layout[..self.layout.len() - 1];
        let mut current = x.to_vec();
        let mut next = Vec::new();
        for lay in hidden_layers {
            self.affine_relu(lay, &current, &mut next);
            std::mem::swap(&mut current, &mut next);
        }
        out.copy_from_slice(&current);
    }

    fn affine_relu(&self, lay: &LayerLayout, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let w = &self.params[lay.weights..lay.weights + lay.inputs * lay.outputs];
        let b = lay.bias.map(|b| &self.params[b..b + lay.outputs]);
        for (i, row) in w.chunks_exact(lay.inputs).enumerate() {
            let mut z: f64 = row.iter().zip(input).map(|(w, a)| w * a).sum();
            if let Some(b) = b {
                z += b[i];
            }
            out.push(z.max(0.0));
        }
    }

    fn output_from_hidden(&self, hidden: &[f64]) -> f64 {
        let lay = self.layout.last().expect("network has an output layer");
        let w = &self.params[lay.weights..lay.weights + lay.inputs];
        w.iter().zip(hidden).map(|(w, h)| w * h).sum()
    }
}

/// He-scaled Gaussian initialization: weights `N(0, 2/fan_in)`, biases 0.
pub fn init_network(shape: NetShape, seed: u64) -> Network {
    let mut net = Network::zeros(shape);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let layout = net.layout.clone();
    for lay in layout {
        let normal = Normal::new(0.0, (2.0 / lay.inputs as f64).sqrt()).expect("positive scale");
        for p in &mut net.params[lay.weights..lay.weights + lay.inputs * lay.outputs] {
            *p = normal.sample(&mut rng);
        }
    }
    net
}

/// The last hidden layer of `net` as a basis; the output map is dropped.
pub fn extract_basis(net: &Network) -> BasisSet {
    BasisSet::DnnHidden(net.clone())
}

/// Nonzero count and range check against s-sparsity (values in `[-1, 1]`,
/// at most `s_bound` nonzero).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub nonzero_count: usize,
    pub max_abs_param: f64,
    pub s_bound: usize,
    pub is_s_sparse: bool,
}

pub fn check_sparsity(net: &Network, s_bound: usize) -> SparsityReport {
    let nonzero_count = net.params.iter().filter(|&&p| p != 0.0).count();
    let max_abs_param = net.params.iter().fold(0.0f64, |m, p| m.max(p.abs()));
    SparsityReport {
        nonzero_count,
        max_abs_param,
        s_bound,
        is_s_sparse: nonzero_count <= s_bound && max_abs_param <= 1.0,
    }
}

/// `max_x Σ_j |φ_j(x)|` over the grid: the smallest `C` with
/// `|θᵀφ(x)| <= C ‖θ‖∞` at every grid point.
pub fn basis_sup_bound(basis: &BasisSet, grid: &Grid) -> Result<f64, BasisError> {
    if grid.is_empty() {
        return Ok(0.0);
    }
    if grid.dim() != basis.dim() {
        return Err(BasisError::DimensionMismatch { expected: basis.dim(), got: grid.dim() });
    }
    let mut buf = vec![0.0; basis.len()];
    let mut best = 0.0f64;
    for x in grid.nodes() {
        basis.eval_into(x, &mut buf)?;
        best = best.max(buf.iter().map(|v| v.abs()).sum());
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bspline::make_bspline_basis;

    fn single_unit() -> Network {
        let shape = NetShape::new(1, vec![1]).unwrap();
        Network::from_layers(shape, vec![(vec![1.0], Some(vec![-0.5])), (vec![2.0], None)]).unwrap()
    }

    #[test]
    fn hand_evaluated_relu() {
        let net = single_unit();
        let (out, hidden) = net.forward(&[0.75]).unwrap();
        assert_eq!(hidden, vec![0.25]);
        assert_eq!(out, 0.5);
        assert_eq!(net.forward(&[0.25]).unwrap().0, 0.0);
        let basis = extract_basis(&net);
        assert_eq!(basis.len(), 1);
        assert_eq!(basis.eval(&[0.9]).unwrap(), vec![0.9 - 0.5]);
        assert_eq!(basis.eval(&[0.1]).unwrap(), vec![0.0]);
    }

    #[test]
    fn zero_network() {
        let net = Network::zeros(NetShape::new(2, vec![5, 3]).unwrap());
        let (out, hidden) = net.forward(&[0.3, 0.8]).unwrap();
        assert_eq!(out, 0.0);
        assert_eq!(hidden, vec![0.0; 3]);
        let r = check_sparsity(&net, 0);
        assert!(r.is_s_sparse);
        assert_eq!(r.nonzero_count, 0);
    }

    #[test]
    fn layer_dimensions() {
        let net = init_network(NetShape::new(1, vec![4, 2]).unwrap(), 1);
        assert_eq!(net.depth(), 3);
        assert_eq!(net.weights(0).len(), 4);
        assert_eq!(net.weights(1).len(), 8);
        assert_eq!(net.weights(2).len(), 2);
        assert_eq!(net.bias(0).map(<[f64]>::len), Some(4));
        assert_eq!(net.bias(1).map(<[f64]>::len), Some(2));
        assert!(net.bias(2).is_none());
        assert_eq!(net.parameters().len(), 4 + 4 + 8 + 2 + 2);
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let shape = NetShape::new(3, vec![7, 5]).unwrap();
        let a = init_network(shape.clone(), 42);
        assert_eq!(a, init_network(shape.clone(), 42));
        assert_ne!(a, init_network(shape, 43));
        assert!(a.bias(0).unwrap().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn init_variance_matches_he_scaling() {
        let shape = NetShape::new(1, vec![300, 300, 30]).unwrap();
        let net = init_network(shape, 5);
        for l in 0..net.depth() {
            let w = net.weights(l);
            if w.len() < 1000 {
                continue;
            }
            let fan_in = net.layout[l].inputs as f64;
            let mean = w.iter().sum::<f64>() / w.len() as f64;
            let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (w.len() as f64 - 1.0);
            let target = 2.0 / fan_in;
            assert!((var / target - 1.0).abs() < 0.2, "layer {l}: {var} vs {target}");
        }
    }

    #[test]
    fn forward_errors() {
        let net = single_unit();
        assert!(matches!(net.forward(&[0.1, 0.2]), Err(NetError::DimensionMismatch { .. })));
        assert!(matches!(net.forward(&[-0.1]), Err(NetError::OutOfDomain(_))));
        let mut huge = net.clone();
        huge.params = vec![f64::MAX, 0.0, f64::MAX];
        assert!(matches!(huge.forward(&[1.0]), Err(NetError::NonFinite)));
    }

    #[test]
    fn sparsity_verdicts() {
        let shape = NetShape::new(1, vec![4, 2]).unwrap();
        let mut p = vec![0.0; shape.parameter_count()];
        for (i, v) in [0.5, -1.0, 0.25, 1.0, -0.3, 0.9, 0.1].into_iter().enumerate() {
            p[i * 2] = v;
        }
        let net = Network::from_parameters(shape.clone(), p.clone()).unwrap();
        let r = check_sparsity(&net, 10);
        assert_eq!(r.nonzero_count, 7);
        assert!(r.is_s_sparse);
        assert!(!check_sparsity(&net, 6).is_s_sparse);
        p[1] = 2.0;
        let net = Network::from_parameters(shape, p).unwrap();
        assert!(!check_sparsity(&net, 1000).is_s_sparse);
    }

    #[test]
    fn output_swap_matches_basis_combination() {
        let net = init_network(NetShape::new(1, vec![6, 3]).unwrap(), 9);
        let theta = [0.3, -1.2, 2.0];
        let swapped = net.with_output_weights(&theta).unwrap();
        let basis = extract_basis(&net);
        for x in [0.0, 0.2, 0.77, 1.0] {
            let phi = basis.eval(&[x]).unwrap();
            let comb: f64 = phi.iter().zip(theta).map(|(p, t)| p * t).sum();
            assert!((comb - swapped.forward(&[x]).unwrap().0).abs() < 1e-14);
        }
    }

    #[test]
    fn sup_bound_examples() {
        let grid = Grid::trapezoid(1, 1001).unwrap();
        let ind = make_bspline_basis(10, 1, 1).unwrap();
        assert_eq!(basis_sup_bound(&ind, &grid).unwrap(), 1.0);
        let constant = make_bspline_basis(1, 1, 1).unwrap().rescaled(2.5);
        assert_eq!(basis_sup_bound(&constant, &grid).unwrap(), 2.5);
    }
}
