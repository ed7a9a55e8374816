use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{NetError, Network};
use crate::synth::Dataset;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Clamp the output to `[-F, F]` inside the training loss.
    pub clip_sup: Option<f64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { epochs: 200, batch_size: 128, learning_rate: 1e-3, optimizer: Optimizer::Adam, seed: 0, clip_sup: None }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.epochs == 0 {
            return Err(NetError::InvalidOptions("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(NetError::InvalidOptions("batch_size must be >= 1"));
        }
        // zero is allowed: a frozen run is a useful baseline
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(NetError::InvalidOptions("learning_rate must be finite and >= 0"));
        }
        if let Some(f) = self.clip_sup {
            if !(f > 0.0) {
                return Err(NetError::InvalidOptions("clip_sup must be > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub network: Network,
    /// Training MSE on the full dataset after each epoch.
    pub loss_trace: Vec<f64>,
}

impl TrainOutcome {
    pub fn final_mse(&self) -> f64 {
        *self.loss_trace.last().expect("at least one epoch")
    }
}

/// Minibatch gradient descent on the mean squared error over `data`.
///
/// Batches are formed from a ChaCha20 shuffle seeded by `opts.seed`, one
/// permutation per epoch, and processed serially.
pub fn train(mut net: Network, data: &Dataset, opts: &TrainOptions) -> Result<TrainOutcome, NetError> {
    opts.validate()?;
    if data.dim() != net.shape().input_width {
        return Err(NetError::DimensionMismatch { expected: net.shape().input_width, got: data.dim() });
    }
    if opts.batch_size > data.len() {
        return Err(NetError::InvalidOptions("batch_size exceeds the number of training points"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut scratch = Scratch::new(&net);
    let mut grad = vec![0.0; net.params.len()];
    let mut m = vec![0.0; grad.len()];
    let mut v = vec![0.0; grad.len()];
    let mut step = 0i32;
    let mut trace = Vec::with_capacity(opts.epochs);

    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(opts.batch_size) {
            grad.fill(0.0);
            for &i in batch {
                net.accumulate_gradient(data.x(i), data.ys()[i], opts.clip_sup, &mut scratch, &mut grad);
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            step += 1;
            let lr = opts.learning_rate;
            match opts.optimizer {
                Optimizer::Sgd => {
                    for (p, g) in net.params_mut().iter_mut().zip(&grad) {
                        *p -= lr * g;
                    }
                }
                Optimizer::Adam => {
                    let c1 = 1.0 - ADAM_BETA1.powi(step);
                    let c2 = 1.0 - ADAM_BETA2.powi(step);
                    for (((p, g), m), v) in net.params_mut().iter_mut().zip(&grad).zip(&mut m).zip(&mut v) {
                        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPSILON);
                    }
                }
            }
        }
        let loss = net.training_mse(data, opts.clip_sup);
        if !loss.is_finite() || net.params.iter().any(|p| !p.is_finite()) {
            return Err(NetError::Diverged { epoch, loss_trace: trace });
        }
        trace.push(loss);
    }
    Ok(TrainOutcome { network: net, loss_trace: trace })
}

/// Per-layer activations reused across samples.
struct Scratch {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Scratch {
    fn new(net: &Network) -> Self {
        let widths = net.shape.widths();
        Self {
            acts: widths[..widths.len() - 1].iter().map(|&w| vec![0.0; w]).collect(),
            delta: Vec::new(),
            delta_prev: Vec::new(),
        }
    }
}

impl Network {
    /// `(1/n) Σ (y_i - f(x_i))²`, with the output clamped when `clip` is set.
    pub fn mse(&self, data: &Dataset) -> f64 {
        self.training_mse(data, None)
    }

    fn training_mse(&self, data: &Dataset, clip: Option<f64>) -> f64 {
        let sum: f64 = data
            .iter()
            .map(|(x, y)| {
                let f = clip_output(self.predict(x), clip);
                (y - f) * (y - f)
            })
            .sum();
        sum / data.len() as f64
    }

    /// Mean squared error over `(xs, ys)` and its gradient with respect to
    /// [`Network::parameters`], by backpropagation.
    pub fn mse_gradient(&self, xs: &[f64], ys: &[f64]) -> Result<(f64, Vec<f64>), NetError> {
        let d = self.shape.input_width;
        if xs.len() != ys.len() * d || ys.is_empty() {
            return Err(NetError::DimensionMismatch { expected: ys.len() * d, got: xs.len() });
        }
        let mut scratch = Scratch::new(self);
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for (x, &y) in xs.chunks_exact(d).zip(ys) {
            loss += self.accumulate_gradient(x, y, None, &mut scratch, &mut grad);
        }
        let n = ys.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((loss / n, grad))
    }

    /// Adds `∂(y - f(x))²/∂params` to `grad`; returns the squared error.
    fn accumulate_gradient(&self, x: &[f64], y: f64, clip: Option<f64>, s: &mut Scratch, grad: &mut [f64]) -> f64 {
        let layers = &self.layout;
        let last = layers.len() - 1;
        s.acts[0].copy_from_slice(x);
        for (l, lay) in layers[..last].iter().enumerate() {
            let (head, tail) = s.acts.split_at_mut(l + 1);
            let input = &head[l];
            let out = &mut tail[0];
            let w = &self.params[lay.weights..lay.weights + lay.inputs * lay.outputs];
            let b = &self.params[lay.bias.expect("hidden layer has bias")..][..lay.outputs];
            for ((o, row), bi) in out.iter_mut().zip(w.chunks_exact(lay.inputs)).zip(b) {
                let z: f64 = row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>() + bi;
                *o = z.max(0.0);
            }
        }
        let out_lay = &layers[last];
        let hidden = &s.acts[last];
        let w_out = &self.params[out_lay.weights..out_lay.weights + out_lay.inputs];
        let raw: f64 = w_out.iter().zip(hidden).map(|(w, h)| w * h).sum();
        let f = clip_output(raw, clip);
        let residual = f - y;
        let clipped = clip.is_some_and(|c| raw.abs() > c);
        let d_out = if clipped { 0.0 } else { 2.0 * residual };

        for (g, h) in grad[out_lay.weights..out_lay.weights + out_lay.inputs].iter_mut().zip(hidden) {
            *g += d_out * h;
        }
        s.delta.clear();
        s.delta.extend(w_out.iter().zip(hidden).map(|(w, &h)| if h > 0.0 { w * d_out } else { 0.0 }));

        for l in (0..last).rev() {
            let lay = &layers[l];
            let input = &s.acts[l];
            let wg = &mut grad[lay.weights..lay.weights + lay.inputs * lay.outputs];
            for (row, &dl) in wg.chunks_exact_mut(lay.inputs).zip(&s.delta) {
                if dl != 0.0 {
                    for (g, a) in row.iter_mut().zip(input) {
                        *g += dl * a;
                    }
                }
            }
            let b = lay.bias.expect("hidden layer has bias");
            for (g, dl) in grad[b..b + lay.outputs].iter_mut().zip(&s.delta) {
                *g += dl;
            }
            if l > 0 {
                let w = &self.params[lay.weights..lay.weights + lay.inputs * lay.outputs];
                s.delta_prev.clear();
                s.delta_prev.resize(lay.inputs, 0.0);
                for (row, &dl) in w.chunks_exact(lay.inputs).zip(&s.delta) {
                    if dl != 0.0 {
                        for (dp, wij) in s.delta_prev.iter_mut().zip(row) {
                            *dp += wij * dl;
                        }
                    }
                }
                for (dp, &a) in s.delta_prev.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *dp = 0.0;
                    }
                }
                std::mem::swap(&mut s.delta, &mut s.delta_prev);
            }
        }
        residual * residual
    }
}

fn clip_output(f: f64, clip: Option<f64>) -> f64 {
    match clip {
        Some(c) => f.clamp(-c, c),
        None => f,
    }
}
