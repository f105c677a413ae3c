//! A small dense feedforward probability network: ReLU hidden layers
//! with inverted dropout, a two-unit softmax output, cross-entropy loss,
//! and per-parameter AdaGrad. Written directly against flat `f64`
//! buffers so training loops stay cache-friendly.

use crate::seeding::RngStream;
use rand::Rng;

/// Starting value of the AdaGrad accumulators. A zero start would turn
/// the first batch into a fixed-size step on every parameter (the
/// update degenerates to `lr * sign(g)`), which fits label noise
/// immediately and wrecks the calibration the anchor percentiles rely
/// on; seeding the accumulator keeps early steps proportional to the
/// gradient.
const ADAGRAD_INITIAL_ACCUMULATOR: f64 = 0.04;

/// One dense layer, weights stored row-major by output unit.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    /// AdaGrad accumulated squared gradients.
    accum_w: Vec<f64>,
    accum_b: Vec<f64>,
}

impl DenseLayer {
    fn glorot(in_dim: usize, out_dim: usize, rng: &mut RngStream) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        DenseLayer {
            in_dim,
            out_dim,
            weights,
            biases: vec![0.0; out_dim],
            accum_w: vec![ADAGRAD_INITIAL_ACCUMULATOR; in_dim * out_dim],
            accum_b: vec![ADAGRAD_INITIAL_ACCUMULATOR; out_dim],
        }
    }

    /// `out[b] = W a[b] + bias` for a batch of `n` rows.
    fn forward_batch(&self, input: &[f64], n: usize, out: &mut Vec<f64>) {
        out.clear();
        out.reserve(n * self.out_dim);
        for b in 0..n {
            let row = &input[b * self.in_dim..(b + 1) * self.in_dim];
            for o in 0..self.out_dim {
                let w = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                let z: f64 = w.iter().zip(row).map(|(wi, ai)| wi * ai).sum::<f64>()
                    + self.biases[o];
                out.push(z);
            }
        }
    }
}

/// Gradients matching a network's parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// The probability model `q(input) ~ (P(bit = 0), P(bit = 1))`.
#[derive(Debug, Clone)]
pub struct ProbabilityNet {
    layers: Vec<DenseLayer>,
    /// Dropout probability per hidden layer (the output layer has none).
    dropout: Vec<f64>,
}

impl ProbabilityNet {
    /// Builds input -> hidden* -> 2 with symmetric uniform (Glorot)
    /// weight initialization and zero biases.
    pub fn new(input_dim: usize, hidden: &[usize], dropout: &[f64], rng: &mut RngStream) -> Self {
        assert!(input_dim >= 1, "input dimension must be positive");
        assert_eq!(hidden.len(), dropout.len());
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input_dim;
        for &h in hidden {
            assert!(h >= 1);
            layers.push(DenseLayer::glorot(prev, h, rng));
            prev = h;
        }
        layers.push(DenseLayer::glorot(prev, 2, rng));
        ProbabilityNet {
            layers,
            dropout: dropout.to_vec(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.out_dim)
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|v| v.is_finite()) && l.biases.iter().all(|v| v.is_finite())
        })
    }

    /// Probability pair `(q0, q1)` for one input. In train mode, hidden
    /// activations pass through inverted dropout driven by `rng`;
    /// inference ignores the stream entirely.
    pub fn forward(&self, input: &[f64], train_mode: bool, rng: &mut RngStream) -> (f64, f64) {
        assert_eq!(input.len(), self.input_dim(), "input length mismatch");
        let (activations, _) = self.forward_batch_internal(input, 1, train_mode, Some(rng));
        let logits = activations.last().unwrap();
        let q = softmax2(logits[0], logits[1]);
        (q.0, q.1)
    }

    /// Convenience for the common inference case.
    pub fn prob_one(&self, input: &[f64]) -> f64 {
        let mut unused = crate::seeding::substream(0, 0);
        self.forward(input, false, &mut unused).1
    }

    /// Batched forward pass. Returns post-activation buffers per layer
    /// (the last holds raw logits) and the dropout masks used, if any.
    fn forward_batch_internal(
        &self,
        input: &[f64],
        n: usize,
        train_mode: bool,
        mut rng: Option<&mut RngStream>,
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let hidden_count = self.layers.len() - 1;
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut masks: Vec<Vec<f64>> = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut buf = Vec::new();
            {
                let current: &[f64] = if l == 0 { input } else { &activations[l - 1] };
                layer.forward_batch(current, n, &mut buf);
            }
            if l < hidden_count {
                for v in buf.iter_mut() {
                    *v = v.max(0.0);
                }
                let p = self.dropout[l];
                if train_mode && p > 0.0 {
                    let rng = rng
                        .as_deref_mut()
                        .expect("train-mode forward needs a random stream");
                    let keep = 1.0 - p;
                    let scale = 1.0 / keep;
                    let mask: Vec<f64> = (0..buf.len())
                        .map(|_| {
                            if rng.random::<f64>() < keep {
                                scale
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    for (v, m) in buf.iter_mut().zip(&mask) {
                        *v *= m;
                    }
                    masks.push(mask);
                }
            }
            activations.push(buf);
        }
        (activations, masks)
    }

    /// Mean cross-entropy of a batch (no dropout).
    pub fn batch_loss(&self, inputs: &[f64], targets: &[usize], n: usize) -> f64 {
        let (activations, _) = self.forward_batch_internal(inputs, n, false, None);
        let logits = activations.last().unwrap();
        let mut loss = 0.0;
        for (b, &t) in targets.iter().enumerate().take(n) {
            let q = softmax2(logits[b * 2], logits[b * 2 + 1]);
            let p = if t == 0 { q.0 } else { q.1 };
            loss -= p.max(1e-300).ln();
        }
        loss / n as f64
    }

    /// Mean cross-entropy and its gradients for a batch. Dropout masks
    /// are drawn from `rng` when given; `None` disables dropout (used by
    /// inference-style evaluation and the finite-difference checks).
    pub fn batch_loss_and_grads(
        &self,
        inputs: &[f64],
        targets: &[usize],
        n: usize,
        rng: Option<&mut RngStream>,
    ) -> (f64, Gradients) {
        let train_mode = rng.is_some();
        let (activations, masks) = self.forward_batch_internal(inputs, n, train_mode, rng);
        let hidden_count = self.layers.len() - 1;
        let logits = activations.last().unwrap();

        let mut loss = 0.0;
        // dZ for the output layer: (q - onehot) / n.
        let mut delta = vec![0.0; n * 2];
        for (b, &t) in targets.iter().enumerate().take(n) {
            let q = softmax2(logits[b * 2], logits[b * 2 + 1]);
            let p = if t == 0 { q.0 } else { q.1 };
            loss -= p.max(1e-300).ln();
            delta[b * 2] = (q.0 - if t == 0 { 1.0 } else { 0.0 }) / n as f64;
            delta[b * 2 + 1] = (q.1 - if t == 1 { 1.0 } else { 0.0 }) / n as f64;
        }
        loss /= n as f64;

        let mut grads = Gradients {
            weights: self
                .layers
                .iter()
                .map(|l| vec![0.0; l.weights.len()])
                .collect(),
            biases: self.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        };

        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let prev: &[f64] = if l == 0 {
                inputs
            } else {
                &activations[l - 1]
            };
            let gw = &mut grads.weights[l];
            let gb = &mut grads.biases[l];
            for b in 0..n {
                let d_row = &delta[b * layer.out_dim..(b + 1) * layer.out_dim];
                let a_row = &prev[b * layer.in_dim..(b + 1) * layer.in_dim];
                for (o, &d) in d_row.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    let target = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (g, &a) in target.iter_mut().zip(a_row) {
                        *g += d * a;
                    }
                }
            }
            if l == 0 {
                break;
            }
            // Propagate to the previous layer through dropout and ReLU.
            let mut next_delta = vec![0.0; n * layer.in_dim];
            for b in 0..n {
                let d_row = &delta[b * layer.out_dim..(b + 1) * layer.out_dim];
                let out_row = &mut next_delta[b * layer.in_dim..(b + 1) * layer.in_dim];
                for (o, &d) in d_row.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let w = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (nd, &wi) in out_row.iter_mut().zip(w) {
                        *nd += d * wi;
                    }
                }
            }
            let post = &activations[l - 1];
            if train_mode && l - 1 < hidden_count && self.dropout[l - 1] > 0.0 {
                let mask = &masks[l - 1];
                for ((nd, &a), &m) in next_delta.iter_mut().zip(post).zip(mask) {
                    *nd *= m * if a > 0.0 { 1.0 } else { 0.0 };
                }
            } else {
                for (nd, &a) in next_delta.iter_mut().zip(post) {
                    if a <= 0.0 {
                        *nd = 0.0;
                    }
                }
            }
            delta = next_delta;
        }

        (loss, grads)
    }

    /// AdaGrad step: `param -= lr * g / (sqrt(accum) + eps)` with
    /// `accum += g^2` per parameter.
    pub fn apply_adagrad(&mut self, grads: &Gradients, learning_rate: f64, epsilon: f64) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (i, &g) in grads.weights[l].iter().enumerate() {
                layer.accum_w[i] += g * g;
                layer.weights[i] -= learning_rate * g / (layer.accum_w[i].sqrt() + epsilon);
            }
            for (i, &g) in grads.biases[l].iter().enumerate() {
                layer.accum_b[i] += g * g;
                layer.biases[i] -= learning_rate * g / (layer.accum_b[i].sqrt() + epsilon);
            }
        }
    }

    /// Total number of trainable parameters.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Flat parameter access (weights then biases, layer by layer);
    /// used by the finite-difference gradient oracle.
    pub fn param(&self, index: usize) -> f64 {
        let (l, off, is_bias) = self.locate(index);
        if is_bias {
            self.layers[l].biases[off]
        } else {
            self.layers[l].weights[off]
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let (l, off, is_bias) = self.locate(index);
        if is_bias {
            self.layers[l].biases[off] = value;
        } else {
            self.layers[l].weights[off] = value;
        }
    }

    /// Flat gradient value matching the [`param`] indexing.
    pub fn grad_at(grads: &Gradients, net: &ProbabilityNet, index: usize) -> f64 {
        let (l, off, is_bias) = net.locate(index);
        if is_bias {
            grads.biases[l][off]
        } else {
            grads.weights[l][off]
        }
    }

    fn locate(&self, mut index: usize) -> (usize, usize, bool) {
        for (l, layer) in self.layers.iter().enumerate() {
            if index < layer.weights.len() {
                return (l, index, false);
            }
            index -= layer.weights.len();
            if index < layer.biases.len() {
                return (l, index, true);
            }
            index -= layer.biases.len();
        }
        panic!("parameter index out of range");
    }

    /// Zeroes every weight and bias (test helper for the symmetric
    /// softmax case).
    pub fn zero_params(&mut self) {
        for layer in &mut self.layers {
            layer.weights.iter_mut().for_each(|v| *v = 0.0);
            layer.biases.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

fn softmax2(z0: f64, z1: f64) -> (f64, f64) {
    let m = z0.max(z1);
    let e0 = (z0 - m).exp();
    let e1 = (z1 - m).exp();
    let total = e0 + e1;
    (e0 / total, e1 / total)
}
