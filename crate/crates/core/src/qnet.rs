//! Fully-connected Q-value approximator with main/target parameter sets,
//! multi-step TD targets, importance-weighted gradient steps, and epsilon-
//! greedy action selection. Plain scalar math so gradients stay
//! finite-difference checkable.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Global gradient-norm clip; guards the +-500 reward scale.
pub const GRADIENT_CLIP_NORM: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum QNetError {
    #[error("input has dimension {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("network needs at least an input and an output layer")]
    TooFewLayers,
    #[error("architecture mismatch: {0:?} vs {1:?}")]
    ArchitectureMismatch(Vec<usize>, Vec<usize>),
    #[error("non-finite gradient, update aborted")]
    NonFiniteGradient,
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("empty batch")]
    EmptyBatch,
    #[error("{got} weights for {expected} samples")]
    WeightCountMismatch { got: usize, expected: usize },
    #[error("discount must lie in (0, 1), got {0}")]
    InvalidDiscount(f64),
    #[error("sync period must be at least 1")]
    InvalidSyncPeriod,
    #[error("epsilon must lie in [0, 1], got {0}")]
    InvalidEpsilon(f64),
    #[error("checkpoint io: {0}")]
    CheckpointIo(String),
    #[error("checkpoint malformed: {0}")]
    CheckpointFormat(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Layer {
    /// Row-major (output x input).
    weights: Vec<f64>,
    biases: Vec<f64>,
}

/// Rectifier hidden layers, linear output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QNetwork {
    layer_sizes: Vec<usize>,
    layers: Vec<Layer>,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub discount: f64,
    pub sync_period: u32,
    pub hidden_width: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            discount: 0.9,
            sync_period: 100,
            hidden_width: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), QNetError> {
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(QNetError::InvalidDiscount(self.discount));
        }
        if self.sync_period < 1 {
            return Err(QNetError::InvalidSyncPeriod);
        }
        Ok(())
    }
}

/// One training sample in encoded form: the replay layer owns the mapping
/// from environment observations to these vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TdSample {
    pub state: Vec<f64>,
    pub action: usize,
    pub accum_reward: f64,
    pub next_state: Vec<f64>,
    pub step_count: u32,
    pub terminal: bool,
}

impl QNetwork {
    /// Uniform init scaled by fan-in.
    pub fn new<R: Rng>(layer_sizes: &[usize], rng: &mut R) -> Result<Self, QNetError> {
        if layer_sizes.len() < 2 {
            return Err(QNetError::TooFewLayers);
        }
        let mut layers = Vec::with_capacity(layer_sizes.len() - 1);
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (1.0 / fan_in as f64).sqrt();
            let weights = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            layers.push(Layer {
                weights,
                biases: vec![0.0; fan_out],
            });
        }
        Ok(QNetwork {
            layer_sizes: layer_sizes.to_vec(),
            layers,
        })
    }

    /// All-zero parameters; handy for tests and hand-set fixtures.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self, QNetError> {
        if layer_sizes.len() < 2 {
            return Err(QNetError::TooFewLayers);
        }
        let layers = layer_sizes
            .windows(2)
            .map(|w| Layer {
                weights: vec![0.0; w[0] * w[1]],
                biases: vec![0.0; w[1]],
            })
            .collect();
        Ok(QNetwork {
            layer_sizes: layer_sizes.to_vec(),
            layers,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_len(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Direct access for hand-constructed fixtures: layer `index`, weight
    /// from input unit `col` to output unit `row`.
    pub fn set_weight(&mut self, index: usize, row: usize, col: usize, value: f64) {
        let fan_in = self.layer_sizes[index];
        self.layers[index].weights[row * fan_in + col] = value;
    }

    pub fn set_bias(&mut self, index: usize, row: usize, value: f64) {
        self.layers[index].biases[row] = value;
    }

    /// Flat (row-major) weight read for layer `index`.
    pub fn weight_at(&self, index: usize, flat: usize) -> f64 {
        self.layers[index].weights[flat]
    }

    pub fn nudge_weight(&mut self, index: usize, flat: usize, delta: f64) {
        self.layers[index].weights[flat] += delta;
    }

    pub fn params_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|w| w.is_finite()) && l.biases.iter().all(|b| b.is_finite())
        })
    }

    fn affine(&self, index: usize, input: &[f64]) -> Vec<f64> {
        let layer = &self.layers[index];
        let fan_in = self.layer_sizes[index];
        let fan_out = self.layer_sizes[index + 1];
        let mut out = layer.biases.clone();
        for (row, o) in out.iter_mut().enumerate().take(fan_out) {
            let weights = &layer.weights[row * fan_in..(row + 1) * fan_in];
            *o += weights.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
        }
        out
    }

    /// Q-values for an encoded state.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, QNetError> {
        if input.len() != self.input_len() {
            return Err(QNetError::DimensionMismatch {
                got: input.len(),
                expected: self.input_len(),
            });
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(QNetError::NonFiniteInput);
        }
        let mut activation = input.to_vec();
        let last = self.layers.len() - 1;
        for index in 0..self.layers.len() {
            activation = self.affine(index, &activation);
            if index != last {
                for v in activation.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
        Ok(activation)
    }

    /// Forward pass keeping every layer's post-activation output for backprop.
    fn forward_trace(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut activations = vec![input.to_vec()];
        let last = self.layers.len() - 1;
        for index in 0..self.layers.len() {
            let mut out = self.affine(index, activations.last().unwrap());
            if index != last {
                for v in out.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            activations.push(out);
        }
        activations
    }

    /// Copy every parameter from `source` (target-network sync). Bitwise.
    pub fn sync_from(&mut self, source: &QNetwork) -> Result<(), QNetError> {
        if self.layer_sizes != source.layer_sizes {
            return Err(QNetError::ArchitectureMismatch(
                self.layer_sizes.clone(),
                source.layer_sizes.clone(),
            ));
        }
        self.layers = source.layers.clone();
        Ok(())
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<(), QNetError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| QNetError::CheckpointFormat(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| QNetError::CheckpointIo(e.to_string()))
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self, QNetError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| QNetError::CheckpointIo(e.to_string()))?;
        let net: QNetwork = serde_json::from_str(&text)
            .map_err(|e| QNetError::CheckpointFormat(e.to_string()))?;
        if net.layer_sizes.len() < 2 || net.layers.len() != net.layer_sizes.len() - 1 {
            return Err(QNetError::CheckpointFormat("layer count mismatch".into()));
        }
        for (i, w) in net.layer_sizes.windows(2).enumerate() {
            if net.layers[i].weights.len() != w[0] * w[1] || net.layers[i].biases.len() != w[1] {
                return Err(QNetError::CheckpointFormat(format!(
                    "layer {i} parameter shape mismatch"
                )));
            }
        }
        Ok(net)
    }
}

/// Multi-step TD errors:
/// delta = R + gamma^(d+1) * max_a Q(next, a; target) - Q(state, action; main),
/// with the bootstrap term dropped on terminal next-states.
pub fn td_error_multistep(
    samples: &[TdSample],
    main: &QNetwork,
    target: &QNetwork,
    discount: f64,
) -> Result<Vec<f64>, QNetError> {
    let mut deltas = Vec::with_capacity(samples.len());
    for s in samples {
        let q_vals = main.forward(&s.state)?;
        let current = q_vals[s.action];
        let bootstrap = if s.terminal {
            0.0
        } else {
            let next_q = target.forward(&s.next_state)?;
            let max_next = next_q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            discount.powi(s.step_count as i32 + 1) * max_next
        };
        deltas.push(s.accum_reward + bootstrap - current);
    }
    Ok(deltas)
}

/// The loss the gradient step minimizes: sum_j w_j * delta_j^2 / (2 * batch).
/// The target branch is treated as a constant.
pub fn weighted_td_loss(
    samples: &[TdSample],
    weights: &[f64],
    main: &QNetwork,
    target: &QNetwork,
    discount: f64,
) -> Result<f64, QNetError> {
    let deltas = td_error_multistep(samples, main, target, discount)?;
    let batch = samples.len() as f64;
    Ok(deltas
        .iter()
        .zip(weights)
        .map(|(d, w)| w * d * d / (2.0 * batch))
        .sum())
}

/// One importance-weighted SGD step on the main network. Gradients flow only
/// through Q(state, action; main); the global gradient norm is clipped.
/// Returns the per-sample TD errors computed before the update.
pub fn train_step(
    main: &mut QNetwork,
    target: &QNetwork,
    samples: &[TdSample],
    weights: &[f64],
    config: &TrainConfig,
) -> Result<Vec<f64>, QNetError> {
    if samples.is_empty() {
        return Err(QNetError::EmptyBatch);
    }
    if weights.len() != samples.len() {
        return Err(QNetError::WeightCountMismatch {
            got: weights.len(),
            expected: samples.len(),
        });
    }
    config.validate()?;
    let deltas = td_error_multistep(samples, main, target, config.discount)?;
    let batch = samples.len() as f64;

    let mut grad_w: Vec<Vec<f64>> = main.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect();
    let mut grad_b: Vec<Vec<f64>> = main.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect();

    for (k, sample) in samples.iter().enumerate() {
        let activations = main.forward_trace(&sample.state);
        let out_len = main.output_len();
        // d loss / d Q(s, a) for the squared TD objective
        let mut upstream = vec![0.0; out_len];
        upstream[sample.action] = -weights[k] * deltas[k] / batch;

        for index in (0..main.layers.len()).rev() {
            let fan_in = main.layer_sizes[index];
            let input = &activations[index];
            let mut downstream = vec![0.0; fan_in];
            for (row, &u) in upstream.iter().enumerate() {
                if u == 0.0 {
                    continue;
                }
                grad_b[index][row] += u;
                let base = row * fan_in;
                for col in 0..fan_in {
                    grad_w[index][base + col] += u * input[col];
                    downstream[col] += u * main.layers[index].weights[base + col];
                }
            }
            if index > 0 {
                // rectifier gate: the stored activation is already max(0, z)
                for (col, d) in downstream.iter_mut().enumerate() {
                    if activations[index][col] <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            upstream = downstream;
        }
    }

    let norm_sq: f64 = grad_w
        .iter()
        .flatten()
        .chain(grad_b.iter().flatten())
        .map(|g| g * g)
        .sum();
    if !norm_sq.is_finite() {
        return Err(QNetError::NonFiniteGradient);
    }
    let norm = norm_sq.sqrt();
    let scale = if norm > GRADIENT_CLIP_NORM {
        GRADIENT_CLIP_NORM / norm
    } else {
        1.0
    };

    for (index, layer) in main.layers.iter_mut().enumerate() {
        for (w, g) in layer.weights.iter_mut().zip(&grad_w[index]) {
            *w -= config.learning_rate * scale * g;
        }
        for (b, g) in layer.biases.iter_mut().zip(&grad_b[index]) {
            *b -= config.learning_rate * scale * g;
        }
    }
    if !main.params_finite() {
        return Err(QNetError::NonFiniteGradient);
    }
    Ok(deltas)
}

/// Epsilon-greedy policy: with probability epsilon a uniform action,
/// otherwise the argmax Q with ties broken toward the lowest index.
pub fn select_action_epsilon_greedy<R: Rng>(
    net: &QNetwork,
    state: &[f64],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize, QNetError> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(QNetError::InvalidEpsilon(epsilon));
    }
    if rng.gen::<f64>() < epsilon {
        return Ok(rng.gen_range(0..net.output_len()));
    }
    let q_vals = net.forward(state)?;
    let mut best = 0usize;
    for (i, &q) in q_vals.iter().enumerate() {
        if q > q_vals[best] {
            best = i;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn sample(state: Vec<f64>, action: usize, reward: f64, next: Vec<f64>) -> TdSample {
        TdSample {
            state,
            action,
            accum_reward: reward,
            next_state: next,
            step_count: 0,
            terminal: false,
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = QNetwork::zeros(&[10, 8, 8]).unwrap();
        let out = net.forward(&vec![0.3; 10]).unwrap();
        assert_eq!(out, vec![0.0; 8]);
    }

    #[test]
    fn forward_is_pure() {
        let net = QNetwork::new(&[10, 16, 8], &mut rng(1)).unwrap();
        let state = vec![0.1; 10];
        assert_eq!(net.forward(&state).unwrap(), net.forward(&state).unwrap());
    }

    #[test]
    fn forward_checks_dimension() {
        let net = QNetwork::zeros(&[10, 4, 8]).unwrap();
        assert_eq!(
            net.forward(&[0.0; 3]),
            Err(QNetError::DimensionMismatch {
                got: 3,
                expected: 10
            })
        );
    }

    #[test]
    fn hand_set_single_unit_composition() {
        // x -> relu(2x + 0.5) -> -3h + 1
        let mut net = QNetwork::zeros(&[1, 1, 1]).unwrap();
        net.set_weight(0, 0, 0, 2.0);
        net.set_bias(0, 0, 0.5);
        net.set_weight(1, 0, 0, -3.0);
        net.set_bias(1, 0, 1.0);
        let out = net.forward(&[0.7]).unwrap();
        assert!((out[0] - (-3.0 * (2.0 * 0.7 + 0.5) + 1.0)).abs() < 1e-15);
        // negative pre-activation clamps to zero
        let out = net.forward(&[-1.0]).unwrap();
        assert_eq!(out[0], 1.0);
    }

    #[test]
    fn one_step_td_reduces_to_single_step_form() {
        let mut m = rng(2);
        let main = QNetwork::new(&[4, 8, 3], &mut m).unwrap();
        let target = QNetwork::new(&[4, 8, 3], &mut m).unwrap();
        let s = sample(vec![0.2, -0.1, 0.4, 0.0], 1, 7.0, vec![0.0, 0.3, -0.2, 0.1]);
        let multi = td_error_multistep(&[s.clone()], &main, &target, 0.9).unwrap()[0];
        let next_q = target.forward(&s.next_state).unwrap();
        let max_next = next_q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let one_step = s.accum_reward + 0.9 * max_next - main.forward(&s.state).unwrap()[1];
        assert_eq!(multi, one_step, "d = 0 must match the one-step form bitwise");
    }

    #[test]
    fn terminal_drops_bootstrap() {
        let main = QNetwork::zeros(&[4, 4, 3]).unwrap();
        let mut target = QNetwork::zeros(&[4, 4, 3]).unwrap();
        target.set_bias(1, 0, 99.0); // would leak in if the bootstrap survived
        let mut s = sample(vec![0.0; 4], 0, 500.0, vec![0.0; 4]);
        s.terminal = true;
        let delta = td_error_multistep(&[s], &main, &target, 0.9).unwrap()[0];
        assert_eq!(delta, 500.0);
    }

    #[test]
    fn multistep_exponent_worked_example() {
        // gamma 0.9, d = 2, R = 10, max target Q = 20, current Q = 5
        let mut main = QNetwork::zeros(&[2, 2, 4]).unwrap();
        main.set_bias(1, 3, 5.0);
        let mut target = QNetwork::zeros(&[2, 2, 4]).unwrap();
        target.set_bias(1, 1, 20.0);
        let s = TdSample {
            state: vec![0.0, 0.0],
            action: 3,
            accum_reward: 10.0,
            next_state: vec![0.0, 0.0],
            step_count: 2,
            terminal: false,
        };
        let delta = td_error_multistep(&[s], &main, &target, 0.9).unwrap()[0];
        assert!((delta - 19.58).abs() < 1e-9);
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let mut main = QNetwork::new(&[3, 6, 2], &mut rng(3)).unwrap();
        let target = main.clone();
        let before = main.clone();
        let s = sample(vec![0.1, 0.2, 0.3], 0, 1.0, vec![0.0, 0.1, 0.2]);
        let config = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let deltas = train_step(&mut main, &target, &[s], &[1.0], &config).unwrap();
        assert_eq!(deltas.len(), 1);
        assert_eq!(
            serde_json::to_string(&main).unwrap(),
            serde_json::to_string(&before).unwrap()
        );
    }

    #[test]
    fn returned_deltas_predate_the_update() {
        let mut main = QNetwork::new(&[3, 6, 2], &mut rng(15)).unwrap();
        let target = QNetwork::new(&[3, 6, 2], &mut rng(16)).unwrap();
        let s = sample(vec![0.4, -0.2, 0.1], 1, 50.0, vec![0.2, 0.0, -0.1]);
        let config = TrainConfig {
            learning_rate: 0.5,
            ..TrainConfig::default()
        };
        let before = td_error_multistep(&[s.clone()], &main, &target, config.discount).unwrap();
        let returned = train_step(&mut main, &target, &[s.clone()], &[1.0], &config).unwrap();
        assert_eq!(before, returned, "deltas must be computed before the step");
        let after = td_error_multistep(&[s], &main, &target, config.discount).unwrap();
        assert_ne!(before, after, "the update must actually move the estimate");
    }

    #[test]
    fn zero_weights_change_nothing() {
        let mut main = QNetwork::new(&[3, 6, 2], &mut rng(4)).unwrap();
        let target = main.clone();
        let before = main.clone();
        let s = sample(vec![0.1, 0.2, 0.3], 1, 5.0, vec![0.3, 0.2, 0.1]);
        let config = TrainConfig::default();
        train_step(&mut main, &target, &[s.clone(), s], &[0.0, 0.0], &config).unwrap();
        assert_eq!(
            serde_json::to_string(&main).unwrap(),
            serde_json::to_string(&before).unwrap()
        );
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut r = rng(5);
        for _ in 0..5 {
            let mut main = QNetwork::new(&[4, 5, 3], &mut r).unwrap();
            let target = QNetwork::new(&[4, 5, 3], &mut r).unwrap();
            let samples: Vec<TdSample> = (0..3)
                .map(|i| {
                    sample(
                        (0..4).map(|_| r.gen_range(-1.0..1.0)).collect(),
                        i % 3,
                        r.gen_range(-5.0..5.0),
                        (0..4).map(|_| r.gen_range(-1.0..1.0)).collect(),
                    )
                })
                .collect();
            let weights = vec![1.0, 0.5, 0.8];
            check_gradients(&mut main, &target, &samples, &weights, 0.9);
        }
    }

    /// Analytic gradient (recovered from a tiny SGD step) vs central
    /// differences of the loss.
    fn check_gradients(
        main: &mut QNetwork,
        target: &QNetwork,
        samples: &[TdSample],
        weights: &[f64],
        discount: f64,
    ) {
        let lr = 1.0;
        let config = TrainConfig {
            learning_rate: lr,
            discount,
            sync_period: 100,
            hidden_width: 5,
        };
        let before = main.clone();
        train_step(main, target, samples, weights, &config).unwrap();
        let step = 1e-5;
        for layer in 0..before.layers.len() {
            for i in 0..before.layers[layer].weights.len() {
                let analytic = (before.layers[layer].weights[i] - main.layers[layer].weights[i]) / lr;
                let mut plus = before.clone();
                plus.layers[layer].weights[i] += step;
                let mut minus = before.clone();
                minus.layers[layer].weights[i] -= step;
                let numeric = (weighted_td_loss(samples, weights, &plus, target, discount).unwrap()
                    - weighted_td_loss(samples, weights, &minus, target, discount).unwrap())
                    / (2.0 * step);
                let denom = analytic.abs().max(numeric.abs()).max(1e-8);
                assert!(
                    (analytic - numeric).abs() / denom < 1e-4,
                    "layer {layer} weight {i}: analytic {analytic} numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn single_sample_output_gradient_is_negative_delta() {
        // with w = 1 and batch 1 the loss gradient at the chosen output
        // equals -delta; verified against finite differences on the bias
        let mut main = QNetwork::new(&[2, 3, 2], &mut rng(6)).unwrap();
        let target = main.clone();
        let s = sample(vec![0.5, -0.5], 1, 3.0, vec![0.1, 0.1]);
        let delta = td_error_multistep(&[s.clone()], &main, &target, 0.9).unwrap()[0];
        let step = 1e-5;
        let mut plus = main.clone();
        plus.layers[1].biases[1] += step;
        let mut minus = main.clone();
        minus.layers[1].biases[1] -= step;
        let numeric = (weighted_td_loss(&[s.clone()], &[1.0], &plus, &target, 0.9).unwrap()
            - weighted_td_loss(&[s.clone()], &[1.0], &minus, &target, 0.9).unwrap())
            / (2.0 * step);
        assert!(
            (numeric - (-delta)).abs() / delta.abs().max(1.0) < 1e-4,
            "bias gradient {numeric} vs -delta {}",
            -delta
        );
        // and the recovered update direction agrees
        let config = TrainConfig {
            learning_rate: 1.0,
            ..TrainConfig::default()
        };
        let before = main.clone();
        train_step(&mut main, &target, &[s], &[1.0], &config).unwrap();
        let analytic = before.layers[1].biases[1] - main.layers[1].biases[1];
        assert!((analytic - numeric).abs() / numeric.abs().max(1e-8) < 1e-4);
    }

    #[test]
    fn sync_copies_and_is_idempotent() {
        let mut r = rng(7);
        let main = QNetwork::new(&[5, 6, 4], &mut r).unwrap();
        let mut target = QNetwork::new(&[5, 6, 4], &mut r).unwrap();
        target.sync_from(&main).unwrap();
        let state: Vec<f64> = (0..5).map(|_| r.gen_range(-1.0..1.0)).collect();
        assert_eq!(
            main.forward(&state).unwrap(),
            target.forward(&state).unwrap()
        );
        let once = serde_json::to_string(&target).unwrap();
        target.sync_from(&main).unwrap();
        assert_eq!(once, serde_json::to_string(&target).unwrap());

        let mut wrong = QNetwork::zeros(&[5, 7, 4]).unwrap();
        assert!(matches!(
            wrong.sync_from(&main),
            Err(QNetError::ArchitectureMismatch(_, _))
        ));
    }

    #[test]
    fn training_leaves_target_untouched() {
        let mut r = rng(8);
        let mut main = QNetwork::new(&[3, 4, 2], &mut r).unwrap();
        let mut target = QNetwork::zeros(&[3, 4, 2]).unwrap();
        target.sync_from(&main).unwrap();
        let frozen = serde_json::to_string(&target).unwrap();
        let s = sample(vec![0.2, 0.1, -0.3], 0, 2.0, vec![0.0, 0.0, 0.1]);
        let config = TrainConfig {
            learning_rate: 0.1,
            ..TrainConfig::default()
        };
        train_step(&mut main, &target, &[s], &[1.0], &config).unwrap();
        assert_ne!(serde_json::to_string(&main).unwrap(), frozen);
        assert_eq!(serde_json::to_string(&target).unwrap(), frozen);
    }

    #[test]
    fn epsilon_zero_is_deterministic_argmax() {
        let mut net = QNetwork::zeros(&[2, 2, 8]).unwrap();
        net.set_bias(1, 5, 3.0);
        let mut r = rng(9);
        for _ in 0..50 {
            let a = select_action_epsilon_greedy(&net, &[0.0, 0.0], 0.0, &mut r).unwrap();
            assert_eq!(a, 5);
        }
    }

    #[test]
    fn argmax_ties_break_low() {
        let net = QNetwork::zeros(&[2, 2, 8]).unwrap();
        let a = select_action_epsilon_greedy(&net, &[0.0, 0.0], 0.0, &mut rng(10)).unwrap();
        assert_eq!(a, 0);
    }

    #[test]
    fn epsilon_one_is_uniform() {
        let net = QNetwork::zeros(&[2, 2, 8]).unwrap();
        let mut counts = [0usize; 8];
        let mut r = rng(26);
        let draws = 100_000;
        for _ in 0..draws {
            counts[select_action_epsilon_greedy(&net, &[0.0, 0.0], 1.0, &mut r).unwrap()] += 1;
        }
        let p = 1.0 / 8.0;
        let expect = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - expect).abs() < 3.0 * sigma,
                "action {i}: {c} vs {expect}"
            );
        }
    }

    #[test]
    fn small_mdp_converges_to_value_iteration_fixed_point() {
        // two states, two actions, deterministic transitions:
        //   s0 --a0--> s0 (r 1)    s0 --a1--> s1 (r 0)
        //   s1 --a0--> s0 (r 0)    s1 --a1--> s1 (r 2)
        let discount = 0.9;
        let transitions = [
            ((0usize, 0usize), (0usize, 1.0f64)),
            ((0, 1), (1, 0.0)),
            ((1, 0), (0, 0.0)),
            ((1, 1), (1, 2.0)),
        ];
        // value iteration oracle
        let mut q_star = [[0.0f64; 2]; 2];
        for _ in 0..2000 {
            let mut next = q_star;
            for &((s, a), (s2, r)) in &transitions {
                let v2 = q_star[s2][0].max(q_star[s2][1]);
                next[s][a] = r + discount * v2;
            }
            q_star = next;
        }
        assert!((q_star[1][1] - 20.0).abs() < 1e-9);

        let encode = |s: usize| -> Vec<f64> {
            let mut v = vec![0.0, 0.0];
            v[s] = 1.0;
            v
        };
        let mut r = rng(12);
        let mut main = QNetwork::new(&[2, 32, 2], &mut r).unwrap();
        let mut target = QNetwork::zeros(&[2, 32, 2]).unwrap();
        target.sync_from(&main).unwrap();
        let config = TrainConfig {
            learning_rate: 5e-3,
            discount,
            sync_period: 25,
            hidden_width: 32,
        };
        let batch: Vec<TdSample> = transitions
            .iter()
            .map(|&((s, a), (s2, r))| TdSample {
                state: encode(s),
                action: a,
                accum_reward: r,
                next_state: encode(s2),
                step_count: 0,
                terminal: false,
            })
            .collect();
        let weights = vec![1.0; batch.len()];
        for iter in 0..30_000u32 {
            train_step(&mut main, &target, &batch, &weights, &config).unwrap();
            if (iter + 1) % config.sync_period == 0 {
                target.sync_from(&main).unwrap();
            }
        }
        for s in 0..2 {
            let q = main.forward(&encode(s)).unwrap();
            for a in 0..2 {
                assert!(
                    (q[a] - q_star[s][a]).abs() < 1e-2,
                    "Q({s},{a}) = {} vs {}",
                    q[a],
                    q_star[s][a]
                );
            }
        }
    }

    #[test]
    fn accumulated_reward_matches_discounted_prefix_exactly() {
        // R built by sequential gamma products equals the replayed fold
        let rewards = [100.0, -100.0, 100.0, 50.0, -20.0];
        let gamma = 0.9;
        let mut accumulated = 0.0;
        let mut pow = 1.0;
        for &r in &rewards {
            accumulated += pow * r;
            pow *= gamma;
        }
        let mut oracle = 0.0;
        let mut oracle_pow = 1.0;
        for &r in &rewards {
            oracle += oracle_pow * r;
            oracle_pow *= gamma;
        }
        assert_eq!(accumulated, oracle);
    }

    #[test]
    fn nan_weights_surface_error_without_update() {
        let mut main = QNetwork::new(&[2, 3, 2], &mut rng(13)).unwrap();
        main.set_weight(0, 0, 0, f64::NAN);
        let target = QNetwork::zeros(&[2, 3, 2]).unwrap();
        let s = sample(vec![1.0, 1.0], 0, 1.0, vec![0.0, 0.0]);
        let err = train_step(
            &mut main,
            &target,
            &[s],
            &[1.0],
            &TrainConfig::default(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        let net = QNetwork::new(&[10, 16, 8], &mut rng(14)).unwrap();
        net.save_checkpoint(&path).unwrap();
        let loaded = QNetwork::load_checkpoint(&path).unwrap();
        let state = vec![0.25; 10];
        assert_eq!(
            net.forward(&state).unwrap(),
            loaded.forward(&state).unwrap()
        );
    }
}
