use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{sigmoid_bce, BatchNorm1d, Conv1d, Dense, Dropout, Layer, MaxPool1d, Param};
use super::{Mode, NnError, Result, Scalar, Tensor};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlockConfig {
    pub filters: usize,
    pub kernel: usize,
    pub pool: usize,
}

/// Architecture hyperparameters. Each conv block is
/// conv -> batch norm -> ELU -> max pool -> dropout; the head is
/// flatten -> dense -> ELU -> dropout -> dense(1) producing a logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input_length: usize,
    pub conv_blocks: Vec<ConvBlockConfig>,
    pub conv_dropout: f64,
    pub dense_units: usize,
    pub dense_dropout: f64,
    pub elu_alpha: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let block = |filters, kernel, pool| ConvBlockConfig { filters, kernel, pool };
        Self {
            input_length: 26_880,
            conv_blocks: vec![block(8, 35, 7), block(128, 175, 7), block(16, 175, 7), block(32, 3, 2)],
            conv_dropout: 0.1,
            dense_units: 64,
            dense_dropout: 0.0,
            elu_alpha: 1.0,
            bn_momentum: 0.9,
            bn_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    /// A few-hundred-parameter variant with the same layer sequence, for
    /// tests and gradient checks. Needs `input_length >= 16`.
    pub fn small(input_length: usize) -> Self {
        let block = |filters, kernel, pool| ConvBlockConfig { filters, kernel, pool };
        Self {
            input_length,
            conv_blocks: vec![block(4, 5, 2), block(6, 5, 2), block(4, 3, 2), block(4, 3, 2)],
            dense_units: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NnError::ConfigInvalid(m));
        if self.conv_blocks.is_empty() {
            return bad("at least one conv block is required".into());
        }
        for (i, b) in self.conv_blocks.iter().enumerate() {
            if b.filters == 0 || b.kernel == 0 || b.pool == 0 {
                return bad(format!("conv block {i} has a zero filters/kernel/pool"));
            }
        }
        if self.dense_units == 0 {
            return bad("dense_units must be positive".into());
        }
        for (name, r) in [("conv_dropout", self.conv_dropout), ("dense_dropout", self.dense_dropout)] {
            if !(0.0..1.0).contains(&r) {
                return bad(format!("{name} must be in [0, 1), got {r}"));
            }
        }
        if !(0.0..1.0).contains(&self.bn_momentum) || self.bn_eps <= 0.0 || self.elu_alpha <= 0.0 {
            return bad("batch norm momentum/eps or ELU alpha out of range".into());
        }
        let mut len = self.input_length;
        for (i, b) in self.conv_blocks.iter().enumerate() {
            if len < b.pool {
                return bad(format!(
                    "input length {} shrinks to {len} before block {i}, below its pool {}",
                    self.input_length, b.pool
                ));
            }
            len /= b.pool;
        }
        Ok(())
    }

    /// Sequence length after each conv block's pooling.
    pub fn block_lengths(&self) -> Vec<usize> {
        let mut len = self.input_length;
        self.conv_blocks
            .iter()
            .map(|b| {
                len /= b.pool;
                len
            })
            .collect()
    }

    pub fn flatten_width(&self) -> usize {
        let last = self.conv_blocks.last().map_or(0, |b| b.filters);
        self.block_lengths().last().copied().unwrap_or(0) * last
    }

    /// Trainable parameter count derived from the configuration alone.
    pub fn parameter_count(&self) -> usize {
        let mut channels = 1;
        let mut total = 0;
        for b in &self.conv_blocks {
            total += b.kernel * channels * b.filters + b.filters + 2 * b.filters;
            channels = b.filters;
        }
        let f = self.flatten_width();
        total + f * self.dense_units + self.dense_units + self.dense_units + 1
    }
}

/// Name and shape of one persisted tensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    config: ModelConfig,
    layers: Vec<Layer<T>>,
    train_logits: Option<Vec<T>>,
}

/// Zero-mean uniform weights with standard deviation `1 / sqrt(fan_in)`.
fn fan_in_uniform<T: Scalar, R: Rng>(rng: &mut R, n: usize, fan_in: usize) -> Vec<T> {
    let limit = (3.0 / fan_in as f64).sqrt();
    (0..n).map(|_| T::of_f64(rng.random_range(-limit..limit))).collect()
}

/// Builds and initializes a model (fan-in scaled uniform weights, zero
/// biases, unit batch-norm scale) from `seed`.
pub fn build_model<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<Model<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    let mut channels = 1;
    for b in &config.conv_blocks {
        let w = fan_in_uniform(&mut rng, b.kernel * channels * b.filters, b.kernel * channels);
        layers.push(Layer::Conv1d(Conv1d::new(b.kernel, channels, b.filters, w)));
        layers.push(Layer::BatchNorm1d(BatchNorm1d::new(b.filters, config.bn_momentum, config.bn_eps)));
        layers.push(Layer::elu(config.elu_alpha));
        layers.push(Layer::MaxPool1d(MaxPool1d::new(b.pool)));
        layers.push(Layer::Dropout(Dropout::new(config.conv_dropout)));
        channels = b.filters;
    }
    let f = config.flatten_width();
    let u = config.dense_units;
    layers.push(Layer::flatten());
    layers.push(Layer::Dense(Dense::new(f, u, fan_in_uniform(&mut rng, f * u, f))));
    layers.push(Layer::elu(config.elu_alpha));
    layers.push(Layer::Dropout(Dropout::new(config.dense_dropout)));
    layers.push(Layer::Dense(Dense::new(u, 1, fan_in_uniform(&mut rng, u, u))));
    Ok(Model { config: config.clone(), layers, train_logits: None })
}

impl<T: Scalar> Model<T> {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (b, l, c) = x.dims3()?;
        if b == 0 || l != self.config.input_length || c != 1 {
            return Err(NnError::ShapeMismatch(format!(
                "model expects [batch >= 1, {}, 1], got {:?}",
                self.config.input_length,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Inference-mode logits; the model is not modified.
    pub fn logits(&self, x: &Tensor<T>) -> Result<Vec<T>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h)?;
            if !h.all_finite() {
                return Err(NnError::NonFiniteActivation { layer: i, kind: layer.kind() });
            }
        }
        Ok(h.into_data())
    }

    /// Inference-mode probabilities for a `[batch, input_length, 1]` tensor.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Vec<T>> {
        let z = self.logits(x)?;
        Ok(z.into_iter().map(|v| T::of_f64(super::sigmoid(v.as_f64()))).collect())
    }

    /// Forward pass returning probabilities. In [`Mode::Train`] dropout is
    /// sampled from `rng`, batch statistics are used and every layer caches
    /// what the following [`Model::backward`] needs.
    pub fn forward<R: Rng + ?Sized>(&mut self, x: &Tensor<T>, mode: Mode, rng: &mut R) -> Result<Vec<T>> {
        if mode == Mode::Eval {
            return self.infer(x);
        }
        self.check_input(x)?;
        self.clear_cache();
        let mut h = x.clone();
        for i in 0..self.layers.len() {
            h = self.layers[i].forward_train(&h, rng)?;
            if !h.all_finite() {
                self.clear_cache();
                return Err(NnError::NonFiniteActivation { layer: i, kind: self.layers[i].kind() });
            }
        }
        let z = h.into_data();
        let p = z.iter().map(|v| T::of_f64(super::sigmoid(v.as_f64()))).collect();
        self.train_logits = Some(z);
        Ok(p)
    }

    /// Back-propagates mean binary cross-entropy against `targets` through
    /// the cached training pass, adding into parameter gradients. Returns
    /// the loss. Consumes the cache.
    pub fn backward(&mut self, targets: &[T]) -> Result<f64> {
        let logits = self.train_logits.take().ok_or(NnError::StaleCache)?;
        if targets.len() != logits.len() {
            self.clear_cache();
            return Err(NnError::ShapeMismatch(format!(
                "{} targets for a batch of {}",
                targets.len(),
                logits.len()
            )));
        }
        let (probs, loss) = sigmoid_bce(&logits, targets)?;
        let b = T::of_f64(logits.len() as f64);
        let grad: Vec<T> = probs.iter().zip(targets).map(|(&p, &t)| (p - t) / b).collect();
        let mut dy = Tensor::new(vec![logits.len(), 1], grad)?;
        for i in (0..self.layers.len()).rev() {
            match self.layers[i].backward(dy, i > 0)? {
                Some(dx) => dy = dx,
                None => break,
            }
        }
        Ok(loss)
    }

    pub(crate) fn take_train_logits(&mut self) -> Option<Vec<T>> {
        self.train_logits.take()
    }

    pub fn clear_cache(&mut self) {
        self.train_logits = None;
        self.layers.iter_mut().for_each(Layer::clear_cache);
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Every persisted tensor (parameters and batch-norm running
    /// statistics) in layer order.
    pub fn state(&self) -> Vec<(TensorSpec, &[T])> {
        let mut out = Vec::new();
        let (mut conv, mut bn, mut dense) = (0, 0, 0);
        let spec = |name: String, shape: &[usize]| TensorSpec { name, shape: shape.to_vec() };
        for layer in &self.layers {
            match layer {
                Layer::Conv1d(l) => {
                    out.push((spec(format!("conv{conv}.weight"), &l.weight.shape), &l.weight.value[..]));
                    out.push((spec(format!("conv{conv}.bias"), &l.bias.shape), &l.bias.value[..]));
                    conv += 1;
                }
                Layer::BatchNorm1d(l) => {
                    let c = [l.channels];
                    out.push((spec(format!("bn{bn}.gamma"), &c), &l.gamma.value[..]));
                    out.push((spec(format!("bn{bn}.beta"), &c), &l.beta.value[..]));
                    out.push((spec(format!("bn{bn}.running_mean"), &c), &l.running_mean[..]));
                    out.push((spec(format!("bn{bn}.running_var"), &c), &l.running_var[..]));
                    bn += 1;
                }
                Layer::Dense(l) => {
                    out.push((spec(format!("dense{dense}.weight"), &l.weight.shape), &l.weight.value[..]));
                    out.push((spec(format!("dense{dense}.bias"), &l.bias.shape), &l.bias.value[..]));
                    dense += 1;
                }
                _ => {}
            }
        }
        out
    }

    /// Mutable buffers in the same order as [`Model::state`].
    pub fn state_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv1d(l) => {
                    out.push(&mut l.weight.value);
                    out.push(&mut l.bias.value);
                }
                Layer::BatchNorm1d(l) => {
                    out.push(&mut l.gamma.value);
                    out.push(&mut l.beta.value);
                    out.push(&mut l.running_mean);
                    out.push(&mut l.running_var);
                }
                Layer::Dense(l) => {
                    out.push(&mut l.weight.value);
                    out.push(&mut l.bias.value);
                }
                _ => {}
            }
        }
        out
    }

    pub fn layout(&self) -> Vec<TensorSpec> {
        self.state().into_iter().map(|(s, _)| s).collect()
    }
}
