//! The forecasting network: a shared 1-D convolutional encoder feeding
//! per-dataset linear heads, with NLinear-style anchoring on the last
//! observed input value.
//!
//! The input window is shifted by its last value `a`, encoded by `L`
//! convolution layers (ReLU between layers, none after the last), flattened
//! channel-major, mapped by the dataset's head, and shifted back by `a`.
//!
//! In shared-head mode a single head serves every dataset: features are
//! zero-padded in time to `max_delta` and only the first `h` outputs of the
//! `max_horizon`-wide head are used.

mod checkpoint;
mod gradcheck;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::numerics::{relu_backward, relu_forward, ConvLayer, Linear, Parameters, Tensor2};
use crate::tsf::{DatasetId, DatasetMeta};

pub use checkpoint::{config_hash, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use gradcheck::{check_model_gradients, gradcheck_suite, GradCheckCase, GradCheckSuite};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    MultiHead,
    SharedHead,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Encoder depth. Zero bypasses the encoder so the head reads the
    /// anchored window directly (plain NLinear).
    pub layers: usize,
    /// Filters per convolution layer.
    pub filters: usize,
    pub kernel: usize,
    pub head_mode: HeadMode,
    /// Shared-head input length in timesteps.
    pub max_delta: usize,
    /// Shared-head output width.
    pub max_horizon: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            filters: 32,
            kernel: 3,
            head_mode: HeadMode::MultiHead,
            max_delta: 0,
            max_horizon: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.filters == 0 {
            return Err(Error::Config("filters must be at least 1".into()));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Config(format!("kernel must be odd, got {}", self.kernel)));
        }
        if self.head_mode == HeadMode::SharedHead && (self.max_delta == 0 || self.max_horizon == 0) {
            return Err(Error::Config("shared head needs positive max_delta and max_horizon".into()));
        }
        Ok(())
    }

    /// Channels of the encoder output.
    pub fn feature_channels(&self) -> usize {
        if self.layers == 0 {
            1
        } else {
            self.filters
        }
    }

    /// Sizes the shared head to cover every dataset in `metas`.
    pub fn shared_for(mut self, metas: &[&DatasetMeta]) -> Self {
        self.head_mode = HeadMode::SharedHead;
        self.max_delta = metas.iter().map(|m| m.delta).max().unwrap_or(0);
        self.max_horizon = metas.iter().map(|m| m.horizon).max().unwrap_or(0);
        self
    }

    pub fn head_dims(&self, meta: &DatasetMeta) -> (usize, usize) {
        match self.head_mode {
            HeadMode::MultiHead => (meta.horizon, self.feature_channels() * meta.delta),
            HeadMode::SharedHead => (self.max_horizon, self.feature_channels() * self.max_delta),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heads {
    Multi(BTreeMap<DatasetId, Linear>),
    Shared(Linear),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub encoder: Vec<ConvLayer>,
    pub heads: Heads,
}

/// Encoder blocks first, then heads in id order.
impl Parameters for ModelParams {
    fn blocks(&self) -> Vec<&[f64]> {
        let mut out = self.encoder.blocks();
        match &self.heads {
            Heads::Multi(map) => out.extend(map.values().flat_map(|h| h.blocks())),
            Heads::Shared(h) => out.extend(h.blocks()),
        }
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder.blocks_mut();
        match &mut self.heads {
            Heads::Multi(map) => out.extend(map.values_mut().flat_map(|h| h.blocks_mut())),
            Heads::Shared(h) => out.extend(h.blocks_mut()),
        }
        out
    }
}

fn uniform_fill(rng: &mut impl Rng, values: &mut [f64], fan_in: usize) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    for v in values {
        *v = rng.gen_range(-bound..bound);
    }
}

/// Fresh encoder: weights uniform in `±1/sqrt(fan_in)`, zero biases.
pub fn init_encoder(config: &ModelConfig, rng: &mut impl Rng) -> Result<Vec<ConvLayer>> {
    (0..config.layers)
        .map(|l| {
            let in_ch = if l == 0 { 1 } else { config.filters };
            let mut layer = ConvLayer::zeros(config.filters, in_ch, config.kernel)?;
            uniform_fill(rng, &mut layer.weights, in_ch * config.kernel);
            Ok(layer)
        })
        .collect()
}

/// Fresh head sized for `meta` (or the shared geometry).
pub fn init_head(config: &ModelConfig, meta: &DatasetMeta, rng: &mut impl Rng) -> Result<Linear> {
    let (out_dim, in_dim) = config.head_dims(meta);
    let mut head = Linear::zeros(out_dim, in_dim)?;
    uniform_fill(rng, &mut head.weights, in_dim);
    Ok(head)
}

/// Initialises the encoder and one head per dataset (a single head in
/// shared mode), deterministically from `seed`.
pub fn init_params(config: &ModelConfig, metas: &[&DatasetMeta], seed: u64) -> Result<ModelParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_params_with(config, metas, &mut rng)
}

pub fn init_params_with(config: &ModelConfig, metas: &[&DatasetMeta], rng: &mut impl Rng) -> Result<ModelParams> {
    config.validate()?;
    if metas.is_empty() {
        return Err(Error::Config("at least one dataset is required".into()));
    }
    let encoder = init_encoder(config, rng)?;
    let heads = match config.head_mode {
        HeadMode::MultiHead => {
            let mut map = BTreeMap::new();
            for m in metas {
                map.insert(m.id.clone(), init_head(config, m, rng)?);
            }
            Heads::Multi(map)
        }
        HeadMode::SharedHead => {
            for m in metas {
                check_fits_shared(config, m)?;
            }
            Heads::Shared(init_head(config, metas[0], rng)?)
        }
    };
    Ok(ModelParams {
        config: config.clone(),
        encoder,
        heads,
    })
}

fn check_fits_shared(config: &ModelConfig, meta: &DatasetMeta) -> Result<()> {
    if meta.delta > config.max_delta || meta.horizon > config.max_horizon {
        return Err(Error::Config(format!(
            "dataset `{}` (lag {}, horizon {}) exceeds the shared head ({} -> {})",
            meta.id, meta.delta, meta.horizon, config.max_delta, config.max_horizon
        )));
    }
    Ok(())
}

impl ModelParams {
    pub fn head(&self, id: &DatasetId) -> Result<&Linear> {
        match &self.heads {
            Heads::Multi(map) => map.get(id).ok_or_else(|| Error::UnknownDataset(id.to_string())),
            Heads::Shared(h) => Ok(h),
        }
    }

    pub fn head_mut(&mut self, id: &DatasetId) -> Result<&mut Linear> {
        match &mut self.heads {
            Heads::Multi(map) => map.get_mut(id).ok_or_else(|| Error::UnknownDataset(id.to_string())),
            Heads::Shared(h) => Ok(h),
        }
    }

    /// Inserts or replaces a dataset head (multi-head), or the shared head.
    pub fn set_head(&mut self, id: DatasetId, head: Linear) {
        match &mut self.heads {
            Heads::Multi(map) => {
                map.insert(id, head);
            }
            Heads::Shared(h) => *h = head,
        }
    }

    /// Parameters restricted to the encoder and one head.
    pub fn restricted_to(&self, id: &DatasetId) -> Result<ModelParams> {
        let heads = match &self.heads {
            Heads::Multi(_) => Heads::Multi(BTreeMap::from([(id.clone(), self.head(id)?.clone())])),
            Heads::Shared(h) => Heads::Shared(h.clone()),
        };
        Ok(ModelParams {
            config: self.config.clone(),
            encoder: self.encoder.clone(),
            heads,
        })
    }

    /// Plain SGD step: encoder and the gradient's head move by `-lr * grad`.
    pub fn apply_gradients(&mut self, grads: &Gradients, lr: f64) -> Result<()> {
        self.encoder.add_scaled(-lr, &grads.encoder)?;
        self.head_mut(&grads.dataset)?.add_scaled(-lr, &grads.head)
    }
}

/// Intermediate values needed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub dataset: DatasetId,
    pub delta: usize,
    pub horizon: usize,
    pub anchor: f64,
    /// Input to each conv layer.
    layer_inputs: Vec<Tensor2>,
    /// Output of each conv layer before the activation.
    pre_activations: Vec<Tensor2>,
    /// Flattened (and, in shared mode, padded) encoder output.
    features: Vec<f64>,
}

impl ForwardCache {
    /// Sign pattern of every ReLU input; changes when a perturbation crosses a kink.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let n = self.pre_activations.len();
        self.pre_activations
            .iter()
            .take(n.saturating_sub(1))
            .flat_map(|p| p.data.iter().map(|v| *v > 0.0))
            .collect()
    }

    /// Smallest |pre-activation| feeding a ReLU.
    pub fn min_relu_margin(&self) -> f64 {
        let n = self.pre_activations.len();
        self.pre_activations
            .iter()
            .take(n.saturating_sub(1))
            .flat_map(|p| p.data.iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }
}

/// Gradients of one forward/backward pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub dataset: DatasetId,
    pub encoder: Vec<ConvLayer>,
    pub head: Linear,
    /// Gradient with respect to the raw input window.
    pub input: Vec<f64>,
}

impl Gradients {
    /// `self += scale * other` over parameters and input.
    pub fn accumulate(&mut self, other: &Gradients, scale: f64) -> Result<()> {
        if self.dataset != other.dataset {
            return Err(shape("accumulating gradients of different datasets"));
        }
        self.encoder.add_scaled(scale, &other.encoder)?;
        self.head.add_scaled(scale, &other.head)?;
        if self.input.len() == other.input.len() {
            for (a, b) in self.input.iter_mut().zip(&other.input) {
                *a += scale * b;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.encoder.scale(factor);
        self.head.scale(factor);
        for v in &mut self.input {
            *v *= factor;
        }
    }
}

pub fn forward(params: &ModelParams, x: &[f64], meta: &DatasetMeta) -> Result<(Vec<f64>, ForwardCache)> {
    let config = &params.config;
    if x.len() != meta.delta {
        return Err(shape(format!(
            "dataset `{}` expects windows of {} values, got {}",
            meta.id,
            meta.delta,
            x.len()
        )));
    }
    if config.head_mode == HeadMode::SharedHead {
        check_fits_shared(config, meta)?;
    }
    let head = params.head(&meta.id)?;
    let anchor = x[meta.delta - 1];
    let mut z = Tensor2::row(&x.iter().map(|v| v - anchor).collect::<Vec<_>>());
    let depth = params.encoder.len();
    let mut layer_inputs = Vec::with_capacity(depth);
    let mut pre_activations = Vec::with_capacity(depth);
    for (l, layer) in params.encoder.iter().enumerate() {
        let pre = layer.forward(&z)?;
        layer_inputs.push(z);
        z = if l + 1 < depth {
            Tensor2 {
                data: relu_forward(&pre.data),
                ..pre.clone()
            }
        } else {
            pre.clone()
        };
        pre_activations.push(pre);
    }
    let features = match config.head_mode {
        HeadMode::MultiHead => z.data,
        HeadMode::SharedHead => {
            let width = config.max_delta;
            let mut padded = vec![0.0; z.channels * width];
            for c in 0..z.channels {
                padded[c * width..c * width + z.length].copy_from_slice(z.channel(c));
            }
            padded
        }
    };
    if features.len() != head.in_dim {
        return Err(shape(format!(
            "head for `{}` expects {} features, encoder produced {}",
            meta.id,
            head.in_dim,
            features.len()
        )));
    }
    let out = head.forward(&features)?;
    if out.len() < meta.horizon {
        return Err(shape(format!("head for `{}` is narrower than its horizon", meta.id)));
    }
    let y = out[..meta.horizon].iter().map(|v| v + anchor).collect();
    Ok((
        y,
        ForwardCache {
            dataset: meta.id.clone(),
            delta: meta.delta,
            horizon: meta.horizon,
            anchor,
            layer_inputs,
            pre_activations,
            features,
        },
    ))
}

pub fn predict(params: &ModelParams, x: &[f64], meta: &DatasetMeta) -> Result<Vec<f64>> {
    forward(params, x, meta).map(|(y, _)| y)
}

pub fn backward(params: &ModelParams, cache: &ForwardCache, grad_y: &[f64]) -> Result<Gradients> {
    if grad_y.len() != cache.horizon {
        return Err(shape(format!("expected {} output gradients, got {}", cache.horizon, grad_y.len())));
    }
    if cache.layer_inputs.len() != params.encoder.len() {
        return Err(shape("stale cache: encoder depth changed"));
    }
    let head = params.head(&cache.dataset)?;
    if head.in_dim != cache.features.len() {
        return Err(shape(format!("stale cache for dataset `{}`", cache.dataset)));
    }
    let mut grad_out = grad_y.to_vec();
    grad_out.resize(head.out_dim, 0.0);
    let (grad_features, grad_head) = head.backward(&cache.features, &grad_out)?;

    let channels = params.config.feature_channels();
    let delta = cache.delta;
    let stride = grad_features.len() / channels;
    let mut g = Tensor2::zeros(channels, delta);
    for c in 0..channels {
        g.data[c * delta..(c + 1) * delta].copy_from_slice(&grad_features[c * stride..c * stride + delta]);
    }

    let depth = params.encoder.len();
    let mut grad_encoder = vec![None; depth];
    for l in (0..depth).rev() {
        let g_pre = if l + 1 < depth {
            Tensor2 {
                data: relu_backward(&cache.pre_activations[l].data, &g.data)?,
                ..g
            }
        } else {
            g
        };
        let (g_in, g_layer) = params.encoder[l].backward(&cache.layer_inputs[l], &g_pre)?;
        grad_encoder[l] = Some(g_layer);
        g = g_in;
    }

    // x enters as (x - a) and the output adds a back, with a = x[last].
    let mut grad_x = g.data;
    let through_shift: f64 = grad_x.iter().sum();
    let restored: f64 = grad_y.iter().sum();
    grad_x[delta - 1] += restored - through_shift;

    Ok(Gradients {
        dataset: cache.dataset.clone(),
        encoder: grad_encoder.into_iter().map(|l| l.expect("filled")).collect(),
        head: grad_head,
        input: grad_x,
    })
}
