//! Serialized Reptile across auxiliary datasets with per-iteration
//! adversarial adaptation to the target, and the ablation strategies.
//!
//! One outer iteration of `feml`: draw an auxiliary dataset uniformly, run one
//! inner SGD epoch on a copy of the encoder and that dataset's head, move the
//! meta-parameters toward the copy, then adapt a copy of the encoder with a
//! freshly initialised target head for one epoch on the target support using
//! the clean + FGSM loss. Early stopping watches the adapted model's
//! validation MASE.

mod step;
#[cfg(test)]
mod tests;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::AdversarialConfig;
use crate::bench::{compute_mase, Sample};
use crate::error::{Error, Result};
use crate::model::{init_head, init_params_with, predict, HeadMode, Heads, ModelConfig, ModelParams};
use crate::numerics::mae_loss;
use crate::tsf::{DatasetId, DatasetMeta};

pub use step::{adapt_target, inner_epoch, meta_update, run_epoch, sample_gradients, sgd_batch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Feml,
    MReptile,
    SReptile,
    Joint,
    Mtl,
    SingleTask,
    SingleTaskAd,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Feml,
        Strategy::MReptile,
        Strategy::SReptile,
        Strategy::Joint,
        Strategy::Mtl,
        Strategy::SingleTask,
        Strategy::SingleTaskAd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Feml => "feml",
            Strategy::MReptile => "m_reptile",
            Strategy::SReptile => "s_reptile",
            Strategy::Joint => "joint",
            Strategy::Mtl => "mtl",
            Strategy::SingleTask => "single_task",
            Strategy::SingleTaskAd => "single_task_ad",
        }
    }

    /// Reptile-style strategies with a separate adaptation step.
    pub fn is_meta(self) -> bool {
        matches!(self, Strategy::Feml | Strategy::MReptile | Strategy::SReptile)
    }

    pub fn uses_auxiliaries(self) -> bool {
        !matches!(self, Strategy::SingleTask | Strategy::SingleTaskAd)
    }

    pub fn uses_adversarial(self) -> bool {
        matches!(self, Strategy::Feml | Strategy::SingleTaskAd)
    }

    /// A model config this strategy accepts, derived from `base`.
    pub fn model_config(self, base: &ModelConfig, metas: &[&DatasetMeta]) -> ModelConfig {
        let mut c = base.clone();
        match self {
            Strategy::SReptile | Strategy::Joint => return c.shared_for(metas),
            Strategy::SingleTask | Strategy::SingleTaskAd => c.layers = 0,
            _ => {}
        }
        c.head_mode = HeadMode::MultiHead;
        c
    }

    pub fn check_model(self, config: &ModelConfig) -> Result<()> {
        let want_shared = matches!(self, Strategy::SReptile | Strategy::Joint);
        let shared = config.head_mode == HeadMode::SharedHead;
        if want_shared != shared {
            return Err(Error::Config(format!(
                "strategy {self} requires a {} model",
                if want_shared { "shared-head" } else { "multi-head" }
            )));
        }
        let single = !self.uses_auxiliaries();
        if single != (config.layers == 0) {
            return Err(Error::Config(format!(
                "strategy {self} requires {}",
                if single { "layers = 0" } else { "at least one encoder layer" }
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mu_in: f64,
    pub mu_out: f64,
    pub mu_ad: f64,
    pub adversarial: AdversarialConfig,
    pub strategy: Strategy,
    pub max_outer_iters: usize,
    /// Outer iterations without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub mtl_target_weight: f64,
    /// Keep the target head across adaptations instead of re-initialising it.
    pub persist_target_head: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mu_in: 0.01,
            mu_out: 0.5,
            mu_ad: 0.003,
            adversarial: AdversarialConfig::default(),
            strategy: Strategy::Feml,
            max_outer_iters: 500,
            patience: 25,
            batch_size: 1,
            seed: 0,
            mtl_target_weight: 0.5,
            persist_target_head: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mu_in", self.mu_in), ("mu_out", self.mu_out), ("mu_ad", self.mu_ad)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        self.adversarial.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.mtl_target_weight > 0.0 && self.mtl_target_weight <= 1.0) {
            return Err(Error::Config(format!(
                "mtl_target_weight must lie in (0, 1], got {}",
                self.mtl_target_weight
            )));
        }
        Ok(())
    }

    /// Adversarial settings actually applied during adaptation.
    pub fn effective_adversarial(&self) -> Option<AdversarialConfig> {
        self.strategy.uses_adversarial().then_some(self.adversarial)
    }
}

/// Last window of a validation series' prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationWindow {
    pub series: usize,
    pub input: Vec<f64>,
    pub target: Vec<f64>,
    /// Observed values before `target`, for the naive denominator.
    pub prefix: Vec<f64>,
}

/// Samples of one dataset as the trainer sees them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskData {
    pub meta: DatasetMeta,
    pub train: Vec<Sample>,
    pub validation: Vec<ValidationWindow>,
}

impl TaskData {
    pub fn new(meta: DatasetMeta, train: Vec<Sample>, validation: Vec<ValidationWindow>) -> Result<Self> {
        let (d, h) = (meta.delta, meta.horizon);
        for s in &train {
            if s.dataset != meta.id {
                return Err(Error::Data(format!("sample of `{}` filed under `{}`", s.dataset, meta.id)));
            }
            if s.x.len() != d || s.y.len() != h {
                return Err(Error::Shape(format!(
                    "`{}` sample has {}/{} values, expected {d}/{h}",
                    meta.id,
                    s.x.len(),
                    s.y.len()
                )));
            }
        }
        for v in &validation {
            if v.input.len() != d || v.target.len() != h || v.prefix.is_empty() {
                return Err(Error::Shape(format!("`{}` validation window has the wrong shape", meta.id)));
            }
        }
        Ok(Self { meta, train, validation })
    }

    pub fn id(&self) -> &DatasetId {
        &self.meta.id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Inner Reptile epoch on an auxiliary dataset.
    Inner,
    /// Target adaptation (or single-task training).
    Adapt,
    /// Pooled SGD of the joint and multi-task strategies.
    Pooled,
}

/// One SGD batch, reported to observers before the update.
#[derive(Debug, Clone, Copy)]
pub struct BatchEvent<'a> {
    pub phase: Phase,
    pub samples: &'a [&'a Sample],
    /// FGSM samples are generated from this batch.
    pub adversarial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: usize,
    pub task: String,
    pub inner_loss: f64,
    pub val_mase: Option<f64>,
}

pub fn write_log_csv<W: Write>(rows: &[LogRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub strategy: Strategy,
    pub target: DatasetId,
    /// Meta (or directly trained) parameters.
    pub params: ModelParams,
    /// Result of the most recent adaptation.
    pub adapted: Option<ModelParams>,
    /// Adapted parameters with the best validation score so far.
    pub best: Option<ModelParams>,
    pub best_score: Option<f64>,
    pub best_iter: Option<usize>,
    pub outer_iter: usize,
    pub rng: ChaCha8Rng,
    pub log: Vec<LogRow>,
}

impl TrainState {
    /// Parameters used for forecasting the target.
    pub fn predictor(&self) -> &ModelParams {
        self.best.as_ref().or(self.adapted.as_ref()).unwrap_or(&self.params)
    }

    pub fn forecast(&self, inputs: &[Vec<f64>], meta: &DatasetMeta) -> Result<Vec<Vec<f64>>> {
        let p = self.predictor();
        inputs.iter().map(|x| predict(p, x, meta)).collect()
    }
}

/// Validation MASE of `params` on the target, or validation MAE when every
/// naive denominator is zero. `None` without validation windows.
pub fn validation_score(params: &ModelParams, task: &TaskData) -> Result<Option<f64>> {
    if task.validation.is_empty() {
        return Ok(None);
    }
    let mut forecasts = Vec::with_capacity(task.validation.len());
    let mut targets = Vec::with_capacity(task.validation.len());
    let mut prefixes = Vec::with_capacity(task.validation.len());
    for v in &task.validation {
        forecasts.push(predict(params, &v.input, &task.meta)?);
        targets.push(v.target.clone());
        prefixes.push(v.prefix.clone());
    }
    match compute_mase(&forecasts, &targets, &prefixes, task.meta.seasonality) {
        Ok(score) => Ok(Some(score.mase)),
        Err(Error::Data(_)) => {
            let mut total = 0.0;
            for (f, y) in forecasts.iter().zip(&targets) {
                total += mae_loss(f, y)?;
            }
            Ok(Some(total / forecasts.len() as f64))
        }
        Err(e) => Err(e),
    }
}

pub fn train(aux: &[TaskData], target: &TaskData, model: &ModelConfig, config: &TrainConfig) -> Result<TrainState> {
    train_with_observer(aux, target, model, config, &mut |_| {})
}

/// As [`train`], calling `observer` before every SGD batch.
pub fn train_with_observer(
    aux: &[TaskData],
    target: &TaskData,
    model: &ModelConfig,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&BatchEvent),
) -> Result<TrainState> {
    let mut trainer = Trainer::new(aux, target, model, config)?;
    while trainer.step(observer)? {}
    Ok(trainer.into_state())
}

/// A training run advanced one outer iteration at a time.
#[derive(Debug, Clone)]
pub struct Trainer<'a> {
    aux: &'a [TaskData],
    target: &'a TaskData,
    config: TrainConfig,
    adversarial: Option<AdversarialConfig>,
    since_best: usize,
    stopped: bool,
    state: TrainState,
}

impl<'a> Trainer<'a> {
    pub fn new(aux: &'a [TaskData], target: &'a TaskData, model: &ModelConfig, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        model.validate()?;
        let strategy = config.strategy;
        strategy.check_model(model)?;
        if target.train.is_empty() {
            return Err(Error::Data(format!("target `{}` has no support samples", target.id())));
        }
        let aux: &[TaskData] = if strategy.uses_auxiliaries() { aux } else { &[] };
        if strategy.uses_auxiliaries() && aux.is_empty() {
            return Err(Error::Data(format!("strategy {strategy} needs at least one auxiliary dataset")));
        }
        for (i, a) in aux.iter().enumerate() {
            if a.id() == target.id() || aux[..i].iter().any(|b| b.id() == a.id()) {
                return Err(Error::Data(format!("dataset `{}` appears twice", a.id())));
            }
            if a.train.is_empty() && strategy.is_meta() {
                return Err(Error::Data(format!("auxiliary `{}` has no training samples", a.id())));
            }
        }

        let mut metas: Vec<&DatasetMeta> = aux.iter().map(|a| &a.meta).collect();
        metas.push(&target.meta);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = init_params_with(model, &metas, &mut rng)?;
        Ok(Self {
            aux,
            target,
            config: config.clone(),
            adversarial: config.effective_adversarial(),
            since_best: 0,
            stopped: false,
            state: TrainState {
                strategy,
                target: target.id().clone(),
                params,
                adapted: None,
                best: None,
                best_score: None,
                best_iter: None,
                outer_iter: 0,
                rng,
                log: Vec::new(),
            },
        })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }

    pub fn finished(&self) -> bool {
        self.stopped || self.state.outer_iter >= self.config.max_outer_iters
    }

    /// Runs one outer iteration. Returns `false` once the iteration cap or
    /// the patience is exhausted.
    pub fn step(&mut self, observer: &mut dyn FnMut(&BatchEvent)) -> Result<bool> {
        if self.finished() {
            return Ok(false);
        }
        let (aux, target, config) = (self.aux, self.target, &self.config);
        let state = &mut self.state;
        let (task, loss, adapted) = match config.strategy {
            Strategy::Feml | Strategy::MReptile | Strategy::SReptile => {
                meta_iteration(state, aux, target, config, self.adversarial, observer)?
            }
            Strategy::Joint => {
                let loss = joint_epoch(state, aux, target, config, observer)?;
                ("joint".to_string(), loss, state.params.clone())
            }
            Strategy::Mtl => {
                let loss = mtl_iteration(state, aux, target, config, observer)?;
                ("mtl".to_string(), loss, state.params.restricted_to(target.id())?)
            }
            Strategy::SingleTask | Strategy::SingleTaskAd => {
                let loss = run_epoch(
                    &mut state.params,
                    target,
                    config.mu_ad,
                    config.batch_size,
                    self.adversarial.as_ref(),
                    Phase::Adapt,
                    &mut state.rng,
                    observer,
                )?;
                (target.id().to_string(), loss, state.params.clone())
            }
        };
        let score = validation_score(&adapted, target)?;
        state.outer_iter += 1;
        let it = state.outer_iter;
        state.log.push(LogRow {
            iteration: it,
            task,
            inner_loss: loss,
            val_mase: score,
        });
        if let Some(s) = score {
            if state.best_score.map_or(true, |b| s < b) {
                state.best_score = Some(s);
                state.best_iter = Some(it);
                state.best = Some(adapted.clone());
                self.since_best = 0;
            } else {
                self.since_best += 1;
            }
        }
        state.adapted = Some(adapted);
        if config.patience > 0 && self.since_best >= config.patience {
            log::debug!("early stop after {it} iterations");
            self.stopped = true;
        }
        Ok(!self.finished())
    }
}

fn meta_iteration(
    state: &mut TrainState,
    aux: &[TaskData],
    target: &TaskData,
    config: &TrainConfig,
    adversarial: Option<AdversarialConfig>,
    observer: &mut dyn FnMut(&BatchEvent),
) -> Result<(String, f64, ModelParams)> {
    let i = state.rng.gen_range(0..aux.len());
    let task = &aux[i];
    let mut inner = state.params.restricted_to(task.id())?;
    let loss = inner_epoch(&mut inner, task, config.mu_in, config.batch_size, &mut state.rng, observer)?;
    meta_update(&mut state.params, &inner, task.id(), config.mu_out)?;

    let head = match &state.params.heads {
        Heads::Shared(h) => h.clone(),
        Heads::Multi(_) if config.persist_target_head => state.params.head(target.id())?.clone(),
        Heads::Multi(_) => init_head(&state.params.config, &target.meta, &mut state.rng)?,
    };
    let adapted = adapt_target(
        &state.params,
        target,
        head,
        adversarial.as_ref(),
        config.mu_ad,
        config.batch_size,
        &mut state.rng,
        observer,
    )?;
    if config.persist_target_head {
        if let Heads::Multi(_) = state.params.heads {
            state.params.set_head(target.id().clone(), adapted.head(target.id())?.clone());
        }
    }
    Ok((task.id().to_string(), loss, adapted))
}

fn joint_epoch(
    state: &mut TrainState,
    aux: &[TaskData],
    target: &TaskData,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&BatchEvent),
) -> Result<f64> {
    let mut pool: Vec<(&Sample, &DatasetMeta)> = Vec::new();
    for t in aux.iter().chain(std::iter::once(target)) {
        pool.extend(t.train.iter().map(|s| (s, &t.meta)));
    }
    pool.shuffle(&mut state.rng);
    pooled_sgd(state, &pool, config, observer)
}

fn mtl_iteration(
    state: &mut TrainState,
    aux: &[TaskData],
    target: &TaskData,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&BatchEvent),
) -> Result<f64> {
    // Tasks are drawn with probability equal to their loss weight, so the
    // expected step follows the weighted sum of per-task losses.
    let live: Vec<&TaskData> = aux.iter().filter(|a| !a.train.is_empty()).collect();
    let steps = (target.train.len() as f64 / config.mtl_target_weight).ceil() as usize;
    let mut draws = Vec::with_capacity(steps);
    for _ in 0..steps {
        let task = if live.is_empty() || state.rng.gen::<f64>() < config.mtl_target_weight {
            target
        } else {
            live[state.rng.gen_range(0..live.len())]
        };
        let s = &task.train[state.rng.gen_range(0..task.train.len())];
        draws.push((s, &task.meta));
    }
    pooled_sgd(state, &draws, config, observer)
}

fn pooled_sgd(
    state: &mut TrainState,
    pool: &[(&Sample, &DatasetMeta)],
    config: &TrainConfig,
    observer: &mut dyn FnMut(&BatchEvent),
) -> Result<f64> {
    let mut total = 0.0;
    for batch in pool.chunks(config.batch_size) {
        let samples: Vec<&Sample> = batch.iter().map(|(s, _)| *s).collect();
        observer(&BatchEvent {
            phase: Phase::Pooled,
            samples: &samples,
            adversarial: false,
        });
        total += sgd_batch(&mut state.params, batch, config.mu_in, None)? * batch.len() as f64;
    }
    Ok(total / pool.len().max(1) as f64)
}
