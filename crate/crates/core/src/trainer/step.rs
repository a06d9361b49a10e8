use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{BatchEvent, Phase, TaskData};
use crate::augment::{adversarial_loss, fgsm_perturb, AdversarialConfig};
use crate::bench::Sample;
use crate::error::{Error, Result};
use crate::model::{backward, forward, Gradients, Heads, ModelParams};
use crate::numerics::{mae_grad, mae_loss, ConvLayer, Linear, Parameters};
use crate::tsf::{DatasetId, DatasetMeta};

/// Loss and gradients of one sample. With an adversarial config of nonzero
/// weight the FGSM sample is built from the clean input gradient and its
/// loss added with that weight; `x'` is held constant.
pub fn sample_gradients(
    params: &ModelParams,
    sample: &Sample,
    meta: &DatasetMeta,
    adversarial: Option<&AdversarialConfig>,
) -> Result<(f64, Gradients)> {
    let (y_hat, cache) = forward(params, &sample.x, meta)?;
    let mut grads = backward(params, &cache, &mae_grad(&y_hat, &sample.y)?)?;
    match adversarial {
        Some(a) if a.weight > 0.0 => {
            let x_adv = fgsm_perturb(&sample.x, &grads.input, a.epsilon)?;
            let (y_adv, cache_adv) = forward(params, &x_adv, meta)?;
            let loss = adversarial_loss(&sample.y, &y_hat, &y_adv, a.weight)?;
            let g_adv = backward(params, &cache_adv, &mae_grad(&y_adv, &sample.y)?)?;
            grads.accumulate(&g_adv, a.weight)?;
            Ok((loss, grads))
        }
        _ => Ok((mae_loss(&y_hat, &sample.y)?, grads)),
    }
}

/// One SGD step on the mean loss of `batch`; returns that mean loss.
pub fn sgd_batch(
    params: &mut ModelParams,
    batch: &[(&Sample, &DatasetMeta)],
    lr: f64,
    adversarial: Option<&AdversarialConfig>,
) -> Result<f64> {
    if batch.is_empty() {
        return Ok(0.0);
    }
    if let [(s, meta)] = batch {
        let (loss, g) = sample_gradients(params, s, meta, adversarial)?;
        params.apply_gradients(&g, lr)?;
        return Ok(loss);
    }
    let mut encoder: Option<Vec<ConvLayer>> = None;
    let mut heads: BTreeMap<DatasetId, Linear> = BTreeMap::new();
    let mut loss = 0.0;
    for (s, meta) in batch {
        let (l, g) = sample_gradients(params, s, meta, adversarial)?;
        loss += l;
        match &mut encoder {
            Some(e) => e.add_scaled(1.0, &g.encoder)?,
            None => encoder = Some(g.encoder),
        }
        match heads.get_mut(&g.dataset) {
            Some(h) => h.add_scaled(1.0, &g.head)?,
            None => {
                heads.insert(g.dataset, g.head);
            }
        }
    }
    let step = -lr / batch.len() as f64;
    if let Some(e) = encoder {
        params.encoder.add_scaled(step, &e)?;
    }
    for (id, h) in heads {
        params.head_mut(&id)?.add_scaled(step, &h)?;
    }
    Ok(loss / batch.len() as f64)
}

/// One shuffled pass over `task.train`; returns the mean pre-update loss.
#[allow(clippy::too_many_arguments)]
pub fn run_epoch(
    params: &mut ModelParams,
    task: &TaskData,
    lr: f64,
    batch_size: usize,
    adversarial: Option<&AdversarialConfig>,
    phase: Phase,
    rng: &mut impl Rng,
    observer: &mut dyn FnMut(&BatchEvent),
) -> Result<f64> {
    if task.train.is_empty() {
        return Err(Error::Data(format!("dataset `{}` has no training samples", task.id())));
    }
    let mut order: Vec<usize> = (0..task.train.len()).collect();
    order.shuffle(rng);
    let perturbs = adversarial.is_some_and(|a| a.weight > 0.0);
    let mut total = 0.0;
    for chunk in order.chunks(batch_size.max(1)) {
        let samples: Vec<&Sample> = chunk.iter().map(|&k| &task.train[k]).collect();
        observer(&BatchEvent {
            phase,
            samples: &samples,
            adversarial: perturbs,
        });
        let batch: Vec<(&Sample, &DatasetMeta)> = samples.iter().map(|s| (*s, &task.meta)).collect();
        total += sgd_batch(params, &batch, lr, adversarial)? * batch.len() as f64;
    }
    Ok(total / task.train.len() as f64)
}

/// Inner Reptile epoch: plain MAE SGD on `params`, which should hold the
/// encoder copy and the sampled dataset's head.
pub fn inner_epoch(
    params: &mut ModelParams,
    task: &TaskData,
    mu_in: f64,
    batch_size: usize,
    rng: &mut impl Rng,
    observer: &mut dyn FnMut(&BatchEvent),
) -> Result<f64> {
    run_epoch(params, task, mu_in, batch_size, None, Phase::Inner, rng, observer)
}

/// `phi <- phi - mu_out (phi - phi_in)` for the encoder and the head of `dataset`.
pub fn meta_update(params: &mut ModelParams, inner: &ModelParams, dataset: &DatasetId, mu_out: f64) -> Result<()> {
    params.encoder.step_toward(mu_out, &inner.encoder)?;
    let theta_in = inner.head(dataset)?;
    params.head_mut(dataset)?.step_toward(mu_out, theta_in)
}

/// Copies the encoder of `meta`, attaches `head` for the target and trains
/// both for one epoch on the target support. `meta` is not modified.
#[allow(clippy::too_many_arguments)]
pub fn adapt_target(
    meta: &ModelParams,
    target: &TaskData,
    head: Linear,
    adversarial: Option<&AdversarialConfig>,
    mu_ad: f64,
    batch_size: usize,
    rng: &mut impl Rng,
    observer: &mut dyn FnMut(&BatchEvent),
) -> Result<ModelParams> {
    let heads = match &meta.heads {
        Heads::Multi(_) => Heads::Multi(BTreeMap::from([(target.id().clone(), head)])),
        Heads::Shared(_) => Heads::Shared(head),
    };
    let mut adapted = ModelParams {
        config: meta.config.clone(),
        encoder: meta.encoder.clone(),
        heads,
    };
    let expected = adapted.config.head_dims(&target.meta);
    let h = adapted.head(target.id())?;
    if (h.out_dim, h.in_dim) != expected {
        return Err(Error::Shape(format!(
            "target head is {}x{}, expected {}x{}",
            h.out_dim, h.in_dim, expected.0, expected.1
        )));
    }
    run_epoch(&mut adapted, target, mu_ad, batch_size, adversarial, Phase::Adapt, rng, observer)?;
    Ok(adapted)
}
