use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{backward, forward, init_params_with, HeadMode, Heads, ModelConfig, ModelParams};
use crate::error::Result;
use crate::numerics::{finite_diff_check, GradCheckOptions, GradCheckReport, ParamBlock};
use crate::tsf::{DatasetId, DatasetMeta, Frequency};

fn write_blocks(base: &ModelParams, id: &DatasetId, blocks: &[Vec<f64>]) -> (ModelParams, Vec<f64>) {
    let mut p = base.clone();
    let mut it = blocks.iter();
    for layer in &mut p.encoder {
        layer.weights.clone_from(it.next().unwrap());
        layer.bias.clone_from(it.next().unwrap());
    }
    let head = p.head_mut(id).expect("head exists");
    head.weights.clone_from(it.next().unwrap());
    head.bias.clone_from(it.next().unwrap());
    (p, it.next().unwrap().clone())
}

/// Finite-difference check of the full model on the objective
/// `sum_t weights[t] * y_hat[t]`, covering every parameter block and the input.
pub fn check_model_gradients(
    params: &ModelParams,
    x: &[f64],
    meta: &DatasetMeta,
    output_weights: &[f64],
    options: GradCheckOptions,
) -> Result<GradCheckReport> {
    let (_, cache) = forward(params, x, meta)?;
    let grads = backward(params, &cache, output_weights)?;
    let pattern = cache.relu_pattern();
    let mut blocks = Vec::new();
    for (l, (layer, g)) in params.encoder.iter().zip(&grads.encoder).enumerate() {
        blocks.push(ParamBlock::new(format!("conv{l}.weights"), layer.weights.clone(), g.weights.clone()));
        blocks.push(ParamBlock::new(format!("conv{l}.bias"), layer.bias.clone(), g.bias.clone()));
    }
    let head = params.head(&meta.id)?;
    blocks.push(ParamBlock::new("head.weights", head.weights.clone(), grads.head.weights.clone()));
    blocks.push(ParamBlock::new("head.bias", head.bias.clone(), grads.head.bias.clone()));
    blocks.push(ParamBlock::new("input", x.to_vec(), grads.input.clone()));

    finite_diff_check(
        |values| {
            let (p, x) = write_blocks(params, &meta.id, values);
            let (y, cache) = forward(&p, &x, meta).ok()?;
            if cache.relu_pattern() != pattern {
                return None;
            }
            Some(y.iter().zip(output_weights).map(|(a, b)| a * b).sum())
        },
        &blocks,
        options,
    )
}

/// One randomized gradient-check case.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheckCase {
    pub layers: usize,
    pub filters: usize,
    pub kernel: usize,
    pub delta: usize,
    pub horizon: usize,
    pub shared_head: bool,
    pub max_rel_error: f64,
    pub checked: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckSuite {
    pub seed: u64,
    pub tolerance: f64,
    pub cases: Vec<GradCheckCase>,
}

impl GradCheckSuite {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.cases.iter().map(|c| c.max_rel_error).fold(0.0, f64::max)
    }
}

/// Random (architecture, input) instances over L in {1,2,3}, d in
/// {1,4,32}, kernel in {1,3,5}, lag in 2..=30, both head modes.
pub fn gradcheck_suite(seed: u64, instances: usize, options: GradCheckOptions) -> Result<GradCheckSuite> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(instances);
    for i in 0..instances {
        let layers = [1, 2, 3][i % 3];
        let filters = [1, 4, 32][(i / 3) % 3];
        let kernel = [1, 3, 5][rng.gen_range(0..3)];
        let delta = rng.gen_range(2..=30);
        let horizon = rng.gen_range(1..=8);
        let shared = i % 4 == 3;
        let meta = DatasetMeta::new(DatasetId::new("probe"), "probe", Frequency::Daily, 2, delta, horizon)?;
        let mut config = ModelConfig {
            layers,
            filters,
            kernel,
            head_mode: HeadMode::MultiHead,
            max_delta: 0,
            max_horizon: 0,
        };
        if shared {
            config.head_mode = HeadMode::SharedHead;
            config.max_delta = delta + rng.gen_range(0..4);
            config.max_horizon = horizon + rng.gen_range(0..4);
        }
        let mut params = init_params_with(&config, &[&meta], &mut rng)?;
        for layer in &mut params.encoder {
            layer.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
        }
        match &mut params.heads {
            Heads::Multi(m) => m.values_mut().for_each(|h| h.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5))),
            Heads::Shared(h) => h.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5)),
        }
        let x: Vec<f64> = (0..delta).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let w: Vec<f64> = (0..horizon).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let report = check_model_gradients(&params, &x, &meta, &w, options)?;
        cases.push(GradCheckCase {
            layers,
            filters,
            kernel,
            delta,
            horizon,
            shared_head: shared,
            max_rel_error: report.max_rel_error(),
            checked: report.checked(),
            passed: report.passed(),
        });
    }
    Ok(GradCheckSuite {
        seed,
        tolerance: options.tolerance,
        cases,
    })
}
