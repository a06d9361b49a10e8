//! Leave-one-out orchestration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{derive_seed, BenchmarkManifest, DatasetEntry, Method};
use super::metrics::compute_mase;
use super::protocol::{
    auxiliary_task_data, split_validation, target_task_data, truncate_for_etsf, EtsfTask, ValidationSplit,
};
use super::report::EvalReport;
use crate::baselines::baseline_forecast;
use crate::error::{Error, Result};
use crate::trainer::{train_with_observer, BatchEvent, TaskData, TrainConfig};
use crate::tsf::{Dataset, DatasetId, DatasetMeta};

/// Counts of target samples seen in training batches, and of those
/// reaching past the observed prefix or into a validation series.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageAudit {
    pub batches: usize,
    pub target_samples: usize,
    pub violations: usize,
}

/// What happened in one (dataset, method) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub dataset: DatasetId,
    pub method: Method,
    pub seed: u64,
    pub mase: Option<f64>,
    pub excluded: usize,
    pub iterations: usize,
    pub audit: LeakageAudit,
    pub error: Option<String>,
}

/// A dataset prepared as the leave-one-out target.
#[derive(Debug, Clone)]
pub struct PreparedTarget {
    pub task: EtsfTask,
    pub split: ValidationSplit,
    pub data: TaskData,
}

pub fn prepare_target(dataset: &Dataset, entry: Option<&DatasetEntry>, master_seed: u64) -> Result<PreparedTarget> {
    let meta = &dataset.meta;
    let prefix = entry
        .and_then(|e| e.prefix_length)
        .unwrap_or(meta.delta + 2 * meta.horizon);
    let stride = entry.map_or(1, |e| e.window_stride);
    let task = truncate_for_etsf(dataset, prefix)?;
    let split = match entry.and_then(|e| e.validation_series.as_ref()) {
        Some(names) => named_split(&task, names)?,
        None => split_validation(&task, derive_seed(master_seed, &[meta.id.as_str(), "validation"]))?,
    };
    let data = target_task_data(&task, &split, stride)?;
    Ok(PreparedTarget { task, split, data })
}

fn named_split(task: &EtsfTask, names: &[String]) -> Result<ValidationSplit> {
    let mut validation = Vec::with_capacity(names.len());
    for n in names {
        let j = task
            .series_names
            .iter()
            .position(|s| s == n)
            .ok_or_else(|| Error::Config(format!("dataset `{}`: no usable series named `{n}`", task.meta.id)))?;
        if !validation.contains(&j) {
            validation.push(j);
        }
    }
    let want = super::protocol::validation_count(task.len());
    if validation.len() != want {
        return Err(Error::Config(format!(
            "dataset `{}`: {} validation series given, expected {want}",
            task.meta.id,
            validation.len()
        )));
    }
    validation.sort_unstable();
    let train = (0..task.len()).filter(|j| !validation.contains(j)).collect();
    Ok(ValidationSplit { train, validation })
}

/// Loads the manifest's datasets and runs [`leave_one_out`].
pub fn run_manifest(manifest: &BenchmarkManifest) -> Result<EvalReport> {
    manifest.validate()?;
    let datasets = manifest.load_datasets()?;
    leave_one_out(&datasets, &manifest.methods, manifest)
}

/// Every dataset takes one turn as the target; every method is scored on
/// its held-out horizon. Failed cells are recorded, not raised.
pub fn leave_one_out(datasets: &[Dataset], methods: &[Method], manifest: &BenchmarkManifest) -> Result<EvalReport> {
    if datasets.is_empty() || methods.is_empty() {
        return Err(Error::Config("leave-one-out needs datasets and methods".into()));
    }
    let master = manifest.master_seed;
    let mut aux_data = Vec::with_capacity(datasets.len());
    for (i, d) in datasets.iter().enumerate() {
        let stride = manifest.datasets.get(i).map_or(1, |e| e.window_stride);
        aux_data.push(auxiliary_task_data(d, stride)?);
    }
    let targets: Vec<Result<PreparedTarget, String>> = datasets
        .iter()
        .enumerate()
        .map(|(i, d)| prepare_target(d, manifest.datasets.get(i), master).map_err(|e| e.to_string()))
        .collect();

    let cells: Vec<(usize, Method)> = (0..datasets.len())
        .flat_map(|i| methods.iter().map(move |&m| (i, m)))
        .collect();
    let run = |&(i, method): &(usize, Method)| {
        let id = &datasets[i].meta.id;
        let seed = derive_seed(master, &[id.as_str(), method.name()]);
        let aux: Vec<TaskData> = aux_data
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != i)
            .map(|(_, a)| a.clone())
            .collect();
        let outcome = match &targets[i] {
            Ok(t) => run_cell(t, &aux, method, manifest, seed),
            Err(e) => Err(Error::Data(e.clone())),
        };
        match outcome {
            Ok(mut c) => {
                c.seed = seed;
                c
            }
            Err(e) => {
                log::warn!("cell ({id}, {method}) failed: {e}");
                CellResult {
                    dataset: id.clone(),
                    method,
                    seed,
                    mase: None,
                    excluded: 0,
                    iterations: 0,
                    audit: LeakageAudit::default(),
                    error: Some(e.to_string()),
                }
            }
        }
    };
    // The pool only affects scheduling; results are collected in cell order.
    let jobs = manifest.jobs.unwrap_or(1).max(1);
    let results: Vec<CellResult> = if jobs == 1 {
        cells.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| cells.par_iter().map(run).collect())
    };

    Ok(EvalReport {
        manifest_hash: manifest.hash(),
        master_seed: master,
        datasets: datasets.iter().map(|d| d.meta.id.clone()).collect(),
        methods: methods.to_vec(),
        prefix_lengths: targets.iter().map(|t| t.as_ref().ok().map(|t| t.task.prefix_length)).collect(),
        cells: results,
    })
}

/// Trains (if needed) and scores one method on a prepared target.
pub fn run_cell(
    target: &PreparedTarget,
    aux: &[TaskData],
    method: Method,
    manifest: &BenchmarkManifest,
    seed: u64,
) -> Result<CellResult> {
    let task = &target.task;
    let meta = &task.meta;
    let inputs = task.test_inputs();
    let mut audit = LeakageAudit::default();
    let mut iterations = 0;
    let forecasts: Vec<Vec<f64>> = match method {
        Method::Baseline(b) => inputs
            .iter()
            .map(|x| baseline_forecast(b, x, meta.horizon, meta.seasonality).map(|f| f.values))
            .collect::<Result<_>>()?,
        Method::Learned(strategy) => {
            let config = TrainConfig {
                strategy,
                seed,
                ..manifest.train.clone()
            };
            let mut metas: Vec<&DatasetMeta> = aux.iter().map(|a| &a.meta).collect();
            metas.push(meta);
            let model = strategy.model_config(&manifest.model, &metas);
            let prefix = task.prefix_length;
            let validation = &target.split.validation;
            let mut observer = |e: &BatchEvent| {
                audit.batches += 1;
                for s in e.samples.iter().filter(|s| s.dataset == meta.id) {
                    audit.target_samples += 1;
                    if s.end() > prefix || validation.contains(&s.series) {
                        audit.violations += 1;
                    }
                }
            };
            let state = train_with_observer(aux, &target.data, &model, &config, &mut observer)?;
            iterations = state.outer_iter;
            state.forecast(&inputs, meta)?
        }
    };
    if audit.violations > 0 {
        return Err(Error::Data(format!(
            "{} target samples used outside the observed training prefix",
            audit.violations
        )));
    }
    let score = compute_mase(&forecasts, &task.test_targets, &task.observed, meta.seasonality)?;
    Ok(CellResult {
        dataset: meta.id.clone(),
        method,
        seed,
        mase: Some(score.mase),
        excluded: score.excluded,
        iterations,
        audit,
        error: None,
    })
}
