use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context};
use feml::bench::{
    auxiliary_task_data, compute_mase, derive_seed, gen_synthetic, leave_one_out, prepare_target, BenchmarkManifest,
    Family, Method, SyntheticSpec,
};
use feml::model::{gradcheck_suite, save_checkpoint};
use feml::numerics::GradCheckOptions;
use feml::trainer::{train, write_log_csv, Strategy, TaskData, TrainConfig};
use feml::tsf::{read_tsf, write_tsf, DatasetMeta, Frequency};
use serde_json::json;

use crate::args::{Cli, Command, FamilyArg, TrainOverrides};

/// Exit status classes: bad input (1) or a failure while computing (2).
pub enum Failure {
    Invalid(anyhow::Error),
    Runtime(anyhow::Error),
}

fn invalid(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Invalid(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

type Outcome = Result<(), Failure>;

pub fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Inspect { file, json } => inspect(&file, json),
        Command::Gradcheck {
            seed,
            instances,
            tolerance,
        } => gradcheck(seed, instances, tolerance),
        Command::Train {
            strategy,
            target,
            manifest,
            out,
            overrides,
        } => train_cmd(&strategy, &target, &manifest, &out, &overrides),
        Command::Bench {
            manifest,
            out,
            jobs,
            methods,
            overrides,
        } => bench(&manifest, &out, jobs, methods, &overrides),
        Command::Synth {
            family,
            out,
            id,
            series,
            length,
            delta,
            horizon,
            seed,
            period,
            amplitude,
            level,
            slope,
            coefficient,
            noise,
        } => {
            let family = match family {
                FamilyArg::Sin => Family::Sinusoid {
                    period,
                    amplitude,
                    level,
                    noise: noise.unwrap_or(0.0),
                },
                FamilyArg::Trend => Family::Trend {
                    slope,
                    noise: noise.unwrap_or(0.0),
                },
                FamilyArg::Ar1 => Family::Ar1 {
                    coefficient,
                    noise: noise.unwrap_or(1.0),
                },
            };
            let spec = SyntheticSpec {
                id,
                family,
                series,
                length,
                delta,
                horizon,
                frequency: Frequency::Daily,
            };
            synth(&spec, seed, &out)
        }
    }
}

fn inspect(file: &Path, as_json: bool) -> Outcome {
    let ds = read_tsf(file)
        .with_context(|| format!("reading {}", file.display()))
        .map_err(invalid)?;
    let m = &ds.meta;
    let lengths: Vec<usize> = ds.series.iter().map(|s| s.values.len()).collect();
    let missing: usize = ds.series.iter().map(|s| s.values.iter().filter(|v| v.is_none()).count()).sum();
    let (min, max) = (
        lengths.iter().copied().min().unwrap_or(0),
        lengths.iter().copied().max().unwrap_or(0),
    );
    if as_json {
        let summary = json!({
            "id": m.id,
            "name": m.name,
            "frequency": m.frequency,
            "series": m.series_count,
            "delta": m.delta,
            "horizon": m.horizon,
            "seasonality": m.seasonality,
            "min_length": min,
            "max_length": max,
            "missing": missing,
        });
        println!("{}", serde_json::to_string_pretty(&summary).map_err(runtime)?);
    } else {
        println!("{} ({})", m.id, m.name);
        println!("frequency {}", ds.header.frequency.as_deref().unwrap_or(m.frequency.token()));
        println!(
            "M={} delta={} horizon={} seasonality={}",
            m.series_count, m.delta, m.horizon, m.seasonality
        );
        println!("length min={min} max={max}");
        println!("missing={missing}");
    }
    Ok(())
}

fn gradcheck(seed: u64, instances: usize, tolerance: f64) -> Outcome {
    if instances == 0 {
        return Err(invalid(anyhow!("--instances must be at least 1")));
    }
    if !(tolerance > 0.0) {
        return Err(invalid(anyhow!("--tolerance must be positive")));
    }
    let options = GradCheckOptions {
        tolerance,
        ..GradCheckOptions::default()
    };
    let suite = gradcheck_suite(seed, instances, options).map_err(runtime)?;
    for (i, c) in suite.cases.iter().enumerate() {
        println!(
            "case {i:>3} L={} d={:<2} k={} delta={:<2} h={} {} coords={:<5} max_rel={:.2e} {}",
            c.layers,
            c.filters,
            c.kernel,
            c.delta,
            c.horizon,
            if c.shared_head { "shared" } else { "multi " },
            c.checked,
            c.max_rel_error,
            if c.passed { "ok" } else { "FAIL" }
        );
    }
    let failed = suite.cases.iter().filter(|c| !c.passed).count();
    println!(
        "{} cases, {} failed, max relative error {:.3e} (tolerance {:.0e})",
        suite.cases.len(),
        failed,
        suite.max_rel_error(),
        tolerance
    );
    if failed > 0 {
        return Err(runtime(anyhow!("gradient check failed on {failed} case(s)")));
    }
    Ok(())
}

fn load_manifest(path: &Path) -> Result<BenchmarkManifest, Failure> {
    BenchmarkManifest::load(path)
        .with_context(|| format!("manifest {}", path.display()))
        .map_err(invalid)
}

fn apply_overrides(config: &mut TrainConfig, overrides: &TrainOverrides) -> Result<(), Failure> {
    overrides.apply(config);
    config.validate().context("after applying flags").map_err(invalid)
}

fn train_cmd(strategy: &str, target: &str, manifest_path: &Path, out: &Path, overrides: &TrainOverrides) -> Outcome {
    let manifest = load_manifest(manifest_path)?;
    let strategy: Strategy = strategy.parse().context("--strategy").map_err(invalid)?;
    let datasets = manifest.load_datasets().map_err(invalid)?;
    let t = datasets
        .iter()
        .position(|d| d.meta.id.as_str() == target)
        .ok_or_else(|| invalid(anyhow!("--target: no dataset `{target}` in the manifest")))?;

    let mut config = TrainConfig {
        strategy,
        seed: derive_seed(manifest.master_seed, &[target, strategy.name()]),
        ..manifest.train.clone()
    };
    if let Some(s) = overrides.seed {
        config.seed = s;
    }
    apply_overrides(&mut config, overrides)?;

    let prepared = prepare_target(&datasets[t], manifest.datasets.get(t), manifest.master_seed).map_err(invalid)?;
    let mut aux: Vec<TaskData> = Vec::new();
    for (i, d) in datasets.iter().enumerate() {
        if i != t {
            let stride = manifest.datasets.get(i).map_or(1, |e| e.window_stride);
            aux.push(auxiliary_task_data(d, stride).map_err(invalid)?);
        }
    }
    let mut metas: Vec<&DatasetMeta> = aux.iter().map(|a| &a.meta).collect();
    metas.push(&prepared.task.meta);
    let model = strategy.model_config(&manifest.model, &metas);

    let effective = json!({
        "strategy": strategy,
        "target": target,
        "prefix_length": prepared.task.prefix_length,
        "validation_series": prepared.split.validation.iter().map(|&j| &prepared.task.series_names[j]).collect::<Vec<_>>(),
        "manifest_hash": manifest.hash(),
        "train": config,
        "model": model,
    });
    eprintln!("{}", serde_json::to_string_pretty(&effective).map_err(runtime)?);

    let state = train(&aux, &prepared.data, &model, &config).map_err(runtime)?;
    let task = &prepared.task;
    let forecasts = state.forecast(&task.test_inputs(), &task.meta).map_err(runtime)?;
    let score = compute_mase(&forecasts, &task.test_targets, &task.observed, task.meta.seasonality).map_err(runtime)?;

    fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(runtime)?;
    save_checkpoint(state.predictor(), config.seed, out.join("checkpoint.json")).map_err(runtime)?;
    let log_file = fs::File::create(out.join("train_log.csv")).map_err(runtime)?;
    write_log_csv(&state.log, log_file).map_err(runtime)?;
    let mut effective = effective;
    effective["outer_iterations"] = json!(state.outer_iter);
    effective["best_iteration"] = json!(state.best_iter);
    effective["best_validation"] = json!(state.best_score);
    effective["test_mase"] = json!(score.mase);
    effective["test_excluded"] = json!(score.excluded);
    fs::write(out.join("config.json"), serde_json::to_vec_pretty(&effective).map_err(runtime)?).map_err(runtime)?;

    println!(
        "{strategy} on {target}: {} outer iterations, test MASE {:.4} ({} excluded)",
        state.outer_iter, score.mase, score.excluded
    );
    Ok(())
}

fn bench(
    manifest_path: &Path,
    out: &Path,
    jobs: Option<usize>,
    methods: Option<Vec<String>>,
    overrides: &TrainOverrides,
) -> Outcome {
    let mut manifest = load_manifest(manifest_path)?;
    if let Some(list) = methods {
        manifest.methods = list
            .iter()
            .map(|m| m.trim().parse::<Method>())
            .collect::<Result<_, _>>()
            .context("--methods")
            .map_err(invalid)?;
    }
    if let Some(s) = overrides.seed {
        manifest.master_seed = s;
    }
    if jobs == Some(0) {
        return Err(invalid(anyhow!("--jobs must be at least 1")));
    }
    manifest.jobs = jobs.or(manifest.jobs);
    apply_overrides(&mut manifest.train, overrides)?;
    manifest.validate().map_err(invalid)?;
    let datasets = manifest.load_datasets().map_err(invalid)?;

    let report = leave_one_out(&datasets, &manifest.methods, &manifest).map_err(runtime)?;
    report
        .write_to(out)
        .with_context(|| format!("writing reports to {}", out.display()))
        .map_err(runtime)?;
    fs::write(out.join("manifest.json"), manifest.to_json().map_err(runtime)?).map_err(runtime)?;
    print!("{}", report.to_markdown());
    let failed = report.failed_cells().count();
    if failed > 0 {
        log::warn!("{failed} cell(s) failed; see summary.md");
    }
    Ok(())
}

fn synth(spec: &SyntheticSpec, seed: u64, out: &Path) -> Outcome {
    let ds = gen_synthetic(spec, seed).map_err(invalid)?;
    write_tsf(&ds, out)
        .with_context(|| format!("writing {}", out.display()))
        .map_err(runtime)?;
    println!("wrote {} (M={}, length {})", out.display(), ds.len(), spec.length);
    Ok(())
}
