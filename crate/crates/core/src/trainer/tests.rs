use super::*;
use crate::bench::make_windows;
use crate::model::{init_params, ModelConfig};
use crate::numerics::{Linear, Parameters};
use crate::tsf::Frequency;

fn meta(id: &str, delta: usize, h: usize) -> DatasetMeta {
    DatasetMeta::new(DatasetId::new(id), id, Frequency::Daily, 4, delta, h).unwrap()
}

fn wave(seed: u64, series: usize, len: usize) -> Vec<f64> {
    let phase = seed as f64 * 0.7 + series as f64 * 1.3;
    (0..len)
        .map(|t| (t as f64 * 0.6 + phase).sin() * (1.0 + 0.1 * series as f64) + 0.05 * t as f64)
        .collect()
}

fn task(id: &str, seed: u64, delta: usize, h: usize, series: usize, len: usize, validation: bool) -> TaskData {
    let m = meta(id, delta, h);
    let mut train = Vec::new();
    for j in 0..series {
        train.extend(make_windows(&m.id, j, &wave(seed, j, len), delta, h, 1));
    }
    let val = if validation {
        let v = wave(seed, series, len);
        vec![ValidationWindow {
            series,
            input: v[len - h - delta..len - h].to_vec(),
            target: v[len - h..].to_vec(),
            prefix: v[..len - h].to_vec(),
        }]
    } else {
        Vec::new()
    };
    TaskData::new(m, train, val).unwrap()
}

fn small_model() -> ModelConfig {
    ModelConfig {
        layers: 2,
        filters: 3,
        kernel: 3,
        ..ModelConfig::default()
    }
}

fn config(strategy: Strategy, iters: usize) -> TrainConfig {
    TrainConfig {
        strategy,
        max_outer_iters: iters,
        patience: 0,
        seed: 11,
        ..TrainConfig::default()
    }
}

fn no_obs() -> impl FnMut(&BatchEvent) {
    |_| {}
}

/// Central-difference gradient of `loss` over every parameter of `params`.
fn numeric_gradient(params: &ModelParams, loss: impl Fn(&ModelParams) -> f64) -> Vec<f64> {
    let step = 1e-6;
    let flat = params.to_flat();
    let mut out = Vec::with_capacity(flat.len());
    for k in 0..flat.len() {
        let mut plus = params.clone();
        let mut minus = params.clone();
        set_flat(&mut plus, k, flat[k] + step);
        set_flat(&mut minus, k, flat[k] - step);
        out.push((loss(&plus) - loss(&minus)) / (2.0 * step));
    }
    out
}

fn set_flat(params: &mut ModelParams, mut k: usize, value: f64) {
    for block in params.blocks_mut() {
        if k < block.len() {
            block[k] = value;
            return;
        }
        k -= block.len();
    }
    panic!("flat index out of range");
}

#[test]
fn strategy_names_round_trip() {
    for s in Strategy::ALL {
        assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
    }
    assert!("reptile".parse::<Strategy>().is_err());
}

#[test]
fn zero_inner_rate_leaves_params() {
    let t = task("a", 1, 6, 3, 2, 15, false);
    let p = init_params(&small_model(), &[&t.meta], 3).unwrap();
    let mut q = p.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    inner_epoch(&mut q, &t, 0.0, 1, &mut rng, &mut no_obs()).unwrap();
    assert_eq!(p, q);
}

#[test]
fn single_sample_step_matches_numeric_gradient() {
    let mut t = task("a", 2, 6, 3, 1, 9, false);
    t.train.truncate(1);
    let p = init_params(&small_model(), &[&t.meta], 5).unwrap();
    let s = t.train[0].clone();
    let m = t.meta.clone();
    let grad = numeric_gradient(&p, |q| mae_loss(&predict(q, &s.x, &m).unwrap(), &s.y).unwrap());
    let mu = 0.05;
    let mut q = p.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    inner_epoch(&mut q, &t, mu, 1, &mut rng, &mut no_obs()).unwrap();
    for ((a, b), g) in q.to_flat().iter().zip(p.to_flat()).zip(grad) {
        assert!((a - (b - mu * g)).abs() < 1e-7, "{a} vs {}", b - mu * g);
    }
}

#[test]
fn shuffles_are_seeded() {
    let t = task("a", 3, 6, 3, 3, 20, false);
    let p = init_params(&small_model(), &[&t.meta], 1).unwrap();
    let run = |seed| {
        let mut q = p.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut offsets = Vec::new();
        inner_epoch(&mut q, &t, 0.01, 2, &mut rng, &mut |e: &BatchEvent| {
            offsets.extend(e.samples.iter().map(|s| (s.series, s.offset)))
        })
        .unwrap();
        (q, offsets)
    };
    assert_eq!(run(4), run(4));
    assert_ne!(run(4).1, run(5).1);
}

#[test]
fn meta_update_examples() {
    let a = meta("a", 4, 2);
    let b = meta("b", 5, 3);
    let mut p = init_params(&small_model(), &[&a, &b], 0).unwrap();
    p.fill(2.0);
    let mut inner = p.restricted_to(&a.id).unwrap();
    inner.fill(0.0);

    let mut half = p.clone();
    meta_update(&mut half, &inner, &a.id, 0.5).unwrap();
    assert!(half.encoder.to_flat().iter().all(|&v| v == 1.0));
    assert!(half.head(&a.id).unwrap().to_flat().iter().all(|&v| v == 1.0));
    assert_eq!(half.head(&b.id).unwrap(), p.head(&b.id).unwrap());

    let mut full = p.clone();
    meta_update(&mut full, &inner, &a.id, 1.0).unwrap();
    assert_eq!(full.encoder, inner.encoder);
    assert_eq!(full.head(&a.id).unwrap(), inner.head(&a.id).unwrap());

    let mut none = p.clone();
    meta_update(&mut none, &inner, &a.id, 0.0).unwrap();
    assert_eq!(none, p);

    let other = init_params(&ModelConfig { filters: 4, ..small_model() }, &[&a], 0).unwrap();
    assert!(meta_update(&mut p, &other, &a.id, 0.5).is_err());
}

#[test]
fn adapt_reductions() {
    let t = task("tgt", 4, 6, 3, 2, 14, false);
    let p = init_params(&small_model(), &[&t.meta], 8).unwrap();
    let head = p.head(&t.meta.id).unwrap().clone();
    let snapshot = p.clone();

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let frozen = adapt_target(&p, &t, head.clone(), None, 0.0, 1, &mut rng, &mut no_obs()).unwrap();
    assert_eq!(frozen.encoder, p.encoder);
    assert_eq!(frozen.head(&t.meta.id).unwrap(), &head);

    let off = AdversarialConfig {
        epsilon: 0.0,
        weight: 0.0,
    };
    let mut r1 = ChaCha8Rng::seed_from_u64(2);
    let mut r2 = ChaCha8Rng::seed_from_u64(2);
    let a = adapt_target(&p, &t, head.clone(), Some(&off), 0.02, 1, &mut r1, &mut no_obs()).unwrap();
    let mut plain = p.clone();
    run_epoch(&mut plain, &t, 0.02, 1, None, Phase::Adapt, &mut r2, &mut no_obs()).unwrap();
    assert_eq!(a, plain);
    assert_eq!(p, snapshot);
}

#[test]
fn adversarial_single_sample_closed_form() {
    let mut t = task("tgt", 5, 6, 3, 1, 9, false);
    t.train.truncate(1);
    let p = init_params(&small_model(), &[&t.meta], 9).unwrap();
    let head = p.head(&t.meta.id).unwrap().clone();
    let s = t.train[0].clone();
    let m = t.meta.clone();
    let adv = AdversarialConfig {
        epsilon: 0.05,
        weight: 0.7,
    };

    // x' from the clean input gradient, then held fixed.
    let (_, g) = sample_gradients(&p, &s, &m, None).unwrap();
    let x_adv = crate::augment::fgsm_perturb(&s.x, &g.input, adv.epsilon).unwrap();
    let clean = numeric_gradient(&p, |q| mae_loss(&predict(q, &s.x, &m).unwrap(), &s.y).unwrap());
    let perturbed = numeric_gradient(&p, |q| mae_loss(&predict(q, &x_adv, &m).unwrap(), &s.y).unwrap());

    let mu = 0.03;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = adapt_target(&p, &t, head, Some(&adv), mu, 1, &mut rng, &mut no_obs()).unwrap();
    for (k, (got, base)) in a.to_flat().iter().zip(p.to_flat()).enumerate() {
        let want = base - mu * (clean[k] + adv.weight * perturbed[k]);
        assert!((got - want).abs() < 1e-7, "coordinate {k}: {got} vs {want}");
    }
}

#[test]
fn zero_iterations_return_initialisation() {
    let aux = vec![task("a", 1, 6, 3, 2, 15, false)];
    let t = task("tgt", 2, 6, 3, 2, 12, true);
    let st = train(&aux, &t, &small_model(), &config(Strategy::Feml, 0)).unwrap();
    let init = init_params(&small_model(), &[&aux[0].meta, &t.meta], 11).unwrap();
    assert_eq!(st.params, init);
    assert!(st.adapted.is_none() && st.log.is_empty());
    assert_eq!(st.outer_iter, 0);
}

#[test]
fn reptile_single_step_reduction() {
    let mut a = task("a", 6, 6, 3, 1, 9, false);
    a.train.truncate(1);
    let t = task("tgt", 7, 6, 3, 2, 12, false);
    let cfg = TrainConfig {
        mu_out: 1.0,
        mu_in: 0.05,
        ..config(Strategy::Feml, 1)
    };
    let st = train(std::slice::from_ref(&a), &t, &small_model(), &cfg).unwrap();

    let mut direct = init_params(&small_model(), &[&a.meta, &t.meta], cfg.seed).unwrap();
    let (_, g) = sample_gradients(&direct, &a.train[0], &a.meta, None).unwrap();
    direct.apply_gradients(&g, cfg.mu_in).unwrap();
    let got = &st.params;
    for (x, y) in got.encoder.to_flat().iter().zip(direct.encoder.to_flat()) {
        assert!((x - y).abs() < 1e-12);
    }
    for (x, y) in got.head(&a.meta.id).unwrap().to_flat().iter().zip(direct.head(&a.meta.id).unwrap().to_flat()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn heads_move_only_when_sampled() {
    let aux: Vec<TaskData> = (0..30).map(|i| task(&format!("a{i}"), i, 5, 2, 1, 8, false)).collect();
    let t = task("tgt", 99, 5, 2, 2, 10, true);
    let mut tr = Trainer::new(&aux, &t, &small_model(), &config(Strategy::Feml, 100)).unwrap();
    let init = tr.state().params.clone();
    let mut prev = init.clone();
    while tr.step(&mut no_obs()).unwrap() || tr.state().outer_iter == 100 {
        let st = tr.state();
        let sampled = DatasetId::new(st.log.last().unwrap().task.clone());
        for a in &aux {
            if *a.id() != sampled {
                assert_eq!(st.params.head(a.id()).unwrap(), prev.head(a.id()).unwrap());
            }
        }
        assert_eq!(st.params.head(t.id()).unwrap(), init.head(t.id()).unwrap());
        prev = st.params.clone();
        if tr.finished() {
            break;
        }
    }
    let st = tr.state();
    assert_eq!(st.outer_iter, 100);
    let mut never = 0;
    for a in &aux {
        if !st.log.iter().any(|r| r.task == a.id().as_str()) {
            never += 1;
            assert_eq!(st.params.head(a.id()).unwrap(), init.head(a.id()).unwrap());
        }
    }
    assert!(never > 0);
}

#[test]
fn feml_without_adversary_matches_m_reptile() {
    let aux = vec![task("a", 1, 6, 3, 2, 14, false), task("b", 2, 5, 2, 2, 12, false)];
    let t = task("tgt", 3, 6, 3, 2, 12, true);
    let off = TrainConfig {
        adversarial: AdversarialConfig::DISABLED,
        ..config(Strategy::Feml, 12)
    };
    let f = train(&aux, &t, &small_model(), &off).unwrap();
    let m = train(&aux, &t, &small_model(), &config(Strategy::MReptile, 12)).unwrap();
    assert_eq!(f.params, m.params);
    assert_eq!(f.adapted, m.adapted);
    assert_eq!(f.best, m.best);
    assert_eq!(f.log, m.log);
    assert_eq!(f.rng, m.rng);

    let on = train(&aux, &t, &small_model(), &config(Strategy::Feml, 12)).unwrap();
    assert_ne!(on.adapted, m.adapted);
}

#[test]
fn every_strategy_is_deterministic_and_perturbs_only_the_target() {
    let aux = vec![task("a", 1, 6, 3, 2, 14, false), task("b", 2, 5, 2, 2, 12, false)];
    let t = task("tgt", 3, 6, 3, 2, 12, true);
    let metas = [&aux[0].meta, &aux[1].meta, &t.meta];
    for s in Strategy::ALL {
        let model = s.model_config(&small_model(), &metas);
        let cfg = TrainConfig {
            batch_size: 2,
            ..config(s, 4)
        };
        let mut events = 0;
        let run1 = train_with_observer(&aux, &t, &model, &cfg, &mut |e: &BatchEvent| {
            events += 1;
            if e.adversarial {
                assert_eq!(e.phase, Phase::Adapt);
                assert!(e.samples.iter().all(|x| x.dataset == *t.id()));
            }
            if !s.uses_auxiliaries() {
                assert!(e.samples.iter().all(|x| x.dataset == *t.id()));
            }
        })
        .unwrap();
        assert!(events > 0);
        let run2 = train(&aux, &t, &model, &cfg).unwrap();
        assert_eq!(run1, run2, "{s}");
        assert_eq!(run1.log.len(), 4);
        let f = run1.forecast(&[t.validation[0].input.clone()], &t.meta).unwrap();
        assert_eq!(f[0].len(), 3);
    }
}

#[test]
fn strategy_model_mismatch() {
    let aux = vec![task("a", 1, 6, 3, 2, 14, false)];
    let t = task("tgt", 3, 6, 3, 2, 12, true);
    assert!(train(&aux, &t, &small_model(), &config(Strategy::Joint, 1)).is_err());
    assert!(train(&aux, &t, &small_model(), &config(Strategy::SingleTask, 1)).is_err());
    let shared = small_model().shared_for(&[&aux[0].meta, &t.meta]);
    assert!(train(&aux, &t, &shared, &config(Strategy::Feml, 1)).is_err());
    assert!(train(&[], &t, &small_model(), &config(Strategy::Feml, 1)).is_err());
    let empty = TaskData::new(t.meta.clone(), Vec::new(), Vec::new()).unwrap();
    assert!(train(&aux, &empty, &small_model(), &config(Strategy::Feml, 1)).is_err());
    let bad = TrainConfig {
        batch_size: 0,
        ..config(Strategy::Feml, 1)
    };
    assert!(train(&aux, &t, &small_model(), &bad).is_err());
}

#[test]
fn patience_stops_early_and_keeps_best() {
    let aux = vec![task("a", 1, 6, 3, 2, 14, false)];
    let t = task("tgt", 3, 6, 3, 2, 12, true);
    let cfg = TrainConfig {
        patience: 2,
        mu_ad: 0.5,
        ..config(Strategy::Feml, 200)
    };
    let st = train(&aux, &t, &small_model(), &cfg).unwrap();
    assert!(st.outer_iter < 200);
    let best_iter = st.best_iter.unwrap();
    assert_eq!(st.outer_iter, best_iter + 2);
    let best = st.best_score.unwrap();
    assert!(st.log.iter().all(|r| r.val_mase.unwrap() >= best));
    assert_eq!(validation_score(st.predictor(), &t).unwrap(), Some(best));
}

#[test]
fn persisted_target_head_is_carried() {
    let aux = vec![task("a", 1, 6, 3, 2, 14, false)];
    let t = task("tgt", 3, 6, 3, 2, 12, true);
    let cfg = TrainConfig {
        persist_target_head: true,
        ..config(Strategy::Feml, 3)
    };
    let st = train(&aux, &t, &small_model(), &cfg).unwrap();
    let carried: &Linear = st.params.head(t.id()).unwrap();
    assert_eq!(carried, st.adapted.as_ref().unwrap().head(t.id()).unwrap());
}

#[test]
fn log_csv_layout() {
    let rows = vec![
        LogRow {
            iteration: 1,
            task: "a".into(),
            inner_loss: 0.5,
            val_mase: Some(1.25),
        },
        LogRow {
            iteration: 2,
            task: "b".into(),
            inner_loss: 0.25,
            val_mase: None,
        },
    ];
    let mut out = Vec::new();
    write_log_csv(&rows, &mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), "iteration,task,inner_loss,val_mase\n1,a,0.5,1.25\n2,b,0.25,\n");
}
