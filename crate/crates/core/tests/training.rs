use rand::Rng;

use qvc_core::circuit::build_architecture;
use qvc_core::data::{crossval_run, make_folds, Dataset, ExperimentSetup, Summary};
use qvc_core::encoding::Preprocessor;
use qvc_core::experiments::{noise_sweep, NoiseDistribution, NoiseSpec, NoiseTarget};
use qvc_core::gradient::{grad_cost_sample, GradientMode};
use qvc_core::model::{Classifier, EstimatorMode};
use qvc_core::seed;
use qvc_core::training::{cost, dropout_mask, frozen_params, init_params, sgd_step, train, TrainConfig, Velocity};
use qvc_core::Architecture;

/// Two clusters of 2-d points on either side of the diagonal.
fn two_clusters(n: usize, seed_: u64) -> Dataset {
    let mut rng = seed::rng(seed_, &[]);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let label = i % 2;
        let angle: f64 = if label == 0 { 0.3 } else { 1.2 } + rng.random_range(-0.15..0.15);
        features.push(vec![angle.cos(), angle.sin()]);
        labels.push(label);
    }
    Dataset::new(features, labels).unwrap()
}

fn quiet(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.1,
        epochs: 200,
        seed,
        momentum: 0.0,
        dropout_interval: 0,
        ..TrainConfig::default()
    }
}

#[test]
fn toy_clusters_are_separated_for_some_seed() {
    let data = two_clusters(40, 1);
    let spec = build_architecture(1, &[], true).unwrap();
    let pre = Preprocessor::zero_padded(2).unwrap();
    let best = (0..5)
        .map(|s| {
            let out = train(&spec, pre, &data, &quiet(s)).unwrap();
            assert_eq!(out.metrics.len(), 200);
            out.metrics.iter().map(|m| m.train_error).fold(1.0, f64::min)
        })
        .fold(1.0, f64::min);
    assert_eq!(best, 0.0);
}

#[test]
fn small_step_decreases_single_sample_cost() {
    let mut checked = 0;
    for t in 0..20u64 {
        let spec = build_architecture(3, &[1, 2], true).unwrap();
        let (theta, bias) = init_params(&spec, t);
        let pre = Preprocessor::zero_padded(8).unwrap();
        let mut c = Classifier::new(spec.clone(), theta, bias, pre).unwrap();
        let mut rng = seed::rng(t, &[1]);
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = (t % 2) as usize;
        let data = Dataset::new(vec![x.clone()], vec![y]).unwrap();

        let before = cost(&c, &data, EstimatorMode::Exact).unwrap();
        let g = grad_cost_sample(&c, &x, y as f64, EstimatorMode::Exact, GradientMode::ExactLCU, None).unwrap();
        let norm = (g.theta.iter().map(|v| v * v).sum::<f64>() + g.bias * g.bias).sqrt();
        if norm < 1e-12 {
            continue;
        }
        let mut v = Velocity::zeros(spec.param_len());
        sgd_step(&mut c.theta, &mut c.bias, &mut v, &g.theta, g.bias, 1e-3, 0.0, None);
        let after = cost(&c, &data, EstimatorMode::Exact).unwrap();
        assert!(after < before, "instance {t}: {before} -> {after}");
        checked += 1;
    }
    assert!(checked > 15);
}

#[test]
fn dropped_qubit_parameters_are_untouched() {
    let data = two_clusters(20, 2);
    let spec = build_architecture(2, &[1], true).unwrap();
    // constant padding lifts the 2 features onto 2 qubits
    let pre = Preprocessor::new(2, 0.5, 1).unwrap();
    let mut moved_somewhere = false;
    for seed in 0..8 {
        let cfg = TrainConfig {
            epochs: 1,
            dropout_interval: 1,
            dropout_include_none: false,
            ..quiet(seed)
        };
        let out = train(&spec, pre, &data, &cfg).unwrap();
        let q = out.metrics[0].dropped_qubit.expect("a qubit is always dropped");
        let frozen = frozen_params(&spec, &dropout_mask(&spec, q));
        let (init, _) = init_params(&spec, cfg.seed);
        for (i, f) in frozen.iter().enumerate() {
            if *f {
                assert_eq!(out.classifier.theta[i].to_bits(), init[i].to_bits());
            } else if out.classifier.theta[i] != init[i] {
                moved_somewhere = true;
            }
        }
    }
    // with the readout qubit dropped nothing upstream can reach it, so only
    // other drops are expected to move parameters
    assert!(moved_somewhere);
}

#[test]
fn training_stays_finite_with_large_steps() {
    let data = two_clusters(30, 3);
    let spec = build_architecture(1, &[], true).unwrap();
    let pre = Preprocessor::zero_padded(2).unwrap();
    let cfg = TrainConfig {
        learning_rate: 2.0,
        momentum: 0.9,
        epochs: 20,
        ..quiet(1)
    };
    let out = train(&spec, pre, &data, &cfg).unwrap();
    assert!(out.classifier.theta.iter().all(|t| t.is_finite()));
    assert!(out.metrics.iter().all(|m| m.cost.is_finite()));
}

fn toy_setup(epochs: usize) -> ExperimentSetup {
    ExperimentSetup {
        architecture: Architecture::new(1, vec![], true),
        pad_value: 0.0,
        copies: 1,
        train: TrainConfig {
            epochs,
            dropout_interval: 0,
            ..quiet(4)
        },
        evaluation: EstimatorMode::Exact,
    }
}

#[test]
fn crossval_is_deterministic_and_consistent() {
    let data = two_clusters(40, 4);
    let plan = make_folds(&data, 4, 2, 11).unwrap();
    for rep in 0..2 {
        let mut seen = vec![0; data.len()];
        for fold in 0..4 {
            for i in plan.split(rep, fold).1 {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&s| s == 1));
    }
    let setup = toy_setup(60);
    let a = crossval_run(&data, &setup, &plan).unwrap();
    let b = crossval_run(&data, &setup, &plan).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.cells.len(), 8);

    let test: Vec<f64> = a.cells.iter().map(|c| c.task_test_error).collect();
    let mean = test.iter().sum::<f64>() / 8.0;
    let std = (test.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 7.0).sqrt();
    assert!((a.test.mean - mean).abs() <= 1e-12 && (a.test.std - std).abs() <= 1e-12);
    assert!(a.test.mean <= 0.05, "toy test error {}", a.test.mean);
    assert!(a.baseline_test.mean >= 0.4);
}

#[test]
fn noise_statistics_match_trials() {
    let data = two_clusters(40, 6);
    let setup = toy_setup(60);
    let models = setup.train_ensemble(&data, &[]).unwrap();
    let spec = NoiseSpec {
        level: 0.5,
        target: NoiseTarget::Parameters,
        trials: 25,
        seed: 3,
        distribution: NoiseDistribution::Gaussian,
    };
    let r = noise_sweep(&models, &data, &spec, EstimatorMode::Exact).unwrap();
    assert_eq!(r.impacts.len(), 25);
    let s = Summary::of(&r.impacts);
    assert!((s.mean - r.mean).abs() <= 1e-12 && (s.std - r.std).abs() <= 1e-12);
    assert_eq!(r.max, r.impacts.iter().copied().fold(f64::MIN, f64::max));
    assert_eq!(r.min, r.impacts.iter().copied().fold(f64::MAX, f64::min));
    assert_eq!(r, noise_sweep(&models, &data, &spec, EstimatorMode::Exact).unwrap());

    let zero = NoiseSpec { level: 0.0, ..spec };
    let r = noise_sweep(&models, &data, &zero, EstimatorMode::Exact).unwrap();
    assert!(r.impacts.iter().all(|&i| i == 0.0));
}
