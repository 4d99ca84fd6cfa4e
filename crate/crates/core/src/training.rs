//! Single-sample stochastic gradient descent on the least-squares cost
//! `C = 1/2 sum_m (pi(x_m) - y_m)^2`, with optional momentum, learning-rate
//! decay and qubit dropout.
//!
//! Dropout freezes one qubit for `dropout_interval` epochs at a time: every
//! slot that touches it is skipped in the forward pass and its parameters are
//! left untouched by the update. When the interval ends, a new qubit (or, if
//! enabled, no qubit) is drawn uniformly.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::CircuitSpec;
use crate::data::Dataset;
use crate::encoding::Preprocessor;
use crate::error::{Error, Result};
use crate::gradient::{grad_cost_sample, GradientMode};
use crate::model::{continuous_output, Classifier, EstimatorMode};
use crate::seed;

// Stream identifiers for seed derivation.
const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_DROPOUT: u64 = 3;
const STREAM_STEP: u64 = 4;
const STREAM_METRICS: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub momentum: f64,
    /// Epochs per dropout period; 0 disables dropout.
    pub dropout_interval: usize,
    pub dropout_include_none: bool,
    pub estimator: EstimatorMode,
    pub gradient: GradientMode,
    /// Per-epoch multiplicative learning-rate factor.
    pub lr_decay: f64,
    /// Weight of an optional `l2/2 * |theta|^2` penalty; 0 disables it.
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 50,
            seed: 0,
            momentum: 0.0,
            dropout_interval: 10,
            dropout_include_none: true,
            estimator: EstimatorMode::Exact,
            gradient: GradientMode::ExactLCU,
            lr_decay: 1.0,
            l2: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropoutState {
    pub dropped: Option<usize>,
    pub remaining_epochs: usize,
}

/// Draw the next qubit to freeze, uniformly among the `n` qubits and, when
/// `include_none` is set, the option of freezing nothing.
pub fn rotate_dropout<R: Rng + ?Sized>(
    n_qubits: usize,
    include_none: bool,
    interval: usize,
    rng: &mut R,
) -> DropoutState {
    let choices = n_qubits + usize::from(include_none);
    let pick = rng.random_range(0..choices);
    DropoutState {
        dropped: (pick < n_qubits).then_some(pick),
        remaining_epochs: interval,
    }
}

/// Slots frozen while `dropped` is set aside.
pub fn dropout_mask(spec: &CircuitSpec, dropped: usize) -> Vec<bool> {
    spec.slots().iter().map(|s| s.touches(dropped)).collect()
}

/// Parameters every owner of which is frozen.
pub fn frozen_params(spec: &CircuitSpec, mask: &[bool]) -> Vec<bool> {
    let mut live = vec![false; spec.param_len()];
    for (slot, &frozen) in spec.slots().iter().zip(mask) {
        if !frozen {
            live[slot.param_offset..slot.param_offset + slot.width()]
                .iter_mut()
                .for_each(|l| *l = true);
        }
    }
    live.into_iter().map(|l| !l).collect()
}

/// Uniform angles in `[0, 2 pi)` and zero bias.
pub fn init_params(spec: &CircuitSpec, seed: u64) -> (Vec<f64>, f64) {
    let mut rng = seed::rng(seed, &[STREAM_INIT]);
    let theta = (0..spec.param_len())
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();
    (theta, 0.0)
}

fn binary_targets(data: &Dataset) -> Result<Vec<f64>> {
    data.labels()
        .iter()
        .map(|&l| match l {
            0 | 1 => Ok(l as f64),
            _ => Err(Error::InvalidLabel {
                label: l,
                reason: "training needs binary labels".into(),
            }),
        })
        .collect()
}

/// `1/2 sum (pi - y)^2` over the dataset.
pub fn cost(c: &Classifier, data: &Dataset, m: EstimatorMode) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for (i, (x, &y)) in data.features().iter().zip(data.labels()).enumerate() {
        let pi = continuous_output(c, x, m.fork(&[i as u64]))?.pi;
        total += 0.5 * (pi - y as f64).powi(2);
    }
    Ok(total)
}

/// Momentum state for all parameters plus the bias (last entry).
#[derive(Debug, Clone, PartialEq)]
pub struct Velocity(pub Vec<f64>);

impl Velocity {
    pub fn zeros(param_len: usize) -> Self {
        Self(vec![0.0; param_len + 1])
    }
}

/// `v <- m v + g`, `param <- param - lr v`; frozen parameters keep both
/// their value and their velocity.
#[allow(clippy::too_many_arguments)]
pub fn sgd_step(
    theta: &mut [f64],
    bias: &mut f64,
    velocity: &mut Velocity,
    grad_theta: &[f64],
    grad_bias: f64,
    learning_rate: f64,
    momentum: f64,
    frozen: Option<&[bool]>,
) {
    let v = &mut velocity.0;
    for (i, (t, g)) in theta.iter_mut().zip(grad_theta).enumerate() {
        if frozen.is_some_and(|f| f[i]) {
            continue;
        }
        v[i] = momentum * v[i] + g;
        *t -= learning_rate * v[i];
    }
    let last = v.len() - 1;
    v[last] = momentum * v[last] + grad_bias;
    *bias -= learning_rate * v[last];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub cost: f64,
    pub train_error: f64,
    pub dropped_qubit: Option<usize>,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub classifier: Classifier,
    pub metrics: Vec<EpochMetrics>,
}

/// Train a binary classifier from random initial parameters.
pub fn train(spec: &CircuitSpec, preprocessor: Preprocessor, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let (theta, bias) = init_params(spec, cfg.seed);
    let classifier = Classifier::new(spec.clone(), theta, bias, preprocessor)?;
    train_from(classifier, data, cfg)
}

/// Train starting from the given classifier's parameters.
pub fn train_from(mut c: Classifier, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let targets = binary_targets(data)?;
    let n_qubits = c.spec.n_qubits();
    let mut velocity = Velocity::zeros(c.spec.param_len());
    let mut dropout_rng = seed::rng(cfg.seed, &[STREAM_DROPOUT]);
    let mut dropout = DropoutState {
        dropped: None,
        remaining_epochs: 0,
    };
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..cfg.epochs {
        if cfg.dropout_interval > 0 && dropout.remaining_epochs == 0 {
            dropout = rotate_dropout(n_qubits, cfg.dropout_include_none, cfg.dropout_interval, &mut dropout_rng);
        }
        let mask = dropout.dropped.map(|q| dropout_mask(&c.spec, q));
        let frozen = mask.as_ref().map(|m| frozen_params(&c.spec, m));
        let lr = cfg.learning_rate * cfg.lr_decay.powi(epoch as i32);

        order.shuffle(&mut seed::rng(cfg.seed, &[STREAM_SHUFFLE, epoch as u64]));
        for (step, &idx) in order.iter().enumerate() {
            let path = [STREAM_STEP, epoch as u64, step as u64];
            let g = grad_cost_sample(
                &c,
                &data.features()[idx],
                targets[idx],
                cfg.estimator.fork(&path),
                cfg.gradient.fork(&path),
                mask.as_deref(),
            )?;
            let mut grad_theta = g.theta;
            if cfg.l2 > 0.0 {
                grad_theta.iter_mut().zip(&c.theta).for_each(|(g, t)| *g += cfg.l2 * t);
            }
            sgd_step(
                &mut c.theta,
                &mut c.bias,
                &mut velocity,
                &grad_theta,
                g.bias,
                lr,
                cfg.momentum,
                frozen.as_deref(),
            );
        }
        if c.theta.iter().any(|t| !t.is_finite()) || !c.bias.is_finite() {
            return Err(Error::InvalidCircuit(format!("non-finite parameters after epoch {epoch}")));
        }

        let est = cfg.estimator.fork(&[STREAM_METRICS, epoch as u64]);
        let mut total_cost = 0.0;
        let mut wrong = 0usize;
        for (i, x) in data.features().iter().enumerate() {
            let p = continuous_output(&c, x, est.fork(&[i as u64]))?;
            total_cost += 0.5 * (p.pi - targets[i]).powi(2);
            wrong += usize::from(p.label as usize != data.labels()[i]);
        }
        if cfg.l2 > 0.0 {
            total_cost += 0.5 * cfg.l2 * c.theta.iter().map(|t| t * t).sum::<f64>();
        }
        metrics.push(EpochMetrics {
            epoch,
            cost: total_cost,
            train_error: wrong as f64 / data.len() as f64,
            dropped_qubit: dropout.dropped,
            learning_rate: lr,
        });
        dropout.remaining_epochs = dropout.remaining_epochs.saturating_sub(1);
    }
    Ok(TrainOutcome { classifier: c, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_architecture, SlotKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_is_seeded_and_in_range() {
        let spec = build_architecture(8, &[1, 3], true).unwrap();
        let (a, b) = init_params(&spec, 9);
        let (c, _) = init_params(&spec, 9);
        assert_eq!(a, c);
        assert_eq!(a.len(), 99);
        assert_eq!(b, 0.0);
        assert!(a.iter().all(|t| (0.0..std::f64::consts::TAU).contains(t)));
        assert_ne!(init_params(&spec, 10).0, a);
    }

    #[test]
    fn sgd_step_arithmetic() {
        let mut theta = vec![1.0, 2.0];
        let mut bias = 0.5;
        let mut v = Velocity::zeros(2);
        sgd_step(&mut theta, &mut bias, &mut v, &[0.0, 0.0], 0.0, 0.1, 0.9, None);
        assert_eq!((theta.clone(), bias), (vec![1.0, 2.0], 0.5));

        sgd_step(&mut theta, &mut bias, &mut v, &[0.3, -0.2], 0.1, 1.0, 0.0, None);
        assert_eq!(theta, vec![0.7, 2.2]);
        assert_eq!(bias, 0.4);

        // two momentum steps: v1 = g1, v2 = 0.9 g1 + g2
        let mut theta = vec![0.0];
        let mut bias = 0.0;
        let mut v = Velocity::zeros(1);
        sgd_step(&mut theta, &mut bias, &mut v, &[1.0], 2.0, 0.1, 0.9, None);
        sgd_step(&mut theta, &mut bias, &mut v, &[0.5], -1.0, 0.1, 0.9, None);
        assert!((theta[0] - -(0.1 * 1.0 + 0.1 * (0.9 * 1.0 + 0.5))).abs() < 1e-15);
        assert!((bias - -(0.1 * 2.0 + 0.1 * (0.9 * 2.0 - 1.0))).abs() < 1e-15);

        let mut theta = vec![1.0, 1.0];
        let mut v = Velocity::zeros(2);
        sgd_step(&mut theta, &mut bias, &mut v, &[1.0, 1.0], 0.0, 0.5, 0.0, Some(&[true, false]));
        assert_eq!(theta, vec![1.0, 0.5]);
        assert_eq!(v.0[0], 0.0);
    }

    #[test]
    fn dropout_masks() {
        let spec = build_architecture(8, &[1, 3], true).unwrap();
        let m = dropout_mask(&spec, 0);
        let singles = spec
            .slots()
            .iter()
            .zip(&m)
            .filter(|(s, &f)| f && s.kind == SlotKind::Single)
            .count();
        // one single gate per block plus the trailing gate
        assert_eq!(singles, 3);
        // qubit 0 is control once and target once in each block
        assert_eq!(m.iter().filter(|&&f| f).count(), 7);

        let union: Vec<bool> = (0..8)
            .map(|q| dropout_mask(&spec, q))
            .fold(vec![false; m.len()], |acc, mq| acc.iter().zip(&mq).map(|(a, b)| *a || *b).collect());
        assert!(union.iter().all(|&u| u));

        let spec = build_architecture(3, &[], true).unwrap();
        assert!(dropout_mask(&spec, 2).iter().all(|&f| !f));
    }

    #[test]
    fn frozen_params_follow_mask() {
        let spec = build_architecture(2, &[1], false).unwrap();
        let mask = dropout_mask(&spec, 1);
        let frozen = frozen_params(&spec, &mask);
        // single gate on qubit 0 stays live; everything else touches qubit 1
        assert!(frozen[..3].iter().all(|f| !f));
        assert!(frozen[3..].iter().all(|&f| f));
    }

    #[test]
    fn dropout_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert_eq!(rotate_dropout(1, false, 10, &mut rng).dropped, Some(0));
        }
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            let s = rotate_dropout(3, true, 5, &mut rng);
            assert_eq!(s.remaining_epochs, 5);
            counts[s.dropped.unwrap_or(3)] += 1;
        }
        let expect = 2500.0;
        let sigma = (10_000.0 * 0.25 * 0.75f64).sqrt();
        for c in counts {
            assert!((c as f64 - expect).abs() < 3.0 * sigma, "{counts:?}");
        }
        let a: Vec<_> = {
            let mut r = ChaCha8Rng::seed_from_u64(3);
            (0..10).map(|_| rotate_dropout(4, true, 1, &mut r)).collect()
        };
        let b: Vec<_> = {
            let mut r = ChaCha8Rng::seed_from_u64(3);
            (0..10).map(|_| rotate_dropout(4, true, 1, &mut r)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { momentum: 1.0, ..Default::default() },
            TrainConfig { lr_decay: 0.0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
