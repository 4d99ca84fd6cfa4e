//! Analytic gradients of the output probability and of the per-sample cost.
//!
//! With `psi = U phi` and `P1` the projector onto qubit 0 = 1,
//! `dp/dmu = 2 Re <d_mu psi| P1 |psi>`. The derivative of the gate holding `mu`
//! is a weighted sum of ordinary gates, so `d_mu psi = sum_j a_j psi_j` where
//! each `psi_j` is the circuit output with that gate replaced. Because the
//! terms also satisfy `sum_j a_j Re<psi_j|psi> = 0` (the norm is constant),
//! `dp/dmu = -sum_j a_j Re<psi_j| Z_0 |psi>`, and each of those inner
//! products can be estimated with a Hadamard test.
//!
//! Three paths are provided:
//! * `DirectOracle` applies the entrywise derivative matrix of the gate.
//! * `ExactLCU` evaluates the expansion with exact inner products.
//! * `HadamardShots` estimates each inner product from sampled Hadamard tests.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{apply_circuit_derivative_masked, CircuitSpec, SlotKind, SlotMask};
use crate::error::{Error, Result};
use crate::gates::{analytic_derivative, GateParams, ParamAxis};
use crate::model::{hadamard_test_states, Classifier, EstimatorMode};
use crate::seed;
use crate::statevec::{kernel, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradientMode {
    DirectOracle,
    ExactLCU,
    HadamardShots { shots: u64, seed: u64 },
}

impl GradientMode {
    pub fn fork(self, path: &[u64]) -> Self {
        match self {
            Self::HadamardShots { shots, seed } => Self::HadamardShots {
                shots,
                seed: seed::derive(seed, path),
            },
            other => other,
        }
    }
}

/// A circuit, its parameters, and an input state: everything the gradient
/// paths need, independent of how the input was encoded.
#[derive(Debug, Clone, Copy)]
pub struct Instance<'a> {
    pub spec: &'a CircuitSpec,
    pub theta: &'a [f64],
    pub input: &'a StateVector,
    pub mask: Option<&'a SlotMask>,
}

impl<'a> Instance<'a> {
    pub fn new(spec: &'a CircuitSpec, theta: &'a [f64], input: &'a StateVector) -> Self {
        Self {
            spec,
            theta,
            input,
            mask: None,
        }
    }

    pub fn with_mask(self, mask: Option<&'a SlotMask>) -> Self {
        Self { mask, ..self }
    }

    fn skipped(&self, slot: usize) -> bool {
        self.mask.is_some_and(|m| m[slot])
    }

    fn output(&self) -> Result<StateVector> {
        let mut s = self.input.clone();
        self.spec.run(self.theta, &mut s, self.mask)?;
        Ok(s)
    }

    pub fn probability(&self) -> Result<f64> {
        self.output()?.prob_qubit_one(0)
    }

    fn check_index(&self, mu: usize) -> Result<()> {
        if mu >= self.spec.param_len() {
            return Err(Error::InvalidParamIndex {
                index: mu,
                len: self.spec.param_len(),
            });
        }
        Ok(())
    }
}

/// `dp/dmu` for a single parameter.
pub fn grad_p(inst: &Instance, mu: usize, mode: GradientMode) -> Result<f64> {
    inst.check_index(mu)?;
    match mode {
        GradientMode::DirectOracle => direct_single(inst, mu),
        GradientMode::ExactLCU => {
            let psi = inst.output()?;
            let terms = apply_circuit_derivative_masked(inst.spec, inst.theta, mu, inst.input, inst.mask)?;
            Ok(terms
                .iter()
                .map(|(a, s)| 2.0 * a * kernel::inner_upper(s.amplitudes(), psi.amplitudes()).re)
                .sum())
        }
        GradientMode::HadamardShots { shots, seed } => {
            let mut z_psi = inst.output()?;
            z_psi.apply_z(0)?;
            let terms = apply_circuit_derivative_masked(inst.spec, inst.theta, mu, inst.input, inst.mask)?;
            let mut total = 0.0;
            for (j, (a, s)) in terms.iter().enumerate() {
                let m = EstimatorMode::shots(shots, seed::derive(seed, &[mu as u64, j as u64]))?;
                total -= a * hadamard_test_states(s, &z_psi, m)?;
            }
            Ok(total)
        }
    }
}

/// `dp/dmu` for every parameter.
pub fn grad_p_all(inst: &Instance, mode: GradientMode) -> Result<Vec<f64>> {
    match mode {
        GradientMode::ExactLCU => adjoint_lcu(inst),
        _ => (0..inst.spec.param_len())
            .into_par_iter()
            .map(|mu| grad_p(inst, mu, mode))
            .collect(),
    }
}

fn direct_single(inst: &Instance, mu: usize) -> Result<f64> {
    let psi = inst.output()?;
    let n = inst.spec.n_qubits();
    let mut total = 0.0;
    for (owner, k) in inst.spec.owners(mu) {
        if inst.skipped(owner) {
            continue;
        }
        let slot = &inst.spec.slots()[owner];
        if !matches!(slot.kind, SlotKind::Single | SlotKind::Controlled) {
            return Err(Error::UnsupportedDerivative(mu));
        }
        let d = analytic_derivative(GateParams::from_slice(slot.params(inst.theta)), ParamAxis::from_offset(k));
        let mut s = inst.input.clone();
        for (i, other) in inst.spec.slots().iter().enumerate() {
            if inst.skipped(i) {
                continue;
            }
            if i == owner {
                other.apply_raw(s.amplitudes_mut(), n, &d, true);
            } else {
                other.apply(&mut s, inst.theta)?;
            }
        }
        total += 2.0 * kernel::inner_upper(s.amplitudes(), psi.amplitudes()).re;
    }
    Ok(total)
}

/// All LCU derivatives in one backward sweep. With `s_k` the state entering
/// slot `k` and `lambda_k = (gates after k)^dagger P1 psi`, the term for a
/// replacement block `B` is `<B s_k | lambda_k>`, so the suffix of the circuit
/// never has to be re-run per term.
fn adjoint_lcu(inst: &Instance) -> Result<Vec<f64>> {
    let psi = inst.output()?;
    let n = inst.spec.n_qubits();
    let mut lambda = psi.clone();
    kernel::zero_where(lambda.amplitudes_mut(), n, 0, false);
    let mut state = psi;
    let mut grad = vec![0.0; inst.spec.param_len()];
    for (i, slot) in inst.spec.slots().iter().enumerate().rev() {
        if inst.skipped(i) {
            continue;
        }
        slot.apply_inverse(&mut state, inst.theta)?;
        for k in 0..slot.width() {
            for term in inst.spec.slot_terms(i, k, inst.theta)? {
                let mut t = state.clone();
                slot.apply_block(&mut t, &term.block())?;
                grad[slot.param_offset + k] += 2.0 * term.coefficient * kernel::inner(t.amplitudes(), lambda.amplitudes()).re;
            }
        }
        slot.apply_inverse(&mut lambda, inst.theta)?;
    }
    Ok(grad)
}

/// `d pi / d b`, which is 1 for every input and mode.
pub fn grad_bias(_c: &Classifier, _x: &[f64]) -> f64 {
    1.0
}

pub fn grad_pi(c: &Classifier, x: &[f64], mu: usize, mode: GradientMode) -> Result<f64> {
    let input = c.encode(x)?;
    grad_p(&Instance::new(&c.spec, &c.theta, &input), mu, mode)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleGradient {
    pub theta: Vec<f64>,
    pub bias: f64,
    /// The continuous output the gradient was evaluated at.
    pub pi: f64,
}

/// Gradient of `(pi - y)^2 / 2` with respect to all parameters and the bias.
pub fn grad_cost_sample(
    c: &Classifier,
    x: &[f64],
    y: f64,
    estimator: EstimatorMode,
    mode: GradientMode,
    mask: Option<&SlotMask>,
) -> Result<SampleGradient> {
    let input = c.encode(x)?;
    let inst = Instance::new(&c.spec, &c.theta, &input).with_mask(mask);
    let pi = estimator.estimate(inst.probability()?) + c.bias;
    let residual = pi - y;
    let dp = grad_p_all(&inst, mode)?;
    Ok(SampleGradient {
        theta: dp.into_iter().map(|g| residual * g).collect(),
        bias: residual,
        pi,
    })
}

/// Central difference of the exact output in parameter `mu`.
pub fn finite_difference_p(inst: &Instance, mu: usize, h: f64) -> Result<f64> {
    inst.check_index(mu)?;
    if h <= 0.0 {
        return Err(Error::Config("finite-difference step must be positive".into()));
    }
    let eval = |delta: f64| {
        let mut theta = inst.theta.to_vec();
        theta[mu] += delta;
        Instance { theta: &theta, ..*inst }.probability()
    };
    Ok((eval(h)? - eval(-h)?) / (2.0 * h))
}

pub fn finite_difference_pi(c: &Classifier, x: &[f64], mu: usize, h: f64) -> Result<f64> {
    let input = c.encode(x)?;
    finite_difference_p(&Instance::new(&c.spec, &c.theta, &input), mu, h)
}

/// Settings of the random-instance comparison between analytic and
/// finite-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ParityConfig {
    pub instances: usize,
    pub min_qubits: usize,
    pub max_qubits: usize,
    pub max_blocks: usize,
    pub seed: u64,
    pub h: f64,
    pub rel_tol: f64,
    pub abs_floor: f64,
    pub mode: GradientMode,
    /// Negate the largest analytic gradient component of every instance; the
    /// check must then fail.
    pub inject_sign_flip: bool,
}

impl Default for ParityConfig {
    fn default() -> Self {
        Self {
            instances: 100,
            min_qubits: 2,
            max_qubits: 6,
            max_blocks: 2,
            seed: 0,
            h: 1e-5,
            rel_tol: 1e-6,
            abs_floor: 1e-8,
            mode: GradientMode::ExactLCU,
            inject_sign_flip: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParityReport {
    pub instances: usize,
    pub parameters: usize,
    pub violations: usize,
    pub max_abs_dev: f64,
    /// Largest `|analytic - fd| / max(|fd|, abs_floor / rel_tol)`.
    pub max_rel_dev: f64,
}

impl ParityReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

pub fn parity_suite(cfg: &ParityConfig) -> Result<ParityReport> {
    use rand::Rng;
    use std::f64::consts::PI;

    if cfg.min_qubits < 2 || cfg.max_qubits < cfg.min_qubits || cfg.max_blocks == 0 {
        return Err(Error::Config("invalid parity suite ranges".into()));
    }
    let results: Vec<(usize, usize, f64, f64)> = (0..cfg.instances)
        .into_par_iter()
        .map(|idx| {
            let mut rng = seed::rng(cfg.seed, &[idx as u64]);
            let n = rng.random_range(cfg.min_qubits..=cfg.max_qubits);
            let blocks = rng.random_range(1..=cfg.max_blocks);
            let ranges: Vec<usize> = (0..blocks).map(|_| rng.random_range(1..n)).collect();
            let spec = crate::circuit::build_architecture(n, &ranges, rng.random_bool(0.5))?;
            let theta: Vec<f64> = (0..spec.param_len()).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            let amps: Vec<Complex64> = (0..1usize << n)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let (input, _) = StateVector::from_amplitudes(amps)?;
            let inst = Instance::new(&spec, &theta, &input);
            let mut analytic = grad_p_all(&inst, cfg.mode.fork(&[idx as u64]))?;
            if cfg.inject_sign_flip {
                let abs: Vec<f64> = analytic.iter().map(|g| g.abs()).collect();
                let mu = crate::model::argmax(&abs);
                analytic[mu] = -analytic[mu];
            }
            let (mut bad, mut max_abs, mut max_rel) = (0, 0.0f64, 0.0f64);
            for (mu, g) in analytic.iter().enumerate() {
                let fd = finite_difference_p(&inst, mu, cfg.h)?;
                let dev = (g - fd).abs();
                if dev > (cfg.rel_tol * fd.abs()).max(cfg.abs_floor) {
                    bad += 1;
                }
                max_abs = max_abs.max(dev);
                max_rel = max_rel.max(dev / fd.abs().max(cfg.abs_floor / cfg.rel_tol));
            }
            Ok((analytic.len(), bad, max_abs, max_rel))
        })
        .collect::<Result<_>>()?;
    Ok(ParityReport {
        instances: cfg.instances,
        parameters: results.iter().map(|r| r.0).sum(),
        violations: results.iter().map(|r| r.1).sum(),
        max_abs_dev: results.iter().map(|r| r.2).fold(0.0, f64::max),
        max_rel_dev: results.iter().map(|r| r.3).fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_architecture, GateSlot};
    use crate::encoding::Preprocessor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_state(n: usize, rng: &mut ChaCha8Rng) -> StateVector {
        let v: Vec<Complex64> = (0..1 << n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        StateVector::from_amplitudes(v).unwrap().0
    }

    fn random_theta(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..len).map(|_| rng.random_range(0.0..2.0 * PI)).collect()
    }

    #[test]
    fn single_gate_closed_form() {
        let spec = build_architecture(1, &[], true).unwrap();
        let c = |alpha| Classifier::new(spec.clone(), vec![alpha, 0.3, 1.7], 0.0, Preprocessor::zero_padded(2).unwrap()).unwrap();
        for alpha in [0.0f64, 0.2, 0.9, 1.6, 2.5, 4.0] {
            let expect = (2.0 * alpha).sin();
            for mode in [GradientMode::DirectOracle, GradientMode::ExactLCU] {
                let g = grad_pi(&c(alpha), &[1.0, 0.0], 0, mode).unwrap();
                assert!((g - expect).abs() < 1e-12, "{mode:?}");
            }
            let fd = finite_difference_pi(&c(alpha), &[1.0, 0.0], 0, 1e-5).unwrap();
            assert!((fd - expect).abs() < 1e-8);
        }
    }

    #[test]
    fn modes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in 2..=4 {
            let spec = build_architecture(n, &[1, n - 1], true).unwrap();
            let theta = random_theta(spec.param_len(), &mut rng);
            let input = random_state(n, &mut rng);
            let inst = Instance::new(&spec, &theta, &input);
            let adjoint = grad_p_all(&inst, GradientMode::ExactLCU).unwrap();
            let direct = grad_p_all(&inst, GradientMode::DirectOracle).unwrap();
            for mu in 0..spec.param_len() {
                let single = grad_p(&inst, mu, GradientMode::ExactLCU).unwrap();
                assert!((single - adjoint[mu]).abs() < 1e-12);
                assert!((direct[mu] - adjoint[mu]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn shots_mode_is_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let spec = build_architecture(3, &[1], true).unwrap();
        let theta = random_theta(spec.param_len(), &mut rng);
        let input = random_state(3, &mut rng);
        let inst = Instance::new(&spec, &theta, &input);
        let exact = grad_p_all(&inst, GradientMode::ExactLCU).unwrap();
        let shots = 100_000;
        let est = grad_p_all(&inst, GradientMode::HadamardShots { shots, seed: 4 }).unwrap();
        let bound = 5.0 / (shots as f64).sqrt() * 4.0;
        for (a, b) in exact.iter().zip(&est) {
            assert!((a - b).abs() < bound, "{a} vs {b}");
        }
        let again = grad_p_all(&inst, GradientMode::HadamardShots { shots, seed: 4 }).unwrap();
        assert_eq!(est, again);
    }

    #[test]
    fn masked_gradient_matches_masked_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let spec = build_architecture(3, &[1], true).unwrap();
        let theta = random_theta(spec.param_len(), &mut rng);
        let input = random_state(3, &mut rng);
        let mask: Vec<bool> = spec.slots().iter().map(|s| s.touches(1)).collect();
        let inst = Instance::new(&spec, &theta, &input).with_mask(Some(&mask));
        let g = grad_p_all(&inst, GradientMode::ExactLCU).unwrap();
        for (mu, gm) in g.iter().enumerate() {
            let fd = finite_difference_p(&inst, mu, 1e-5).unwrap();
            assert!((gm - fd).abs() < 1e-8);
            let owner_masked = spec.owners(mu).iter().all(|(i, _)| mask[*i]);
            if owner_masked {
                assert_eq!(*gm, 0.0);
            }
        }
    }

    #[test]
    fn tied_parameters_sum() {
        let slots = vec![GateSlot::single(0, 0), GateSlot::controlled(0, 1, 3), GateSlot::single(1, 0)];
        let spec = CircuitSpec::new(2, slots, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let theta = random_theta(6, &mut rng);
        let input = random_state(2, &mut rng);
        let inst = Instance::new(&spec, &theta, &input);
        let g = grad_p_all(&inst, GradientMode::ExactLCU).unwrap();
        let d = grad_p_all(&inst, GradientMode::DirectOracle).unwrap();
        for mu in 0..6 {
            let fd = finite_difference_p(&inst, mu, 1e-5).unwrap();
            assert!((g[mu] - fd).abs() < 1e-8);
            assert!((d[mu] - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn cost_gradient_examples() {
        let spec = build_architecture(1, &[], true).unwrap();
        let alpha = 0.4f64;
        let c = Classifier::new(spec, vec![alpha, 0.0, 0.0], 0.0, Preprocessor::zero_padded(2).unwrap()).unwrap();
        let p = alpha.sin().powi(2);
        let g = grad_cost_sample(&c, &[1.0, 0.0], p, EstimatorMode::Exact, GradientMode::ExactLCU, None).unwrap();
        assert!(g.theta.iter().all(|v| v.abs() < 1e-15) && g.bias.abs() < 1e-15);
        let g = grad_cost_sample(&c, &[1.0, 0.0], 0.0, EstimatorMode::Exact, GradientMode::ExactLCU, None).unwrap();
        assert!((g.theta[0] - p * (2.0 * alpha).sin()).abs() < 1e-12);
        assert!((g.bias - p).abs() < 1e-15);
        assert_eq!(grad_bias(&c, &[1.0, 0.0]), 1.0);
    }

    #[test]
    fn cost_gradient_matches_fd_of_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        for n in 2..=5 {
            let spec = build_architecture(n, &[1], true).unwrap();
            let theta = random_theta(spec.param_len(), &mut rng);
            let mut c = Classifier::new(spec, theta, 0.1, Preprocessor::zero_padded(1 << n).unwrap()).unwrap();
            let x: Vec<f64> = (0..1 << n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = 1.0;
            let g = grad_cost_sample(&c, &x, y, EstimatorMode::Exact, GradientMode::ExactLCU, None).unwrap();
            let h = 1e-5;
            let cost = |c: &Classifier| {
                let pi = crate::model::continuous_output(c, &x, EstimatorMode::Exact).unwrap().pi;
                0.5 * (pi - y).powi(2)
            };
            for mu in 0..c.theta.len() {
                let orig = c.theta[mu];
                c.theta[mu] = orig + h;
                let up = cost(&c);
                c.theta[mu] = orig - h;
                let down = cost(&c);
                c.theta[mu] = orig;
                let fd = (up - down) / (2.0 * h);
                assert!((g.theta[mu] - fd).abs() <= (1e-6 * fd.abs()).max(1e-8));
            }
        }
    }

    #[test]
    fn invalid_index() {
        let spec = build_architecture(2, &[1], false).unwrap();
        let theta = vec![0.1; spec.param_len()];
        let input = StateVector::ground(2).unwrap();
        let inst = Instance::new(&spec, &theta, &input);
        for mode in [GradientMode::DirectOracle, GradientMode::ExactLCU] {
            assert!(matches!(grad_p(&inst, spec.param_len(), mode), Err(Error::InvalidParamIndex { .. })));
        }
    }

    #[test]
    fn parity_suite_detects_sign_flip() {
        let cfg = ParityConfig {
            instances: 10,
            max_qubits: 4,
            ..ParityConfig::default()
        };
        assert!(parity_suite(&cfg).unwrap().passed());
        let flipped = ParityConfig {
            inject_sign_flip: true,
            ..cfg
        };
        assert!(!parity_suite(&flipped).unwrap().passed());
    }
}
