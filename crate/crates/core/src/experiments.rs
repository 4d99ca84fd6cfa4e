//! Robustness experiments: random perturbations of trained parameters or of
//! test inputs, and the worst-case bound on how parameter errors propagate to
//! the output state.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::CircuitSpec;
use crate::data::{ensemble_predict, misclassification_rate, Dataset, Summary, TaskModel};
use crate::error::{Error, Result};
use crate::model::EstimatorMode;
use crate::seed;
use crate::statevec::StateVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseTarget {
    Parameters,
    Inputs,
}

/// Shape of the relative perturbation `value * (1 + level * u)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NoiseDistribution {
    /// `u` uniform in `[-1, 1]`.
    #[default]
    Uniform,
    /// `u` standard normal.
    Gaussian,
}

impl NoiseDistribution {
    fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Self::Uniform => rng.random_range(-1.0..=1.0),
            Self::Gaussian => StandardNormal.sample(rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub level: f64,
    pub target: NoiseTarget,
    pub trials: usize,
    pub seed: u64,
    pub distribution: NoiseDistribution,
}

/// Multiply every value by `1 + level * u_i` with independent `u_i`.
pub fn perturb<R: Rng + ?Sized>(values: &[f64], level: f64, dist: NoiseDistribution, rng: &mut R) -> Vec<f64> {
    values.iter().map(|v| v * (1.0 + level * dist.draw(rng))).collect()
}

pub fn perturb_parameters<R: Rng + ?Sized>(theta: &[f64], level: f64, rng: &mut R) -> Vec<f64> {
    perturb(theta, level, NoiseDistribution::Uniform, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub level: f64,
    pub target: NoiseTarget,
    pub baseline_error: f64,
    pub trial_errors: Vec<f64>,
    /// Per trial `(e - e0) / e0`, or `e - e0` when `e0 = 0`.
    pub impacts: Vec<f64>,
    /// False when the baseline error was zero and impacts are absolute.
    pub relative: bool,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub min: f64,
}

impl NoiseReport {
    fn new(spec: &NoiseSpec, baseline_error: f64, trial_errors: Vec<f64>) -> Self {
        let relative = baseline_error > 0.0;
        let impacts: Vec<f64> = trial_errors
            .iter()
            .map(|e| if relative { (e - baseline_error) / baseline_error } else { e - baseline_error })
            .collect();
        let s = Summary::of(&impacts);
        Self {
            level: spec.level,
            target: spec.target,
            baseline_error,
            max: impacts.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min: impacts.iter().copied().fold(f64::INFINITY, f64::min),
            mean: s.mean,
            std: s.std,
            trial_errors,
            impacts,
            relative,
        }
    }
}

fn test_error(models: &[TaskModel], test: &Dataset, inputs: &[Vec<f64>], m: EstimatorMode) -> Result<f64> {
    let preds = inputs
        .iter()
        .enumerate()
        .map(|(i, x)| ensemble_predict(models, x, m.fork(&[i as u64])))
        .collect::<Result<Vec<usize>>>()?;
    misclassification_rate(&preds, test.labels())
}

/// Test error of the trained ensemble under `spec.trials` independent
/// perturbations of either its parameters or the test inputs.
pub fn noise_sweep(models: &[TaskModel], test: &Dataset, spec: &NoiseSpec, m: EstimatorMode) -> Result<NoiseReport> {
    if !(spec.level >= 0.0 && spec.level.is_finite()) {
        return Err(Error::Config("noise level must be non-negative".into()));
    }
    if spec.trials == 0 {
        return Err(Error::Config("need at least one trial".into()));
    }
    let baseline = test_error(models, test, test.features(), m)?;
    let trial_errors = (0..spec.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = seed::rng(spec.seed, &[trial as u64]);
            match spec.target {
                NoiseTarget::Parameters => {
                    let noisy: Vec<TaskModel> = models
                        .iter()
                        .map(|t| {
                            let mut t = t.clone();
                            t.classifier.theta = perturb(&t.classifier.theta, spec.level, spec.distribution, &mut rng);
                            t
                        })
                        .collect();
                    test_error(&noisy, test, test.features(), m)
                }
                NoiseTarget::Inputs => {
                    let inputs: Vec<Vec<f64>> = test
                        .features()
                        .iter()
                        .map(|x| perturb(x, spec.level, spec.distribution, &mut rng))
                        .collect();
                    test_error(models, test, &inputs, m)
                }
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(NoiseReport::new(spec, baseline, trial_errors))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub delta: f64,
    pub gates: usize,
    pub bound: f64,
    pub trials: usize,
    pub max_deviation: f64,
    pub max_ratio: f64,
    pub violations: usize,
}

/// Perturb every parameter by at most `delta` (absolute, uniform) and compare
/// `|psi' - psi|` on random inputs against `4 L delta`, `L` being the number
/// of parametrized gates.
pub fn propagation_bound_check(
    spec: &CircuitSpec,
    theta: &[f64],
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<BoundReport> {
    if !(0.0..=1e-2).contains(&delta) {
        return Err(Error::Config("delta must lie in [0, 1e-2]".into()));
    }
    let n = spec.n_qubits();
    let gates = spec.gate_count();
    let bound = 4.0 * gates as f64 * delta;
    let deviations = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed, &[t as u64]);
            let amps = (0..1usize << n)
                .map(|_| num_complex::Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let (input, _) = StateVector::from_amplitudes(amps)?;
            let noisy: Vec<f64> = theta.iter().map(|v| v + delta * rng.random_range(-1.0..=1.0)).collect();
            let a = crate::circuit::apply_circuit(spec, theta, &input)?;
            let b = crate::circuit::apply_circuit(spec, &noisy, &input)?;
            let d: f64 = a
                .amplitudes()
                .iter()
                .zip(b.amplitudes())
                .map(|(x, y)| (x - y).norm_sqr())
                .sum::<f64>()
                .sqrt();
            Ok(d)
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_deviation = deviations.iter().copied().fold(0.0, f64::max);
    Ok(BoundReport {
        delta,
        gates,
        bound,
        trials,
        max_deviation,
        max_ratio: if bound > 0.0 { max_deviation / bound } else { 0.0 },
        violations: deviations.iter().filter(|&&d| d > bound).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::build_architecture;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perturbation_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let theta: Vec<f64> = (0..100).map(|i| i as f64 * 0.1 - 3.0).collect();
        assert_eq!(perturb_parameters(&theta, 0.0, &mut rng), theta);
        let noisy = perturb_parameters(&theta, 0.1, &mut rng);
        for (a, b) in theta.iter().zip(&noisy) {
            assert!((a - b).abs() <= 0.1 * a.abs() + 1e-15);
        }
        let ones = vec![1.0; 10_000];
        let drawn = perturb(&ones, 1.0, NoiseDistribution::Uniform, &mut rng);
        let mean = drawn.iter().map(|v| v - 1.0).sum::<f64>() / 10_000.0;
        // std of U[-1,1] is 1/sqrt 3; 4 sigma of the mean
        assert!(mean.abs() < 4.0 / (3.0f64.sqrt() * 100.0));
    }

    #[test]
    fn report_statistics() {
        let spec = NoiseSpec {
            level: 0.1,
            target: NoiseTarget::Parameters,
            trials: 3,
            seed: 0,
            distribution: NoiseDistribution::Uniform,
        };
        let r = NoiseReport::new(&spec, 0.1, vec![0.1, 0.2, 0.15]);
        assert!(r.relative);
        assert!((r.mean - 0.5).abs() < 1e-12);
        assert!((r.max - 1.0).abs() < 1e-12 && r.min.abs() < 1e-12);
        let r = NoiseReport::new(&spec, 0.0, vec![0.0, 0.1]);
        assert!(!r.relative);
        assert_eq!(r.impacts, vec![0.0, 0.1]);
    }

    #[test]
    fn bound_holds() {
        let spec = build_architecture(8, &[1, 3], true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let theta: Vec<f64> = (0..spec.param_len()).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        let r = propagation_bound_check(&spec, &theta, 1e-4, 10, 3).unwrap();
        assert_eq!(r.violations, 0);
        assert!((r.bound - 4.0 * 33.0 * 1e-4).abs() < 1e-15);
        let zero = propagation_bound_check(&spec, &theta, 0.0, 3, 3).unwrap();
        assert_eq!(zero.max_deviation, 0.0);
        assert!(propagation_bound_check(&spec, &theta, 0.5, 1, 0).is_err());
    }
}
