//! The classifier: encode, run the circuit, read qubit 0, add the bias and
//! threshold.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::circuit::{CircuitSpec, SlotMask};
use crate::encoding::{encode, Preprocessor};
use crate::error::{Error, Result};
use crate::matrix::Mat2;
use crate::seed;
use crate::statevec::StateVector;

/// How output probabilities are obtained from a simulated state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatorMode {
    Exact,
    /// Mean of `shots` projective measurements drawn from a generator seeded
    /// with `seed`.
    Shots { shots: u64, seed: u64 },
}

impl EstimatorMode {
    pub fn shots(shots: u64, seed: u64) -> Result<Self> {
        if shots == 0 {
            return Err(Error::Config("shot count must be positive".into()));
        }
        Ok(Self::Shots { shots, seed })
    }

    /// Same mode with the seed replaced by the stream derived at `path`.
    pub fn fork(self, path: &[u64]) -> Self {
        match self {
            Self::Exact => Self::Exact,
            Self::Shots { shots, seed } => Self::Shots {
                shots,
                seed: seed::derive(seed, path),
            },
        }
    }

    /// Estimate an outcome probability `p`.
    pub fn estimate(self, p: f64) -> f64 {
        match self {
            Self::Exact => p,
            Self::Shots { shots, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let hits = Binomial::new(shots, p.clamp(0.0, 1.0))
                    .expect("probability clamped to [0, 1]")
                    .sample(&mut rng);
                hits as f64 / shots as f64
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub p: f64,
    pub pi: f64,
    pub label: u8,
}

impl Prediction {
    fn new(p: f64, bias: f64) -> Self {
        let pi = p + bias;
        Self {
            p,
            pi,
            label: u8::from(pi > 0.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub spec: CircuitSpec,
    pub theta: Vec<f64>,
    pub bias: f64,
    pub preprocessor: Preprocessor,
}

impl Classifier {
    pub fn new(spec: CircuitSpec, theta: Vec<f64>, bias: f64, preprocessor: Preprocessor) -> Result<Self> {
        if theta.len() != spec.param_len() {
            return Err(Error::ParamLength {
                expected: spec.param_len(),
                found: theta.len(),
            });
        }
        if spec.n_qubits() != preprocessor.n_qubits() {
            return Err(Error::DimensionMismatch {
                expected: preprocessor.n_qubits(),
                found: spec.n_qubits(),
            });
        }
        Ok(Self {
            spec,
            theta,
            bias,
            preprocessor,
        })
    }

    pub fn encode(&self, x: &[f64]) -> Result<StateVector> {
        Ok(encode(x, &self.preprocessor)?.state)
    }

    /// `U_theta phi(x)`, skipping masked slots.
    pub fn output_state(&self, x: &[f64], mask: Option<&SlotMask>) -> Result<StateVector> {
        let mut s = self.encode(x)?;
        self.spec.run(&self.theta, &mut s, mask)?;
        Ok(s)
    }

    pub fn predict(&self, x: &[f64], m: EstimatorMode) -> Result<Prediction> {
        continuous_output(self, x, m)
    }
}

pub fn continuous_output(c: &Classifier, x: &[f64], m: EstimatorMode) -> Result<Prediction> {
    continuous_output_masked(c, x, m, None)
}

pub fn continuous_output_masked(
    c: &Classifier,
    x: &[f64],
    m: EstimatorMode,
    mask: Option<&SlotMask>,
) -> Result<Prediction> {
    let s = c.output_state(x, mask)?;
    Ok(Prediction::new(m.estimate(s.prob_qubit_one(0)?), c.bias))
}

/// Output computed through the expectation of Z on qubit 0, using
/// `p(q0 = 1) = (1 - <Z>) / 2`.
pub fn sigma_z_output(c: &Classifier, x: &[f64]) -> Result<f64> {
    let s = c.output_state(x, None)?;
    let half = s.amplitudes().len() / 2;
    let expectation: f64 = s
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(i, a)| if i < half { a.norm_sqr() } else { -a.norm_sqr() })
        .sum();
    Ok((1.0 - expectation) / 2.0 + c.bias)
}

/// `Re<A|B>` from the interference of `(|0>|A> + |1>|B>)/sqrt 2` after a
/// Hadamard on the ancilla: `Re<A|B> = 2 p(ancilla = 0) - 1`.
pub fn hadamard_test_states(a: &StateVector, b: &StateVector, m: EstimatorMode) -> Result<f64> {
    if a.n_qubits() != b.n_qubits() {
        return Err(Error::DimensionMismatch {
            expected: a.n_qubits(),
            found: b.n_qubits(),
        });
    }
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let joined: Vec<_> = a
        .amplitudes()
        .iter()
        .chain(b.amplitudes())
        .map(|z| z * scale)
        .collect();
    let (mut state, _) = StateVector::from_amplitudes(joined)?;
    let h = Mat2::new(1.0.into(), 1.0.into(), 1.0.into(), (-1.0).into()).scale(scale.into());
    state.apply_single(&h, 0)?;
    let p0 = m.estimate(state.prob_qubit_zero(0)?);
    Ok(2.0 * p0 - 1.0)
}

/// Hadamard test between `U_a input` and `U_b input`.
pub fn hadamard_test(
    a: (&CircuitSpec, &[f64]),
    b: (&CircuitSpec, &[f64]),
    input: &StateVector,
    m: EstimatorMode,
) -> Result<f64> {
    if a.0.n_qubits() != b.0.n_qubits() {
        return Err(Error::DimensionMismatch {
            expected: a.0.n_qubits(),
            found: b.0.n_qubits(),
        });
    }
    let sa = crate::circuit::apply_circuit(a.0, a.1, input)?;
    let sb = crate::circuit::apply_circuit(b.0, b.1, input)?;
    hadamard_test_states(&sa, &sb, m)
}

/// Class index from an ensemble of one-vs-all classifiers: the argmax of the
/// continuous outputs, ties going to the lowest index. A lone binary
/// classifier maps label 1 to class 0 and label 0 to class 1.
pub fn predict_multiclass(ensemble: &[Classifier], x: &[f64], m: EstimatorMode) -> Result<usize> {
    match ensemble {
        [] => Err(Error::EmptyEnsemble),
        [single] => Ok(if single.predict(x, m)?.label == 1 { 0 } else { 1 }),
        _ => {
            let outputs = ensemble
                .iter()
                .enumerate()
                .map(|(k, c)| Ok(c.predict(x, m.fork(&[k as u64]))?.pi))
                .collect::<Result<Vec<f64>>>()?;
            Ok(argmax(&outputs))
        }
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
