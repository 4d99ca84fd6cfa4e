//! Amplitude encoding of real feature vectors.
//!
//! A feature vector of dimension `N` is padded to a power of two `N'`, scaled
//! to unit norm and used directly as the amplitudes of a `log2 N'`-qubit
//! state. With `pad_value = 0` the padding is plain zero extension. Any other
//! pad value switches to constant mode, which always appends at least one
//! constant (so `N' = next_pow2(N + 1)`), making the encoding sensitive to the
//! overall scale of `x`. Optionally the state is replaced by its `d`-fold
//! tensor power.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statevec::{max_qubits, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub input_dim: usize,
    pub pad_value: f64,
    pub copies: usize,
}

impl Preprocessor {
    pub fn new(input_dim: usize, pad_value: f64, copies: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Config("input dimension must be positive".into()));
        }
        if copies == 0 {
            return Err(Error::Config("copies must be at least 1".into()));
        }
        if !pad_value.is_finite() {
            return Err(Error::Config("pad value must be finite".into()));
        }
        let p = Self {
            input_dim,
            pad_value,
            copies,
        };
        let requested = p.n_qubits();
        if requested > max_qubits() {
            return Err(Error::Capacity {
                requested,
                max: max_qubits(),
            });
        }
        Ok(p)
    }

    pub fn zero_padded(input_dim: usize) -> Result<Self> {
        Self::new(input_dim, 0.0, 1)
    }

    pub fn padded_dim(&self) -> usize {
        let dim = if self.pad_value == 0.0 {
            self.input_dim.next_power_of_two()
        } else {
            (self.input_dim + 1).next_power_of_two()
        };
        dim.max(2)
    }

    pub fn qubits_per_copy(&self) -> usize {
        self.padded_dim().trailing_zeros() as usize
    }

    pub fn n_qubits(&self) -> usize {
        self.copies * self.qubits_per_copy()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedInput {
    pub state: StateVector,
    pub chi: f64,
}

fn check_dim(x: &[f64], p: &Preprocessor) -> Result<()> {
    if x.len() != p.input_dim {
        return Err(Error::DimensionMismatch {
            expected: p.input_dim,
            found: x.len(),
        });
    }
    Ok(())
}

/// Padded and normalized feature vector, together with the scale `chi`.
fn padded(x: &[f64], p: &Preprocessor) -> Result<(Vec<f64>, f64)> {
    check_dim(x, p)?;
    let mut v = x.to_vec();
    v.resize(p.padded_dim(), p.pad_value);
    let norm_sq: f64 = v.iter().map(|a| a * a).sum();
    if !norm_sq.is_finite() {
        return Err(Error::Config("non-finite feature value".into()));
    }
    if norm_sq == 0.0 {
        return Err(Error::ZeroVector);
    }
    let chi = 1.0 / norm_sq.sqrt();
    v.iter_mut().for_each(|a| *a *= chi);
    Ok((v, chi))
}

pub fn preprocess(x: &[f64], p: &Preprocessor) -> Result<Vec<f64>> {
    padded(x, p).map(|(v, _)| v)
}

pub fn encode(x: &[f64], p: &Preprocessor) -> Result<EncodedInput> {
    let (v, chi) = padded(x, p)?;
    let amps = v.iter().map(|&a| Complex64::new(a, 0.0)).collect();
    let (state, _) = StateVector::from_amplitudes(amps)?;
    let state = tensorial(&state, p.copies)?;
    Ok(EncodedInput { state, chi })
}

/// `d`-fold Kronecker power; the first copy occupies the most significant
/// qubits.
pub fn tensorial(s: &StateVector, d: usize) -> Result<StateVector> {
    if d == 0 {
        return Err(Error::Config("copies must be at least 1".into()));
    }
    let requested = d * s.n_qubits();
    if requested > max_qubits() {
        return Err(Error::Capacity {
            requested,
            max: max_qubits(),
        });
    }
    let base = s.amplitudes();
    let mut out = base.to_vec();
    for _ in 1..d {
        out = out.iter().flat_map(|&a| base.iter().map(move |&b| a * b)).collect();
    }
    Ok(StateVector::from_amplitudes(out)?.0)
}
