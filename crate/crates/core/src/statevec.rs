//! Dense statevector of an n-qubit register and the gate kernels acting on it.
//!
//! Qubit 0 is the most significant bit of the basis-state index, so the
//! amplitudes where qubit 0 reads 1 are the contiguous upper half of the
//! vector. Gates are applied in place by pairwise updates over strided
//! amplitude pairs; the full 2^n x 2^n operator is never built.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::{Mat2, ONE, ZERO};

pub const DEFAULT_MAX_QUBITS: usize = 24;

/// Norm tolerance used for the unit-norm invariant.
pub const NORM_TOL: f64 = 1e-10;

/// Qubit cap, `QVC_MAX_QUBITS` if set, otherwise 24.
pub fn max_qubits() -> usize {
    static CAP: OnceLock<usize> = OnceLock::new();
    *CAP.get_or_init(|| {
        std::env::var("QVC_MAX_QUBITS")
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .filter(|&v| v >= 1)
            .unwrap_or(DEFAULT_MAX_QUBITS)
    })
}

fn check_capacity(n: usize) -> Result<()> {
    let max = max_qubits();
    if n == 0 || n > max {
        return Err(Error::Capacity { requested: n, max });
    }
    Ok(())
}

/// Bit mask of qubit `q` in an `n`-qubit register.
#[inline]
pub fn qubit_mask(n: usize, q: usize) -> usize {
    1 << (n - 1 - q)
}

/// Raw kernels over amplitude buffers. They assume validated qubit indices and
/// perform no unitarity checks, so they also serve non-unitary operators such
/// as gate derivatives.
pub mod kernel {
    use super::*;

    pub fn apply_1q(amps: &mut [Complex64], n: usize, g: &Mat2, target: usize) {
        let stride = qubit_mask(n, target);
        let [[g00, g01], [g10, g11]] = g.0;
        for base in (0..amps.len()).step_by(2 * stride) {
            for i in base..base + stride {
                let j = i + stride;
                let (a, b) = (amps[i], amps[j]);
                amps[i] = g00 * a + g01 * b;
                amps[j] = g10 * a + g11 * b;
            }
        }
    }

    pub fn apply_controlled_1q(
        amps: &mut [Complex64],
        n: usize,
        g: &Mat2,
        control: usize,
        target: usize,
    ) {
        let cmask = qubit_mask(n, control);
        let stride = qubit_mask(n, target);
        let [[g00, g01], [g10, g11]] = g.0;
        for base in (0..amps.len()).step_by(2 * stride) {
            for i in base..base + stride {
                if i & cmask == 0 {
                    continue;
                }
                let j = i + stride;
                let (a, b) = (amps[i], amps[j]);
                amps[i] = g00 * a + g01 * b;
                amps[j] = g10 * a + g11 * b;
            }
        }
    }

    pub fn apply_controlled_phase(amps: &mut [Complex64], n: usize, phi: f64, a: usize, b: usize) {
        let both = qubit_mask(n, a) | qubit_mask(n, b);
        let phase = Complex64::from_polar(1.0, phi);
        for (i, amp) in amps.iter_mut().enumerate() {
            if i & both == both {
                *amp *= phase;
            }
        }
    }

    /// Zero every amplitude whose bit for `q` equals `bit`.
    pub fn zero_where(amps: &mut [Complex64], n: usize, q: usize, bit: bool) {
        let mask = qubit_mask(n, q);
        for (i, amp) in amps.iter_mut().enumerate() {
            if (i & mask != 0) == bit {
                *amp = ZERO;
            }
        }
    }

    /// Multiply amplitudes with qubit `q` set by -1 (Pauli Z on `q`).
    pub fn apply_z(amps: &mut [Complex64], n: usize, q: usize) {
        let mask = qubit_mask(n, q);
        for (i, amp) in amps.iter_mut().enumerate() {
            if i & mask != 0 {
                *amp = -*amp;
            }
        }
    }

    pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
    }

    /// `<a| P |b>` where P projects onto qubit 0 = 1 (upper half).
    pub fn inner_upper(a: &[Complex64], b: &[Complex64]) -> Complex64 {
        let half = a.len() / 2;
        inner(&a[half..], &b[half..])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// The all-zeros basis state |0...0>.
    pub fn ground(n: usize) -> Result<Self> {
        check_capacity(n)?;
        let mut amps = vec![ZERO; 1 << n];
        amps[0] = ONE;
        Ok(Self { n_qubits: n, amps })
    }

    /// Basis state |index> of an `n`-qubit register.
    pub fn basis(n: usize, index: usize) -> Result<Self> {
        let mut s = Self::ground(n)?;
        if index >= s.amps.len() {
            return Err(Error::DimensionMismatch {
                expected: s.amps.len(),
                found: index,
            });
        }
        s.amps[0] = ZERO;
        s.amps[index] = ONE;
        Ok(s)
    }

    /// Wrap an amplitude vector, renormalizing it to unit length. The flag is
    /// true when renormalization moved some amplitude by more than 1e-10.
    pub fn from_amplitudes(mut amps: Vec<Complex64>) -> Result<(Self, bool)> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(len));
        }
        let n = len.trailing_zeros() as usize;
        check_capacity(n)?;
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroVector);
        }
        let mut changed = false;
        for a in amps.iter_mut() {
            let scaled = *a / norm;
            changed |= (scaled - *a).norm() > NORM_TOL;
            *a = scaled;
        }
        Ok((Self { n_qubits: n, amps }, changed))
    }

    pub fn from_real(values: &[f64]) -> Result<(Self, bool)> {
        Self::from_amplitudes(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    /// Mutable access to the buffer. Callers may leave the vector unnormalized
    /// (derivative states); the gate methods do not check the norm.
    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.n_qubits {
            return Err(Error::QubitOutOfRange {
                qubit: q,
                n_qubits: self.n_qubits,
            });
        }
        Ok(())
    }

    fn check_pair(&self, a: usize, b: usize) -> Result<()> {
        self.check_qubit(a)?;
        self.check_qubit(b)?;
        if a == b {
            return Err(Error::SameQubit(a));
        }
        Ok(())
    }

    fn check_unitary(g: &Mat2) -> Result<()> {
        if cfg!(debug_assertions) {
            let defect = g.unitarity_defect();
            if defect > NORM_TOL || !defect.is_finite() {
                return Err(Error::NonUnitary(defect));
            }
        }
        Ok(())
    }

    pub fn apply_single(&mut self, g: &Mat2, target: usize) -> Result<()> {
        self.check_qubit(target)?;
        Self::check_unitary(g)?;
        kernel::apply_1q(&mut self.amps, self.n_qubits, g, target);
        Ok(())
    }

    pub fn apply_controlled(&mut self, g: &Mat2, control: usize, target: usize) -> Result<()> {
        self.check_pair(control, target)?;
        Self::check_unitary(g)?;
        kernel::apply_controlled_1q(&mut self.amps, self.n_qubits, g, control, target);
        Ok(())
    }

    /// Phase e^{i phi} on basis states where both `a` and `b` read 1.
    pub fn apply_controlled_phase(&mut self, phi: f64, a: usize, b: usize) -> Result<()> {
        self.check_pair(a, b)?;
        kernel::apply_controlled_phase(&mut self.amps, self.n_qubits, phi, a, b);
        Ok(())
    }

    pub fn apply_z(&mut self, q: usize) -> Result<()> {
        self.check_qubit(q)?;
        kernel::apply_z(&mut self.amps, self.n_qubits, q);
        Ok(())
    }

    /// Multiply every amplitude by e^{i phi}.
    pub fn apply_global_phase(&mut self, phi: f64) {
        let phase = Complex64::from_polar(1.0, phi);
        self.amps.iter_mut().for_each(|a| *a *= phase);
    }

    pub fn prob_qubit_one(&self, q: usize) -> Result<f64> {
        self.check_qubit(q)?;
        let mask = qubit_mask(self.n_qubits, q);
        let p: f64 = self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        Ok(p.clamp(0.0, 1.0))
    }

    pub fn prob_qubit_zero(&self, q: usize) -> Result<f64> {
        self.check_qubit(q)?;
        let mask = qubit_mask(self.n_qubits, q);
        let p: f64 = self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask == 0)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        Ok(p.clamp(0.0, 1.0))
    }

    /// `<self|other>`, conjugating `self`.
    pub fn inner_product(&self, other: &StateVector) -> Result<Complex64> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.n_qubits,
                found: other.n_qubits,
            });
        }
        Ok(kernel::inner(&self.amps, &other.amps))
    }

    /// `|<self|other>|`; 1 exactly when the states agree up to global phase.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner_product(other)?.norm())
    }

    /// One projective measurement of qubit `q`; true means outcome 1.
    pub fn sample_qubit<R: Rng + ?Sized>(&self, q: usize, rng: &mut R) -> Result<bool> {
        let p = self.prob_qubit_one(q)?;
        Ok(rng.random::<f64>() < p)
    }

    /// Eigenvalues (descending) of the reduced density matrix on `subset`.
    pub fn reduced_density_eigenvalues(&self, subset: &[usize]) -> Result<Vec<f64>> {
        if subset.len() > 12 {
            return Err(Error::SubsetTooLarge(subset.len()));
        }
        for (i, &q) in subset.iter().enumerate() {
            self.check_qubit(q)?;
            if subset[..i].contains(&q) {
                return Err(Error::SameQubit(q));
            }
        }
        let n = self.n_qubits;
        let k = subset.len();
        let rest: Vec<usize> = (0..n).filter(|q| !subset.contains(q)).collect();
        let dim = 1usize << k;
        let rest_dim = 1usize << rest.len();

        // amplitude laid out as a (dim x rest_dim) matrix psi[s][r]
        let mut psi = vec![ZERO; dim * rest_dim];
        for (idx, amp) in self.amps.iter().enumerate() {
            let bit = |q: usize| (idx >> (n - 1 - q)) & 1;
            let s = subset.iter().fold(0, |acc, &q| (acc << 1) | bit(q));
            let r = rest.iter().fold(0, |acc, &q| (acc << 1) | bit(q));
            psi[s * rest_dim + r] = *amp;
        }
        let rho = DMatrix::from_fn(dim, dim, |i, j| {
            kernel::inner(
                &psi[j * rest_dim..(j + 1) * rest_dim],
                &psi[i * rest_dim..(i + 1) * rest_dim],
            )
        });
        let mut eig: Vec<f64> = rho
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .map(|&v| v.max(0.0))
            .collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        Ok(eig)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{gate_matrix, GateParams};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn assert_amps(s: &StateVector, expected: &[Complex64], tol: f64) {
        assert_eq!(s.amplitudes().len(), expected.len());
        for (a, e) in s.amplitudes().iter().zip(expected) {
            assert!((a - e).norm() <= tol, "{a} vs {e}");
        }
    }

    #[test]
    fn ground_states() {
        assert_amps(&StateVector::ground(2).unwrap(), &[ONE, ZERO, ZERO, ZERO], 0.0);
        assert_amps(&StateVector::ground(1).unwrap(), &[ONE, ZERO], 0.0);
        let s = StateVector::ground(4).unwrap();
        assert_eq!(s.amplitudes().len(), 16);
        assert_eq!(s.amplitudes()[0], ONE);
        assert!(matches!(StateVector::ground(0), Err(Error::Capacity { .. })));
        assert!(matches!(
            StateVector::ground(max_qubits() + 1),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn from_amplitudes_renormalizes() {
        let (s, changed) = StateVector::from_real(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(!changed);
        assert_amps(&s, &[ONE, ZERO, ZERO, ZERO], 0.0);

        let (s, changed) = StateVector::from_real(&[2.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(changed);
        assert_amps(&s, &[ONE, ZERO, ZERO, ZERO], 0.0);

        let (s, _) = StateVector::from_real(&[1.0; 4]).unwrap();
        assert_amps(&s, &[c(0.5, 0.0); 4], 1e-15);

        assert_eq!(
            StateVector::from_real(&[1.0, 2.0, 3.0]).unwrap_err(),
            Error::NotPowerOfTwo(3)
        );
        assert_eq!(StateVector::from_real(&[0.0; 4]).unwrap_err(), Error::ZeroVector);
    }

    #[test]
    fn single_gate_on_most_significant_qubit() {
        let (a, b, g) = (0.4, 1.3, -0.8);
        let m = gate_matrix(GateParams::new(a, b, g));
        let mut s = StateVector::ground(2).unwrap();
        s.apply_single(&m, 0).unwrap();
        let expected = [
            Complex64::from_polar(a.cos(), b),
            ZERO,
            -Complex64::from_polar(a.sin(), -g),
            ZERO,
        ];
        assert_amps(&s, &expected, 1e-15);
    }

    #[test]
    fn identity_gate_is_noop() {
        let (mut s, _) = StateVector::from_real(&[0.1, -0.4, 0.3, 0.2]).unwrap();
        let before = s.clone();
        s.apply_single(&Mat2::IDENTITY, 1).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn hadamard_equivalent_gives_even_split() {
        let m = gate_matrix(GateParams::new(PI / 4.0, -PI / 2.0, -PI / 2.0));
        let mut s = StateVector::ground(1).unwrap();
        s.apply_single(&m, 0).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0].norm_sqr(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitudes()[1].norm_sqr(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn controlled_gate_columns() {
        let (a, b, g) = (0.9, -0.2, 0.5);
        let m = gate_matrix(GateParams::new(a, b, g));
        let mut s = StateVector::ground(2).unwrap();
        s.apply_controlled(&m, 1, 0).unwrap();
        assert_amps(&s, &[ONE, ZERO, ZERO, ZERO], 0.0);

        let mut s = StateVector::basis(2, 1).unwrap();
        s.apply_controlled(&m, 1, 0).unwrap();
        let expected = [
            ZERO,
            Complex64::from_polar(a.cos(), b),
            ZERO,
            -Complex64::from_polar(a.sin(), -g),
        ];
        assert_amps(&s, &expected, 1e-15);

        assert_eq!(s.apply_controlled(&m, 1, 1).unwrap_err(), Error::SameQubit(1));
    }

    #[test]
    fn non_unitary_rejected_in_test_builds() {
        let mut s = StateVector::ground(1).unwrap();
        let bad = Mat2::IDENTITY.scale(c(2.0, 0.0));
        assert!(matches!(s.apply_single(&bad, 0), Err(Error::NonUnitary(_))));
    }

    #[test]
    fn controlled_phase() {
        let (mut s, _) = StateVector::from_real(&[0.5; 4]).unwrap();
        let before = s.clone();
        s.apply_controlled_phase(0.0, 0, 1).unwrap();
        assert_eq!(s, before);
        s.apply_controlled_phase(PI, 0, 1).unwrap();
        assert_amps(&s, &[c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(-0.5, 0.0)], 1e-15);

        let (mut x, _) = StateVector::from_real(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]).unwrap();
        let mut y = x.clone();
        x.apply_controlled_phase(0.77, 0, 2).unwrap();
        y.apply_controlled_phase(0.77, 2, 0).unwrap();
        assert_eq!(x, y);
        assert!(x.apply_controlled_phase(1.0, 2, 2).is_err());
    }

    fn paper_entangled_state() -> StateVector {
        let mut v = vec![0.0; 16];
        for idx in [0b0000, 0b0111, 0b1001, 0b1110] {
            v[idx] = 0.5;
        }
        StateVector::from_real(&v).unwrap().0
    }

    #[test]
    fn readout_probability() {
        let (s, _) = StateVector::from_real(&[0.5; 4]).unwrap();
        assert_abs_diff_eq!(s.prob_qubit_one(0).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            paper_entangled_state().prob_qubit_one(0).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        assert_eq!(StateVector::ground(2).unwrap().prob_qubit_one(0).unwrap(), 0.0);
        assert!(s.prob_qubit_one(2).is_err());
    }

    #[test]
    fn inner_products() {
        let psi = paper_entangled_state();
        assert_abs_diff_eq!(psi.inner_product(&psi).unwrap().re, 1.0, epsilon = 1e-15);
        let a = StateVector::basis(2, 0).unwrap();
        let b = StateVector::basis(2, 3).unwrap();
        assert_eq!(a.inner_product(&b).unwrap(), ZERO);
        assert!(a.inner_product(&psi).is_err());
    }

    #[test]
    fn sampling_extremes_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let one = StateVector::basis(2, 2).unwrap();
        let zero = StateVector::basis(2, 1).unwrap();
        for _ in 0..100 {
            assert!(one.sample_qubit(0, &mut rng).unwrap());
            assert!(!zero.sample_qubit(0, &mut rng).unwrap());
        }
        let (half, _) = StateVector::from_real(&[0.5; 4]).unwrap();
        let hits = (0..10_000)
            .filter(|_| half.sample_qubit(0, &mut rng).unwrap())
            .count();
        assert!((hits as f64 / 1e4 - 0.5).abs() < 0.02);
    }

    #[test]
    fn reduced_density_spectra() {
        let eig = StateVector::ground(2).unwrap().reduced_density_eigenvalues(&[0]).unwrap();
        assert_abs_diff_eq!(eig[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eig[1], 0.0, epsilon = 1e-12);

        let eig = paper_entangled_state().reduced_density_eigenvalues(&[0, 1]).unwrap();
        for e in eig {
            assert_abs_diff_eq!(e, 0.25, epsilon = 1e-10);
        }

        let (bell, _) = StateVector::from_real(&[1.0, 0.0, 0.0, 1.0]).unwrap();
        let eig = bell.reduced_density_eigenvalues(&[0]).unwrap();
        assert_abs_diff_eq!(eig[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(eig[1], 0.5, epsilon = 1e-12);

        let big: Vec<usize> = (0..13).collect();
        assert_eq!(
            StateVector::ground(2).unwrap().reduced_density_eigenvalues(&big).unwrap_err(),
            Error::SubsetTooLarge(13)
        );
    }
}
