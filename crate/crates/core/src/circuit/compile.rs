//! Rewriting code blocks into single-qubit gates, controlled phases and X
//! rotations.
//!
//! Each controlled gate `C_a(G)` is diagonalised as `G = e^{i lambda} Q
//! diag(1, e^{i phi}) Q^dagger`, which gives the sequence `P_a(lambda)`,
//! `Q^dagger` on the target, `CP(a, b, phi)`, `Q` on the target. Inside a block
//! every qubit of a control orbit meets exactly two controlled phases, so its
//! single-qubit operations fall into three segments. The first segment becomes
//! a full gate. The middle one is written `Rz(a) Rx(b) Rz(c)`; the Z rotations
//! commute through the neighbouring controlled phases and are absorbed into the
//! first and last segments, leaving one X rotation. The last segment is handed
//! on as a carry: it is merged into the next block's single gates, or emitted
//! as trailing gates after the final block.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gates::{gate_matrix, phase_gate_matrix, z_rotation_matrix, GateParams};
use crate::matrix::Mat2;

use super::{controlled_layer, BlockRange, CircuitSpec, GateSlot};

const DEGENERATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledBlock {
    pub n_qubits: usize,
    pub slots: Vec<GateSlot>,
    pub params: Vec<f64>,
    /// Residual single-qubit unitary per qubit that still has to be applied
    /// after `slots`.
    pub carry: Vec<Mat2>,
}

impl CompiledBlock {
    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// The block as a standalone circuit, with the carry appended as trailing
    /// single gates. Equal to the original block up to a global phase.
    pub fn into_circuit(self) -> Result<(CircuitSpec, Vec<f64>)> {
        let mut slots = self.slots;
        let mut params = self.params;
        append_carry(&mut slots, &mut params, &self.carry);
        let spec = CircuitSpec::new(self.n_qubits, slots, params.len())?;
        Ok((spec, params))
    }
}

fn append_carry(slots: &mut Vec<GateSlot>, params: &mut Vec<f64>, carry: &[Mat2]) {
    for (q, m) in carry.iter().enumerate() {
        if m.phase_insensitive_diff(&Mat2::IDENTITY) <= DEGENERATE_TOL {
            continue;
        }
        slots.push(GateSlot::single(q, params.len()));
        params.extend(GateParams::from_unitary(m).0.to_array());
    }
}

/// `(lambda, phi, Q)` with `g = e^{i lambda} Q diag(1, e^{i phi}) Q^dagger`.
fn diagonalize(g: &Mat2, target: usize) -> Result<(f64, f64, Mat2)> {
    let m = &g.0;
    if g.is_diagonal(DEGENERATE_TOL) && (m[0][0] - m[1][1]).norm() <= DEGENERATE_TOL {
        if (m[0][0] - Complex64::new(1.0, 0.0)).norm() <= DEGENERATE_TOL {
            return Ok((0.0, 0.0, Mat2::IDENTITY));
        }
        return Err(Error::DegenerateGate { target });
    }
    let half_trace = g.trace() / 2.0;
    let s = (half_trace * half_trace - g.det()).sqrt();
    let (mu1, mu2) = (half_trace + s, half_trace - s);
    let a = [m[0][1], mu1 - m[0][0]];
    let b = [mu1 - m[1][1], m[1][0]];
    let norm = |v: &[Complex64; 2]| (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    let v = if norm(&a) >= norm(&b) { a } else { b };
    let nv = norm(&v);
    let v = [v[0] / nv, v[1] / nv];
    let q = Mat2::new(v[0], -v[1].conj(), v[1], v[0].conj());
    Ok((mu1.arg(), (mu2 / mu1).arg(), q))
}

/// `(a, b, c)` with `u = e^{i chi} Rz(a) Rx(b) Rz(c)`.
fn zxz(u: &Mat2) -> (f64, f64, f64) {
    let su = u.scale(Complex64::from_polar(1.0, -u.det().arg() / 2.0));
    let (u00, u01) = (su.0[0][0], su.0[0][1]);
    let b = 2.0 * u01.norm().atan2(u00.norm());
    let sum = if u00.norm() > 1e-300 { -2.0 * u00.arg() } else { 0.0 };
    let diff = if u01.norm() > 1e-300 {
        -2.0 * (u01.arg() + std::f64::consts::FRAC_PI_2)
    } else {
        0.0
    };
    ((sum + diff) / 2.0, b, (sum - diff) / 2.0)
}

enum Event {
    XRotation(usize),
    Phase { control: usize, target: usize, phi: f64 },
}

/// Compile one block whose original parameters are `theta` (n single gates
/// then the controlled layer). `prefix[q]` is a unitary applied to qubit `q`
/// before the block, typically the previous block's carry.
fn compile_with_prefix(n: usize, r: BlockRange, theta: &[f64], prefix: &[Mat2]) -> Result<CompiledBlock> {
    let layer = controlled_layer(n, r);
    let expected = 3 * (n + layer.len());
    if theta.len() != expected {
        return Err(Error::ParamLength {
            expected,
            found: theta.len(),
        });
    }
    let gate = |k: usize| gate_matrix(GateParams::from_slice(&theta[3 * k..3 * k + 3]));

    let mut heads: Vec<Mat2> = (0..n).map(|q| gate(q) * prefix[q]).collect();
    let mut current = vec![Mat2::IDENTITY; n];
    let mut middles: Vec<Option<Mat2>> = vec![None; n];
    let mut seen = vec![0usize; n];
    let mut events = Vec::new();

    for (j, &(a, b)) in layer.iter().enumerate() {
        let (lambda, phi, q) = diagonalize(&gate(n + j), b)?;
        current[a] = phase_gate_matrix(lambda) * current[a];
        current[b] = q.adjoint() * current[b];
        for w in [a, b] {
            match seen[w] {
                0 => heads[w] = current[w] * heads[w],
                1 => {
                    middles[w] = Some(current[w]);
                    events.push(Event::XRotation(w));
                }
                _ => {
                    return Err(Error::InvalidCircuit(format!(
                        "qubit {w} meets more than two controlled gates in one block"
                    )))
                }
            }
            current[w] = Mat2::IDENTITY;
            seen[w] += 1;
        }
        events.push(Event::Phase {
            control: a,
            target: b,
            phi,
        });
        current[b] = q * current[b];
    }

    let mut carry = current;
    let mut x_angles = vec![0.0; n];
    for q in 0..n {
        if let Some(m) = middles[q] {
            let (za, xb, zc) = zxz(&m);
            heads[q] = z_rotation_matrix(zc) * heads[q];
            carry[q] = carry[q] * z_rotation_matrix(za);
            x_angles[q] = xb;
        }
    }

    let mut slots = Vec::new();
    let mut params = Vec::new();
    for (q, h) in heads.iter().enumerate() {
        slots.push(GateSlot::single(q, params.len()));
        params.extend(GateParams::from_unitary(h).0.to_array());
    }
    for e in events {
        match e {
            Event::XRotation(q) => {
                slots.push(GateSlot::x_rotation(q, params.len()));
                params.push(x_angles[q]);
            }
            Event::Phase { control, target, phi } => {
                slots.push(GateSlot::controlled_phase(control, target, params.len()));
                params.push(phi);
            }
        }
    }
    debug_assert!(heads.iter().chain(&carry).all(|m| m.unitarity_defect() < 1e-9));
    Ok(CompiledBlock {
        n_qubits: n,
        slots,
        params,
        carry,
    })
}

/// Compile a single code block of range `r` on `n` qubits.
pub fn compile_block(n: usize, r: usize, theta: &[f64]) -> Result<CompiledBlock> {
    let range = BlockRange::new(r, n)?;
    compile_with_prefix(n, range, theta, &vec![Mat2::IDENTITY; n])
}

/// Compile every block of an architecture-built circuit; residuals are carried
/// forward into the next block and finally into the final gate or trailing
/// single gates. The result equals the original circuit up to a global phase.
pub fn compile_circuit(spec: &CircuitSpec, theta: &[f64]) -> Result<(CircuitSpec, Vec<f64>)> {
    spec.check_theta(theta)?;
    let arch = spec
        .architecture()
        .ok_or_else(|| Error::InvalidCircuit("circuit has no block architecture".into()))?;
    let n = arch.n_qubits;
    let mut carry = vec![Mat2::IDENTITY; n];
    let mut slots = Vec::new();
    let mut params = Vec::new();
    let mut offset = 0;
    for &r in &arch.ranges {
        let range = BlockRange::new(r, n)?;
        let len = 3 * (n + n / super::gcd(n, r));
        let block = compile_with_prefix(n, range, &theta[offset..offset + len], &carry)?;
        offset += len;
        let base = params.len();
        slots.extend(block.slots.into_iter().map(|mut s| {
            s.param_offset += base;
            s
        }));
        params.extend(block.params);
        carry = block.carry;
    }
    if arch.final_gate {
        let last = gate_matrix(GateParams::from_slice(&theta[offset..offset + 3]));
        carry[0] = last * carry[0];
    }
    append_carry(&mut slots, &mut params, &carry);
    let out = CircuitSpec::new(n, slots, params.len())?;
    Ok((out, params))
}
