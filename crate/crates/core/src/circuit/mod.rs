//! Circuit architecture and execution.
//!
//! A circuit is an ordered list of [`GateSlot`]s applied first to last. The
//! trainable architecture is built from code blocks: a layer of single-qubit
//! gates on every qubit followed by a cyclic layer of controlled gates at a
//! fixed control range `r`. In a block over `n` qubits the controlled layer has
//! `m = n / gcd(n, r)` gates with control `c_j = j r mod n` and target
//! `t_j = (j - 1) r mod n`; they act in the order `j = m, m - 1, ..., 1`.

mod compile;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates::{
    controlled_derivative_terms, derivative_terms, gate_matrix, phase_gate_matrix,
    x_rotation_matrix, DerivativeTerm, GateParams, ParamAxis,
};
use crate::matrix::Mat2;
use crate::statevec::{kernel, StateVector};
use num_complex::Complex64;

pub use compile::{compile_block, compile_circuit, CompiledBlock};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SlotKind {
    /// Three-angle gate G on `target`.
    Single,
    /// G on `target` conditioned on `control`.
    Controlled,
    /// Symmetric controlled phase between `control` and `target`.
    ControlledPhase,
    /// Single-angle X rotation on `target`.
    XRotation,
}

impl SlotKind {
    pub fn width(self) -> usize {
        match self {
            SlotKind::Single | SlotKind::Controlled => 3,
            SlotKind::ControlledPhase | SlotKind::XRotation => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateSlot {
    pub kind: SlotKind,
    pub target: usize,
    pub control: Option<usize>,
    pub param_offset: usize,
}

impl GateSlot {
    pub fn single(target: usize, param_offset: usize) -> Self {
        Self {
            kind: SlotKind::Single,
            target,
            control: None,
            param_offset,
        }
    }

    pub fn controlled(control: usize, target: usize, param_offset: usize) -> Self {
        Self {
            kind: SlotKind::Controlled,
            target,
            control: Some(control),
            param_offset,
        }
    }

    pub fn controlled_phase(control: usize, target: usize, param_offset: usize) -> Self {
        Self {
            kind: SlotKind::ControlledPhase,
            target,
            control: Some(control),
            param_offset,
        }
    }

    pub fn x_rotation(target: usize, param_offset: usize) -> Self {
        Self {
            kind: SlotKind::XRotation,
            target,
            control: None,
            param_offset,
        }
    }

    pub fn width(&self) -> usize {
        self.kind.width()
    }

    pub fn params<'a>(&self, theta: &'a [f64]) -> &'a [f64] {
        &theta[self.param_offset..self.param_offset + self.width()]
    }

    pub fn touches(&self, q: usize) -> bool {
        self.target == q || self.control == Some(q)
    }

    /// The 2x2 block this slot applies (for a controlled phase, the phase
    /// gate on the target).
    pub fn matrix(&self, theta: &[f64]) -> Mat2 {
        let p = self.params(theta);
        match self.kind {
            SlotKind::Single | SlotKind::Controlled => gate_matrix(GateParams::from_slice(p)),
            SlotKind::ControlledPhase => phase_gate_matrix(p[0]),
            SlotKind::XRotation => x_rotation_matrix(p[0]),
        }
    }

    /// Apply `block` in place of this slot's own gate.
    pub(crate) fn apply_block(&self, state: &mut StateVector, block: &Mat2) -> Result<()> {
        match self.control {
            None => state.apply_single(block, self.target),
            Some(c) => state.apply_controlled(block, c, self.target),
        }
    }

    pub fn apply(&self, state: &mut StateVector, theta: &[f64]) -> Result<()> {
        match self.kind {
            SlotKind::ControlledPhase => state.apply_controlled_phase(
                self.params(theta)[0],
                self.control.expect("validated"),
                self.target,
            ),
            _ => self.apply_block(state, &self.matrix(theta)),
        }
    }

    pub fn apply_inverse(&self, state: &mut StateVector, theta: &[f64]) -> Result<()> {
        match self.kind {
            SlotKind::ControlledPhase => state.apply_controlled_phase(
                -self.params(theta)[0],
                self.control.expect("validated"),
                self.target,
            ),
            _ => self.apply_block(state, &self.matrix(theta).adjoint()),
        }
    }

    /// Apply the slot to a raw amplitude buffer, with `block` (possibly
    /// non-unitary) substituted for the gate. Controlled slots act on the
    /// control = 1 subspace only; `zero_inactive` additionally clears the
    /// control = 0 subspace, which is what differentiating a controlled gate
    /// does.
    pub(crate) fn apply_raw(&self, amps: &mut [Complex64], n: usize, block: &Mat2, zero_inactive: bool) {
        match self.control {
            None => kernel::apply_1q(amps, n, block, self.target),
            Some(c) => {
                if zero_inactive {
                    kernel::zero_where(amps, n, c, false);
                }
                kernel::apply_controlled_1q(amps, n, block, c, self.target)
            }
        }
    }
}

/// Architecture description: qubit count, one control range per code block,
/// and whether a trailing single gate on qubit 0 precedes the measurement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub n_qubits: usize,
    pub ranges: Vec<usize>,
    pub final_gate: bool,
}

impl Architecture {
    pub fn new(n_qubits: usize, ranges: Vec<usize>, final_gate: bool) -> Self {
        Self {
            n_qubits,
            ranges,
            final_gate,
        }
    }

    pub fn build(&self) -> Result<CircuitSpec> {
        build_architecture(self.n_qubits, &self.ranges, self.final_gate)
    }

    /// True when the circuit has no gates at all.
    pub fn is_degenerate(&self) -> bool {
        self.ranges.is_empty() && !self.final_gate
    }
}

/// Control range of a code block, `1 <= r < n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockRange(usize);

impl BlockRange {
    pub fn new(r: usize, n_qubits: usize) -> Result<Self> {
        if r == 0 || r >= n_qubits {
            return Err(Error::InvalidRange { range: r, n_qubits });
        }
        Ok(Self(r))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

pub(crate) fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Control/target pairs of a block's controlled layer, in application order.
pub fn controlled_layer(n: usize, r: BlockRange) -> Vec<(usize, usize)> {
    let r = r.get();
    let m = n / gcd(n, r);
    (1..=m).rev().map(|j| ((j * r) % n, ((j - 1) * r) % n)).collect()
}

fn block_slots(n: usize, r: BlockRange, base: usize) -> Vec<GateSlot> {
    let mut slots: Vec<GateSlot> = (0..n).map(|q| GateSlot::single(q, base + 3 * q)).collect();
    let mut offset = base + 3 * n;
    for (c, t) in controlled_layer(n, r) {
        slots.push(GateSlot::controlled(c, t, offset));
        offset += 3;
    }
    slots
}

/// One code block with parameter offsets starting at zero.
pub fn build_block(n: usize, r: usize) -> Result<Vec<GateSlot>> {
    Ok(block_slots(n, BlockRange::new(r, n)?, 0))
}

/// Concatenate code blocks of the given ranges and optionally append a final
/// single gate on qubit 0. An empty range list without a final gate yields the
/// identity circuit.
pub fn build_architecture(n: usize, ranges: &[usize], final_gate: bool) -> Result<CircuitSpec> {
    crate::statevec::StateVector::ground(n)?;
    let mut slots = Vec::new();
    let mut offset = 0;
    for &r in ranges {
        let block = block_slots(n, BlockRange::new(r, n)?, offset);
        offset += block.iter().map(GateSlot::width).sum::<usize>();
        slots.extend(block);
    }
    if final_gate {
        slots.push(GateSlot::single(0, offset));
        offset += 3;
    }
    let mut spec = CircuitSpec::new(n, slots, offset)?;
    spec.architecture = Some(Architecture::new(n, ranges.to_vec(), final_gate));
    Ok(spec)
}

/// Number of parametrized gates in `K` blocks, `K n + sum_k n / gcd(n, r_k)`,
/// not counting a final gate.
pub fn gate_count(n: usize, ranges: &[usize]) -> usize {
    ranges.iter().map(|&r| n + n / gcd(n, r)).sum()
}

/// Per-slot freeze flags; `true` means the slot is skipped.
pub type SlotMask = [bool];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    n_qubits: usize,
    slots: Vec<GateSlot>,
    param_len: usize,
    architecture: Option<Architecture>,
}

impl CircuitSpec {
    /// Validate a slot list. Offsets may overlap (tied parameters), but every
    /// parameter index must be used by some slot.
    pub fn new(n_qubits: usize, slots: Vec<GateSlot>, param_len: usize) -> Result<Self> {
        let mut used = vec![false; param_len];
        for (i, s) in slots.iter().enumerate() {
            let bad = |msg: &str| Error::InvalidCircuit(format!("slot {i}: {msg}"));
            if s.target >= n_qubits {
                return Err(bad("target out of range"));
            }
            match (s.kind, s.control) {
                (SlotKind::Controlled | SlotKind::ControlledPhase, Some(c)) => {
                    if c >= n_qubits {
                        return Err(bad("control out of range"));
                    }
                    if c == s.target {
                        return Err(Error::SameQubit(c));
                    }
                }
                (SlotKind::Controlled | SlotKind::ControlledPhase, None) => {
                    return Err(bad("controlled slot without control"))
                }
                (_, Some(_)) => return Err(bad("uncontrolled slot with a control")),
                (_, None) => {}
            }
            let end = s.param_offset + s.width();
            if end > param_len {
                return Err(bad("parameter range exceeds parameter vector"));
            }
            used[s.param_offset..end].iter_mut().for_each(|u| *u = true);
        }
        if let Some(unused) = used.iter().position(|u| !u) {
            return Err(Error::InvalidCircuit(format!("parameter {unused} is not used by any slot")));
        }
        Ok(Self {
            n_qubits,
            slots,
            param_len,
            architecture: None,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn slots(&self) -> &[GateSlot] {
        &self.slots
    }

    pub fn param_len(&self) -> usize {
        self.param_len
    }

    pub fn architecture(&self) -> Option<&Architecture> {
        self.architecture.as_ref()
    }

    pub fn gate_count(&self) -> usize {
        self.slots.len()
    }

    pub(crate) fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_len {
            return Err(Error::ParamLength {
                expected: self.param_len,
                found: theta.len(),
            });
        }
        Ok(())
    }

    fn check_state(&self, s: &StateVector) -> Result<()> {
        if s.n_qubits() != self.n_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.n_qubits,
                found: s.n_qubits(),
            });
        }
        Ok(())
    }

    fn check_mask(&self, mask: Option<&SlotMask>) -> Result<()> {
        match mask {
            Some(m) if m.len() != self.slots.len() => Err(Error::DimensionMismatch {
                expected: self.slots.len(),
                found: m.len(),
            }),
            _ => Ok(()),
        }
    }

    /// Apply the circuit in place, skipping masked slots.
    pub fn run(&self, theta: &[f64], state: &mut StateVector, mask: Option<&SlotMask>) -> Result<()> {
        self.check_theta(theta)?;
        self.check_state(state)?;
        self.check_mask(mask)?;
        for (i, slot) in self.slots.iter().enumerate() {
            if mask.is_some_and(|m| m[i]) {
                continue;
            }
            slot.apply(state, theta)?;
        }
        Ok(())
    }

    /// Slots (with the angle each one's `mu` refers to) that read parameter `mu`.
    pub fn owners(&self, mu: usize) -> Vec<(usize, usize)> {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| (s.param_offset..s.param_offset + s.width()).contains(&mu))
            .map(|(i, s)| (i, mu - s.param_offset))
            .collect()
    }

    /// Derivative expansion of slot `index` with respect to its `k`-th angle.
    pub(crate) fn slot_terms(&self, index: usize, k: usize, theta: &[f64]) -> Result<Vec<DerivativeTerm>> {
        let slot = &self.slots[index];
        let p = GateParams::from_slice(slot.params(theta));
        let axis = ParamAxis::from_offset(k);
        match slot.kind {
            SlotKind::Single => Ok(derivative_terms(p, axis)),
            SlotKind::Controlled => Ok(controlled_derivative_terms(p, axis)),
            _ => Err(Error::UnsupportedDerivative(slot.param_offset + k)),
        }
    }
}

pub fn apply_circuit(spec: &CircuitSpec, theta: &[f64], s: &StateVector) -> Result<StateVector> {
    let mut out = s.clone();
    spec.run(theta, &mut out, None)?;
    Ok(out)
}

pub fn apply_circuit_masked(
    spec: &CircuitSpec,
    theta: &[f64],
    s: &StateVector,
    mask: Option<&SlotMask>,
) -> Result<StateVector> {
    let mut out = s.clone();
    spec.run(theta, &mut out, mask)?;
    Ok(out)
}

/// Run the circuit with explicit 2x2 blocks substituted for some slots.
/// Each override replaces the block of a Single/Controlled/XRotation slot
/// (keeping its control, if any).
pub fn apply_circuit_overriding(
    spec: &CircuitSpec,
    theta: &[f64],
    s: &StateVector,
    overrides: &[(usize, Mat2)],
) -> Result<StateVector> {
    spec.check_theta(theta)?;
    spec.check_state(s)?;
    let mut out = s.clone();
    for (i, slot) in spec.slots.iter().enumerate() {
        match overrides.iter().find(|(j, _)| *j == i) {
            Some((_, m)) if slot.kind != SlotKind::ControlledPhase => slot.apply_block(&mut out, m)?,
            Some(_) => return Err(Error::InvalidCircuit(format!("slot {i} cannot be overridden"))),
            None => slot.apply(&mut out, theta)?,
        }
    }
    Ok(out)
}

/// States `U_{theta[j]} s` for every term of the derivative expansion of
/// parameter `mu`, paired with their coefficients. A tied parameter yields the
/// terms of every slot that reads it.
pub fn apply_circuit_derivative(
    spec: &CircuitSpec,
    theta: &[f64],
    mu: usize,
    s: &StateVector,
) -> Result<Vec<(f64, StateVector)>> {
    apply_circuit_derivative_masked(spec, theta, mu, s, None)
}

pub fn apply_circuit_derivative_masked(
    spec: &CircuitSpec,
    theta: &[f64],
    mu: usize,
    s: &StateVector,
    mask: Option<&SlotMask>,
) -> Result<Vec<(f64, StateVector)>> {
    spec.check_theta(theta)?;
    spec.check_state(s)?;
    spec.check_mask(mask)?;
    if mu >= spec.param_len {
        return Err(Error::InvalidParamIndex {
            index: mu,
            len: spec.param_len,
        });
    }
    let mut out = Vec::new();
    for (owner, k) in spec.owners(mu) {
        if mask.is_some_and(|m| m[owner]) {
            continue;
        }
        for term in spec.slot_terms(owner, k, theta)? {
            let mut state = s.clone();
            for (i, slot) in spec.slots.iter().enumerate() {
                if mask.is_some_and(|m| m[i]) {
                    continue;
                }
                if i == owner {
                    slot.apply_block(&mut state, &term.block())?;
                } else {
                    slot.apply(&mut state, theta)?;
                }
            }
            out.push((term.coefficient, state));
        }
    }
    Ok(out)
}
