//! The three-angle single-qubit gate, auxiliary phase and X-rotation gates,
//! and the derivative expansions that turn each partial derivative of a gate
//! into a weighted sum of unitary gates.
//!
//! The gate is
//!
//! ```text
//! G(a, b, g) = [  e^{ib} cos a    e^{ig} sin a ]
//!              [ -e^{-ig} sin a   e^{-ib} cos a ]
//! ```
//!
//! with the global phase dropped, so every G has determinant 1.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::matrix::{Mat2, I, ONE, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl GateParams {
    pub const IDENTITY: GateParams = GateParams {
        alpha: 0.0,
        beta: 0.0,
        gamma: 0.0,
    };

    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma }
    }

    pub fn from_slice(p: &[f64]) -> Self {
        Self::new(p[0], p[1], p[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    pub fn get(&self, axis: ParamAxis) -> f64 {
        match axis {
            ParamAxis::Alpha => self.alpha,
            ParamAxis::Beta => self.beta,
            ParamAxis::Gamma => self.gamma,
        }
    }

    /// Recover angles from any 2x2 unitary, returning them with the global
    /// phase `phi` such that `u = e^{i phi} G(angles)`.
    pub fn from_unitary(u: &Mat2) -> (Self, f64) {
        let phi = u.det().arg() / 2.0;
        let su = u.scale(Complex64::from_polar(1.0, -phi));
        let a = su.0[0][0];
        let b = su.0[0][1];
        let alpha = b.norm().atan2(a.norm());
        let beta = if a.norm() > 1e-300 { a.arg() } else { 0.0 };
        let gamma = if b.norm() > 1e-300 { b.arg() } else { 0.0 };
        (Self::new(alpha, beta, gamma), phi)
    }
}

/// Which of the three angles a derivative is taken with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamAxis {
    Alpha,
    Beta,
    Gamma,
}

impl ParamAxis {
    pub const ALL: [ParamAxis; 3] = [ParamAxis::Alpha, ParamAxis::Beta, ParamAxis::Gamma];

    pub fn from_offset(k: usize) -> Self {
        Self::ALL[k]
    }
}

pub fn gate_matrix(p: GateParams) -> Mat2 {
    let (s, c) = p.alpha.sin_cos();
    Mat2::new(
        Complex64::from_polar(c, p.beta),
        Complex64::from_polar(s, p.gamma),
        -Complex64::from_polar(s, -p.gamma),
        Complex64::from_polar(c, -p.beta),
    )
}

/// `diag(1, e^{i phi})`.
pub fn phase_gate_matrix(phi: f64) -> Mat2 {
    Mat2::diag(ONE, Complex64::from_polar(1.0, phi))
}

/// `cos(theta/2) I - i sin(theta/2) X`.
pub fn x_rotation_matrix(theta: f64) -> Mat2 {
    let (s, c) = (theta / 2.0).sin_cos();
    let c = Complex64::new(c, 0.0);
    let off = -I * s;
    Mat2::new(c, off, off, c)
}

/// `diag(e^{-i theta/2}, e^{i theta/2})`.
pub fn z_rotation_matrix(theta: f64) -> Mat2 {
    Mat2::diag(
        Complex64::from_polar(1.0, -theta / 2.0),
        Complex64::from_polar(1.0, theta / 2.0),
    )
}

/// Entrywise partial derivative of [`gate_matrix`].
pub fn analytic_derivative(p: GateParams, axis: ParamAxis) -> Mat2 {
    let (s, c) = p.alpha.sin_cos();
    match axis {
        ParamAxis::Alpha => Mat2::new(
            -Complex64::from_polar(s, p.beta),
            Complex64::from_polar(c, p.gamma),
            -Complex64::from_polar(c, -p.gamma),
            -Complex64::from_polar(s, -p.beta),
        ),
        ParamAxis::Beta => Mat2::new(
            I * Complex64::from_polar(c, p.beta),
            ZERO,
            ZERO,
            -I * Complex64::from_polar(c, -p.beta),
        ),
        ParamAxis::Gamma => Mat2::new(
            ZERO,
            I * Complex64::from_polar(s, p.gamma),
            I * Complex64::from_polar(s, -p.gamma),
            ZERO,
        ),
    }
}

/// One summand of a derivative expansion: `coefficient * block_sign * G(params)`,
/// where `block_sign` multiplies the gate block inside a controlled gate
/// (for an uncontrolled gate it is always +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeTerm {
    pub coefficient: f64,
    pub params: GateParams,
    pub block_sign: f64,
}

impl DerivativeTerm {
    /// The (unitary) gate block this term runs.
    pub fn block(&self) -> Mat2 {
        let g = gate_matrix(self.params);
        if self.block_sign < 0.0 {
            -g
        } else {
            g
        }
    }
}

/// `dG/d(axis)` as a weighted sum of G gates with shifted angles.
pub fn derivative_terms(p: GateParams, axis: ParamAxis) -> Vec<DerivativeTerm> {
    let term = |coefficient, params| DerivativeTerm {
        coefficient,
        params,
        block_sign: 1.0,
    };
    match axis {
        ParamAxis::Alpha => vec![term(1.0, GateParams::new(p.alpha + FRAC_PI_2, p.beta, p.gamma))],
        ParamAxis::Beta => vec![
            term(0.5, GateParams::new(p.alpha, p.beta + FRAC_PI_2, 0.0)),
            term(0.5, GateParams::new(p.alpha, p.beta + FRAC_PI_2, PI)),
        ],
        ParamAxis::Gamma => vec![
            term(0.5, GateParams::new(p.alpha, 0.0, p.gamma + FRAC_PI_2)),
            term(0.5, GateParams::new(p.alpha, PI, p.gamma + FRAC_PI_2)),
        ],
    }
}

/// Derivative of the controlled gate C(G): each term c*G of the plain
/// expansion becomes `+c/2 * C(G)` and `-c/2 * C(-G)`, since
/// `C(X) - C(-X) = 2 |1><1| (x) X`.
pub fn controlled_derivative_terms(p: GateParams, axis: ParamAxis) -> Vec<DerivativeTerm> {
    derivative_terms(p, axis)
        .into_iter()
        .flat_map(|t| {
            [
                DerivativeTerm {
                    coefficient: 0.5 * t.coefficient,
                    block_sign: 1.0,
                    ..t
                },
                DerivativeTerm {
                    coefficient: -0.5 * t.coefficient,
                    block_sign: -1.0,
                    ..t
                },
            ]
        })
        .collect()
}

/// Weighted sum `sum_j c_j * block_j` of an expansion (plain gate only).
pub fn expansion_sum(terms: &[DerivativeTerm]) -> Mat2 {
    terms.iter().fold(Mat2([[ZERO; 2]; 2]), |acc, t| {
        acc.add(&t.block().scale(Complex64::new(t.coefficient, 0.0)))
    })
}
