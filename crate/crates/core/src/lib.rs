//! Statevector simulation and training of circuit-centric quantum classifiers.

pub mod circuit;
pub mod data;
pub mod encoding;
pub mod error;
pub mod experiments;
pub mod gates;
pub mod gradient;
pub mod matrix;
pub mod model;
pub mod seed;
pub mod statevec;
pub mod training;

pub use circuit::{Architecture, CircuitSpec, GateSlot, SlotKind};
pub use error::{Error, Result};
pub use gates::GateParams;
pub use matrix::Mat2;
pub use statevec::StateVector;
