//! Simulation of fault-tolerant stabilizer measurement over a noisy
//! four-cell network.
//!
//! The pipeline runs in three stages:
//!
//! * [`superop`] propagates exact Pauli-frame distributions through a
//!   leveled purification protocol ([`protocols`]) and reduces the result to
//!   the weights of a noisy stabilizer projection.
//! * [`schedule`] samples the completion time of those post-selective
//!   protocols under failure-reset semantics.
//! * [`lattice`] and [`threshold`] drive a toric-code memory experiment with
//!   the extracted superoperators and decode it by minimum-weight perfect
//!   matching ([`matching`]).

pub mod error;
pub mod lattice;
pub mod matching;
pub mod noise;
pub mod pauli;
pub mod protocols;
pub mod rng;
pub mod schedule;
pub mod superop;
pub mod threshold;

pub use error::{Error, Result};
pub use noise::{BellNoise, NoiseParams};
pub use pauli::{Gate, GateKind, Pauli, PauliString, SparseErrorDist};
pub use protocols::{ProtocolKind, ProtocolSpec};
pub use superop::{Projection, StabilizerSuperoperator, WeightTable};
