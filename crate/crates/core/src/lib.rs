//! Reduced-dimensional simulation of strong-field dissociative ionization of
//! D₂ and of the electron-ion entanglement analyses built on top of it.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod dissoc;
pub mod error;
pub mod grid;
pub mod holography;
pub mod io;
pub mod ion1d;
pub mod laser;
pub mod orchestrate;
pub mod potentials;
pub mod propagator;
pub mod qubits;
pub mod selftest;
pub mod units;
pub mod vib;

pub use error::{Error, Result};
pub use grid::{ComplexField, FftNd, Grid1D};
pub use laser::Pulse;
pub use propagator::{Channel, Hamiltonian, SplitOperator, TwoComponentState};
