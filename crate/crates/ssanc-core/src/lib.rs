//! Filter design and closed-loop evaluation toolkit for spatially selective
//! active noise control (SSANC) hearables.
//!
//! The crate covers the whole offline design pipeline: FIR/Toeplitz operator
//! primitives and WAV I/O ([`dsp`]), secondary-path identification and
//! ensemble generation ([`path_model`]), soft-constrained and robust control
//! filter design ([`design`]), sample-accurate closed-loop simulation
//! ([`sim`]), noise-reduction and speech-distortion metrics ([`metrics`]),
//! and the three-case study harness with CSV reporting ([`scenario`]).

pub mod design;
pub mod dsp;
pub mod error;
pub mod metrics;
pub mod path_model;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
