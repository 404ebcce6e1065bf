//! Delay-Doppler waveform simulation: SC-FDMA based OTFS, UFMC filtering,
//! the filtered GF-OTFS transceiver and its baselines, a time-varying
//! tapped-delay-line channel, MMSE detection and the experiment harness.

// `!(x > 0.0)` is used on purpose: NaN must fail those guards.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod detect;
pub mod error;
pub mod geometry;
pub mod gf;
pub mod matrix;
pub mod metrics;
pub mod oracle;
pub mod par;
pub mod scfdma;
pub mod scheme;
pub mod sim;
pub mod transform;
pub mod ufmc;
pub mod verify;

pub use error::{Error, Result};
pub use geometry::FrameGeometry;
pub use matrix::ComplexMatrix;

pub type C64 = num_complex::Complex64;
