//! Monte-Carlo simulation and analysis of feedforward decoupling.
//!
//! A qubit runs a Hahn echo while a noisy current pulse in the second
//! free-evolution window shifts its phase. The current is digitized on every
//! repetition, and the readout is corrected after the fact by conditioning on
//! the recorded pulse area.
//!
//! The pipeline per shot is [`signal`] → [`digitizer`] → [`qubit`]; the
//! correction schemes live in [`feedforward`], Δ₀ extraction in
//! [`calibration`], decay fits in [`analysis`], and scenario orchestration
//! and persistence in [`harness`].

pub mod analysis;
pub mod calibration;
pub mod digitizer;
pub mod error;
pub mod feedforward;
pub mod fit;
pub mod harness;
pub mod qubit;
pub mod rng;
pub mod signal;

pub use error::{Error, FieldError, Result};
