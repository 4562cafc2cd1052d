//! Adaptive feedback communication system (AFCS): an analogue transmitter
//! whose modulation depth and offset are set each cycle by a receiver-side
//! Kalman-type estimator, with closed-form performance theory and a
//! reproducible Monte Carlo engine.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gaussian;
pub mod overmod;
pub mod simulation;
pub mod system;
pub mod theory;

pub use error::{Error, Result};
pub use system::{derive_params, DerivedParams, SystemParams};
