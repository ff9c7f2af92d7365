//! Link-level simulation and analytic bit-error-rate evaluation for LoRa
//! chirp modulation combined with orthogonal space-time block codes over
//! quasi-static flat Rayleigh fading.
//!
//! The crate is layered bottom-up:
//!
//! * [`numerics`] special functions, Gauss-Hermite rules and adaptive quadrature,
//! * [`modem`] chirp modulation plus DFT and correlator demodulators,
//! * [`stbc`] code matrices, encoding and linear combining,
//! * [`channel`] Rayleigh MIMO gains, estimation error and AWGN,
//! * [`mc`] seeded Monte Carlo BER estimation,
//! * [`analytic`] closed-form, quadrature and asymptotic BER expressions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod channel;
mod error;
pub mod mc;
pub mod modem;
pub mod numerics;
pub mod stbc;

pub use error::{Error, Result};

pub use num_complex::Complex64;
