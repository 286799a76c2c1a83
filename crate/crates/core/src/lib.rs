//! Covertness analysis of phase-deflected reflections over complex AWGN
//! channels.
//!
//! A transmitter modulates a reflecting surface with amplitude `β` and phases
//! drawn from one of several codebooks; a warden observes `A e^{iθ₀} c_i + z_i`
//! and runs an optimal hypothesis test. This crate evaluates the warden's
//! observation laws, the KL divergence that bounds his detection performance
//! (by quadrature, Monte Carlo and small-β closed forms), simulates the
//! detector itself, and drives the sweeps that show multi-pair codebooks halve
//! the divergence of single-pair BPSK.

pub mod channel;
pub mod codebook;
pub mod density;
pub mod detector;
pub mod divergence;
pub mod error;
pub mod harness;
pub mod identity;
pub mod math;
pub mod mc;
pub mod quadrature;

pub use channel::{
    normalize_angle, validate_params, ChannelParams, CodebookSpec, ComplexSample, KlEstimate,
    Method, Rng,
};
pub use error::{Error, Result};
