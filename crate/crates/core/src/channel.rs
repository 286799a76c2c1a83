//! Shared domain types: the equivalent channel seen by the warden, the
//! codebook description, observation samples and divergence estimates.

use std::f64::consts::{PI, TAU};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Equivalent reflected-path channel at the warden.
///
/// `amplitude` and `phase` are the expected amplitude and phase of the
/// cascaded surface path; `sigma` is the per-real-dimension noise standard
/// deviation, so one complex noise sample carries total power `2σ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelParams {
    amplitude: f64,
    phase: f64,
    sigma: f64,
}

impl ChannelParams {
    pub fn new(amplitude: f64, phase: f64, sigma: f64) -> Result<Self> {
        let p = Self {
            amplitude,
            phase: if phase.is_finite() {
                normalize_angle(phase)
            } else {
                phase
            },
            sigma,
        };
        p.validate()?;
        Ok(p)
    }

    /// Builds parameters from the total complex noise power `2σ²`.
    pub fn from_noise_power(amplitude: f64, phase: f64, noise_power: f64) -> Result<Self> {
        if !noise_power.is_finite() || noise_power <= 0.0 {
            return Err(Error::NonPositiveNoise(noise_power));
        }
        Self::new(amplitude, phase, (noise_power / 2.0).sqrt())
    }

    /// Parameters used for the reflection-amplitude figures: `A = 1.2`, `σ² = 1`.
    pub fn figure_defaults() -> Self {
        Self {
            amplitude: 1.2,
            phase: 0.0,
            sigma: 1.0,
        }
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma
    }

    pub fn with_phase(&self, phase: f64) -> Result<Self> {
        Self::new(self.amplitude, phase, self.sigma)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.amplitude.is_finite() || self.amplitude <= 0.0 {
            return Err(Error::NonPositiveAmplitude(self.amplitude));
        }
        if !self.sigma.is_finite() || self.sigma <= 0.0 {
            return Err(Error::NonPositiveNoise(self.sigma));
        }
        if !self.phase.is_finite() {
            return Err(Error::AngleOutOfRange {
                name: "theta0",
                value: self.phase,
            });
        }
        Ok(())
    }

    /// Signal-to-noise scale `A²β²/σ²` that every closed form is written in.
    pub fn snr(&self, beta: f64) -> f64 {
        let ab = self.amplitude * beta;
        ab * ab / self.variance()
    }
}

/// Which codebook the transmitter uses to pick reflection phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CodebookSpec {
    /// One fixed angle pair `(θ, θ+π)`.
    Bpsk { theta: f64 },
    /// Independent per-symbol choice among the pairs `tπ/N`, `t = 1..N`.
    #[serde(rename = "psk2n")]
    Psk2N { n_pairs: u32 },
    /// One pair `tπ/N` drawn per codeword and shared with the receiver.
    #[serde(rename = "nbpsk")]
    NBpsk { n_pairs: u32 },
    /// Per-symbol choice between the pairs at `Δ₁` and `π`.
    #[serde(rename = "gen4psk")]
    Gen4Psk { delta1: f64 },
    /// Codeword-wide choice between the pairs at `Δ₂` and `π`.
    #[serde(rename = "gen2bpsk")]
    Gen2Bpsk { delta2: f64 },
}

impl CodebookSpec {
    pub fn bpsk(theta: f64) -> Self {
        CodebookSpec::Bpsk {
            theta: normalize_angle(theta),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CodebookSpec::Bpsk { theta } => {
                if !theta.is_finite() {
                    return Err(Error::AngleOutOfRange {
                        name: "theta",
                        value: theta,
                    });
                }
            }
            CodebookSpec::Psk2N { n_pairs } | CodebookSpec::NBpsk { n_pairs } => {
                if n_pairs == 0 {
                    return Err(Error::ZeroPairs);
                }
            }
            CodebookSpec::Gen4Psk { delta1: d } => check_delta("delta1", d)?,
            CodebookSpec::Gen2Bpsk { delta2: d } => check_delta("delta2", d)?,
        }
        Ok(())
    }

    /// Base angles of the angle pairs; each angle `φ` stands for `{φ, φ+π}`.
    pub fn pair_angles(&self) -> Vec<f64> {
        match *self {
            CodebookSpec::Bpsk { theta } => vec![normalize_angle(theta)],
            CodebookSpec::Psk2N { n_pairs } | CodebookSpec::NBpsk { n_pairs } => {
                pair_angles_uniform(n_pairs)
            }
            CodebookSpec::Gen4Psk { delta1: d } | CodebookSpec::Gen2Bpsk { delta2: d } => {
                vec![d, PI]
            }
        }
    }

    /// Whether one pair is drawn per codeword rather than per symbol.
    pub fn shares_angle(&self) -> bool {
        matches!(
            self,
            CodebookSpec::NBpsk { .. } | CodebookSpec::Gen2Bpsk { .. }
        )
    }

    /// Codebooks whose n-letter law is a product of single-letter laws.
    pub fn is_product(&self) -> bool {
        !self.shares_angle() || self.pair_angles().len() == 1
    }

    pub fn n_pairs(&self) -> u32 {
        match *self {
            CodebookSpec::Bpsk { .. } => 1,
            CodebookSpec::Psk2N { n_pairs } | CodebookSpec::NBpsk { n_pairs } => n_pairs,
            CodebookSpec::Gen4Psk { .. } | CodebookSpec::Gen2Bpsk { .. } => 2,
        }
    }

    /// Short stable label used in tables and output files.
    pub fn label(&self) -> String {
        match *self {
            CodebookSpec::Bpsk { theta } => format!("bpsk(theta={theta})"),
            CodebookSpec::Psk2N { n_pairs } => format!("psk2n(N={n_pairs})"),
            CodebookSpec::NBpsk { n_pairs } => format!("nbpsk(N={n_pairs})"),
            CodebookSpec::Gen4Psk { delta1 } => format!("gen4psk(delta1={delta1})"),
            CodebookSpec::Gen2Bpsk { delta2 } => format!("gen2bpsk(delta2={delta2})"),
        }
    }
}

impl fmt::Display for CodebookSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

fn check_delta(name: &'static str, value: f64) -> Result<()> {
    if !(0.0..=PI).contains(&value) {
        return Err(Error::AngleOutOfRange { name, value });
    }
    Ok(())
}

/// `tπ/N` for `t = 1..=N`; `t = N` is the angle `π`.
pub fn pair_angles_uniform(n_pairs: u32) -> Vec<f64> {
    (1..=n_pairs)
        .map(|t| t as f64 * PI / n_pairs as f64)
        .collect()
}

pub fn validate_params(p: &ChannelParams, c: &CodebookSpec) -> Result<()> {
    p.validate()?;
    c.validate()
}

/// One complex observation at the warden, stored as `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComplexSample {
    pub x: f64,
    pub y: f64,
}

impl ComplexSample {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn rotate(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            x: c * self.x - s * self.y,
            y: s * self.x + c * self.y,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<num_complex::Complex64> for ComplexSample {
    fn from(z: num_complex::Complex64) -> Self {
        Self { x: z.re, y: z.im }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Quadrature,
    MonteCarlo,
    ClosedForm,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Quadrature => "quadrature",
            Method::MonteCarlo => "monte_carlo",
            Method::ClosedForm => "closed_form",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A divergence value in nats with the method that produced it.
///
/// `error_bound` is the Monte Carlo standard error, the last quadrature
/// refinement delta, or the magnitude of the first omitted term of a
/// closed-form expansion. Monte Carlo values are never clamped at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlEstimate {
    pub value: f64,
    pub method: Method,
    pub error_bound: f64,
    pub n_samples_or_nodes: u64,
}

impl KlEstimate {
    /// `value ≥ −error_bound`, the only sign guarantee an estimate carries.
    pub fn is_consistent(&self) -> bool {
        self.error_bound >= 0.0 && self.value >= -self.error_bound
    }

    pub fn to_bits(self) -> Self {
        Self {
            value: self.value / std::f64::consts::LN_2,
            error_bound: self.error_bound / std::f64::consts::LN_2,
            ..self
        }
    }
}

/// Deterministic random source identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8 whose 64-bit stream selector gives independent,
/// non-overlapping sequences for distinct `stream_id`s under one seed.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh generator on a derived stream, for handing to a worker.
    ///
    /// Derived streams are keyed by `(stream_id, index)` through SplitMix64 so
    /// the same parent and index always yield the same child.
    pub fn derive(&self, index: u64) -> Self {
        Self::new(self.seed, splitmix64(self.stream_id ^ splitmix64(index)))
    }
}

impl rand::RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
