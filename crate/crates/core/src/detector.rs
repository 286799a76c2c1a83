//! Simulation of the warden's likelihood-ratio test and Monte Carlo
//! total-variation estimates.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, CodebookSpec, Rng};
use crate::codebook::{check_beta, noise_observation, sample_codeword, willie_observation};
use crate::density::{log_ratio_block, PairMixture};
use crate::error::{Error, Result};
use crate::math::MeanVar;
use crate::mc::{self, McLayout};

pub const MIN_TRIALS: u64 = 1_000;
pub const MIN_TV_SAMPLES: u64 = 10_000;

// Fixed sub-streams so H₀ and H₁ episodes never share draws.
const H0_STREAM: u64 = 0;
const H1_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub p_fa: f64,
    pub p_md: f64,
    pub trials: u64,
    /// `1 − (p_fa + p_md)` clipped to `[0, 1]`.
    pub tv_estimate: f64,
    pub se_p_fa: f64,
    pub se_p_md: f64,
    pub se_tv: f64,
}

impl DetectionResult {
    pub fn error_sum(&self) -> f64 {
        self.p_fa + self.p_md
    }

    pub fn error_sum_se(&self) -> f64 {
        self.se_tv
    }
}

fn binomial_se(p: f64, trials: u64) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

fn prepare(c: &CodebookSpec, p: &ChannelParams, beta: f64, n: u64) -> Result<PairMixture> {
    p.validate()?;
    c.validate()?;
    check_beta(beta)?;
    if n == 0 {
        return Err(Error::ZeroBlockLength);
    }
    Ok(PairMixture::for_codebook(p, c, beta))
}

/// Runs `trials` episodes under each hypothesis and decides `H₁` iff the
/// block log-likelihood ratio is strictly positive.
///
/// Each `H₁` episode of a shared-angle codebook draws a fresh shared angle.
pub fn simulate_optimal_test(
    c: &CodebookSpec,
    p: &ChannelParams,
    beta: f64,
    n: u64,
    trials: u64,
    rng: &Rng,
) -> Result<DetectionResult> {
    simulate_threshold_test(c, p, beta, n, trials, 0.0, rng)
}

/// Likelihood-ratio test with an arbitrary log threshold (for ROC sweeps).
pub fn simulate_threshold_test(
    c: &CodebookSpec,
    p: &ChannelParams,
    beta: f64,
    n: u64,
    trials: u64,
    log_threshold: f64,
    rng: &Rng,
) -> Result<DetectionResult> {
    let mix = prepare(c, p, beta, n)?;
    if trials < MIN_TRIALS {
        return Err(Error::TooFewSamples {
            min: MIN_TRIALS,
            got: trials,
        });
    }
    let shared = c.shares_angle();
    let len = n as usize;
    let fa = mc::run(trials, &rng.derive(H0_STREAM), McLayout::default(), |r| {
        let obs = noise_observation(len, p, r);
        f64::from(u8::from(log_ratio_block(&mix, shared, &obs) > log_threshold))
    });
    let md = mc::run(trials, &rng.derive(H1_STREAM), McLayout::default(), |r| {
        let cw = sample_codeword(c, beta, len, r).expect("validated codebook");
        let obs = willie_observation(&cw, p, r);
        f64::from(u8::from(log_ratio_block(&mix, shared, &obs) <= log_threshold))
    });
    Ok(result_from(&fa, &md, trials))
}

fn result_from(fa: &MeanVar, md: &MeanVar, trials: u64) -> DetectionResult {
    let (p_fa, p_md) = (fa.mean(), md.mean());
    let se_p_fa = binomial_se(p_fa, trials);
    let se_p_md = binomial_se(p_md, trials);
    DetectionResult {
        p_fa,
        p_md,
        trials,
        tv_estimate: (1.0 - p_fa - p_md).clamp(0.0, 1.0),
        se_p_fa,
        se_p_md,
        se_tv: (se_p_fa * se_p_fa + se_p_md * se_p_md).sqrt(),
    }
}

/// Detection results on a grid of amplitudes with common random numbers:
/// every grid point reuses the same noise, sign and pair draws.
pub fn detection_curve(
    c: &CodebookSpec,
    p: &ChannelParams,
    betas: &[f64],
    n: u64,
    trials: u64,
    rng: &Rng,
) -> Result<Vec<DetectionResult>> {
    betas
        .iter()
        .map(|&b| simulate_optimal_test(c, p, b, n, trials, rng))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvEstimate {
    pub value: f64,
    pub std_err: f64,
    pub samples: u64,
}

/// `V(Q₁ⁿ, Q₀ⁿ)` estimated from noise-only draws as `E_{Q₀}[(1 − r)⁺]`,
/// `r = Q₁ⁿ/Q₀ⁿ`; equal to `½E_{Q₀}|r − 1|` because `E_{Q₀}[r] = 1`, and
/// bounded in `[0, 1]` per draw.
pub fn tv_distance_mc(
    c: &CodebookSpec,
    p: &ChannelParams,
    beta: f64,
    n: u64,
    samples: u64,
    rng: &Rng,
) -> Result<TvEstimate> {
    let mix = prepare(c, p, beta, n)?;
    if samples < MIN_TV_SAMPLES {
        return Err(Error::TooFewSamples {
            min: MIN_TV_SAMPLES,
            got: samples,
        });
    }
    let shared = c.shares_angle();
    let len = n as usize;
    let stats = mc::run(samples, rng, McLayout::default(), |r| {
        let obs = noise_observation(len, p, r);
        let lr = log_ratio_block(&mix, shared, &obs);
        (-lr.exp_m1()).max(0.0)
    });
    Ok(TvEstimate {
        value: stats.mean(),
        std_err: stats.std_err(),
        samples,
    })
}
