//! KL divergence of the warden's `H₁` law from the noise-only law, by
//! deterministic quadrature, Monte Carlo and small-β closed forms.
//!
//! All divergences are `D(Q₁‖Q₀)` in nats. `a = A²β²/σ²` throughout.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, CodebookSpec, KlEstimate, Method, Rng};
use crate::codebook::{check_beta, sample_codeword, willie_observation};
use crate::density::{log_ratio_block, log_ratio_per_pair, PairMixture};
use crate::error::{Error, Result};
use crate::math::{log_mean_exp, MeanVar};
use crate::mc::{self, McLayout};
use crate::quadrature::GaussHermite;

pub const MIN_MC_SAMPLES: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub nodes_per_dim: usize,
    /// Absolute stopping tolerance on successive refinements, nats.
    pub tol: f64,
    pub max_doublings: u32,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes_per_dim: 64,
            tol: 1e-10,
            max_doublings: 6,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nodes_per_dim < 8 {
            return Err(Error::TooFewNodes(self.nodes_per_dim));
        }
        Ok(())
    }
}

/// Leading coefficients of the small-β expansions.
///
/// Kept as data so verification runs can be pointed at a perturbed table
/// and must then report disagreement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedForms {
    /// `D_B/n = bpsk_a2·a² + bpsk_a3·a³`
    pub bpsk_a2: f64,
    pub bpsk_a3: f64,
    /// `D_2N/n = D_NB/n = multi_pair_a2·a²` for `N ≥ 2`
    pub multi_pair_a2: f64,
    /// `∬Q̂Ψ = psi1_a2·n·a²`
    pub psi1_a2: f64,
    /// `∬Q̂Ψ² = psi2_a2·n·a² + psi2_a3·n·a³`
    pub psi2_a2: f64,
    pub psi2_a3: f64,
    /// `∬Q̂Ψ³ = psi3_a3·n·a³`
    pub psi3_a3: f64,
}

impl Default for ClosedForms {
    fn default() -> Self {
        Self {
            bpsk_a2: 1.0 / 4.0,
            bpsk_a3: -1.0 / 6.0,
            multi_pair_a2: 1.0 / 8.0,
            psi1_a2: 1.0 / 4.0,
            psi2_a2: 1.0 / 4.0,
            psi2_a3: 1.0 / 4.0,
            psi3_a3: 3.0 / 4.0,
        }
    }
}

fn check_block(n: u64) -> Result<()> {
    if n == 0 {
        Err(Error::ZeroBlockLength)
    } else {
        Ok(())
    }
}

fn unsupported(method: Method, c: &CodebookSpec) -> Error {
    Error::UnsupportedMethod {
        method: method.to_string(),
        codebook: c.label(),
    }
}

/// `E_{Q₁}[ln q₁/q₀]` with one tensor Gauss–Hermite grid per mixture
/// component, centred on that component's mean.
fn quadrature_pass(mix: &PairMixture, p: &ChannelParams, beta: f64, angles: &[f64], nodes: usize) -> f64 {
    let gh = GaussHermite::new(nodes);
    let pts: Vec<(f64, f64)> = gh.standard_normal().collect();
    let sigma = p.sigma();
    let r = p.amplitude() * beta;
    // the log ratio is even in s, so the −μ component gives the same value
    let per_component: Vec<f64> = angles
        .iter()
        .map(|phi| {
            let (s, c) = (p.phase() + phi).sin_cos();
            let (mx, my) = (r * c, r * s);
            let rows: Vec<f64> = pts
                .par_iter()
                .map(|&(zx, wx)| {
                    let x = mx + sigma * zx;
                    let row: f64 = pts
                        .iter()
                        .map(|&(zy, wy)| {
                            let s = crate::channel::ComplexSample::new(x, my + sigma * zy);
                            wy * mix.log_ratio(&s)
                        })
                        .sum();
                    wx * row
                })
                .collect();
            rows.iter().sum()
        })
        .collect();
    per_component.iter().sum::<f64>() / angles.len() as f64
}

/// Single-letter `D(Q₁‖Q₀)` by refined Gauss–Hermite quadrature.
///
/// Defined for codebooks whose n-letter law is a product of single-letter
/// laws (BPSK, 2N-PSK, the generalized 4-PSK, and single-pair shared codebooks).
pub fn kl_single_letter(
    c: &CodebookSpec,
    p: &ChannelParams,
    beta: f64,
    q: &QuadratureSpec,
) -> Result<KlEstimate> {
    p.validate()?;
    c.validate()?;
    check_beta(beta)?;
    q.validate()?;
    if !c.is_product() {
        return Err(unsupported(Method::Quadrature, c));
    }
    let angles = c.pair_angles();
    let mix = PairMixture::new(p, &angles, beta);
    let mut nodes = q.nodes_per_dim;
    let mut value = quadrature_pass(&mix, p, beta, &angles, nodes);
    let mut delta = f64::INFINITY;
    for _ in 0..q.max_doublings {
        nodes *= 2;
        let next = quadrature_pass(&mix, p, beta, &angles, nodes);
        delta = (next - value).abs();
        value = next;
        if delta < q.tol {
            return Ok(KlEstimate {
                value,
                method: Method::Quadrature,
                error_bound: delta,
                n_samples_or_nodes: (nodes * nodes * angles.len()) as u64,
            });
        }
    }
    Err(Error::NonConvergence { delta, nodes })
}

/// `D(Q₁ⁿ‖Q₀ⁿ) = n·D(Q₁‖Q₀)` for product laws.
pub fn kl_product(n: u64, single: &KlEstimate) -> Result<KlEstimate> {
    check_block(n)?;
    Ok(KlEstimate {
        value: n as f64 * single.value,
        error_bound: n as f64 * single.error_bound,
        ..*single
    })
}

/// Monte Carlo `D(Q₁ⁿ‖Q₀ⁿ)` for any codebook: draws codewords and noise from
/// the `H₁` law and averages the block log-likelihood ratio.
pub fn kl_block_mc(
    c: &CodebookSpec,
    p: &ChannelParams,
    beta: f64,
    n: u64,
    samples: u64,
    rng: &Rng,
    layout: McLayout,
) -> Result<KlEstimate> {
    p.validate()?;
    c.validate()?;
    check_beta(beta)?;
    check_block(n)?;
    if samples < MIN_MC_SAMPLES {
        return Err(Error::TooFewSamples {
            min: MIN_MC_SAMPLES,
            got: samples,
        });
    }
    let mix = PairMixture::for_codebook(p, c, beta);
    let shared = c.shares_angle();
    let stats = mc::run(samples, rng, layout, |r| {
        let cw = sample_codeword(c, beta, n as usize, r).expect("validated codebook");
        let obs = willie_observation(&cw, p, r);
        log_ratio_block(&mix, shared, &obs)
    });
    Ok(mc_estimate(&stats))
}

fn mc_estimate(stats: &MeanVar) -> KlEstimate {
    KlEstimate {
        value: stats.mean(),
        method: Method::MonteCarlo,
        error_bound: stats.std_err(),
        n_samples_or_nodes: stats.count(),
    }
}

/// Monte Carlo `D_NB = D(Q̂₁⁽ⁿ⁾‖Q₀ⁿ)` for N-BPSK.
pub fn kl_nbpsk_mc(
    p: &ChannelParams,
    n_pairs: u32,
    beta: f64,
    n: u64,
    samples: u64,
    rng: &Rng,
) -> Result<KlEstimate> {
    kl_block_mc(
        &CodebookSpec::NBpsk { n_pairs },
        p,
        beta,
        n,
        samples,
        rng,
        McLayout::default(),
    )
}

/// Standard-error target for Monte Carlo divergences:
/// `max(10⁻⁴, 0.02·reference)`.
pub fn target_std_err(reference: f64) -> f64 {
    (0.02 * reference.abs()).max(1e-4)
}

/// Monte Carlo block divergence with the sample count chosen from a pilot run
/// so that the standard error meets [`target_std_err`] of the closed form.
///
/// The pilot uses stream `rng.derive(u64::MAX)`; the main run uses `rng`.
pub fn kl_block_mc_targeted(
    c: &CodebookSpec,
    p: &ChannelParams,
    beta: f64,
    n: u64,
    rng: &Rng,
) -> Result<KlEstimate> {
    let reference = approx_kl(c, p, beta, n)?.value;
    let pilot = kl_block_mc(c, p, beta, n, MIN_MC_SAMPLES, &rng.derive(u64::MAX), McLayout::default())?;
    let sd = pilot.error_bound * (pilot.n_samples_or_nodes as f64).sqrt();
    let samples = mc::samples_for_target(sd, target_std_err(reference), MIN_MC_SAMPLES);
    kl_block_mc(c, p, beta, n, samples, rng, McLayout::default())
}

/// Leading-order closed form of `D(Q₁ⁿ‖Q₀ⁿ)` per codebook.
///
/// `error_bound` is the size of the first omitted order with unit
/// coefficient (`n·a⁴` where the β⁶ term is kept, `n·a³` otherwise).
pub fn approx_kl(c: &CodebookSpec, p: &ChannelParams, beta: f64, n: u64) -> Result<KlEstimate> {
    approx_kl_with(c, p, beta, n, &ClosedForms::default())
}

pub fn approx_kl_with(
    c: &CodebookSpec,
    p: &ChannelParams,
    beta: f64,
    n: u64,
    forms: &ClosedForms,
) -> Result<KlEstimate> {
    p.validate()?;
    c.validate()?;
    check_beta(beta)?;
    check_block(n)?;
    let nf = n as f64;
    let a = p.snr(beta);
    let bpsk = nf * (forms.bpsk_a2 * a * a + forms.bpsk_a3 * a * a * a);
    let multi = nf * forms.multi_pair_a2 * a * a;
    let (value, omitted) = match *c {
        CodebookSpec::Bpsk { .. } | CodebookSpec::Psk2N { n_pairs: 1 } => (bpsk, nf * a.powi(4)),
        CodebookSpec::Psk2N { .. } => (multi, nf * a.powi(3)),
        CodebookSpec::NBpsk { n_pairs: 1 } => (nf * forms.bpsk_a2 * a * a, nf * a.powi(3)),
        CodebookSpec::NBpsk { .. } => (multi, nf * a.powi(3)),
        CodebookSpec::Gen4Psk { delta1 } => {
            (bpsk * (1.0 - 0.5 * delta1.sin().powi(2)), nf * a.powi(4))
        }
        CodebookSpec::Gen2Bpsk { delta2 } => {
            let c2 = delta2.cos().powi(2);
            (multi * (1.0 + 2.0 * c2 - c2 * c2), nf * a.powi(3))
        }
    };
    Ok(KlEstimate {
        value,
        method: Method::ClosedForm,
        error_bound: omitted,
        n_samples_or_nodes: 0,
    })
}

/// `β = (4ε/n)^{1/4} σ/A`, which puts the BPSK leading term at exactly `ε`.
pub fn beta_for_epsilon(epsilon: f64, n: u64, p: &ChannelParams) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    check_block(n)?;
    p.validate()?;
    Ok((4.0 * epsilon / n as f64).powf(0.25) * p.sigma() / p.amplitude())
}

/// Settings for the estimators behind [`phase_gain`].
#[derive(Debug, Clone, Copy)]
pub struct GainOptions {
    pub quadrature: QuadratureSpec,
    pub mc_samples: u64,
    pub seed: u64,
}

impl Default for GainOptions {
    fn default() -> Self {
        Self {
            quadrature: QuadratureSpec::default(),
            mc_samples: 200_000,
            seed: 0,
        }
    }
}

/// Divergence of one codebook with the requested estimator.
pub fn kl_with_method(
    c: &CodebookSpec,
    p: &ChannelParams,
    beta: f64,
    n: u64,
    method: Method,
    opts: &GainOptions,
    stream: u64,
) -> Result<KlEstimate> {
    match method {
        Method::ClosedForm => approx_kl(c, p, beta, n),
        Method::Quadrature => {
            let single = kl_single_letter(c, p, beta, &opts.quadrature)?;
            kl_product(n, &single)
        }
        Method::MonteCarlo => kl_block_mc(
            c,
            p,
            beta,
            n,
            opts.mc_samples,
            &Rng::new(opts.seed, stream),
            McLayout::default(),
        ),
    }
}

/// `D_c / D_B` at `β = beta_for_epsilon(ε, n)`.
pub fn phase_gain(
    c: &CodebookSpec,
    p: &ChannelParams,
    epsilon: f64,
    n: u64,
    method: Method,
    opts: &GainOptions,
) -> Result<f64> {
    if let CodebookSpec::Bpsk { .. } = c {
        return Err(Error::Config(
            "phase gain compares a multi-pair codebook against BPSK".into(),
        ));
    }
    let beta = beta_for_epsilon(epsilon, n, p)?;
    let num = kl_with_method(c, p, beta, n, method, opts, 1)?;
    let den = kl_with_method(&CodebookSpec::bpsk(0.0), p, beta, n, method, opts, 2)?;
    Ok(num.value / den.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiMoment {
    pub order: u32,
    pub value: f64,
    pub std_err: f64,
    pub samples: u64,
}

fn check_order(order: u32) -> Result<()> {
    if (1..=3).contains(&order) {
        Ok(())
    } else {
        Err(Error::BadMomentOrder(order))
    }
}

/// Monte Carlo `∬ Q̂₁⁽ⁿ⁾ Ψ^k` with `Ψ = (1/N) Σ_p Q_pⁿ/Q₀ⁿ − 1`.
pub fn psi_moment_mc(
    p: &ChannelParams,
    n_pairs: u32,
    beta: f64,
    n: u64,
    order: u32,
    samples: u64,
    rng: &Rng,
) -> Result<PsiMoment> {
    check_order(order)?;
    Ok(psi_moments_mc(p, n_pairs, beta, n, samples, rng)?[order as usize - 1])
}

/// All three Ψ moments from one set of draws.
pub fn psi_moments_mc(
    p: &ChannelParams,
    n_pairs: u32,
    beta: f64,
    n: u64,
    samples: u64,
    rng: &Rng,
) -> Result<[PsiMoment; 3]> {
    let c = CodebookSpec::NBpsk { n_pairs };
    p.validate()?;
    c.validate()?;
    check_beta(beta)?;
    check_block(n)?;
    if n_pairs < 2 {
        return Err(Error::PairCountTooSmall {
            min: 2,
            got: n_pairs,
        });
    }
    if samples < MIN_MC_SAMPLES {
        return Err(Error::TooFewSamples {
            min: MIN_MC_SAMPLES,
            got: samples,
        });
    }
    let mix = PairMixture::for_codebook(p, &c, beta);
    let stats = mc::run_multi::<3, _>(samples, rng, McLayout::default(), |r| {
        let cw = sample_codeword(&c, beta, n as usize, r).expect("validated codebook");
        let obs = willie_observation(&cw, p, r);
        let psi = log_mean_exp(&log_ratio_per_pair(&mix, &obs)).exp_m1();
        [psi, psi * psi, psi * psi * psi]
    });
    Ok([1, 2, 3].map(|k| {
        let s = &stats[k as usize - 1];
        PsiMoment {
            order: k,
            value: s.mean(),
            std_err: s.std_err(),
            samples: s.count(),
        }
    }))
}

/// Small-β closed forms of the Ψ moments (`N ≥ 2`; the single-pair case
/// uses its own coefficients `n a²/2`, `n a²/2 + n a³`, `3 n a³`).
pub fn psi_moment_closed_form(
    p: &ChannelParams,
    n_pairs: u32,
    beta: f64,
    n: u64,
    order: u32,
    forms: &ClosedForms,
) -> Result<f64> {
    check_order(order)?;
    if n_pairs == 0 {
        return Err(Error::ZeroPairs);
    }
    let a = p.snr(beta);
    let nf = n as f64;
    let (a2, a3) = if n_pairs == 1 {
        [(0.5, 0.0), (0.5, 1.0), (0.0, 3.0)][order as usize - 1]
    } else {
        [
            (forms.psi1_a2, 0.0),
            (forms.psi2_a2, forms.psi2_a3),
            (0.0, forms.psi3_a3),
        ][order as usize - 1]
    };
    Ok(nf * (a2 * a * a + a3 * a * a * a))
}

/// Exact `∬ Q̂₁⁽ⁿ⁾ Ψ^k` by enumeration.
///
/// Uses `∬ Q_{t₀} Π_j Q_{t_j} / Q₀^k = E_signs exp(Σ_{i<j} ⟨μ_i, μ_j⟩/σ²)`
/// for equal-covariance Gaussians, then expands `Ψ^k` binomially in the
/// moments of `Ψ + 1`. Cost is `N^{k+1}·2^{k+1}` terms.
pub fn psi_moment_exact(p: &ChannelParams, n_pairs: u32, beta: f64, n: u64, order: u32) -> Result<f64> {
    check_order(order)?;
    if n_pairs == 0 {
        return Err(Error::ZeroPairs);
    }
    check_beta(beta)?;
    let a = p.snr(beta);
    let angles = crate::channel::pair_angles_uniform(n_pairs);
    // E[(Ψ+1)^j] − 1 for j = 1..=order
    let shifted: Vec<f64> = (1..=order as usize)
        .map(|j| {
            let m = j + 1;
            let total = n_pairs.pow(m as u32) as usize;
            let mut sum = 0.0;
            let mut idx = vec![0usize; m];
            for flat in 0..total {
                let mut f = flat;
                for slot in idx.iter_mut() {
                    *slot = f % n_pairs as usize;
                    f /= n_pairs as usize;
                }
                // mean over sign patterns of expm1(a Σ_{i<j} s_i s_j cos(φ_i − φ_j))
                let mut acc = 0.0;
                for signs in 0..(1u32 << m) {
                    let mut e = 0.0;
                    for i in 0..m {
                        for k in i + 1..m {
                            let si = if signs >> i & 1 == 1 { -1.0 } else { 1.0 };
                            let sk = if signs >> k & 1 == 1 { -1.0 } else { 1.0 };
                            e += si * sk * (angles[idx[i]] - angles[idx[k]]).cos();
                        }
                    }
                    acc += (a * e).exp_m1();
                }
                let log_single = (acc / (1u64 << m) as f64).ln_1p();
                sum += (n as f64 * log_single).exp_m1();
            }
            sum / total as f64
        })
        .collect();
    let k = order as usize;
    let mut value = 0.0;
    for (j, s) in shifted.iter().enumerate() {
        let j = j + 1;
        let sign = if (k - j).is_multiple_of(2) { 1.0 } else { -1.0 };
        value += sign * binomial(k, j) * s;
    }
    Ok(value)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig() -> ChannelParams {
        ChannelParams::figure_defaults()
    }

    fn unit() -> ChannelParams {
        ChannelParams::new(1.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn zero_beta_is_zero() {
        for c in [
            CodebookSpec::bpsk(0.0),
            CodebookSpec::Psk2N { n_pairs: 3 },
            CodebookSpec::Gen4Psk { delta1: 1.0 },
        ] {
            let k = kl_single_letter(&c, &fig(), 0.0, &QuadratureSpec::default()).unwrap();
            assert!(k.value.abs() <= 1e-10);
        }
    }

    #[test]
    fn bpsk_closed_form_value() {
        let k = approx_kl(&CodebookSpec::bpsk(0.0), &fig(), 0.5, 1).unwrap();
        // 0.0324 − 0.0077760
        assert!((k.value - 0.024624).abs() < 1e-12);
        assert_eq!(k.method, Method::ClosedForm);
    }

    #[test]
    fn bpsk_quadrature_near_closed_form() {
        let q = kl_single_letter(&CodebookSpec::bpsk(0.0), &fig(), 0.5, &QuadratureSpec::default())
            .unwrap();
        // remainder is O(a⁴) with a = 0.36
        assert!((q.value - 0.024624).abs() < 0.36f64.powi(4));
        assert!(q.error_bound < 1e-10);
    }

    #[test]
    fn psk2n_small_beta_ratio() {
        let q = kl_single_letter(
            &CodebookSpec::Psk2N { n_pairs: 2 },
            &fig(),
            0.1,
            &QuadratureSpec::default(),
        )
        .unwrap();
        let cf = 1.2f64.powi(4) * 1e-4 / 8.0;
        let r = q.value / cf;
        assert!((0.9..=1.1).contains(&r), "{r}");
    }

    #[test]
    fn quadrature_rejects_shared_multi_pair() {
        let r = kl_single_letter(
            &CodebookSpec::NBpsk { n_pairs: 2 },
            &fig(),
            0.1,
            &QuadratureSpec::default(),
        );
        assert!(matches!(r, Err(Error::UnsupportedMethod { .. })));
        let ok = kl_single_letter(
            &CodebookSpec::NBpsk { n_pairs: 1 },
            &fig(),
            0.1,
            &QuadratureSpec::default(),
        );
        assert!(ok.is_ok());
        let few = QuadratureSpec {
            nodes_per_dim: 4,
            ..Default::default()
        };
        assert!(matches!(
            kl_single_letter(&CodebookSpec::bpsk(0.0), &fig(), 0.1, &few),
            Err(Error::TooFewNodes(4))
        ));
    }

    #[test]
    fn non_convergence_reported() {
        let q = QuadratureSpec {
            nodes_per_dim: 8,
            tol: 0.0,
            max_doublings: 2,
        };
        let r = kl_single_letter(&CodebookSpec::bpsk(0.0), &fig(), 0.5, &q);
        assert!(matches!(r, Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn product_scaling() {
        let s = KlEstimate {
            value: 0.001,
            method: Method::Quadrature,
            error_bound: 1e-12,
            n_samples_or_nodes: 5,
        };
        assert_eq!(kl_product(1, &s).unwrap(), s);
        let k = kl_product(100, &s).unwrap();
        assert!((k.value - 0.1).abs() < 1e-15);
        assert!((k.error_bound - 1e-10).abs() < 1e-22);
        assert!(kl_product(0, &s).is_err());
    }

    #[test]
    fn beta_rule() {
        let b = beta_for_epsilon(0.01, 10_000, &unit()).unwrap();
        assert!((b - 0.044_721_359_549_995_8).abs() < 1e-12);
        assert!((10_000.0 * b.powi(4) / 4.0 - 0.01).abs() < 1e-12);
        let b = beta_for_epsilon(0.1, 50, &unit()).unwrap();
        assert!((b - 0.299_069_756_244_244).abs() < 1e-12);
        let doubled = ChannelParams::new(2.0, 0.0, 1.0).unwrap();
        let bd = beta_for_epsilon(0.1, 50, &doubled).unwrap();
        assert!((bd - b / 2.0).abs() < 1e-15);
        for eps in [0.0, 1.0, -0.5, f64::NAN] {
            assert!(matches!(
                beta_for_epsilon(eps, 10, &unit()),
                Err(Error::EpsilonOutOfRange(_))
            ));
        }
    }

    #[test]
    fn budget_identity() {
        for n in [10u64, 1000, 1_000_000] {
            let p = fig();
            let eps = 0.05;
            let b = beta_for_epsilon(eps, n, &p).unwrap();
            let a = p.snr(b);
            assert!((n as f64 * a * a / 4.0 - eps).abs() < 1e-12);
            for c in [CodebookSpec::Psk2N { n_pairs: 3 }, CodebookSpec::NBpsk { n_pairs: 2 }] {
                let d = approx_kl(&c, &p, b, n).unwrap().value;
                assert!((d - eps / 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn closed_form_variants() {
        let p = unit();
        let (b, n) = (0.3, 7);
        let base = approx_kl(&CodebookSpec::Psk2N { n_pairs: 2 }, &p, b, n).unwrap().value;
        let bpsk = approx_kl(&CodebookSpec::bpsk(0.0), &p, b, n).unwrap().value;
        let g4 = approx_kl(&CodebookSpec::Gen4Psk { delta1: std::f64::consts::FRAC_PI_2 }, &p, b, n)
            .unwrap()
            .value;
        assert!((g4 - 0.5 * bpsk).abs() < 1e-15);
        let g2 = approx_kl(&CodebookSpec::Gen2Bpsk { delta2: 0.0 }, &p, b, n).unwrap().value;
        assert!((g2 - 2.0 * base).abs() < 1e-15);
        let g2h = approx_kl(&CodebookSpec::Gen2Bpsk { delta2: std::f64::consts::FRAC_PI_2 }, &p, b, n)
            .unwrap()
            .value;
        assert!((g2h - base).abs() < 1e-15);
        let nb1 = approx_kl(&CodebookSpec::NBpsk { n_pairs: 1 }, &p, b, n).unwrap().value;
        assert!((nb1 - n as f64 * p.snr(b).powi(2) / 4.0).abs() < 1e-15);
    }

    #[test]
    fn closed_form_gain() {
        let p = fig();
        let g = phase_gain(
            &CodebookSpec::Psk2N { n_pairs: 3 },
            &p,
            0.1,
            100,
            Method::ClosedForm,
            &GainOptions::default(),
        )
        .unwrap();
        let b = beta_for_epsilon(0.1, 100, &p).unwrap();
        let a = p.snr(b);
        assert!((g - 0.5 / (1.0 - 2.0 * a / 3.0)).abs() < 1e-12);
        let g1 = phase_gain(
            &CodebookSpec::NBpsk { n_pairs: 1 },
            &p,
            0.1,
            1_000_000,
            Method::ClosedForm,
            &GainOptions::default(),
        )
        .unwrap();
        assert!((g1 - 1.0).abs() < 1e-3);
        assert!(phase_gain(
            &CodebookSpec::bpsk(0.0),
            &p,
            0.1,
            10,
            Method::ClosedForm,
            &GainOptions::default()
        )
        .is_err());
    }

    #[test]
    fn quadrature_gain_small_beta() {
        let g = phase_gain(
            &CodebookSpec::Psk2N { n_pairs: 2 },
            &fig(),
            0.01,
            1_000_000,
            Method::Quadrature,
            &GainOptions::default(),
        )
        .unwrap();
        assert!((0.48..=0.52).contains(&g), "{g}");
    }

    #[test]
    fn mc_requires_enough_samples() {
        let r = kl_nbpsk_mc(&unit(), 2, 0.1, 5, 100, &Rng::new(0, 0));
        assert!(matches!(r, Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn mc_zero_beta() {
        let k = kl_nbpsk_mc(&unit(), 3, 0.0, 10, 10_000, &Rng::new(1, 0)).unwrap();
        assert_eq!(k.value, 0.0);
        assert!(k.is_consistent());
    }

    #[test]
    fn psi_order_validation() {
        assert!(matches!(
            psi_moment_exact(&unit(), 2, 0.1, 3, 4),
            Err(Error::BadMomentOrder(4))
        ));
        assert!(matches!(
            psi_moment_mc(&unit(), 1, 0.1, 3, 1, 10_000, &Rng::new(0, 0)),
            Err(Error::PairCountTooSmall { .. })
        ));
    }

    #[test]
    fn psi_exact_leading_orders() {
        // orders 1 and 2 agree with the closed forms to the next order in a
        let p = unit();
        let forms = ClosedForms::default();
        for n_pairs in [2u32, 3, 4] {
            for order in [1u32, 2] {
                let b = 0.05;
                let ex = psi_moment_exact(&p, n_pairs, b, 10, order).unwrap();
                let cf = psi_moment_closed_form(&p, n_pairs, b, 10, order, &forms).unwrap();
                assert!((ex / cf - 1.0).abs() < 1e-3, "N={n_pairs} k={order} {ex} {cf}");
            }
        }
        // single pair: n a²/2 leading for the first moment
        let ex = psi_moment_exact(&p, 1, 0.05, 10, 1).unwrap();
        let cf = psi_moment_closed_form(&p, 1, 0.05, 10, 1, &forms).unwrap();
        assert!((ex / cf - 1.0).abs() < 1e-3);
    }

    #[test]
    fn psi_exact_first_moment_matches_cosh_sum() {
        // ∬Q̂Ψ = N⁻² Σ_{t,p} cosh(a cos Δ_pt)^n − 1
        let p = unit();
        let (b, n, nn) = (0.2f64, 10u64, 3u32);
        let a = b * b;
        let ang = crate::channel::pair_angles_uniform(nn);
        let mut s = 0.0;
        for t in &ang {
            for q in &ang {
                s += (a * (t - q).cos()).cosh().powi(n as i32);
            }
        }
        let want = s / (nn * nn) as f64 - 1.0;
        let got = psi_moment_exact(&p, nn, b, n, 1).unwrap();
        assert!((got - want).abs() < 1e-14);
    }
}
