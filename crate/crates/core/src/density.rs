//! Log-densities of the warden's observations under both hypotheses.
//!
//! Every value is a fully normalized log-density in nats. Mixtures are never
//! formed in the linear domain: component terms are combined with a
//! max-shifted log-sum-exp, and density ratios against the noise-only law are
//! evaluated through `ln mean cosh(Y)` which stays accurate as `β → 0`.

use std::f64::consts::PI;

use crate::channel::{pair_angles_uniform, ChannelParams, CodebookSpec, ComplexSample};
use crate::error::{Error, Result};
use crate::math::{log_mean_cosh, log_mean_exp};

fn log_norm(p: &ChannelParams) -> f64 {
    -(2.0 * PI * p.variance()).ln()
}

/// `ln q₀(s)` for circular Gaussian noise with per-dimension variance `σ²`.
pub fn log_q0(s: &ComplexSample, p: &ChannelParams) -> f64 {
    log_norm(p) - s.norm_sqr() / (2.0 * p.variance())
}

/// Equal-weight mixture of `±Aβe^{i(θ₀+φ)}` over a list of pair angles `φ`.
///
/// Holds the precomputed projection directions so repeated evaluation over
/// many samples only costs one dot product and one `cosh` per pair.
#[derive(Debug, Clone)]
pub struct PairMixture {
    directions: Vec<(f64, f64)>,
    /// `Aβ/σ²`
    scale: f64,
    /// `A²β²/(2σ²)`
    half_snr: f64,
    /// `Aβ`
    radius: f64,
    params: ChannelParams,
}

impl PairMixture {
    pub fn new(p: &ChannelParams, pair_angles: &[f64], beta: f64) -> Self {
        let directions = pair_angles
            .iter()
            .map(|phi| {
                let (s, c) = (p.phase() + phi).sin_cos();
                (c, s)
            })
            .collect();
        let radius = p.amplitude() * beta;
        Self {
            directions,
            scale: radius / p.variance(),
            half_snr: 0.5 * p.snr(beta),
            radius,
            params: *p,
        }
    }

    pub fn for_codebook(p: &ChannelParams, c: &CodebookSpec, beta: f64) -> Self {
        Self::new(p, &c.pair_angles(), beta)
    }

    pub fn n_pairs(&self) -> usize {
        self.directions.len()
    }

    /// Projection statistic `Y = Aβ(x cos(θ₀+φ) + y sin(θ₀+φ))/σ²` for pair `k`.
    pub fn projection(&self, k: usize, s: &ComplexSample) -> f64 {
        let (c, sn) = self.directions[k];
        self.scale * (s.x * c + s.y * sn)
    }

    /// `ln q(s)/q₀(s)` for the single-pair (BPSK) component law of pair `k`.
    pub fn log_ratio_pair(&self, k: usize, s: &ComplexSample) -> f64 {
        let y = self.projection(k, s);
        crate::math::log_cosh(y) - self.half_snr
    }

    /// `ln q(s)/q₀(s)` for the full single-letter mixture over all pairs.
    pub fn log_ratio(&self, s: &ComplexSample) -> f64 {
        let mut ys = [0.0f64; 16];
        if self.directions.len() <= ys.len() {
            for (k, slot) in ys.iter_mut().enumerate().take(self.directions.len()) {
                *slot = self.projection(k, s);
            }
            log_mean_cosh(&ys[..self.directions.len()]) - self.half_snr
        } else {
            let ys: Vec<f64> = (0..self.directions.len())
                .map(|k| self.projection(k, s))
                .collect();
            log_mean_cosh(&ys) - self.half_snr
        }
    }

    /// `ln q₁(s)` via log-sum-exp over the `2K` Gaussian components.
    pub fn log_density(&self, s: &ComplexSample) -> f64 {
        let inv2v = 1.0 / (2.0 * self.params.variance());
        let terms: Vec<f64> = self
            .directions
            .iter()
            .flat_map(|&(c, sn)| {
                let (mx, my) = (self.radius * c, self.radius * sn);
                let plus = (s.x - mx).powi(2) + (s.y - my).powi(2);
                let minus = (s.x + mx).powi(2) + (s.y + my).powi(2);
                [-plus * inv2v, -minus * inv2v]
            })
            .collect();
        log_norm(&self.params) + log_mean_exp(&terms)
    }
}

/// `ln q₁(s)` for BPSK at pair angle `theta`.
pub fn log_q1_bpsk(s: &ComplexSample, p: &ChannelParams, theta: f64, beta: f64) -> f64 {
    PairMixture::new(p, &[theta], beta).log_density(s)
}

/// `ln q̃₁(s)` for 2N-PSK: `2N` equal-weight components at `±Aβe^{i(θ₀+tπ/N)}`.
pub fn log_q1_psk2n(s: &ComplexSample, p: &ChannelParams, n_pairs: u32, beta: f64) -> f64 {
    PairMixture::new(p, &pair_angles_uniform(n_pairs), beta).log_density(s)
}

/// Single-letter `ln q₁(s)` for any codebook (the per-symbol marginal).
pub fn log_q1_single(s: &ComplexSample, p: &ChannelParams, c: &CodebookSpec, beta: f64) -> f64 {
    PairMixture::for_codebook(p, c, beta).log_density(s)
}

/// `ln Q̂₁⁽ⁿ⁾(s₁..sₙ)` for N-BPSK with base angle offset zero.
pub fn log_qhat_nbpsk(
    samples: &[ComplexSample],
    p: &ChannelParams,
    n_pairs: u32,
    beta: f64,
) -> Result<f64> {
    log_qhat_nbpsk_offset(samples, p, n_pairs, beta, 0.0)
}

/// `ln[(1/N) Σ_t Π_i q_t(s_i)]` where `q_t` is BPSK at `offset + tπ/N`.
pub fn log_qhat_nbpsk_offset(
    samples: &[ComplexSample],
    p: &ChannelParams,
    n_pairs: u32,
    beta: f64,
    offset: f64,
) -> Result<f64> {
    if n_pairs == 0 {
        return Err(Error::ZeroPairs);
    }
    let angles: Vec<f64> = pair_angles_uniform(n_pairs)
        .into_iter()
        .map(|a| a + offset)
        .collect();
    log_qhat_shared(samples, p, &angles, beta)
}

/// Shared-angle n-letter log-density over an arbitrary list of pair angles.
pub fn log_qhat_shared(
    samples: &[ComplexSample],
    p: &ChannelParams,
    pair_angles: &[f64],
    beta: f64,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let per_pair: Vec<f64> = pair_angles
        .iter()
        .map(|&a| {
            let m = PairMixture::new(p, &[a], beta);
            samples.iter().map(|s| m.log_density(s)).sum()
        })
        .collect();
    Ok(log_mean_exp(&per_pair))
}

/// `ln Q₁ⁿ(s) − ln Q₀ⁿ(s)` for an n-letter block under any codebook.
///
/// Product codebooks sum the single-letter ratio; shared-angle codebooks mix
/// the per-pair product ratios in the log domain.
pub fn log_ratio_block(mix: &PairMixture, shared: bool, samples: &[ComplexSample]) -> f64 {
    if shared && mix.n_pairs() > 1 {
        let per_pair: Vec<f64> = (0..mix.n_pairs())
            .map(|k| samples.iter().map(|s| mix.log_ratio_pair(k, s)).sum())
            .collect();
        log_mean_exp(&per_pair)
    } else {
        samples.iter().map(|s| mix.log_ratio(s)).sum()
    }
}

/// Per-pair block log ratios `ln Q_kⁿ/Q₀ⁿ`, the ingredients of `Ψ`.
pub fn log_ratio_per_pair(mix: &PairMixture, samples: &[ComplexSample]) -> Vec<f64> {
    (0..mix.n_pairs())
        .map(|k| samples.iter().map(|s| mix.log_ratio_pair(k, s)).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn p(a: f64, th: f64, s: f64) -> ChannelParams {
        ChannelParams::new(a, th, s).unwrap()
    }

    #[test]
    fn q0_values() {
        let pu = p(1.0, 0.0, 1.0);
        let l2pi = (2.0 * PI).ln();
        assert!((log_q0(&ComplexSample::new(0.0, 0.0), &pu) + l2pi).abs() < 1e-15);
        assert!((log_q0(&ComplexSample::new(1.0, 1.0), &pu) + l2pi + 1.0).abs() < 1e-15);
    }

    #[test]
    fn q1_bpsk_collapses_at_zero_beta() {
        let pp = p(1.3, 0.2, 0.8);
        for s in [ComplexSample::new(0.3, -2.0), ComplexSample::new(5.0, 1.0)] {
            assert_eq!(log_q1_bpsk(&s, &pp, 0.7, 0.0), log_q0(&s, &pp));
            assert_eq!(log_q1_psk2n(&s, &pp, 4, 0.0), log_q0(&s, &pp));
        }
    }

    #[test]
    fn q1_bpsk_at_origin() {
        let pp = p(1.2, 0.0, 1.3);
        let beta = 0.6;
        let want = -(2.0 * PI * pp.variance()).ln() - 1.44 * 0.36 / (2.0 * pp.variance());
        let got = log_q1_bpsk(&ComplexSample::new(0.0, 0.0), &pp, 1.1, beta);
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn q1_bpsk_scalar_oracle() {
        let pp = p(1.2, 0.0, 1.0);
        let s = ComplexSample::new(1.0, 0.0);
        let want = (0.5 / (2.0 * PI)
            * ((-(1.0f64 - 0.6).powi(2) / 2.0).exp() + (-(1.0f64 + 0.6).powi(2) / 2.0).exp()))
        .ln();
        assert!((log_q1_bpsk(&s, &pp, 0.0, 0.5) - want).abs() < 1e-14);
    }

    #[test]
    fn psk2n_single_pair_is_bpsk_at_pi() {
        let pp = p(0.9, 1.0, 1.1);
        let s = ComplexSample::new(0.4, -0.7);
        let a = log_q1_psk2n(&s, &pp, 1, 0.8);
        let b = log_q1_bpsk(&s, &pp, PI, 0.8);
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn nbpsk_reductions() {
        let pp = p(1.0, 0.3, 1.0);
        let samples = [
            ComplexSample::new(0.5, 0.1),
            ComplexSample::new(-1.2, 0.9),
            ComplexSample::new(0.0, -2.0),
        ];
        let n1 = log_qhat_nbpsk(&samples, &pp, 1, 0.4).unwrap();
        let sum: f64 = samples.iter().map(|s| log_q1_bpsk(s, &pp, PI, 0.4)).sum();
        assert!((n1 - sum).abs() < 1e-12);
        let z = log_qhat_nbpsk(&samples, &pp, 3, 0.0).unwrap();
        let q0: f64 = samples.iter().map(|s| log_q0(s, &pp)).sum();
        assert!((z - q0).abs() < 1e-12);
        assert!(matches!(
            log_qhat_nbpsk(&[], &pp, 2, 0.1),
            Err(Error::EmptySamples)
        ));
    }

    #[test]
    fn stable_over_wide_range() {
        // |x|,|y| ≤ 50σ and Aβ/σ ≤ 10
        let pp = p(2.0, 0.4, 0.5);
        let beta = 10.0 * 0.5 / 2.0;
        for &x in &[-25.0, -3.0, 0.0, 7.0, 25.0] {
            for &y in &[-25.0, 0.0, 25.0] {
                let s = ComplexSample::new(x, y);
                for v in [
                    log_q1_bpsk(&s, &pp, 0.2, beta),
                    log_q1_psk2n(&s, &pp, 7, beta),
                    log_qhat_nbpsk(&[s, s, s], &pp, 5, beta).unwrap(),
                ] {
                    assert!(v.is_finite(), "{x} {y} {v}");
                }
                let mix = PairMixture::new(&pp, &pair_angles_uniform(7), beta);
                let direct = log_q1_psk2n(&s, &pp, 7, beta) - log_q0(&s, &pp);
                assert!((mix.log_ratio(&s) - direct).abs() < 1e-9 * direct.abs().max(1.0));
            }
        }
    }

    fn sample() -> impl Strategy<Value = ComplexSample> {
        (-6.0f64..6.0, -6.0f64..6.0).prop_map(|(x, y)| ComplexSample::new(x, y))
    }

    proptest! {
        #[test]
        fn psk2n_rotation_invariance(s in sample(), n in 1u32..8, th in 0.0f64..std::f64::consts::TAU, beta in 0.0f64..2.0) {
            let pp = p(1.1, th, 0.9);
            let shift = PI / n as f64;
            let rotated = s.rotate(shift);
            let shifted = pp.with_phase(th + shift).unwrap();
            let a = log_q1_psk2n(&rotated, &pp, n, beta);
            let b = log_q1_psk2n(&s, &shifted, n, beta);
            // the angle set {tπ/N} is invariant under a shift by π/N modulo π
            let c = log_q1_psk2n(&s, &pp, n, beta);
            prop_assert!((a - c).abs() < 1e-10);
            prop_assert!((b - c).abs() < 1e-10);
        }

        #[test]
        fn nbpsk_single_letter_is_psk2n(s in sample(), n in 1u32..7, beta in 0.0f64..2.0, th in 0.0f64..std::f64::consts::TAU) {
            let pp = p(1.2, th, 1.0);
            let a = log_qhat_nbpsk(&[s], &pp, n, beta).unwrap();
            let b = log_q1_psk2n(&s, &pp, n, beta);
            prop_assert!((a - b).abs() < 1e-11);
        }

        #[test]
        fn ratio_route_matches_density_route(s in sample(), beta in 0.0f64..3.0, d in 0.0f64..PI) {
            let pp = p(1.2, 0.5, 1.1);
            for c in [CodebookSpec::Gen4Psk { delta1: d }, CodebookSpec::Psk2N { n_pairs: 3 }] {
                let mix = PairMixture::for_codebook(&pp, &c, beta);
                let direct = log_q1_single(&s, &pp, &c, beta) - log_q0(&s, &pp);
                prop_assert!((mix.log_ratio(&s) - direct).abs() < 1e-10);
            }
        }

        #[test]
        fn shared_block_ratio_matches_density(xs in prop::collection::vec(sample(), 1..6), beta in 0.0f64..1.5) {
            let pp = p(1.0, 0.2, 1.0);
            let c = CodebookSpec::NBpsk { n_pairs: 3 };
            let mix = PairMixture::for_codebook(&pp, &c, beta);
            let lr = log_ratio_block(&mix, true, &xs);
            let direct = log_qhat_nbpsk(&xs, &pp, 3, beta).unwrap()
                - xs.iter().map(|s| log_q0(s, &pp)).sum::<f64>();
            prop_assert!((lr - direct).abs() < 1e-9);
        }
    }
}
