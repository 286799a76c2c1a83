//! Numerical checks of the trigonometric sums and series expansions that the
//! closed-form divergences are built from.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, ComplexSample};
use crate::error::{Error, Result};
use crate::math::{kahan_sum, log_log_slope, log_mean_cosh};

/// Absolute residual threshold for the trigonometric identities.
pub const IDENTITY_THRESHOLD: f64 = 1e-9;
/// Accepted window for the fitted remainder exponent of the cosh expansion.
pub const COSH_EXPONENT_RANGE: (f64, f64) = (5.5, 6.5);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub name: String,
    pub max_abs_residual: f64,
    pub trials: u64,
    pub param_grid: String,
    pub threshold: f64,
    /// Extra scalar for checks that fit a quantity (e.g. a remainder exponent).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistic: Option<f64>,
    pub passed: bool,
}

impl IdentityReport {
    fn residual(name: &str, residuals: impl IntoIterator<Item = f64>, grid: String) -> Self {
        let (max, trials) = residuals
            .into_iter()
            .fold((0.0f64, 0u64), |(m, k), r| (m.max(r.abs()), k + 1));
        Self {
            name: name.to_string(),
            max_abs_residual: max,
            trials,
            param_grid: grid,
            threshold: IDENTITY_THRESHOLD,
            statistic: None,
            passed: max < IDENTITY_THRESHOLD,
        }
    }

    /// Merges reports of the same check taken over different grids.
    pub fn combine(name: &str, reports: &[IdentityReport]) -> Self {
        Self {
            name: name.to_string(),
            max_abs_residual: reports.iter().map(|r| r.max_abs_residual).fold(0.0, f64::max),
            trials: reports.iter().map(|r| r.trials).sum(),
            param_grid: reports
                .iter()
                .map(|r| r.param_grid.as_str())
                .collect::<Vec<_>>()
                .join("; "),
            threshold: reports.first().map_or(IDENTITY_THRESHOLD, |r| r.threshold),
            statistic: None,
            passed: reports.iter().all(|r| r.passed),
        }
    }
}

/// Residuals of the four angle-pair sums at one `θ`:
/// `[Σ sin/cos(2tπ/N+θ), Σcos⁴ − 3N/8, Σsin²cos² − N/8, Σcos³sin]`.
/// The first entry is the larger of the sine and cosine sums.
///
/// No restriction on `N`; the sums only reduce to these values for `N ≥ 3`
/// (the first one also at `N = 2`).
pub fn pair_sum_residuals(n_pairs: u32, theta: f64) -> [f64; 4] {
    let nf = n_pairs as f64;
    let ts = || (1..=n_pairs).map(|t| t as f64);
    let sin2 = kahan_sum(ts().map(|t| (2.0 * t * PI / nf + theta).sin()));
    let cos2 = kahan_sum(ts().map(|t| (2.0 * t * PI / nf + theta).cos()));
    let pair = |t: f64| (theta + t * PI / nf).sin_cos();
    let cos4 = kahan_sum(ts().map(|t| pair(t).1.powi(4)));
    let s2c2 = kahan_sum(ts().map(|t| {
        let (s, c) = pair(t);
        s * s * c * c
    }));
    let c3s = kahan_sum(ts().map(|t| {
        let (s, c) = pair(t);
        c * c * c * s
    }));
    [
        sin2.abs().max(cos2.abs()),
        cos4 - 3.0 * nf / 8.0,
        s2c2 - nf / 8.0,
        c3s,
    ]
}

const PAIR_SUM_NAMES: [&str; 4] = [
    "pair_sums.sum_sin_cos_double_angle",
    "pair_sums.sum_cos4",
    "pair_sums.sum_sin2_cos2",
    "pair_sums.sum_cos3_sin",
];

/// One report per identity, maximum residual over `thetas`.
pub fn check_pair_sums(n_pairs: u32, thetas: &[f64]) -> Result<Vec<IdentityReport>> {
    if n_pairs < 3 {
        return Err(Error::PairCountTooSmall {
            min: 3,
            got: n_pairs,
        });
    }
    let all: Vec<[f64; 4]> = thetas.iter().map(|&t| pair_sum_residuals(n_pairs, t)).collect();
    Ok((0..4)
        .map(|k| {
            IdentityReport::residual(
                PAIR_SUM_NAMES[k],
                all.iter().map(|r| r[k]),
                format!("N={n_pairs}, {} angles", thetas.len()),
            )
        })
        .collect())
}

/// `Y_t = A(x cos(θ₀+tπ/N) + y sin(θ₀+tπ/N))/σ²` for `t = 1..N`.
pub fn projection_stats(n_pairs: u32, p: &ChannelParams, s: &ComplexSample) -> Vec<f64> {
    let nf = n_pairs as f64;
    (1..=n_pairs)
        .map(|t| {
            let (sn, c) = (p.phase() + t as f64 * PI / nf).sin_cos();
            p.amplitude() * (s.x * c + s.y * sn) / p.variance()
        })
        .collect()
}

/// Residuals of `ΣY_t² = NA²r²/(2σ⁴)` and `ΣY_t⁴ = 3NA⁴r⁴/(8σ⁸)`, `r² = x²+y²`.
pub fn projection_residuals(n_pairs: u32, p: &ChannelParams, s: &ComplexSample) -> [f64; 2] {
    let ys = projection_stats(n_pairs, p, s);
    let nf = n_pairs as f64;
    let r2 = s.norm_sqr();
    let a2 = p.amplitude().powi(2);
    let v = p.variance();
    let sum2 = kahan_sum(ys.iter().map(|y| y * y));
    let sum4 = kahan_sum(ys.iter().map(|y| y.powi(4)));
    [
        sum2 - nf * a2 * r2 / (2.0 * v * v),
        sum4 - 3.0 * nf * a2 * a2 * r2 * r2 / (8.0 * v.powi(4)),
    ]
}

pub fn check_projection_sums(
    n_pairs: u32,
    p: &ChannelParams,
    points: &[ComplexSample],
) -> Result<Vec<IdentityReport>> {
    if n_pairs < 3 {
        return Err(Error::PairCountTooSmall {
            min: 3,
            got: n_pairs,
        });
    }
    let all: Vec<[f64; 2]> = points
        .iter()
        .map(|s| projection_residuals(n_pairs, p, s))
        .collect();
    let grid = format!(
        "N={n_pairs}, A={}, theta0={}, sigma={}, {} points",
        p.amplitude(),
        p.phase(),
        p.sigma(),
        points.len()
    );
    Ok(vec![
        IdentityReport::residual("projection_sums.sum_y2", all.iter().map(|r| r[0]), grid.clone()),
        IdentityReport::residual("projection_sums.sum_y4", all.iter().map(|r| r[1]), grid),
    ])
}

/// Fourth-order series of `ln((1/N) Σ cosh(Y_t B))` in `B`.
pub fn cosh_series(ys: &[f64], b: f64) -> f64 {
    let nf = ys.len() as f64;
    let m2 = kahan_sum(ys.iter().map(|y| y * y)) / nf;
    let m4 = kahan_sum(ys.iter().map(|y| y.powi(4))) / nf;
    let b2 = b * b;
    b2 / 2.0 * m2 + b2 * b2 / 24.0 * (m4 - 3.0 * m2 * m2)
}

/// Exact value minus the truncated series at one `B`.
pub fn cosh_residual(ys: &[f64], b: f64) -> f64 {
    let scaled: Vec<f64> = ys.iter().map(|y| y * b).collect();
    log_mean_cosh(&scaled) - cosh_series(ys, b)
}

/// Checks that the truncation error of the cosh-mixture expansion is sixth
/// order in `B`: every residual stays below `B⁶ Σ|Y_t|⁶`, and when at least two
/// non-zero `B` values are given, the fitted log-log slope lies in
/// [`COSH_EXPONENT_RANGE`].
pub fn check_cosh_expansion(ys: &[f64], b_values: &[f64]) -> Result<IdentityReport> {
    if ys.is_empty() {
        return Err(Error::EmptySamples);
    }
    let ymax = ys.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    let bound = if ymax > 0.0 { 0.2 / ymax } else { f64::INFINITY };
    if let Some(&b) = b_values.iter().find(|b| b.abs() > bound) {
        return Err(Error::ExpansionRegimeViolated { b, bound });
    }
    let y6: f64 = ys.iter().map(|y| y.abs().powi(6)).sum();
    let residuals: Vec<f64> = b_values.iter().map(|&b| cosh_residual(ys, b)).collect();
    let within = residuals
        .iter()
        .zip(b_values)
        .all(|(r, b)| r.abs() <= b.powi(6) * y6);
    let fit: Vec<(f64, f64)> = b_values
        .iter()
        .zip(&residuals)
        .filter(|(b, r)| **b != 0.0 && **r != 0.0)
        .map(|(b, r)| (b.abs(), r.abs()))
        .collect();
    let exponent = (fit.len() >= 2).then(|| {
        let (bs, rs): (Vec<f64>, Vec<f64>) = fit.into_iter().unzip();
        log_log_slope(&bs, &rs)
    });
    let exponent_ok = exponent.is_none_or(|e| (COSH_EXPONENT_RANGE.0..=COSH_EXPONENT_RANGE.1).contains(&e));
    Ok(IdentityReport {
        name: "cosh_expansion.remainder_order".into(),
        max_abs_residual: residuals.iter().fold(0.0, |m, r| m.max(r.abs())),
        trials: b_values.len() as u64,
        param_grid: format!("N={}, B={b_values:?}", ys.len()),
        threshold: b_values.iter().fold(0.0f64, |m, b| m.max(b.abs())).powi(6) * y6,
        statistic: exponent,
        passed: within && exponent_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng as _, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pair_sums_examples() {
        let r = pair_sum_residuals(4, 0.7);
        assert!(r[1].abs() < 1e-12); // Σcos⁴ = 1.5
        let r = pair_sum_residuals(3, 0.0);
        assert!(r[2].abs() < 1e-12); // Σsin²cos² = 0.375
    }

    #[test]
    fn pair_sums_random_angles_n12() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let thetas: Vec<f64> = (0..100).map(|_| rng.random_range(-10.0..10.0)).collect();
        let reps = check_pair_sums(12, &thetas).unwrap();
        assert_eq!(reps.len(), 4);
        for r in reps {
            assert!(r.max_abs_residual < 1e-10, "{r:?}");
            assert!(r.passed);
        }
    }

    #[test]
    fn pair_sums_small_n() {
        assert!(matches!(
            check_pair_sums(2, &[0.1]),
            Err(Error::PairCountTooSmall { min: 3, got: 2 })
        ));
        // first identity still holds at N = 2, the quartic one does not
        let r = pair_sum_residuals(2, 0.3);
        assert!(r[0] < 1e-15);
        assert!(r[1].abs() > 1e-3);
    }

    #[test]
    fn projection_sums_examples() {
        let p = ChannelParams::new(1.0, 0.0, 1.0).unwrap();
        let ys = projection_stats(4, &p, &ComplexSample::new(1.0, 0.0));
        let s2: f64 = ys.iter().map(|y| y * y).sum();
        assert!((s2 - 2.0).abs() < 1e-12);
        let r = projection_residuals(5, &p, &ComplexSample::new(0.0, 0.0));
        assert_eq!(r, [0.0, 0.0]);
        assert!(check_projection_sums(2, &p, &[]).is_err());
    }

    #[test]
    fn projection_sums_random_points_n8() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let p = ChannelParams::new(1.2, th, 1.0).unwrap();
        let pts: Vec<ComplexSample> = (0..100)
            .map(|_| ComplexSample::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)))
            .collect();
        for r in check_projection_sums(8, &p, &pts).unwrap() {
            assert!(r.max_abs_residual < 1e-9, "{r:?}");
        }
    }

    #[test]
    fn cosh_zero_b() {
        assert_eq!(cosh_residual(&[1.0, -1.0], 0.0), 0.0);
    }

    #[test]
    fn cosh_order_two_points() {
        let bs = [0.1, 0.05, 0.025, 0.0125];
        let rep = check_cosh_expansion(&[1.0, -1.0], &bs).unwrap();
        let e = rep.statistic.unwrap();
        assert!((e - 6.0).abs() < 0.05, "{e}");
        assert!(rep.passed);
        // ln cosh B − B²/2 + B⁴/12 = B⁶/45 + O(B⁸)
        let r = cosh_residual(&[1.0, -1.0], 0.0125);
        assert!((r / (0.0125f64.powi(6) / 45.0) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn cosh_regime_enforced() {
        assert!(matches!(
            check_cosh_expansion(&[2.0, 0.5], &[0.2]),
            Err(Error::ExpansionRegimeViolated { .. })
        ));
    }

    proptest! {
        #[test]
        fn cosh_within_sixth_order_bound(ys in prop::collection::vec(-3.0f64..3.0, 3), frac in 0.01f64..1.0) {
            let ymax = ys.iter().fold(0.0f64, |m, y| m.max(y.abs()));
            prop_assume!(ymax > 1e-3);
            let b = frac * 0.2 / ymax;
            let r = cosh_residual(&ys, b);
            let y6: f64 = ys.iter().map(|y| y.abs().powi(6)).sum();
            prop_assert!(r.abs() <= b.powi(6) * y6);
        }

        #[test]
        fn pair_sums_holds_for_any_angle(n in 3u32..=64, theta in -100.0f64..100.0) {
            for r in pair_sum_residuals(n, theta) {
                prop_assert!(r.abs() < 1e-9);
            }
        }
    }
}
