//! Experiment drivers: divergence sweeps over `β`, BPSK-relative ratios,
//! deflection-angle sweeps, and the self-check suite, with CSV output.

use std::f64::consts::{FRAC_PI_2, LN_2, PI};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, CodebookSpec, ComplexSample, KlEstimate, Method, Rng};
use crate::divergence::{
    approx_kl_with, beta_for_epsilon, kl_block_mc, kl_block_mc_targeted, kl_product,
    kl_single_letter, psi_moment_closed_form, psi_moment_exact, psi_moment_mc, target_std_err,
    ClosedForms, QuadratureSpec, MIN_MC_SAMPLES,
};
use crate::error::{Error, Result};
use crate::identity::{
    check_cosh_expansion, check_pair_sums, check_projection_sums, IdentityReport,
};
use crate::mc::{self, McLayout};

pub const CSV_HEADER: [&str; 7] = [
    "codebook",
    "beta",
    "n_pairs",
    "method",
    "kl_nats",
    "error_bound",
    "seed",
];

/// Relative gap allowed between quadrature and the closed forms at `β ≤ 0.1`.
pub const SMALL_BETA_REL_GAP: f64 = 0.10;
/// Minimum relative spread among 2N-PSK curves at `β = 1`.
pub const PAIR_SPREAD_MIN: f64 = 0.01;
pub const RATIO_WINDOW: (f64, f64) = (0.48, 0.52);
const GRID_MATCH: f64 = 1e-9;

/// Warden channel as written in a config file. Exactly one of `sigma`
/// (per real dimension) and `noise_power` (total `2σ²`) may be given;
/// neither means `σ = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub amplitude: f64,
    #[serde(default)]
    pub theta0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_power: Option<f64>,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        let p = ChannelParams::figure_defaults();
        Self {
            amplitude: p.amplitude(),
            theta0: p.phase(),
            sigma: Some(p.sigma()),
            noise_power: None,
        }
    }
}

impl ChannelConfig {
    pub fn params(&self) -> Result<ChannelParams> {
        match (self.sigma, self.noise_power) {
            (Some(_), Some(_)) => Err(Error::Config(
                "give either sigma or noise_power, not both".into(),
            )),
            (None, Some(p)) => ChannelParams::from_noise_power(self.amplitude, self.theta0, p),
            (s, None) => ChannelParams::new(self.amplitude, self.theta0, s.unwrap_or(1.0)),
        }
    }
}

fn default_n() -> u64 {
    1
}

fn default_methods() -> Vec<Method> {
    vec![Method::ClosedForm, Method::Quadrature]
}

fn default_mc_samples() -> u64 {
    100_000
}

/// One sweep job. Amplitudes come from `beta_grid`, or from `epsilons` via
/// `β = (4ε/n)^{1/4} σ/A`; exactly one of the two must be set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub channel: ChannelConfig,
    pub codebooks: Vec<CodebookSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    /// Block length; divergences are reported for the whole block.
    #[serde(default = "default_n")]
    pub n: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    /// Monte Carlo draws per point; `0` picks the count from a pilot run so
    /// the standard error meets `max(10⁻⁴, 2%)` of the closed form.
    #[serde(default = "default_mc_samples")]
    pub mc_samples: u64,
    /// Deflection angles for the generalized codebooks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
}

/// `0.05, 0.10, …, 1.00`.
pub fn default_beta_grid() -> Vec<f64> {
    (1..=20).map(|k| k as f64 * 0.05).collect()
}

/// `points` evenly spaced angles covering `[0, π]`.
pub fn delta_grid(points: usize) -> Vec<f64> {
    let last = (points.max(2) - 1) as f64;
    (0..points.max(2)).map(|k| PI * k as f64 / last).collect()
}

fn curve_codebooks() -> Vec<CodebookSpec> {
    vec![
        CodebookSpec::bpsk(0.0),
        CodebookSpec::Psk2N { n_pairs: 2 },
        CodebookSpec::Psk2N { n_pairs: 3 },
        CodebookSpec::Psk2N { n_pairs: 4 },
    ]
}

impl SweepConfig {
    /// Divergence curves of BPSK and 2N-PSK (`N = 2, 3, 4`) on the default grid.
    pub fn default_curves() -> Self {
        Self {
            channel: ChannelConfig::default(),
            codebooks: curve_codebooks(),
            beta_grid: Some(default_beta_grid()),
            epsilons: None,
            n: 1,
            methods: default_methods(),
            seed: 0,
            output_path: None,
            quadrature: QuadratureSpec::default(),
            mc_samples: default_mc_samples(),
            deltas: None,
        }
    }

    /// Deflection sweep over 181 angles at `β = 0.5`.
    pub fn deflection_sweep() -> Self {
        Self {
            codebooks: Vec::new(),
            beta_grid: Some(vec![0.5]),
            deltas: Some(delta_grid(181)),
            ..Self::default_curves()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn params(&self) -> Result<ChannelParams> {
        self.channel.params()
    }

    /// The resolved amplitude grid.
    pub fn betas(&self) -> Result<Vec<f64>> {
        let p = self.params()?;
        let betas = match (&self.beta_grid, &self.epsilons) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "give either beta_grid or epsilons, not both".into(),
                ))
            }
            (Some(b), None) => b.clone(),
            (None, Some(e)) => e
                .iter()
                .map(|&eps| beta_for_epsilon(eps, self.n, &p))
                .collect::<Result<_>>()?,
            (None, None) => default_beta_grid(),
        };
        if betas.is_empty() {
            return Err(Error::Config("empty beta grid".into()));
        }
        if let Some(&b) = betas.iter().find(|b| !b.is_finite() || **b < 0.0) {
            return Err(Error::NegativeBeta(b));
        }
        Ok(betas)
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        self.betas()?;
        self.quadrature.validate()?;
        if self.n == 0 {
            return Err(Error::ZeroBlockLength);
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods requested".into()));
        }
        if self.mc_samples != 0 && self.mc_samples < MIN_MC_SAMPLES {
            return Err(Error::TooFewSamples {
                min: MIN_MC_SAMPLES,
                got: self.mc_samples,
            });
        }
        for c in &self.codebooks {
            c.validate()?;
        }
        Ok(())
    }
}

/// One output line. `value` is a divergence in nats or a ratio, depending on
/// the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub codebook: String,
    pub beta: f64,
    pub n_pairs: u32,
    pub method: Method,
    pub value: f64,
    pub error_bound: f64,
    pub seed: u64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Divergence,
    Ratio,
}

/// A named pass/fail assertion made by a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub kind: ValueKind,
    pub rows: Vec<SweepRow>,
    pub checks: Vec<Check>,
}

impl SweepResult {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn value(&self, codebook: &CodebookSpec, beta: f64, method: Method) -> Option<f64> {
        let label = codebook.label();
        self.rows
            .iter()
            .find(|r| r.codebook == label && r.method == method && r.beta == beta)
            .map(|r| r.value)
    }
}

fn canonical_methods(requested: &[Method], required: &[Method]) -> Vec<Method> {
    [Method::ClosedForm, Method::Quadrature, Method::MonteCarlo]
        .into_iter()
        .filter(|m| requested.contains(m) || required.contains(m))
        .collect()
}

struct Task {
    codebook: CodebookSpec,
    beta: f64,
    method: Method,
}

fn estimate(cfg: &SweepConfig, p: &ChannelParams, t: &Task, stream: u64) -> Result<KlEstimate> {
    match t.method {
        Method::ClosedForm => approx_kl_with(&t.codebook, p, t.beta, cfg.n, &ClosedForms::default()),
        Method::Quadrature => {
            let single = kl_single_letter(&t.codebook, p, t.beta, &cfg.quadrature)?;
            kl_product(cfg.n, &single)
        }
        Method::MonteCarlo => {
            let rng = Rng::new(cfg.seed, stream);
            if cfg.mc_samples == 0 {
                kl_block_mc_targeted(&t.codebook, p, t.beta, cfg.n, &rng)
            } else {
                kl_block_mc(&t.codebook, p, t.beta, cfg.n, cfg.mc_samples, &rng, McLayout::default())
            }
        }
    }
}

/// Evaluates every (codebook, β, method) triple in parallel; rows come back
/// codebook-major, then by grid index, then by method. Each task's Monte
/// Carlo stream is its position in that order.
fn evaluate(cfg: &SweepConfig, codebooks: &[CodebookSpec], methods: &[Method]) -> Result<Vec<SweepRow>> {
    let p = cfg.params()?;
    let betas = cfg.betas()?;
    let tasks: Vec<Task> = codebooks
        .iter()
        .flat_map(|c| {
            betas.iter().flat_map(move |&beta| {
                methods.iter().map(move |&method| Task {
                    codebook: *c,
                    beta,
                    method,
                })
            })
        })
        .collect();
    tasks
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let start = Instant::now();
            let est = estimate(cfg, &p, t, i as u64)?;
            Ok(SweepRow {
                codebook: t.codebook.label(),
                beta: t.beta,
                n_pairs: t.codebook.n_pairs(),
                method: t.method,
                value: est.value,
                error_bound: est.error_bound,
                seed: cfg.seed,
                wall_time_s: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

/// Plain divergence sweep over the configured codebooks and methods.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    if cfg.codebooks.is_empty() {
        return Err(Error::Config("no codebooks requested".into()));
    }
    let methods = canonical_methods(&cfg.methods, &[]);
    Ok(SweepResult {
        kind: ValueKind::Divergence,
        rows: evaluate(cfg, &cfg.codebooks, &methods)?,
        checks: Vec::new(),
    })
}

/// Whether `cfg` lists BPSK and 2N-PSK with `N = 2, 3, 4`.
pub fn has_curve_codebooks(cfg: &SweepConfig) -> bool {
    let has_bpsk = cfg
        .codebooks
        .iter()
        .any(|c| matches!(c, CodebookSpec::Bpsk { .. }));
    has_bpsk
        && [2, 3, 4]
            .iter()
            .all(|&n| cfg.codebooks.contains(&CodebookSpec::Psk2N { n_pairs: n }))
}

fn require_curve_codebooks(cfg: &SweepConfig) -> Result<()> {
    if has_curve_codebooks(cfg) {
        Ok(())
    } else {
        Err(Error::Config(
            "codebooks must include bpsk and psk2n with n_pairs 2, 3 and 4".into(),
        ))
    }
}

fn bpsk_of(cfg: &SweepConfig) -> CodebookSpec {
    *cfg.codebooks
        .iter()
        .find(|c| matches!(c, CodebookSpec::Bpsk { .. }))
        .expect("checked by require_curve_codebooks")
}

fn multi_pair(cfg: &SweepConfig) -> Vec<CodebookSpec> {
    cfg.codebooks
        .iter()
        .filter(|c| matches!(c, CodebookSpec::Psk2N { n_pairs } if *n_pairs >= 2))
        .copied()
        .collect()
}

fn grid_point(betas: &[f64], target: f64) -> Option<f64> {
    betas.iter().copied().find(|b| (b - target).abs() < GRID_MATCH)
}

/// Divergence curves of BPSK and 2N-PSK with three assertions: multi-pair
/// codebooks stay strictly below BPSK, quadrature tracks the closed forms
/// within 10% for `β ≤ 0.1`, and the 2N-PSK curves separate by more than 1%
/// at `β = 1`. The last two apply only when the grid reaches those points.
pub fn run_divergence_curves(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    require_curve_codebooks(cfg)?;
    let methods = canonical_methods(&cfg.methods, &[Method::ClosedForm, Method::Quadrature]);
    let rows = evaluate(cfg, &cfg.codebooks, &methods)?;
    let mut result = SweepResult {
        kind: ValueKind::Divergence,
        rows,
        checks: Vec::new(),
    };
    let betas = cfg.betas()?;
    let bpsk = bpsk_of(cfg);
    let pairs = multi_pair(cfg);
    let quad = |r: &SweepResult, c: &CodebookSpec, b: f64| {
        r.value(c, b, Method::Quadrature).expect("quadrature row")
    };

    let mut violations = Vec::new();
    for &b in betas.iter().filter(|b| **b > 0.0) {
        let base = quad(&result, &bpsk, b);
        for c in &pairs {
            let v = quad(&result, c, b);
            if v.is_nan() || v >= base {
                violations.push(format!("{c} at beta={b}: {v} >= {base}"));
            }
        }
    }
    result.checks.push(Check::new(
        "multi_pair_below_bpsk",
        violations.is_empty(),
        if violations.is_empty() {
            format!("{} grid points", betas.len())
        } else {
            violations.join("; ")
        },
    ));

    let small: Vec<f64> = betas
        .iter()
        .copied()
        .filter(|b| *b > 0.0 && *b <= 0.1 + GRID_MATCH)
        .collect();
    if !small.is_empty() {
        let mut worst = (0.0f64, String::new());
        for &b in &small {
            for c in &cfg.codebooks {
                let q = quad(&result, c, b);
                let cf = result.value(c, b, Method::ClosedForm).expect("closed-form row");
                let gap = ((q - cf) / q).abs();
                if gap > worst.0 || worst.1.is_empty() {
                    worst = (gap, format!("{c} at beta={b}"));
                }
            }
        }
        result.checks.push(Check::new(
            "small_beta_closed_form_agreement",
            worst.0 <= SMALL_BETA_REL_GAP,
            format!("max relative gap {:.4} ({})", worst.0, worst.1),
        ));
    }

    if let Some(b) = grid_point(&betas, 1.0) {
        let vals: Vec<f64> = [2, 3, 4]
            .iter()
            .map(|&n| quad(&result, &CodebookSpec::Psk2N { n_pairs: n }, b))
            .collect();
        let hi = vals.iter().copied().fold(f64::MIN, f64::max);
        let lo = vals.iter().copied().fold(f64::MAX, f64::min);
        let spread = (hi - lo) / lo;
        result.checks.push(Check::new(
            "pair_count_spread_at_unit_beta",
            spread > PAIR_SPREAD_MIN,
            format!("relative spread {spread:.4} over N=2,3,4: {vals:?}"),
        ));
    }
    Ok(result)
}

fn ratio_bound(num: &SweepRow, den: &SweepRow) -> f64 {
    let r = num.value / den.value;
    (r * ((num.error_bound / num.value).powi(2) + (den.error_bound / den.value).powi(2)).sqrt())
        .abs()
}

/// `D_{2N-PSK} / D_BPSK` on the grid, per method. Asserts the quadrature ratio
/// lies in `[0.48, 0.52]` at `β = 0.1`, approaches ½ monotonically through
/// `β = 0.2, 0.1, 0.05`, and that the closed-form ratio equals
/// `½ / (1 − 2a/3)` with `a = A²β²/σ²`.
pub fn run_ratio_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    require_curve_codebooks(cfg)?;
    let p = cfg.params()?;
    let betas = cfg.betas()?;
    let methods = canonical_methods(&cfg.methods, &[Method::ClosedForm, Method::Quadrature]);
    let bpsk = bpsk_of(cfg);
    let pairs = multi_pair(cfg);
    let mut all = vec![bpsk];
    all.extend(&pairs);
    let div = evaluate(cfg, &all, &methods)?;
    let find = |label: &str, b: f64, m: Method| {
        div.iter()
            .find(|r| r.codebook == label && r.beta == b && r.method == m)
            .expect("evaluated row")
    };
    let mut rows = Vec::new();
    for c in &pairs {
        for &b in betas.iter().filter(|b| **b > 0.0) {
            for &m in &methods {
                let num = find(&c.label(), b, m);
                let den = find(&bpsk.label(), b, m);
                rows.push(SweepRow {
                    codebook: num.codebook.clone(),
                    beta: b,
                    n_pairs: num.n_pairs,
                    method: m,
                    value: num.value / den.value,
                    error_bound: ratio_bound(num, den),
                    seed: cfg.seed,
                    wall_time_s: num.wall_time_s + den.wall_time_s,
                });
            }
        }
    }
    let mut result = SweepResult {
        kind: ValueKind::Ratio,
        rows,
        checks: Vec::new(),
    };
    let mut checks = Vec::new();
    let ratio = |c: &CodebookSpec, b: f64, m: Method| result.value(c, b, m).expect("ratio row");

    if let Some(b) = grid_point(&betas, 0.1) {
        let vals: Vec<f64> = pairs.iter().map(|c| ratio(c, b, Method::Quadrature)).collect();
        checks.push(Check::new(
            "ratio_near_half_at_beta_0.1",
            vals.iter()
                .all(|r| (RATIO_WINDOW.0..=RATIO_WINDOW.1).contains(r)),
            format!("quadrature ratios {vals:?}"),
        ));
    }

    let ladder: Option<Vec<f64>> = [0.2, 0.1, 0.05]
        .iter()
        .map(|&t| grid_point(&betas, t))
        .collect();
    if let Some(ladder) = ladder {
        let mut ok = true;
        let mut detail = Vec::new();
        for c in &pairs {
            let gaps: Vec<f64> = ladder
                .iter()
                .map(|&b| (ratio(c, b, Method::Quadrature) - 0.5).abs())
                .collect();
            ok &= gaps.windows(2).all(|w| w[1] < w[0]);
            detail.push(format!("{c}: {gaps:?}"));
        }
        checks.push(Check::new(
            "monotone_approach_to_half",
            ok,
            detail.join("; "),
        ));
    }

    let mut worst = 0.0f64;
    for c in &pairs {
        for &b in betas.iter().filter(|b| **b > 0.0) {
            let a = p.snr(b);
            let expected = 0.5 / (1.0 - 2.0 * a / 3.0);
            let got = ratio(c, b, Method::ClosedForm);
            worst = worst.max(((got - expected) / expected).abs());
        }
    }
    checks.push(Check::new(
        "closed_form_ratio",
        worst <= 1e-12,
        format!("max relative deviation {worst:.3e}"),
    ));
    result.checks = checks;
    Ok(result)
}

fn argmin(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| {
            if v < bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}

/// Sweeps the deflection angles of the generalized 4-PSK (closed form and
/// quadrature) and generalized 2-BPSK (closed form) codebooks. Asserts each
/// curve is minimized within one grid step of `π/2`, and that the 2-BPSK
/// closed form is exactly twice the multi-pair value at `Δ = 0` and equal to
/// it at `Δ = π/2`.
pub fn run_deflection_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let p = cfg.params()?;
    let betas = cfg.betas()?;
    let deltas = cfg.deltas.clone().unwrap_or_else(|| delta_grid(181));
    if deltas.len() < 3 {
        return Err(Error::Config("need at least three deflection angles".into()));
    }
    if !deltas.windows(2).all(|w| w[1] > w[0])
        || deltas[0].abs() > GRID_MATCH
        || (deltas[deltas.len() - 1] - PI).abs() > GRID_MATCH
    {
        return Err(Error::Config(
            "deflection angles must increase from 0 to π".into(),
        ));
    }
    let gen4: Vec<CodebookSpec> = deltas
        .iter()
        .map(|&d| CodebookSpec::Gen4Psk { delta1: d })
        .collect();
    let gen2: Vec<CodebookSpec> = deltas
        .iter()
        .map(|&d| CodebookSpec::Gen2Bpsk { delta2: d })
        .collect();
    let mut rows = evaluate(cfg, &gen4, &[Method::ClosedForm, Method::Quadrature])?;
    rows.extend(evaluate(cfg, &gen2, &[Method::ClosedForm])?);
    let mut result = SweepResult {
        kind: ValueKind::Divergence,
        rows,
        checks: Vec::new(),
    };
    let step = deltas
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0f64, f64::max);
    let forms = ClosedForms::default();
    for &b in betas.iter().filter(|b| **b > 0.0) {
        for (name, books, method) in [
            ("gen4psk_closed_form", &gen4, Method::ClosedForm),
            ("gen4psk_quadrature", &gen4, Method::Quadrature),
            ("gen2bpsk_closed_form", &gen2, Method::ClosedForm),
        ] {
            let curve: Vec<f64> = books
                .iter()
                .map(|c| result.value(c, b, method).expect("deflection row"))
                .collect();
            let at = deltas[argmin(&curve)];
            result.checks.push(Check::new(
                &format!("{name}_minimum_at_right_angle(beta={b})"),
                (at - FRAC_PI_2).abs() <= step + GRID_MATCH,
                format!("argmin at {at:.6}, grid step {step:.6}"),
            ));
        }
        let base = approx_kl_with(&CodebookSpec::Psk2N { n_pairs: 2 }, &p, b, cfg.n, &forms)?.value;
        let factor = |d: f64| -> Result<f64> {
            Ok(approx_kl_with(&CodebookSpec::Gen2Bpsk { delta2: d }, &p, b, cfg.n, &forms)?.value / base)
        };
        let (f0, f90) = (factor(0.0)?, factor(FRAC_PI_2)?);
        result.checks.push(Check::new(
            &format!("gen2bpsk_boundary_factors(beta={b})"),
            (f0 - 2.0).abs() <= 1e-12 && (f90 - 1.0).abs() <= 1e-12,
            format!("factor {f0} at 0, {f90} at pi/2"),
        ));
    }
    Ok(result)
}

/// Settings of the self-check suite.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VerifyOptions {
    pub seed: u64,
    pub forms: ClosedForms,
}

fn z_report(name: &str, grid: String, diff: f64, se: f64, samples: u64) -> IdentityReport {
    IdentityReport {
        name: name.to_string(),
        max_abs_residual: diff.abs(),
        trials: samples,
        param_grid: grid,
        threshold: 3.0 * se,
        statistic: Some(diff / se),
        passed: diff.abs() <= 3.0 * se,
    }
}

fn rel_report(name: &str, grid: String, reference: f64, value: f64, tol: f64) -> IdentityReport {
    let rel = ((value - reference) / reference).abs();
    IdentityReport {
        name: name.to_string(),
        max_abs_residual: rel,
        trials: 1,
        param_grid: grid,
        threshold: tol,
        statistic: None,
        passed: rel <= tol,
    }
}

/// Trigonometric sums for `N = 3..=32` at 100 random phases each, and the
/// projection sums at 100 random observation points each.
pub fn verify_identities(seed: u64) -> Result<Vec<IdentityReport>> {
    let mut rng = Rng::new(seed, 0);
    let p = ChannelParams::figure_defaults();
    let mut pair = vec![Vec::new(); 4];
    let mut proj = vec![Vec::new(); 2];
    for n in 3..=32u32 {
        let thetas: Vec<f64> = (0..100).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        for (k, r) in check_pair_sums(n, &thetas)?.into_iter().enumerate() {
            pair[k].push(r);
        }
        let pts: Vec<ComplexSample> = (0..100)
            .map(|_| ComplexSample::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)))
            .collect();
        for (k, r) in check_projection_sums(n, &p, &pts)?.into_iter().enumerate() {
            proj[k].push(r);
        }
    }
    let combine = |rs: &[IdentityReport], grid: &str| IdentityReport {
        param_grid: grid.to_string(),
        ..IdentityReport::combine(&rs[0].name, rs)
    };
    let mut out: Vec<IdentityReport> = pair
        .iter()
        .map(|rs| combine(rs, "N=3..=32, 100 uniform phases each"))
        .chain(proj.iter().map(|rs| {
            combine(rs, "N=3..=32, 100 uniform points in [-4,4]^2 each, A=1.2, theta0=0, sigma=1")
        }))
        .collect();
    let ys: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ymax = ys.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    let bs: Vec<f64> = [1.0, 0.5, 0.25, 0.125].iter().map(|f| f * 0.2 / ymax).collect();
    out.push(check_cosh_expansion(&ys, &bs)?);
    Ok(out)
}

/// Ψ moments of N-BPSK by Monte Carlo against the closed forms and against
/// exact enumeration, within three standard errors. Each order gets its own
/// run sized so the standard error is `max(10⁻⁴, 2%)` of its closed form.
pub fn verify_psi_moments(opts: &VerifyOptions) -> Result<Vec<IdentityReport>> {
    let p = ChannelParams::new(1.0, 0.0, 1.0)?;
    let (n_pairs, beta, n) = (2u32, 0.2, 10u64);
    let grid = format!("N={n_pairs}, n={n}, beta={beta}, A=1, sigma=1");
    let base = Rng::new(opts.seed, 100);
    let mut out = Vec::new();
    for order in 1..=3u32 {
        let closed = psi_moment_closed_form(&p, n_pairs, beta, n, order, &opts.forms)?;
        let pilot = psi_moment_mc(&p, n_pairs, beta, n, order, MIN_MC_SAMPLES, &base.derive(u64::MAX - order as u64))?;
        let sd = pilot.std_err * (pilot.samples as f64).sqrt();
        let samples = mc::samples_for_target(sd, target_std_err(closed), MIN_MC_SAMPLES);
        let m = psi_moment_mc(&p, n_pairs, beta, n, order, samples, &base.derive(order as u64))?;
        let exact = psi_moment_exact(&p, n_pairs, beta, n, order)?;
        out.push(z_report(
            &format!("psi_moment_{order}.closed_form"),
            grid.clone(),
            m.value - closed,
            m.std_err,
            m.samples,
        ));
        out.push(z_report(
            &format!("psi_moment_{order}.exact"),
            grid.clone(),
            m.value - exact,
            m.std_err,
            m.samples,
        ));
    }
    Ok(out)
}

/// Quadrature against Monte Carlo at moderate `β`, quadrature against the
/// closed forms at small `β`, and the amplitude rule's budget identity.
pub fn verify_methods(opts: &VerifyOptions) -> Result<Vec<IdentityReport>> {
    let p = ChannelParams::figure_defaults();
    let q = QuadratureSpec::default();
    let mut out = Vec::new();
    for (k, c) in curve_codebooks().iter().enumerate() {
        let beta = 0.3;
        let quad = kl_single_letter(c, &p, beta, &q)?;
        let mc = kl_block_mc(c, &p, beta, 1, 400_000, &Rng::new(opts.seed, 200 + k as u64), McLayout::default())?;
        out.push(z_report(
            &format!("quadrature_vs_monte_carlo.{c}"),
            format!("beta={beta}, n=1, A=1.2, sigma=1"),
            mc.value - quad.value,
            mc.error_bound,
            mc.n_samples_or_nodes,
        ));
        let beta = 0.05;
        let quad = kl_single_letter(c, &p, beta, &q)?;
        let closed = approx_kl_with(c, &p, beta, 1, &opts.forms)?;
        out.push(rel_report(
            &format!("quadrature_vs_closed_form.{c}"),
            format!("beta={beta}, n=1, A=1.2, sigma=1"),
            quad.value,
            closed.value,
            SMALL_BETA_REL_GAP,
        ));
    }
    let (eps, n) = (0.05, 100u64);
    let beta = beta_for_epsilon(eps, n, &p)?;
    let lead = n as f64 * opts.forms.bpsk_a2 * p.snr(beta).powi(2);
    out.push(rel_report(
        "amplitude_rule_budget",
        format!("epsilon={eps}, n={n}"),
        eps,
        lead,
        1e-12,
    ));
    Ok(out)
}

/// The whole self-check suite.
pub fn run_verify_all(opts: &VerifyOptions) -> Result<Vec<IdentityReport>> {
    let mut out = verify_identities(opts.seed)?;
    out.extend(verify_psi_moments(opts)?);
    out.extend(verify_methods(opts)?);
    Ok(out)
}

/// Writes `result` as CSV. Divergences are converted to bits when `bits` is
/// set (the value column is then named `kl_bits`); ratio sweeps name it
/// `ratio`.
pub fn write_csv<W: std::io::Write>(result: &SweepResult, out: W, bits: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = CSV_HEADER;
    let scale = match (result.kind, bits) {
        (ValueKind::Ratio, _) => {
            header[4] = "ratio";
            1.0
        }
        (ValueKind::Divergence, true) => {
            header[4] = "kl_bits";
            1.0 / LN_2
        }
        (ValueKind::Divergence, false) => 1.0,
    };
    w.write_record(header)?;
    for r in &result.rows {
        w.write_record([
            r.codebook.clone(),
            r.beta.to_string(),
            r.n_pairs.to_string(),
            r.method.as_str().to_string(),
            (r.value * scale).to_string(),
            (r.error_bound * scale).to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Path of the JSON copy of the config written next to a CSV.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("config.json")
}

/// Writes the CSV and a sidecar JSON of `cfg`.
pub fn write_outputs(result: &SweepResult, cfg: &SweepConfig, path: &Path, bits: bool) -> Result<()> {
    write_csv(result, fs::File::create(path)?, bits)?;
    fs::write(sidecar_path(path), serde_json::to_string_pretty(cfg)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SweepConfig {
        SweepConfig {
            beta_grid: Some(vec![0.05, 0.1, 0.2, 1.0]),
            ..SweepConfig::default_curves()
        }
    }

    #[test]
    fn default_curves_checks_pass() {
        let r = run_divergence_curves(&small_cfg()).unwrap();
        assert_eq!(r.rows.len(), 4 * 4 * 2);
        assert_eq!(r.checks.len(), 3);
        assert!(r.passed(), "{:?}", r.checks);
    }

    #[test]
    fn ratio_checks_pass() {
        let r = run_ratio_sweep(&small_cfg()).unwrap();
        assert_eq!(r.kind, ValueKind::Ratio);
        assert_eq!(r.rows.len(), 3 * 4 * 2);
        assert!(r.passed(), "{:?}", r.checks);
    }

    #[test]
    fn default_curves_requires_codebooks() {
        let cfg = SweepConfig {
            codebooks: vec![CodebookSpec::bpsk(0.0)],
            ..small_cfg()
        };
        assert!(matches!(run_divergence_curves(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn deflection_sweep_small_grid() {
        let cfg = SweepConfig {
            deltas: Some(delta_grid(19)),
            ..SweepConfig::deflection_sweep()
        };
        let r = run_deflection_sweep(&cfg).unwrap();
        assert_eq!(r.rows.len(), 19 * 3);
        assert!(r.passed(), "{:?}", r.checks);
        let bad = SweepConfig {
            deltas: Some(vec![0.0, 1.0]),
            ..cfg
        };
        assert!(run_deflection_sweep(&bad).is_err());
    }

    #[test]
    fn epsilon_grid_resolves() {
        let cfg = SweepConfig {
            beta_grid: None,
            epsilons: Some(vec![0.05]),
            n: 100,
            ..SweepConfig::default_curves()
        };
        let b = cfg.betas().unwrap();
        let p = cfg.params().unwrap();
        assert!((b[0] - beta_for_epsilon(0.05, 100, &p).unwrap()).abs() < 1e-15);
        let both = SweepConfig {
            beta_grid: Some(vec![0.1]),
            ..cfg
        };
        assert!(both.betas().is_err());
    }

    #[test]
    fn channel_config_noise_power() {
        let c = ChannelConfig {
            sigma: None,
            noise_power: Some(2.0),
            ..ChannelConfig::default()
        };
        assert_eq!(c.params().unwrap().sigma(), 1.0);
        let both = ChannelConfig {
            sigma: Some(1.0),
            ..c
        };
        assert!(both.params().is_err());
    }

    #[test]
    fn config_round_trip() {
        let cfg = small_cfg();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(SweepConfig::from_json(&text).unwrap(), cfg);
        assert!(SweepConfig::from_json(r#"{"codebooks": [], "bogus": 1}"#).is_err());
    }

    #[test]
    fn csv_header_and_bits() {
        let cfg = SweepConfig {
            beta_grid: Some(vec![0.1]),
            codebooks: vec![CodebookSpec::bpsk(0.0)],
            methods: vec![Method::ClosedForm],
            ..SweepConfig::default_curves()
        };
        let r = run_sweep(&cfg).unwrap();
        let mut nats = Vec::new();
        write_csv(&r, &mut nats, false).unwrap();
        let text = String::from_utf8(nats).unwrap();
        assert!(text.starts_with("codebook,beta,n_pairs,method,kl_nats,error_bound,seed\n"));
        let mut bits = Vec::new();
        write_csv(&r, &mut bits, true).unwrap();
        let text_bits = String::from_utf8(bits).unwrap();
        assert!(text_bits.starts_with("codebook,beta,n_pairs,method,kl_bits,"));
        let v = |t: &str| -> f64 { t.lines().nth(1).unwrap().split(',').nth(4).unwrap().parse().unwrap() };
        assert!((v(&text_bits) * LN_2 - v(&text)).abs() < 1e-15);
    }

    #[test]
    fn monte_carlo_rows_deterministic() {
        let cfg = SweepConfig {
            beta_grid: Some(vec![0.3]),
            codebooks: vec![CodebookSpec::NBpsk { n_pairs: 2 }],
            methods: vec![Method::MonteCarlo],
            n: 5,
            mc_samples: 10_000,
            seed: 11,
            ..SweepConfig::default_curves()
        };
        assert_eq!(run_sweep(&cfg).unwrap().rows[0].value, run_sweep(&cfg).unwrap().rows[0].value);
    }

    #[test]
    fn identities_pass() {
        for r in verify_identities(3).unwrap() {
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn mutated_multi_pair_coefficient_caught() {
        let opts = VerifyOptions {
            seed: 1,
            forms: ClosedForms {
                multi_pair_a2: 1.0 / 7.0,
                ..ClosedForms::default()
            },
        };
        let reps = verify_methods(&opts).unwrap();
        assert!(reps
            .iter()
            .any(|r| r.name.starts_with("quadrature_vs_closed_form.psk2n") && !r.passed));
    }
}
