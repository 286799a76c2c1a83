use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use irs_covert::detector::{simulate_optimal_test, tv_distance_mc};
use irs_covert::divergence::{beta_for_epsilon, kl_with_method, GainOptions};
use irs_covert::harness::{
    has_curve_codebooks, run_deflection_sweep, run_divergence_curves, run_ratio_sweep,
    run_sweep, run_verify_all, write_csv, write_outputs, ChannelConfig, SweepConfig,
    SweepResult, VerifyOptions,
};
use irs_covert::{ChannelParams, CodebookSpec, Method, Rng};

#[derive(Parser)]
#[command(name = "irs-covert", version, about = "Covert divergence sweeps and detector simulations")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON sweep config; each subcommand has its own default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// CSV destination; a `.config.json` sidecar is written next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report divergences in bits instead of nats.
    #[arg(long, global = true)]
    bits: bool,
    /// Total complex noise power `2σ²` (overrides the config's noise).
    #[arg(long, global = true)]
    noise_power: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Divergence versus β; asserts the curve properties when the config
    /// lists BPSK and 2N-PSK with N = 2, 3, 4.
    Sweep,
    /// 2N-PSK to BPSK divergence ratio versus β.
    Ratio,
    /// Divergence versus the deflection angle of the generalized codebooks.
    DeflectSweep,
    /// Simulates the warden's likelihood-ratio test.
    Detect(DetectArgs),
    /// Runs the identity, moment and method-agreement checks.
    Verify,
    /// Amplitude that puts the BPSK divergence of an n-block at ε.
    BetaFor(BetaForArgs),
}

#[derive(Args)]
struct DetectArgs {
    /// bpsk[:theta], psk2n:N, nbpsk:N, gen4psk:DELTA or gen2bpsk:DELTA.
    #[arg(long, default_value = "psk2n:2")]
    codebook: String,
    #[arg(long, conflicts_with = "epsilon")]
    beta: Option<f64>,
    /// Picks β from the covertness budget instead of `--beta`.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 100)]
    n: u64,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
}

#[derive(Args)]
struct BetaForArgs {
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    n: u64,
}

fn parse_codebook(text: &str) -> Result<CodebookSpec> {
    let (kind, arg) = match text.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (text, None),
    };
    let num = |what: &str| -> Result<f64> {
        arg.with_context(|| format!("{kind} needs {what}"))?
            .parse()
            .with_context(|| format!("bad {what} in {text:?}"))
    };
    let pairs = || -> Result<u32> {
        arg.context("pair count missing")?
            .parse()
            .with_context(|| format!("bad pair count in {text:?}"))
    };
    let c = match kind {
        "bpsk" => CodebookSpec::bpsk(arg.map_or(Ok(0.0), |_| num("an angle"))?),
        "psk2n" => CodebookSpec::Psk2N { n_pairs: pairs()? },
        "nbpsk" => CodebookSpec::NBpsk { n_pairs: pairs()? },
        "gen4psk" => CodebookSpec::Gen4Psk {
            delta1: num("an angle")?,
        },
        "gen2bpsk" => CodebookSpec::Gen2Bpsk {
            delta2: num("an angle")?,
        },
        _ => bail!("unknown codebook {kind:?}"),
    };
    c.validate()?;
    Ok(c)
}

fn load_config(common: &Common, default: SweepConfig) -> Result<SweepConfig> {
    let mut cfg = match &common.config {
        Some(path) => SweepConfig::from_path(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        None => default,
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(p) = common.noise_power {
        cfg.channel.sigma = None;
        cfg.channel.noise_power = Some(p);
    }
    if let Some(out) = &common.out {
        cfg.output_path = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn channel(common: &Common) -> Result<ChannelParams> {
    let mut c = ChannelConfig::default();
    if let Some(p) = common.noise_power {
        c.sigma = None;
        c.noise_power = Some(p);
    }
    Ok(c.params()?)
}

/// Writes the sweep output and reports its checks on stderr.
fn emit(result: &SweepResult, cfg: &SweepConfig, bits: bool) -> Result<bool> {
    match &cfg.output_path {
        Some(path) => write_outputs(result, cfg, path, bits)
            .with_context(|| format!("writing {}", path.display()))?,
        None => write_csv(result, io::stdout().lock(), bits)?,
    }
    let mut err = io::stderr().lock();
    for c in &result.checks {
        writeln!(err, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
    }
    Ok(result.passed())
}

fn detect(common: &Common, args: &DetectArgs) -> Result<bool> {
    let p = channel(common)?;
    let c = parse_codebook(&args.codebook)?;
    let beta = match (args.beta, args.epsilon) {
        (Some(b), _) => b,
        (None, Some(e)) => beta_for_epsilon(e, args.n, &p)?,
        (None, None) => bail!("give --beta or --epsilon"),
    };
    let seed = common.seed.unwrap_or(0);
    let rng = Rng::new(seed, 0);
    let det = simulate_optimal_test(&c, &p, beta, args.n, args.trials, &rng)?;
    let tv = tv_distance_mc(&c, &p, beta, args.n, args.trials.max(10_000), &rng.derive(2))?;
    let method = if c.is_product() {
        Method::Quadrature
    } else {
        Method::MonteCarlo
    };
    let opts = GainOptions {
        seed,
        ..GainOptions::default()
    };
    let kl = kl_with_method(&c, &p, beta, args.n, method, &opts, 3)?;
    // P_FA + P_MD ≥ 1 − √(D/2)
    let floor = 1.0 - (kl.value.max(0.0) / 2.0).sqrt();
    let slack = 3.0 * det.error_sum_se() + 3.0 * kl.error_bound;
    let passed = det.error_sum() >= floor - slack;
    let report = serde_json::json!({
        "codebook": c.label(),
        "beta": beta,
        "n": args.n,
        "seed": seed,
        "detection": det,
        "tv": tv,
        "kl": kl,
        "pinsker_floor": floor,
        "passed": passed,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(passed)
}

fn verify(common: &Common) -> Result<bool> {
    let opts = VerifyOptions {
        seed: common.seed.unwrap_or(0),
        ..VerifyOptions::default()
    };
    let reports = run_verify_all(&opts)?;
    let mut out = io::stdout().lock();
    for r in &reports {
        writeln!(out, "{}", serde_json::to_string(r)?)?;
    }
    Ok(reports.iter().all(|r| r.passed))
}

fn run(cli: &Cli) -> Result<bool> {
    let common = &cli.common;
    match &cli.command {
        Command::Sweep => {
            let cfg = load_config(common, SweepConfig::default_curves())?;
            let result = if has_curve_codebooks(&cfg) {
                run_divergence_curves(&cfg)?
            } else {
                run_sweep(&cfg)?
            };
            emit(&result, &cfg, common.bits)
        }
        Command::Ratio => {
            let cfg = load_config(common, SweepConfig::default_curves())?;
            emit(&run_ratio_sweep(&cfg)?, &cfg, false)
        }
        Command::DeflectSweep => {
            let cfg = load_config(common, SweepConfig::deflection_sweep())?;
            emit(&run_deflection_sweep(&cfg)?, &cfg, common.bits)
        }
        Command::Detect(args) => detect(common, args),
        Command::Verify => verify(common),
        Command::BetaFor(args) => {
            let beta = beta_for_epsilon(args.epsilon, args.n, &channel(common)?)?;
            println!("{beta}");
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
