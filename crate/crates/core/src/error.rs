use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("amplitude must be positive and finite, got {0}")]
    NonPositiveAmplitude(f64),
    #[error("noise level must be positive and finite, got {0}")]
    NonPositiveNoise(f64),
    #[error("codebook needs at least one angle pair")]
    ZeroPairs,
    #[error("angle {name} = {value} is outside its allowed range")]
    AngleOutOfRange { name: &'static str, value: f64 },
    #[error("reflection amplitude must be non-negative and finite, got {0}")]
    NegativeBeta(f64),
    #[error("block length must be at least 1")]
    ZeroBlockLength,
    #[error("empty sample list")]
    EmptySamples,
    #[error("epsilon must lie in (0, 1), got {0}")]
    EpsilonOutOfRange(f64),
    #[error("quadrature did not converge: last refinement delta {delta:e} at {nodes} nodes per dimension")]
    NonConvergence { delta: f64, nodes: usize },
    #[error("quadrature needs at least 8 nodes per dimension, got {0}")]
    TooFewNodes(usize),
    #[error("{method} is not available for {codebook}")]
    UnsupportedMethod { method: String, codebook: String },
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: u64, got: u64 },
    #[error("identity needs at least {min} angle pairs, got {got}")]
    PairCountTooSmall { min: u32, got: u32 },
    #[error("expansion parameter B = {b} exceeds the series regime bound {bound}")]
    ExpansionRegimeViolated { b: f64, bound: f64 },
    #[error("moment order must be 1, 2 or 3, got {0}")]
    BadMomentOrder(u32),
    #[error("invalid sweep configuration: {0}")]
    Config(String),
    #[error("sweep check failed: {0}")]
    CheckFailed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
