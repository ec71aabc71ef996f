use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Market specification violates one or more invariants. Every violated
    /// constraint is listed.
    #[error("invalid market specification: {}", .0.join("; "))]
    InvalidSpec(Vec<String>),

    #[error("exact evaluation requires the insurance equal-split weight rule")]
    ExactRequiresInsurance,

    #[error("no exact path for this quantity; use enumeration or Monte Carlo")]
    NoExactPath,

    #[error("enumeration ceiling exceeded: {configs} configurations > 2^{limit}")]
    EnumerationTooLarge { configs: u128, limit: u32 },

    #[error("gamma must lie in (0,1), got {0}")]
    GammaOutOfRange(f64),

    #[error("CoTE undefined: infinite mean regime (alpha = {0} <= 1)")]
    InfiniteMean(f64),

    #[error("conditioning event asymptotically null (empty market)")]
    EmptyMarket,

    #[error("agent {0} asymptotically riskless (zero tail constant)")]
    RisklessAgent(usize),

    #[error("mutual measures require distinct agents, got i = k = {0}")]
    SameAgent(usize),

    #[error("Poisson system approximation stated only for r >= 1")]
    QuasiNormApprox,

    #[error("weight envelopes available only for the insurance equal-split rule")]
    EnvelopesUnavailable,

    #[error("norm exponent must be positive, got {0}")]
    InvalidNorm(f64),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),
}
