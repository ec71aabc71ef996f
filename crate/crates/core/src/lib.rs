//! Asymptotic systemic risk measures for bipartite agent-object markets.
//!
//! A market is a random bipartite graph between `q` agents and `d` objects,
//! where object losses have Pareto tails. This crate computes the
//! regular-variation constants behind VaR/CoTE asymptotics, the limits of the
//! conditional systemic risk measures (ICoVaR, SCoVaR, MCoVaR and their tail
//! expectation counterparts), Poisson approximations of those quantities with
//! guaranteed error bounds, the tail constant for losses covered by no agent,
//! and a Monte Carlo harness that validates the closed forms empirically.

pub mod agg;
pub mod cond;
pub mod constants;
pub mod count_dist;
pub mod error;
pub mod market;
pub mod montecarlo;
pub mod poisson;
pub mod rng;
pub mod uncovered;

pub use agg::{Aggregation, NormSpec};
pub use cond::{CondTarget, CoteConstants, CovarResult, KappaThresholds};
pub use constants::{EvalMethod, RiskConstants};
pub use count_dist::CountDistribution;
pub use error::Error;
pub use market::{AdjacencySample, MarketSpec, Regime, WeightRule};
pub use montecarlo::{EmpiricalTailReport, SimConfig, SimTarget, TailRecord};
pub use poisson::{ApproxWithBound, PoissonParams};
pub use uncovered::UncoveredResult;

pub type Result<T> = std::result::Result<T, Error>;
