//! Aggregation functions: r-(quasi-)norms and coordinate projections.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The exponent of an r-norm. `r >= 1` is a norm, `0 < r < 1` a quasi-norm.
/// The max-norm is a dedicated variant rather than a large finite exponent,
/// which keeps `deg^(alpha(1/r - 1))` free of overflow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NormSpec {
    Finite(f64),
    Max,
}

impl NormSpec {
    pub fn new(r: f64) -> Result<Self> {
        if r.is_infinite() && r > 0.0 {
            Ok(NormSpec::Max)
        } else if r > 0.0 && r.is_finite() {
            Ok(NormSpec::Finite(r))
        } else {
            Err(Error::InvalidNorm(r))
        }
    }

    /// 1/r, with the max-norm mapped to 0.
    pub fn inv_r(&self) -> f64 {
        match self {
            NormSpec::Finite(r) => 1.0 / r,
            NormSpec::Max => 0.0,
        }
    }

    pub fn is_norm(&self) -> bool {
        match self {
            NormSpec::Finite(r) => *r >= 1.0,
            NormSpec::Max => true,
        }
    }

    pub fn apply(&self, x: &[f64]) -> f64 {
        match self {
            NormSpec::Finite(r) => {
                let s: f64 = x.iter().map(|v| v.abs().powf(*r)).sum();
                s.powf(1.0 / r)
            }
            NormSpec::Max => x.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        }
    }

    /// `||Ae_j||^alpha` for an insurance-rule column of degree `deg`:
    /// `deg^(alpha(1/r - 1))` on `{deg >= 1}`, zero on the empty column.
    pub fn column_power(&self, deg: u32, alpha: f64) -> f64 {
        if deg == 0 {
            0.0
        } else {
            (deg as f64).powf(alpha * (self.inv_r() - 1.0))
        }
    }
}

impl std::fmt::Display for NormSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NormSpec::Finite(r) => write!(f, "{r}"),
            NormSpec::Max => write!(f, "inf"),
        }
    }
}

/// A continuous 1-homogeneous aggregation of the exposure vector: either one
/// agent's exposure or an r-norm of the whole vector. Agent indices are
/// 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Aggregation {
    Projection(usize),
    Norm(NormSpec),
}

impl Aggregation {
    pub fn apply(&self, x: &[f64]) -> f64 {
        match self {
            Aggregation::Projection(i) => x[*i],
            Aggregation::Norm(n) => n.apply(x),
        }
    }

    /// Value on an insurance-rule column, which is determined by the column
    /// degree and, for projections, whether the projected agent holds the
    /// edge: projections give `1/deg` on the edge event, norms give
    /// `deg^(1/r - 1)` on `{deg >= 1}`.
    pub fn column_value(&self, deg: u32, has_edge: impl Fn(usize) -> bool) -> f64 {
        match self {
            Aggregation::Projection(i) => {
                if deg > 0 && has_edge(*i) {
                    1.0 / deg as f64
                } else {
                    0.0
                }
            }
            Aggregation::Norm(n) => {
                if deg == 0 {
                    0.0
                } else {
                    (deg as f64).powf(n.inv_r() - 1.0)
                }
            }
        }
    }

    /// Agent indices this aggregation singles out.
    pub fn marked_agents(&self) -> Vec<usize> {
        match self {
            Aggregation::Projection(i) => vec![*i],
            Aggregation::Norm(_) => vec![],
        }
    }
}

impl std::fmt::Display for Aggregation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Aggregation::Projection(i) => write!(f, "agent{}", i + 1),
            Aggregation::Norm(n) => write!(f, "norm{n}"),
        }
    }
}
