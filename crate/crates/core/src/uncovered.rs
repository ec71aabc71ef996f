//! Losses of objects that no agent covers: their tail constant and the
//! expected number of uncovered objects.

use crate::market::MarketSpec;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct UncoveredResult {
    /// P(deg(j) = 0) per object.
    pub p_zero: Vec<f64>,
    /// Tail constant of the aggregate uncovered loss: sum_j K_j P(deg(j) = 0).
    pub constant: f64,
    /// Expected number of uncovered objects.
    pub expected_count: f64,
}

pub fn uncovered(spec: &MarketSpec) -> Result<UncoveredResult> {
    spec.validate()?;
    let p_zero: Vec<f64> = (0..spec.d)
        .map(|j| (0..spec.q).map(|i| 1.0 - spec.p(i, j)).product())
        .collect();
    let constant = p_zero
        .iter()
        .zip(&spec.k_coeffs)
        .map(|(p0, k)| k * p0)
        .sum();
    let expected_count = p_zero.iter().sum();
    Ok(UncoveredResult {
        p_zero,
        constant,
        expected_count,
    })
}

/// Asymptotic P(sum of uncovered losses > t) ~ constant * t^{-alpha}.
pub fn uncovered_tail(spec: &MarketSpec, t: f64) -> Result<f64> {
    assert!(t > 0.0, "t must be positive");
    Ok(uncovered(spec)?.constant * t.powf(-spec.alpha))
}
