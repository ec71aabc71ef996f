//! The bipartite market model: agents, objects, edge probabilities, weight
//! rule and tail law, plus sampling of realized weighted adjacency matrices.

use serde::{Deserialize, Serialize};

use crate::agg::NormSpec;
use crate::rng;
use crate::{Error, Result};

/// How a realized edge set is turned into weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WeightRule {
    /// A_ij = 1(i~j) / deg(j): each claim is split equally among the agents
    /// insuring it. Nonzero columns sum to 1.
    InsuranceEqualSplit,
    /// A_ij = C_i 1(i~j) / deg(i): agent i splits capital C_i equally across
    /// the objects it invests in. Nonzero rows sum to C_i.
    InvestmentEqualSplit { capitals: Vec<f64> },
    /// A_ij = w_ij 1(i~j) for a fixed positive weight matrix (row-major).
    ExplicitConstant { weights: Vec<f64> },
}

/// Extremal dependence regime of the object losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    AsymptoticallyIndependent,
    AsymptoticallyFullyDependent,
}

/// Full description of a market: q agents, d objects, independent edges with
/// probabilities p_ij, a weight rule, and Pareto tails P(V_j > t) ~ K_j t^-alpha.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSpec {
    pub q: usize,
    pub d: usize,
    /// Row-major q x d matrix of edge probabilities.
    pub edge_probs: Vec<f64>,
    pub weight_rule: WeightRule,
    pub alpha: f64,
    pub k_coeffs: Vec<f64>,
    pub regime: Regime,
}

impl MarketSpec {
    /// Homogeneous insurance market: every edge present with probability `p`,
    /// all scale coefficients equal to 1.
    pub fn homogeneous(q: usize, d: usize, p: f64, alpha: f64) -> Self {
        MarketSpec {
            q,
            d,
            edge_probs: vec![p; q * d],
            weight_rule: WeightRule::InsuranceEqualSplit,
            alpha,
            k_coeffs: vec![1.0; d],
            regime: Regime::AsymptoticallyIndependent,
        }
    }

    pub fn p(&self, i: usize, j: usize) -> f64 {
        self.edge_probs[i * self.d + j]
    }

    /// Edge probabilities of column j.
    pub fn column_probs(&self, j: usize) -> Vec<f64> {
        (0..self.q).map(|i| self.p(i, j)).collect()
    }

    pub fn sum_k(&self) -> f64 {
        self.k_coeffs.iter().sum()
    }

    pub fn is_insurance(&self) -> bool {
        self.weight_rule == WeightRule::InsuranceEqualSplit
    }

    /// Checks every invariant; returns the full list of violations on failure.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.q == 0 {
            errs.push("q must be positive".to_string());
        }
        if self.d == 0 {
            errs.push("d must be positive".to_string());
        }
        if self.edge_probs.len() != self.q * self.d {
            errs.push(format!(
                "edge_probs has {} entries, expected {}x{}",
                self.edge_probs.len(),
                self.q,
                self.d
            ));
        } else {
            for i in 0..self.q {
                for j in 0..self.d {
                    let p = self.p(i, j);
                    if !(0.0..=1.0).contains(&p) {
                        errs.push(format!(
                            "probability out of range at ({},{}): {}",
                            i + 1,
                            j + 1,
                            p
                        ));
                    }
                }
            }
        }
        if !(self.alpha > 0.0) {
            errs.push("alpha must be positive".to_string());
        }
        if self.k_coeffs.len() != self.d {
            errs.push(format!(
                "k_coeffs has {} entries, expected {}",
                self.k_coeffs.len(),
                self.d
            ));
        }
        for (j, k) in self.k_coeffs.iter().enumerate() {
            if !(*k > 0.0) {
                errs.push(format!("K_{} must be positive, got {}", j + 1, k));
            }
        }
        match &self.weight_rule {
            WeightRule::InsuranceEqualSplit => {}
            WeightRule::InvestmentEqualSplit { capitals } => {
                if capitals.len() != self.q {
                    errs.push(format!(
                        "capitals has {} entries, expected {}",
                        capitals.len(),
                        self.q
                    ));
                }
                for (i, c) in capitals.iter().enumerate() {
                    if !(*c > 0.0) {
                        errs.push(format!("capital C_{} must be positive, got {}", i + 1, c));
                    }
                }
            }
            WeightRule::ExplicitConstant { weights } => {
                if weights.len() != self.q * self.d {
                    errs.push(format!(
                        "weights has {} entries, expected {}x{}",
                        weights.len(),
                        self.q,
                        self.d
                    ));
                }
                for (idx, w) in weights.iter().enumerate() {
                    if !(*w > 0.0) {
                        errs.push(format!("weight at flat index {idx} must be positive, got {w}"));
                    }
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(errs))
        }
    }

    /// Draws the edge indicators and applies the weight rule. Edge (i,j)
    /// consumes draw number j*q + i of the stream keyed by `seed`, so the
    /// same seed always yields a bit-identical sample.
    pub fn sample_adjacency(&self, seed: u64) -> AdjacencySample {
        let mut rng = rng::stream(seed);
        let mut indicators = vec![0u8; self.q * self.d];
        // Column-major draw order matches the stream layout.
        for j in 0..self.d {
            for i in 0..self.q {
                let u = rng::open_closed01(&mut rng);
                if u <= self.p(i, j) {
                    indicators[i * self.d + j] = 1;
                }
            }
        }
        AdjacencySample::from_indicators(self, indicators)
    }
}

/// One realized weighted adjacency matrix. `indicators` and `weights` are
/// row-major q x d; `weights[i*d+j] = 0` whenever the relevant degree is zero
/// (the 0/0 := 0 convention).
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencySample {
    pub q: usize,
    pub d: usize,
    pub indicators: Vec<u8>,
    pub weights: Vec<f64>,
}

impl AdjacencySample {
    pub fn from_indicators(spec: &MarketSpec, indicators: Vec<u8>) -> Self {
        let (q, d) = (spec.q, spec.d);
        debug_assert_eq!(indicators.len(), q * d);
        let mut weights = vec![0.0; q * d];
        match &spec.weight_rule {
            WeightRule::InsuranceEqualSplit => {
                for j in 0..d {
                    let deg: u32 = (0..q).map(|i| indicators[i * d + j] as u32).sum();
                    if deg > 0 {
                        for i in 0..q {
                            if indicators[i * d + j] == 1 {
                                weights[i * d + j] = 1.0 / deg as f64;
                            }
                        }
                    }
                }
            }
            WeightRule::InvestmentEqualSplit { capitals } => {
                for i in 0..q {
                    let deg: u32 = (0..d).map(|j| indicators[i * d + j] as u32).sum();
                    if deg > 0 {
                        for j in 0..d {
                            if indicators[i * d + j] == 1 {
                                weights[i * d + j] = capitals[i] / deg as f64;
                            }
                        }
                    }
                }
            }
            WeightRule::ExplicitConstant { weights: w } => {
                for idx in 0..q * d {
                    if indicators[idx] == 1 {
                        weights[idx] = w[idx];
                    }
                }
            }
        }
        AdjacencySample {
            q,
            d,
            indicators,
            weights,
        }
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.d + j]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.indicators[i * self.d + j] == 1
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.q).map(|i| self.weight(i, j)).collect()
    }

    pub fn column_degree(&self, j: usize) -> u32 {
        (0..self.q).map(|i| self.indicators[i * self.d + j] as u32).sum()
    }

    /// Exposure vector F = A V.
    pub fn exposures(&self, claims: &[f64]) -> Vec<f64> {
        debug_assert_eq!(claims.len(), self.d);
        (0..self.q)
            .map(|i| {
                (0..self.d)
                    .map(|j| self.weight(i, j) * claims[j])
                    .sum::<f64>()
            })
            .collect()
    }

    /// Column vector of A K^{1/alpha} 1, i.e. x_i = sum_j K_j^{1/alpha} A_ij.
    pub fn dep_exposure(&self, k_coeffs: &[f64], alpha: f64) -> Vec<f64> {
        let kpow: Vec<f64> = k_coeffs.iter().map(|k| k.powf(1.0 / alpha)).collect();
        self.exposures(&kpow)
    }
}

/// `||Ae_j||_r^alpha` of one sampled column.
pub fn column_norm_alpha(
    sample: &AdjacencySample,
    j: usize,
    norm: NormSpec,
    alpha: f64,
) -> f64 {
    norm.apply(&sample.column(j)).powf(alpha)
}

// ---------------------------------------------------------------------------
// Configuration file ingestion
// ---------------------------------------------------------------------------

/// JSON representation of a market. `edge_prob` and `k_coeffs` accept either
/// a scalar (homogeneous) or a full matrix / array.
#[derive(Debug, Deserialize)]
struct MarketConfig {
    agents: usize,
    objects: usize,
    edge_prob: ScalarOrMatrix,
    #[serde(default)]
    weight_rule: WeightRuleConfig,
    alpha: f64,
    k_coeffs: ScalarOrVec,
    #[serde(default)]
    regime: RegimeConfig,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ScalarOrMatrix {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ScalarOrVec {
    Scalar(f64),
    Vec(Vec<f64>),
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
enum WeightRuleConfig {
    #[default]
    InsuranceEqualSplit,
    InvestmentEqualSplit {
        capitals: Vec<f64>,
    },
    ExplicitConstant {
        weights: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RegimeConfig {
    #[default]
    AsymptoticallyIndependent,
    AsymptoticallyFullyDependent,
}

impl MarketSpec {
    /// Parses a JSON configuration and validates the resulting spec.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: MarketConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let (q, d) = (cfg.agents, cfg.objects);
        let edge_probs = match cfg.edge_prob {
            ScalarOrMatrix::Scalar(p) => vec![p; q * d],
            ScalarOrMatrix::Matrix(rows) => {
                if rows.len() != q || rows.iter().any(|r| r.len() != d) {
                    return Err(Error::Config(format!(
                        "edge_prob matrix must be {q}x{d}"
                    )));
                }
                rows.into_iter().flatten().collect()
            }
        };
        let k_coeffs = match cfg.k_coeffs {
            ScalarOrVec::Scalar(k) => vec![k; d],
            ScalarOrVec::Vec(v) => v,
        };
        let weight_rule = match cfg.weight_rule {
            WeightRuleConfig::InsuranceEqualSplit => WeightRule::InsuranceEqualSplit,
            WeightRuleConfig::InvestmentEqualSplit { capitals } => {
                WeightRule::InvestmentEqualSplit { capitals }
            }
            WeightRuleConfig::ExplicitConstant { weights } => {
                if weights.len() != q || weights.iter().any(|r| r.len() != d) {
                    return Err(Error::Config(format!("weights matrix must be {q}x{d}")));
                }
                WeightRule::ExplicitConstant {
                    weights: weights.into_iter().flatten().collect(),
                }
            }
        };
        let regime = match cfg.regime {
            RegimeConfig::AsymptoticallyIndependent => Regime::AsymptoticallyIndependent,
            RegimeConfig::AsymptoticallyFullyDependent => Regime::AsymptoticallyFullyDependent,
        };
        let spec = MarketSpec {
            q,
            d,
            edge_probs,
            weight_rule,
            alpha: cfg.alpha,
            k_coeffs,
            regime,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_accepts_homogeneous() {
        assert!(MarketSpec::homogeneous(5, 10, 0.3, 5.0).validate().is_ok());
    }

    #[test]
    fn validate_reports_bad_probability() {
        let mut spec = MarketSpec::homogeneous(2, 2, 0.5, 2.0);
        spec.edge_probs[0] = 1.2;
        let err = spec.validate().unwrap_err();
        match err {
            Error::InvalidSpec(msgs) => {
                assert!(msgs.iter().any(|m| m.contains("out of range at (1,1)")));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn validate_reports_nonpositive_alpha() {
        let spec = MarketSpec::homogeneous(2, 2, 0.5, 0.0);
        let err = spec.validate().unwrap_err();
        match err {
            Error::InvalidSpec(msgs) => {
                assert!(msgs.iter().any(|m| m.contains("alpha must be positive")));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn complete_graph_insurance_weights() {
        let spec = MarketSpec::homogeneous(5, 3, 1.0, 2.0);
        let a = spec.sample_adjacency(0);
        for i in 0..5 {
            for j in 0..3 {
                assert_eq!(a.weight(i, j), 0.2);
            }
        }
    }

    #[test]
    fn empty_graph_is_all_zero() {
        let spec = MarketSpec::homogeneous(4, 4, 0.0, 2.0);
        let a = spec.sample_adjacency(123);
        assert!(a.weights.iter().all(|w| *w == 0.0));
        assert!(a.indicators.iter().all(|x| *x == 0));
    }

    #[test]
    fn single_edge_column() {
        let spec = MarketSpec {
            q: 2,
            d: 1,
            edge_probs: vec![1.0, 0.0],
            weight_rule: WeightRule::InsuranceEqualSplit,
            alpha: 2.0,
            k_coeffs: vec![1.0],
            regime: Regime::AsymptoticallyIndependent,
        };
        let a = spec.sample_adjacency(9);
        assert_eq!(a.column(0), vec![1.0, 0.0]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = MarketSpec::homogeneous(6, 7, 0.4, 2.0);
        let a = spec.sample_adjacency(77);
        let b = spec.sample_adjacency(77);
        assert_eq!(a, b);
        let c = spec.sample_adjacency(78);
        assert_ne!(a, c);
    }

    #[test]
    fn insurance_columns_sum_to_one() {
        let spec = MarketSpec::homogeneous(8, 5, 0.5, 2.0);
        for seed in 0..200 {
            let a = spec.sample_adjacency(seed);
            for j in 0..5 {
                let s: f64 = a.column(j).iter().sum();
                if a.column_degree(j) > 0 {
                    assert!((s - 1.0).abs() < 1e-12);
                } else {
                    assert_eq!(s, 0.0);
                }
            }
        }
    }

    #[test]
    fn investment_rows_sum_to_capital() {
        let spec = MarketSpec {
            q: 3,
            d: 6,
            edge_probs: vec![0.5; 18],
            weight_rule: WeightRule::InvestmentEqualSplit {
                capitals: vec![1.0, 2.5, 0.3],
            },
            alpha: 2.0,
            k_coeffs: vec![1.0; 6],
            regime: Regime::AsymptoticallyIndependent,
        };
        let capitals = [1.0, 2.5, 0.3];
        for seed in 0..200 {
            let a = spec.sample_adjacency(seed);
            for i in 0..3 {
                let s: f64 = (0..6).map(|j| a.weight(i, j)).sum();
                let deg: u32 = (0..6).map(|j| a.indicators[i * 6 + j] as u32).sum();
                if deg > 0 {
                    assert!((s - capitals[i]).abs() < 1e-12);
                } else {
                    assert_eq!(s, 0.0);
                }
            }
        }
    }

    #[test]
    fn column_norm_alpha_insurance_identities() {
        let spec = MarketSpec::homogeneous(4, 1, 1.0, 2.0);
        let a = spec.sample_adjacency(0);
        // deg = 4, r = 1: equal split sums to 1.
        assert!((column_norm_alpha(&a, 0, NormSpec::Finite(1.0), 7.3) - 1.0).abs() < 1e-12);
        // deg = 4, r = 2, alpha = 2: (4^{-1/2})^2 = 1/4.
        assert!((column_norm_alpha(&a, 0, NormSpec::Finite(2.0), 2.0) - 0.25).abs() < 1e-12);
        let empty = MarketSpec::homogeneous(4, 1, 0.0, 2.0).sample_adjacency(0);
        assert_eq!(column_norm_alpha(&empty, 0, NormSpec::Finite(2.0), 2.0), 0.0);
    }

    #[test]
    fn empirical_edge_frequency_matches_p() {
        let spec = MarketSpec::homogeneous(3, 3, 0.3, 2.0);
        let n = 100_000u64;
        let mut counts = vec![0u64; 9];
        for seed in 0..n {
            let a = spec.sample_adjacency(seed);
            for idx in 0..9 {
                counts[idx] += a.indicators[idx] as u64;
            }
        }
        let se = (0.3 * 0.7 / n as f64).sqrt();
        for c in counts {
            let freq = c as f64 / n as f64;
            assert!(
                (freq - 0.3).abs() < 4.0 * se,
                "freq {freq} off from 0.3 (se {se})"
            );
        }
    }

    #[test]
    fn config_roundtrip() {
        let text = r#"{
            "agents": 5, "objects": 10, "edge_prob": 0.3,
            "weight_rule": "insurance_equal_split",
            "alpha": 5.0, "k_coeffs": 1.0,
            "regime": "asymptotically_independent"
        }"#;
        let spec = MarketSpec::from_json(text).unwrap();
        assert_eq!(spec, MarketSpec::homogeneous(5, 10, 0.3, 5.0));
    }

    #[test]
    fn config_matrix_form() {
        let text = r#"{
            "agents": 2, "objects": 2,
            "edge_prob": [[0.1, 0.2], [0.3, 0.4]],
            "alpha": 2.0, "k_coeffs": [1.0, 2.0]
        }"#;
        let spec = MarketSpec::from_json(text).unwrap();
        assert_eq!(spec.edge_probs, vec![0.1, 0.2, 0.3, 0.4]);
        assert_eq!(spec.k_coeffs, vec![1.0, 2.0]);
        assert!(spec.is_insurance());
    }

    #[test]
    fn config_rejects_bad_spec() {
        let text = r#"{"agents": 2, "objects": 1, "edge_prob": 1.5, "alpha": 2.0, "k_coeffs": 1.0}"#;
        assert!(MarketSpec::from_json(text).is_err());
    }
}
