//! Regular-variation constants of the market: the per-agent and systemic
//! tail constants in both dependence regimes, and the marginal VaR/CoTE
//! asymptotics they drive.

use rayon::prelude::*;

use crate::agg::{Aggregation, NormSpec};
use crate::count_dist::column_expect;
use crate::market::{AdjacencySample, MarketSpec, WeightRule};
use crate::rng;
use crate::{Error, Result};

/// Total configuration ceiling for exhaustive enumeration: 2^22.
pub const ENUM_BITS: u32 = 22;

/// How an expectation over the random graph is evaluated.
///
/// `Exact` is available for the insurance rule only, where every column
/// functional reduces to a Poisson-binomial degree expectation.
/// `Enumeration` sums over all edge configurations (per column where the
/// functional is column-local, otherwise over the whole matrix) and refuses
/// above the 2^22 ceiling. `MonteCarlo` averages over sampled graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMethod {
    Exact,
    Enumeration,
    MonteCarlo { reps: u64, seed: u64 },
}

impl std::fmt::Display for EvalMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EvalMethod::Exact => write!(f, "exact"),
            EvalMethod::Enumeration => write!(f, "enumeration"),
            EvalMethod::MonteCarlo { reps, seed } => write!(f, "montecarlo({reps},{seed})"),
        }
    }
}

/// The constants of the VaR/CoTE asymptotics for every agent and for the
/// aggregated system under `norm`, in both dependence regimes.
#[derive(Debug, Clone)]
pub struct RiskConstants {
    pub c_ind_agent: Vec<f64>,
    pub c_ind_sys: f64,
    pub c_dep_agent: Vec<f64>,
    pub c_dep_sys: f64,
    pub norm: NormSpec,
    pub ind_method: EvalMethod,
    pub dep_method: EvalMethod,
}

impl RiskConstants {
    /// Computes all constants. The dependent-regime expectations couple all
    /// columns, so they never have an exact path; `dep_method` must be
    /// `Enumeration` or `MonteCarlo`.
    pub fn compute(
        spec: &MarketSpec,
        norm: NormSpec,
        ind_method: EvalMethod,
        dep_method: EvalMethod,
    ) -> Result<Self> {
        spec.validate()?;
        let c_ind_agent = (0..spec.q)
            .map(|i| c_ind_agent(spec, i, ind_method))
            .collect::<Result<Vec<_>>>()?;
        let c_ind_sys = c_ind_sys(spec, norm, ind_method)?;
        let (c_dep_agent, c_dep_sys) = c_dep_constants(spec, norm, dep_method)?;
        Ok(RiskConstants {
            c_ind_agent,
            c_ind_sys,
            c_dep_agent,
            c_dep_sys,
            norm,
            ind_method,
            dep_method,
        })
    }
}

// ---------------------------------------------------------------------------
// Evaluation backends shared across modules
// ---------------------------------------------------------------------------

/// Column functionals are local to one column exactly when the weight rule
/// derives a column's weights from that column's indicators alone.
pub(crate) fn column_separable(spec: &MarketSpec) -> bool {
    !matches!(spec.weight_rule, WeightRule::InvestmentEqualSplit { .. })
}

/// E f(weights of column j, indicators of column j) by summing over all 2^q
/// configurations of the column. Only valid for column-separable rules.
pub(crate) fn enumerate_column(
    spec: &MarketSpec,
    j: usize,
    f: impl Fn(&[f64], &[bool]) -> f64,
) -> Result<f64> {
    debug_assert!(column_separable(spec));
    if spec.q as u32 > ENUM_BITS {
        return Err(Error::EnumerationTooLarge {
            configs: 1u128 << spec.q,
            limit: ENUM_BITS,
        });
    }
    let probs = spec.column_probs(j);
    let mut total = 0.0;
    let mut indicators = vec![false; spec.q];
    let mut weights = vec![0.0; spec.q];
    for mask in 0u64..(1 << spec.q) {
        let mut w = 1.0;
        let mut deg = 0u32;
        for i in 0..spec.q {
            let present = mask >> i & 1 == 1;
            indicators[i] = present;
            w *= if present { probs[i] } else { 1.0 - probs[i] };
            deg += present as u32;
        }
        if w == 0.0 {
            continue;
        }
        for i in 0..spec.q {
            weights[i] = if !indicators[i] {
                0.0
            } else {
                match &spec.weight_rule {
                    WeightRule::InsuranceEqualSplit => 1.0 / deg as f64,
                    WeightRule::ExplicitConstant { weights: ws } => ws[i * spec.d + j],
                    WeightRule::InvestmentEqualSplit { .. } => unreachable!(),
                }
            };
        }
        total += w * f(&weights, &indicators);
    }
    Ok(total)
}

/// Accumulates E of several functionals of the whole matrix by exhausting all
/// 2^(q d) edge configurations. `fill` adds the functional values of one
/// realization into `out`, which is scaled by the configuration probability.
pub(crate) fn enumerate_matrix_vec(
    spec: &MarketSpec,
    nout: usize,
    fill: impl Fn(&AdjacencySample, &mut [f64]),
) -> Result<Vec<f64>> {
    let bits = spec.q * spec.d;
    if bits as u32 > ENUM_BITS {
        return Err(Error::EnumerationTooLarge {
            configs: 1u128 << bits,
            limit: ENUM_BITS,
        });
    }
    let mut acc = vec![0.0; nout];
    let mut vals = vec![0.0; nout];
    let mut indicators = vec![0u8; bits];
    for mask in 0u64..(1 << bits) {
        let mut w = 1.0;
        for (idx, ind) in indicators.iter_mut().enumerate() {
            let present = mask >> idx & 1 == 1;
            *ind = present as u8;
            let p = spec.edge_probs[idx];
            w *= if present { p } else { 1.0 - p };
        }
        if w == 0.0 {
            continue;
        }
        let sample = AdjacencySample::from_indicators(spec, indicators.clone());
        vals.iter_mut().for_each(|v| *v = 0.0);
        fill(&sample, &mut vals);
        for (a, v) in acc.iter_mut().zip(&vals) {
            *a += w * v;
        }
    }
    Ok(acc)
}

pub(crate) fn enumerate_matrix(
    spec: &MarketSpec,
    f: impl Fn(&AdjacencySample) -> f64,
) -> Result<f64> {
    Ok(enumerate_matrix_vec(spec, 1, |a, out| out[0] = f(a))?[0])
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
}

const MC_CHUNK: u64 = 4096;

/// Sample mean of several functionals over `reps` adjacency samples, with
/// standard errors. Replication t uses substream t of `seed`; chunk sums are
/// combined in fixed order, so the result is bit-identical for any worker
/// count.
pub(crate) fn mc_expect_vec(
    spec: &MarketSpec,
    reps: u64,
    seed: u64,
    nout: usize,
    fill: impl Fn(&AdjacencySample, &mut [f64]) + Sync,
) -> Vec<McEstimate> {
    let nchunks = reps.div_ceil(MC_CHUNK);
    let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..nchunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * MC_CHUNK;
            let hi = (lo + MC_CHUNK).min(reps);
            let mut sum = vec![0.0; nout];
            let mut sumsq = vec![0.0; nout];
            let mut vals = vec![0.0; nout];
            for t in lo..hi {
                let sample = spec.sample_adjacency(rng::substream(seed, t));
                vals.iter_mut().for_each(|v| *v = 0.0);
                fill(&sample, &mut vals);
                for (k, v) in vals.iter().enumerate() {
                    sum[k] += v;
                    sumsq[k] += v * v;
                }
            }
            (sum, sumsq)
        })
        .collect();
    let mut sum = vec![0.0; nout];
    let mut sumsq = vec![0.0; nout];
    for (s, sq) in partials {
        for k in 0..nout {
            sum[k] += s[k];
            sumsq[k] += sq[k];
        }
    }
    let n = reps as f64;
    (0..nout)
        .map(|k| {
            let mean = sum[k] / n;
            let var = ((sumsq[k] / n - mean * mean) / (n - 1.0).max(1.0)).max(0.0);
            McEstimate {
                mean,
                stderr: var.sqrt(),
            }
        })
        .collect()
}

pub fn mc_expect(
    spec: &MarketSpec,
    reps: u64,
    seed: u64,
    f: impl Fn(&AdjacencySample) -> f64 + Sync,
) -> McEstimate {
    mc_expect_vec(spec, reps, seed, 1, |a, out| out[0] = f(a))[0]
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// C_ind^i = sum_j K_j E A_ij^alpha.
pub fn c_ind_agent(spec: &MarketSpec, i: usize, method: EvalMethod) -> Result<f64> {
    c_agg_ind(spec, &Aggregation::Projection(i), method)
}

/// C_ind^S = sum_j K_j E ||Ae_j||_r^alpha.
pub fn c_ind_sys(spec: &MarketSpec, norm: NormSpec, method: EvalMethod) -> Result<f64> {
    c_agg_ind(spec, &Aggregation::Norm(norm), method)
}

/// Independent-regime aggregated constant C_ind^g = sum_j K_j E g^alpha(Ae_j).
pub(crate) fn c_agg_ind(spec: &MarketSpec, g: &Aggregation, method: EvalMethod) -> Result<f64> {
    let alpha = spec.alpha;
    match method {
        EvalMethod::Exact => {
            if !spec.is_insurance() {
                return Err(Error::ExactRequiresInsurance);
            }
            let marked = g.marked_agents();
            let mut total = 0.0;
            for j in 0..spec.d {
                let probs = spec.column_probs(j);
                let term = column_expect(&probs, &marked, |pat, deg| {
                    let v = g.column_value(deg as u32, |a| {
                        pat[marked.iter().position(|&m| m == a).unwrap()]
                    });
                    if v == 0.0 {
                        0.0
                    } else {
                        v.powf(alpha)
                    }
                })?;
                total += spec.k_coeffs[j] * term;
            }
            Ok(total)
        }
        EvalMethod::Enumeration => {
            if column_separable(spec) {
                let mut total = 0.0;
                for j in 0..spec.d {
                    let term = enumerate_column(spec, j, |w, _| g.apply(w).powf(alpha))?;
                    total += spec.k_coeffs[j] * term;
                }
                Ok(total)
            } else {
                enumerate_matrix(spec, |a| {
                    (0..spec.d)
                        .map(|j| spec.k_coeffs[j] * g.apply(&a.column(j)).powf(alpha))
                        .sum()
                })
            }
        }
        EvalMethod::MonteCarlo { reps, seed } => Ok(mc_expect(spec, reps, seed, |a| {
            (0..spec.d)
                .map(|j| spec.k_coeffs[j] * g.apply(&a.column(j)).powf(alpha))
                .sum()
        })
        .mean),
    }
}

/// Dependent-regime constants: C_dep^i = E (A K^{1/alpha} 1)_i^alpha for all i
/// and C_dep^S = E ||A K^{1/alpha} 1||_r^alpha. These expectations couple all
/// columns, so only enumeration and Monte Carlo are available.
pub fn c_dep_constants(
    spec: &MarketSpec,
    norm: NormSpec,
    method: EvalMethod,
) -> Result<(Vec<f64>, f64)> {
    let alpha = spec.alpha;
    let nout = spec.q + 1;
    let fill = |a: &AdjacencySample, out: &mut [f64]| {
        let x = a.dep_exposure(&spec.k_coeffs, alpha);
        for (i, xi) in x.iter().enumerate() {
            out[i] = xi.powf(alpha);
        }
        out[spec.q] = norm.apply(&x).powf(alpha);
    };
    let vals = match method {
        EvalMethod::Exact => return Err(Error::NoExactPath),
        EvalMethod::Enumeration => enumerate_matrix_vec(spec, nout, fill)?,
        EvalMethod::MonteCarlo { reps, seed } => mc_expect_vec(spec, reps, seed, nout, fill)
            .into_iter()
            .map(|e| e.mean)
            .collect(),
    };
    let sys = vals[spec.q];
    let mut agents = vals;
    agents.truncate(spec.q);
    Ok((agents, sys))
}

/// Single entry point for the aggregated constant of either regime.
pub fn c_agg_generic(spec: &MarketSpec, g: &Aggregation, method: EvalMethod) -> Result<f64> {
    use crate::market::Regime;
    match spec.regime {
        Regime::AsymptoticallyIndependent => c_agg_ind(spec, g, method),
        Regime::AsymptoticallyFullyDependent => {
            let alpha = spec.alpha;
            let f = |a: &AdjacencySample| g.apply(&a.dep_exposure(&spec.k_coeffs, alpha)).powf(alpha);
            match method {
                EvalMethod::Exact => Err(Error::NoExactPath),
                EvalMethod::Enumeration => enumerate_matrix(spec, f),
                EvalMethod::MonteCarlo { reps, seed } => Ok(mc_expect(spec, reps, seed, f).mean),
            }
        }
    }
}

/// VaR_{1-gamma} ~ C^{1/alpha} gamma^{-1/alpha}.
pub fn var_asymptotic(c: f64, alpha: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::GammaOutOfRange(gamma));
    }
    if c == 0.0 {
        return Ok(0.0);
    }
    Ok(c.powf(1.0 / alpha) * gamma.powf(-1.0 / alpha))
}

/// CoTE_{1-gamma} ~ alpha/(alpha-1) VaR_{1-gamma}; requires alpha > 1.
pub fn cote_asymptotic(c: f64, alpha: f64, gamma: f64) -> Result<f64> {
    if alpha <= 1.0 {
        return Err(Error::InfiniteMean(alpha));
    }
    Ok(alpha / (alpha - 1.0) * var_asymptotic(c, alpha, gamma)?)
}
