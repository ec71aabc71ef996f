//! Closed-form limits of the conditional systemic risk measures: joint
//! exceedance probabilities, their linear small-kappa regime, conditional
//! tail expectations and the CoVaR family asymptotics.

use crate::agg::{Aggregation, NormSpec};
use crate::constants::{
    c_agg_ind, column_separable, enumerate_column, enumerate_matrix, mc_expect, EvalMethod,
};
use crate::count_dist::column_expect;
use crate::market::{AdjacencySample, MarketSpec, Regime};
use crate::rng;
use crate::{Error, Result};

/// The conditioned (`g`) and conditioning (`h`) aggregations of a
/// conditional exceedance limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondTarget {
    pub g: Aggregation,
    pub h: Aggregation,
}

/// Weight and norm envelopes of the insurance rule together with the
/// linear-regime breakpoints and slopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaThresholds {
    /// Lower weight envelope: 1/q for the insurance rule.
    pub w: f64,
    /// Upper weight envelope: 1 for the insurance rule.
    pub w_upper: f64,
    /// Lower norm envelope over nonempty columns.
    pub b: f64,
    /// Upper norm envelope over nonempty columns.
    pub b_upper: f64,
    pub kappa0: f64,
    pub kappa1: f64,
    pub kappa2: Option<f64>,
    pub tau_i: f64,
    pub tau_ik: Option<f64>,
}

/// Conditional VaR asymptotics. When the requested confidence levels leave
/// the linear regime the formula value is still returned but flagged, and
/// `general_limit` carries the exceedance probability the general min-formula
/// actually attains at the implied kappa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarResult {
    pub value: f64,
    pub in_linear_regime: bool,
    pub general_limit: f64,
}

/// The three gamma^{-1/alpha} prefactors of the conditional tail
/// expectations: agent-given-system, system-given-agent, and mutual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoteConstants {
    pub c_as: f64,
    pub c_sa: f64,
    pub c_mm: Option<f64>,
}

// ---------------------------------------------------------------------------
// Shared kernels
// ---------------------------------------------------------------------------

/// Constant for an aggregation, preferring the exact path under Monte Carlo
/// evaluation of the surrounding min-term (the constants are cheap exactly
/// whenever the rule is insurance).
fn agg_constant(spec: &MarketSpec, g: &Aggregation, method: EvalMethod) -> Result<f64> {
    match method {
        EvalMethod::MonteCarlo { reps, seed } if spec.is_insurance() => {
            let _ = (reps, seed);
            c_agg_ind(spec, g, EvalMethod::Exact)
        }
        EvalMethod::MonteCarlo { reps, seed } => c_agg_ind(
            spec,
            g,
            EvalMethod::MonteCarlo {
                reps,
                seed: rng::substream(seed, u64::MAX),
            },
        ),
        other => c_agg_ind(spec, g, other),
    }
}

/// sum_j K_j E min{c1 a1^alpha(Ae_j), c2 a2^alpha(Ae_j)}.
fn min_term_sum(
    spec: &MarketSpec,
    a1: &Aggregation,
    c1: f64,
    a2: &Aggregation,
    c2: f64,
    method: EvalMethod,
) -> Result<f64> {
    let alpha = spec.alpha;
    let col_min = |w: &[f64]| {
        let v1 = a1.apply(w).powf(alpha);
        let v2 = a2.apply(w).powf(alpha);
        (c1 * v1).min(c2 * v2)
    };
    match method {
        EvalMethod::Exact => {
            if !spec.is_insurance() {
                return Err(Error::ExactRequiresInsurance);
            }
            let mut marked = a1.marked_agents();
            for m in a2.marked_agents() {
                if !marked.contains(&m) {
                    marked.push(m);
                }
            }
            let mut total = 0.0;
            for j in 0..spec.d {
                let probs = spec.column_probs(j);
                let term = column_expect(&probs, &marked, |pat, deg| {
                    let has = |a: usize| pat[marked.iter().position(|&m| m == a).unwrap()];
                    let v1 = a1.column_value(deg as u32, has).powf(alpha);
                    let v2 = a2.column_value(deg as u32, has).powf(alpha);
                    (c1 * v1).min(c2 * v2)
                })?;
                total += spec.k_coeffs[j] * term;
            }
            Ok(total)
        }
        EvalMethod::Enumeration => {
            if column_separable(spec) {
                let mut total = 0.0;
                for j in 0..spec.d {
                    total += spec.k_coeffs[j] * enumerate_column(spec, j, |w, _| col_min(w))?;
                }
                Ok(total)
            } else {
                enumerate_matrix(spec, |a| {
                    (0..spec.d)
                        .map(|j| spec.k_coeffs[j] * col_min(&a.column(j)))
                        .sum()
                })
            }
        }
        EvalMethod::MonteCarlo { reps, seed } => Ok(mc_expect(spec, reps, seed, |a| {
            (0..spec.d)
                .map(|j| spec.k_coeffs[j] * col_min(&a.column(j)))
                .sum()
        })
        .mean),
    }
}

/// sum_j K_j E[g(Ae_j) h^{alpha-1}(Ae_j)].
pub(crate) fn prod_term_sum(
    spec: &MarketSpec,
    g: &Aggregation,
    h: &Aggregation,
    method: EvalMethod,
) -> Result<f64> {
    let alpha = spec.alpha;
    let col_prod = |w: &[f64]| {
        let gv = g.apply(w);
        if gv == 0.0 {
            0.0
        } else {
            gv * h.apply(w).powf(alpha - 1.0)
        }
    };
    match method {
        EvalMethod::Exact => {
            if !spec.is_insurance() {
                return Err(Error::ExactRequiresInsurance);
            }
            let mut marked = g.marked_agents();
            for m in h.marked_agents() {
                if !marked.contains(&m) {
                    marked.push(m);
                }
            }
            let mut total = 0.0;
            for j in 0..spec.d {
                let probs = spec.column_probs(j);
                let term = column_expect(&probs, &marked, |pat, deg| {
                    let has = |a: usize| pat[marked.iter().position(|&m| m == a).unwrap()];
                    let gv = g.column_value(deg as u32, &has);
                    if gv == 0.0 {
                        0.0
                    } else {
                        gv * h.column_value(deg as u32, &has).powf(alpha - 1.0)
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
                    total += spec.k_coeffs[j] * enumerate_column(spec, j, |w, _| col_prod(w))?;
                }
                Ok(total)
            } else {
                enumerate_matrix(spec, |a| {
                    (0..spec.d)
                        .map(|j| spec.k_coeffs[j] * col_prod(&a.column(j)))
                        .sum()
                })
            }
        }
        EvalMethod::MonteCarlo { reps, seed } => Ok(mc_expect(spec, reps, seed, |a| {
            (0..spec.d)
                .map(|j| spec.k_coeffs[j] * col_prod(&a.column(j)))
                .sum()
        })
        .mean),
    }
}

/// sum_j K_j E[1(mark ~ j) a^alpha(Ae_j)] -- the numerators of tau(i) and
/// tau(i,k).
fn indicator_term_sum(
    spec: &MarketSpec,
    mark: usize,
    a: &Aggregation,
    method: EvalMethod,
) -> Result<f64> {
    let alpha = spec.alpha;
    match method {
        EvalMethod::Exact => {
            if !spec.is_insurance() {
                return Err(Error::ExactRequiresInsurance);
            }
            let mut marked = vec![mark];
            for m in a.marked_agents() {
                if !marked.contains(&m) {
                    marked.push(m);
                }
            }
            let mut total = 0.0;
            for j in 0..spec.d {
                let probs = spec.column_probs(j);
                let term = column_expect(&probs, &marked, |pat, deg| {
                    if !pat[0] {
                        return 0.0;
                    }
                    let has = |ag: usize| pat[marked.iter().position(|&m| m == ag).unwrap()];
                    a.column_value(deg as u32, has).powf(alpha)
                })?;
                total += spec.k_coeffs[j] * term;
            }
            Ok(total)
        }
        EvalMethod::Enumeration => {
            if column_separable(spec) {
                let mut total = 0.0;
                for j in 0..spec.d {
                    total += spec.k_coeffs[j]
                        * enumerate_column(spec, j, |w, ind| {
                            if ind[mark] {
                                a.apply(w).powf(alpha)
                            } else {
                                0.0
                            }
                        })?;
                }
                Ok(total)
            } else {
                enumerate_matrix(spec, |smp| {
                    (0..spec.d)
                        .map(|j| {
                            if smp.has_edge(mark, j) {
                                spec.k_coeffs[j] * a.apply(&smp.column(j)).powf(alpha)
                            } else {
                                0.0
                            }
                        })
                        .sum()
                })
            }
        }
        EvalMethod::MonteCarlo { reps, seed } => Ok(mc_expect(spec, reps, seed, |smp| {
            (0..spec.d)
                .map(|j| {
                    if smp.has_edge(mark, j) {
                        spec.k_coeffs[j] * a.apply(&smp.column(j)).powf(alpha)
                    } else {
                        0.0
                    }
                })
                .sum()
        })
        .mean),
    }
}

// ---------------------------------------------------------------------------
// Conditional exceedance limits
// ---------------------------------------------------------------------------

/// Limit of P(g(F) > t | h(F) > u t) as t grows, in the dependence regime of
/// the spec.
pub fn cond_prob_limit(
    spec: &MarketSpec,
    target: &CondTarget,
    u: f64,
    method: EvalMethod,
) -> Result<f64> {
    assert!(u > 0.0, "u must be positive");
    let alpha = spec.alpha;
    match spec.regime {
        Regime::AsymptoticallyIndependent => {
            let denom = agg_constant(spec, &target.h, method)?;
            if denom == 0.0 {
                return Err(Error::EmptyMarket);
            }
            let num = min_term_sum(spec, &target.h, 1.0, &target.g, u.powf(alpha), method)?;
            Ok(num / denom)
        }
        Regime::AsymptoticallyFullyDependent => {
            let f = |smp: &AdjacencySample| {
                let x = smp.dep_exposure(&spec.k_coeffs, alpha);
                let hv = target.h.apply(&x).powf(alpha);
                let gv = target.g.apply(&x).powf(alpha);
                hv.min(u.powf(alpha) * gv)
            };
            let denom_f = |smp: &AdjacencySample| {
                target
                    .h
                    .apply(&smp.dep_exposure(&spec.k_coeffs, alpha))
                    .powf(alpha)
            };
            let (num, denom) = match method {
                EvalMethod::Exact => return Err(Error::NoExactPath),
                EvalMethod::Enumeration => {
                    (enumerate_matrix(spec, f)?, enumerate_matrix(spec, denom_f)?)
                }
                EvalMethod::MonteCarlo { reps, seed } => (
                    mc_expect(spec, reps, seed, f).mean,
                    mc_expect(spec, reps, seed, denom_f).mean,
                ),
            };
            if denom == 0.0 {
                return Err(Error::EmptyMarket);
            }
            Ok(num / denom)
        }
    }
}

/// Limit of P(F_i > VaR_{1-gamma kappa}(F_i) | ||F|| > VaR_{1-gamma}(||F||)).
/// Equals kappa below kappa_0(i).
pub fn tail_dep_agent_given_sys(
    spec: &MarketSpec,
    norm: NormSpec,
    i: usize,
    kappa: f64,
    method: EvalMethod,
) -> Result<f64> {
    assert!(kappa > 0.0, "kappa must be positive");
    let c_i = agg_constant(spec, &Aggregation::Projection(i), method)?;
    if c_i == 0.0 {
        return Err(Error::RisklessAgent(i));
    }
    let c_s = agg_constant(spec, &Aggregation::Norm(norm), method)?;
    if c_s == 0.0 {
        return Err(Error::EmptyMarket);
    }
    min_term_sum(
        spec,
        &Aggregation::Norm(norm),
        1.0 / c_s,
        &Aggregation::Projection(i),
        kappa / c_i,
        method,
    )
}

/// Limit of P(||F|| > VaR_{1-kappa gamma}(||F||) | F_i > VaR_{1-gamma}(F_i)).
/// Equals kappa tau(i) below kappa_1(i).
pub fn tail_dep_sys_given_agent(
    spec: &MarketSpec,
    norm: NormSpec,
    i: usize,
    kappa: f64,
    method: EvalMethod,
) -> Result<f64> {
    assert!(kappa > 0.0, "kappa must be positive");
    let c_i = agg_constant(spec, &Aggregation::Projection(i), method)?;
    if c_i == 0.0 {
        return Err(Error::RisklessAgent(i));
    }
    let c_s = agg_constant(spec, &Aggregation::Norm(norm), method)?;
    if c_s == 0.0 {
        return Err(Error::EmptyMarket);
    }
    min_term_sum(
        spec,
        &Aggregation::Norm(norm),
        kappa / c_s,
        &Aggregation::Projection(i),
        1.0 / c_i,
        method,
    )
}

/// Limit of P(F_i > VaR_{1-gamma kappa}(F_i) | F_k > VaR_{1-gamma}(F_k)).
/// Equals kappa tau(i,k) below kappa_2(i,k).
pub fn tail_dep_agent_given_agent(
    spec: &MarketSpec,
    i: usize,
    k: usize,
    kappa: f64,
    method: EvalMethod,
) -> Result<f64> {
    assert!(kappa > 0.0, "kappa must be positive");
    if i == k {
        return Err(Error::SameAgent(i));
    }
    let c_i = agg_constant(spec, &Aggregation::Projection(i), method)?;
    if c_i == 0.0 {
        return Err(Error::RisklessAgent(i));
    }
    let c_k = agg_constant(spec, &Aggregation::Projection(k), method)?;
    if c_k == 0.0 {
        return Err(Error::RisklessAgent(k));
    }
    min_term_sum(
        spec,
        &Aggregation::Projection(i),
        kappa / c_i,
        &Aggregation::Projection(k),
        1.0 / c_k,
        method,
    )
}

/// Asymptotic E[g(F) | h(F) > t], linear in t.
pub fn cond_expect_limit(
    spec: &MarketSpec,
    target: &CondTarget,
    t: f64,
    method: EvalMethod,
) -> Result<f64> {
    let alpha = spec.alpha;
    if alpha <= 1.0 {
        return Err(Error::InfiniteMean(alpha));
    }
    assert!(t > 0.0, "t must be positive");
    let factor = alpha / (alpha - 1.0);
    match spec.regime {
        Regime::AsymptoticallyIndependent => {
            let denom = agg_constant(spec, &target.h, method)?;
            if denom == 0.0 {
                return Err(Error::EmptyMarket);
            }
            let num = prod_term_sum(spec, &target.g, &target.h, method)?;
            Ok(factor * num / denom * t)
        }
        Regime::AsymptoticallyFullyDependent => {
            let f = |smp: &AdjacencySample| {
                let x = smp.dep_exposure(&spec.k_coeffs, alpha);
                let gv = target.g.apply(&x);
                if gv == 0.0 {
                    0.0
                } else {
                    gv * target.h.apply(&x).powf(alpha - 1.0)
                }
            };
            let denom_f = |smp: &AdjacencySample| {
                target
                    .h
                    .apply(&smp.dep_exposure(&spec.k_coeffs, alpha))
                    .powf(alpha)
            };
            let (num, denom) = match method {
                EvalMethod::Exact => return Err(Error::NoExactPath),
                EvalMethod::Enumeration => {
                    (enumerate_matrix(spec, f)?, enumerate_matrix(spec, denom_f)?)
                }
                EvalMethod::MonteCarlo { reps, seed } => (
                    mc_expect(spec, reps, seed, f).mean,
                    mc_expect(spec, reps, seed, denom_f).mean,
                ),
            };
            if denom == 0.0 {
                return Err(Error::EmptyMarket);
            }
            Ok(factor * num / denom * t)
        }
    }
}

/// The gamma^{-1/alpha} prefactors of ICoTE, SCoTE and (when `k` is given)
/// MCoTE in the independent regime.
pub fn cote_constants(
    spec: &MarketSpec,
    norm: NormSpec,
    i: usize,
    k: Option<usize>,
    method: EvalMethod,
) -> Result<CoteConstants> {
    let alpha = spec.alpha;
    if alpha <= 1.0 {
        return Err(Error::InfiniteMean(alpha));
    }
    let factor = alpha / (alpha - 1.0);
    let c_i = agg_constant(spec, &Aggregation::Projection(i), method)?;
    if c_i == 0.0 {
        return Err(Error::RisklessAgent(i));
    }
    let c_s = agg_constant(spec, &Aggregation::Norm(norm), method)?;
    if c_s == 0.0 {
        return Err(Error::EmptyMarket);
    }
    let sys = Aggregation::Norm(norm);
    let proj_i = Aggregation::Projection(i);
    let as_sum = prod_term_sum(spec, &proj_i, &sys, method)?;
    let sa_sum = prod_term_sum(spec, &sys, &proj_i, method)?;
    let c_as = factor * c_s.powf(1.0 / alpha - 1.0) * as_sum;
    let c_sa = factor * c_i.powf(1.0 / alpha - 1.0) * sa_sum;
    let c_mm = match k {
        None => None,
        Some(k) => {
            if k == i {
                return Err(Error::SameAgent(i));
            }
            let c_k = agg_constant(spec, &Aggregation::Projection(k), method)?;
            if c_k == 0.0 {
                return Err(Error::RisklessAgent(k));
            }
            let mm_sum = prod_term_sum(spec, &proj_i, &Aggregation::Projection(k), method)?;
            Some(factor * c_k.powf(1.0 / alpha - 1.0) * mm_sum)
        }
    };
    Ok(CoteConstants { c_as, c_sa, c_mm })
}

// ---------------------------------------------------------------------------
// Linear-regime thresholds and CoVaR asymptotics
// ---------------------------------------------------------------------------

/// Weight/norm envelopes and linear-regime quantities for the insurance rule.
///
/// The lower norm envelope `b` is taken over realizations with deg(j) >= 1:
/// empty columns would make the literal envelope assumption fail for p < 1,
/// but every min-term containing an empty column vanishes through its edge
/// indicator, so the linear-regime conclusions are unaffected.
pub fn thresholds(
    spec: &MarketSpec,
    norm: NormSpec,
    i: usize,
    k: Option<usize>,
    method: EvalMethod,
) -> Result<KappaThresholds> {
    if !spec.is_insurance() {
        return Err(Error::EnvelopesUnavailable);
    }
    let alpha = spec.alpha;
    let q = spec.q as f64;
    let w = 1.0 / q;
    let w_upper = 1.0f64;
    // ||Ae_j|| over nonempty columns is deg^(1/r - 1) with deg in 1..=q.
    let exp = norm.inv_r() - 1.0;
    let (b, b_upper) = if exp <= 0.0 {
        (q.powf(exp), 1.0)
    } else {
        (1.0, q.powf(exp))
    };
    let c_i = agg_constant(spec, &Aggregation::Projection(i), method)?;
    if c_i == 0.0 {
        return Err(Error::RisklessAgent(i));
    }
    let c_s = agg_constant(spec, &Aggregation::Norm(norm), method)?;
    if c_s == 0.0 {
        return Err(Error::EmptyMarket);
    }
    let kappa0 = b.powf(alpha) / c_s * (c_i / w_upper.powf(alpha));
    // kappa1 needs kappa ||Ae_j||^a / C^S <= W_ij^a / C^i on every edge
    // realization, so the envelopes enter as w^a / B^a.
    let kappa1 = c_s / c_i * (w.powf(alpha) / b_upper.powf(alpha));
    let tau_i = indicator_term_sum(spec, i, &Aggregation::Norm(norm), method)? / c_s;
    let (kappa2, tau_ik) = match k {
        None => (None, None),
        Some(k) => {
            if k == i {
                return Err(Error::SameAgent(i));
            }
            let c_k = agg_constant(spec, &Aggregation::Projection(k), method)?;
            if c_k == 0.0 {
                return Err(Error::RisklessAgent(k));
            }
            let kappa2 = c_i / c_k * (w.powf(alpha) / w_upper.powf(alpha));
            let tau_ik =
                indicator_term_sum(spec, k, &Aggregation::Projection(i), method)? / c_i;
            (Some(kappa2), Some(tau_ik))
        }
    };
    Ok(KappaThresholds {
        w,
        w_upper,
        b,
        b_upper,
        kappa0,
        kappa1,
        kappa2,
        tau_i,
        tau_ik,
    })
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::GammaOutOfRange(gamma))
    }
}

/// ICoVaR_{1-gamma_i,gamma}(F_i | ||F||) ~ (C_ind^i)^{1/alpha} (gamma_i gamma)^{-1/alpha},
/// valid for gamma_i <= kappa_0(i).
pub fn icovar(
    spec: &MarketSpec,
    norm: NormSpec,
    i: usize,
    gamma_i: f64,
    gamma: f64,
    method: EvalMethod,
) -> Result<CovarResult> {
    check_gamma(gamma_i)?;
    check_gamma(gamma)?;
    let th = thresholds(spec, norm, i, None, method)?;
    let c_i = agg_constant(spec, &Aggregation::Projection(i), method)?;
    let value = c_i.powf(1.0 / spec.alpha) * (gamma_i * gamma).powf(-1.0 / spec.alpha);
    let general_limit = tail_dep_agent_given_sys(spec, norm, i, gamma_i, method)?;
    Ok(CovarResult {
        value,
        in_linear_regime: gamma_i <= th.kappa0,
        general_limit,
    })
}

/// SCoVaR_{1-gamma,gamma_i}(||F|| | F_i) ~ (C_ind^S)^{1/alpha}
/// (gamma_i gamma / tau(i))^{-1/alpha}, valid for gamma <= kappa_1(i) tau(i).
pub fn scovar(
    spec: &MarketSpec,
    norm: NormSpec,
    i: usize,
    gamma_i: f64,
    gamma: f64,
    method: EvalMethod,
) -> Result<CovarResult> {
    check_gamma(gamma_i)?;
    check_gamma(gamma)?;
    let th = thresholds(spec, norm, i, None, method)?;
    if th.tau_i == 0.0 {
        return Err(Error::RisklessAgent(i));
    }
    let c_s = agg_constant(spec, &Aggregation::Norm(norm), method)?;
    let value = c_s.powf(1.0 / spec.alpha) * (gamma_i * gamma / th.tau_i).powf(-1.0 / spec.alpha);
    let general_limit = tail_dep_sys_given_agent(spec, norm, i, gamma / th.tau_i, method)?;
    Ok(CovarResult {
        value,
        in_linear_regime: gamma <= th.kappa1 * th.tau_i,
        general_limit,
    })
}

/// MCoVaR_{1-gamma_i,gamma_k}(F_i | F_k) ~ (C_ind^i)^{1/alpha}
/// (gamma_i gamma_k / tau(i,k))^{-1/alpha} when the agents share objects
/// (tau(i,k) > 0); otherwise the conditioning is asymptotically void and the
/// unconditional VaR asymptotic applies.
pub fn mcovar(
    spec: &MarketSpec,
    norm: NormSpec,
    i: usize,
    k: usize,
    gamma_i: f64,
    gamma_k: f64,
    method: EvalMethod,
) -> Result<CovarResult> {
    check_gamma(gamma_i)?;
    check_gamma(gamma_k)?;
    let th = thresholds(spec, norm, i, Some(k), method)?;
    let c_i = agg_constant(spec, &Aggregation::Projection(i), method)?;
    let tau = th.tau_ik.expect("k was provided");
    let inv_alpha = 1.0 / spec.alpha;
    if tau == 0.0 {
        return Ok(CovarResult {
            value: c_i.powf(inv_alpha) * gamma_i.powf(-inv_alpha),
            in_linear_regime: true,
            general_limit: 0.0,
        });
    }
    let value = c_i.powf(inv_alpha) * (gamma_i * gamma_k / tau).powf(-inv_alpha);
    let general_limit = tail_dep_agent_given_agent(spec, i, k, gamma_i / tau, method)?;
    Ok(CovarResult {
        value,
        in_linear_regime: gamma_i <= th.kappa2.expect("k was provided") * tau,
        general_limit,
    })
}
