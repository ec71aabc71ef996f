//! Stein-Chen Poisson approximations of the tail constants and min-terms,
//! with explicit error bounds. Useful for large sparse markets where the
//! exact Poisson-binomial convolutions are overkill: with q agents,
//! q = o(d^{1/2}) and p_ij ~ c/d the bounds B(j) and B(i,j,k) are of order
//! q d^{-2} and B(i,j) of order q d^{-3}, so the approximation sharpens as
//! the market grows.

use crate::agg::{Aggregation, NormSpec};
use crate::cond::{
    prod_term_sum, tail_dep_agent_given_agent, tail_dep_agent_given_sys, tail_dep_sys_given_agent,
};
use crate::constants::{c_ind_agent, c_ind_sys, EvalMethod};
use crate::count_dist::column_expect;
use crate::market::MarketSpec;
use crate::{Error, Result};

/// Poisson intensities attached to one column: the full degree intensity and
/// the leave-one-out / leave-two-out versions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonParams {
    pub lambda: f64,
    pub lambda_i: f64,
    pub lambda_ik: f64,
}

impl PoissonParams {
    pub fn for_column(spec: &MarketSpec, j: usize, i: usize, k: Option<usize>) -> Self {
        let lambda: f64 = (0..spec.q).map(|l| spec.p(l, j)).sum();
        // max with 0 guards against cancellation when one edge carries the
        // whole intensity.
        let lambda_i = (lambda - spec.p(i, j)).max(0.0);
        let lambda_ik = match k {
            Some(k) => (lambda_i - spec.p(k, j)).max(0.0),
            None => lambda_i,
        };
        PoissonParams {
            lambda,
            lambda_i,
            lambda_ik,
        }
    }
}

/// An approximated quantity with its guaranteed error bound, and the exact
/// value when an exact path exists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxWithBound {
    pub approx: f64,
    pub bound: f64,
    pub exact: Option<f64>,
}

impl ApproxWithBound {
    fn zero() -> Self {
        ApproxWithBound {
            approx: 0.0,
            bound: 0.0,
            exact: None,
        }
    }

    fn add(&mut self, other: &ApproxWithBound) {
        self.approx += other.approx;
        self.bound += other.bound;
        self.exact = match (self.exact, other.exact) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
    }
}

/// Residual Poisson tail mass below which the series is truncated.
pub const POIS_TOL: f64 = 1e-14;

/// E f(Z) for Z ~ Poisson(lambda) by truncated series; the truncation point
/// leaves tail mass at most `tol`, so for |f| <= 1 the absolute error is at
/// most tol.
pub fn pois_expect(lambda: f64, f: impl Fn(usize) -> f64, tol: f64) -> f64 {
    assert!(lambda >= 0.0 && tol > 0.0);
    if lambda == 0.0 {
        return f(0);
    }
    let mut pmf = (-lambda).exp();
    let mut cum = pmf;
    let mut total = pmf * f(0);
    let mut m = 0usize;
    while 1.0 - cum > tol {
        m += 1;
        pmf *= lambda / m as f64;
        cum += pmf;
        total += pmf * f(m);
        // The recursion underflows long before the loop could stall.
        if pmf == 0.0 {
            break;
        }
    }
    total
}

// Per-column bound ingredients.

fn b_ij(spec: &MarketSpec, i: usize, j: usize) -> f64 {
    let lam_i = PoissonParams::for_column(spec, j, i, None).lambda_i;
    let sumsq: f64 = (0..spec.q)
        .filter(|&l| l != i)
        .map(|l| spec.p(l, j).powi(2))
        .sum();
    spec.p(i, j) * 1.0f64.min(1.0 / lam_i) * sumsq
}

fn b_j(spec: &MarketSpec, j: usize) -> f64 {
    let lam: f64 = (0..spec.q).map(|l| spec.p(l, j)).sum();
    let sumsq: f64 = (0..spec.q).map(|l| spec.p(l, j).powi(2)).sum();
    1.0f64.min(1.0 / lam) * sumsq
}

fn b_ijk(spec: &MarketSpec, i: usize, j: usize, k: usize) -> f64 {
    let lam_ik = PoissonParams::for_column(spec, j, i, Some(k)).lambda_ik;
    let sumsq: f64 = (0..spec.q)
        .filter(|&l| l != i)
        .map(|l| spec.p(l, j).powi(2))
        .sum();
    1.0f64.min(1.0 / lam_ik) * sumsq
}

fn require_norm_ge_one(norm: NormSpec) -> Result<()> {
    match norm {
        NormSpec::Finite(r) if r < 1.0 => Err(Error::QuasiNormApprox),
        _ => Ok(()),
    }
}

/// Poisson approximation of C_ind^i: per-object terms K_j p_ij E(1+X_j^i)^{-alpha}
/// with bounds K_j B(i,j), plus their sums. Exact reference filled for the
/// insurance rule.
pub fn approx_c_ind_agent(
    spec: &MarketSpec,
    i: usize,
) -> Result<(Vec<ApproxWithBound>, ApproxWithBound)> {
    spec.validate()?;
    let alpha = spec.alpha;
    let mut per_object = Vec::with_capacity(spec.d);
    let mut total = ApproxWithBound {
        exact: spec.is_insurance().then_some(0.0),
        ..ApproxWithBound::zero()
    };
    for j in 0..spec.d {
        let k_j = spec.k_coeffs[j];
        let p_ij = spec.p(i, j);
        let lam_i = PoissonParams::for_column(spec, j, i, None).lambda_i;
        let approx = if p_ij == 0.0 {
            0.0
        } else {
            k_j * p_ij * pois_expect(lam_i, |m| (1.0 + m as f64).powf(-alpha), POIS_TOL)
        };
        let bound = k_j * b_ij(spec, i, j);
        let exact = if spec.is_insurance() {
            let probs = spec.column_probs(j);
            Some(
                k_j * column_expect(&probs, &[i], |pat, deg| {
                    if pat[0] {
                        (deg as f64).powf(-alpha)
                    } else {
                        0.0
                    }
                })?,
            )
        } else {
            None
        };
        let term = ApproxWithBound {
            approx,
            bound,
            exact,
        };
        total.add(&term);
        per_object.push(term);
    }
    Ok((per_object, total))
}

/// Poisson approximation of C_ind^S for the r-norm, r >= 1:
/// sum_j K_j E[1{X_j >= 1}(1+X_j)^{alpha(1/r - 1)}] with bound sum_j K_j B(j).
pub fn approx_c_ind_sys(spec: &MarketSpec, norm: NormSpec) -> Result<ApproxWithBound> {
    spec.validate()?;
    require_norm_ge_one(norm)?;
    let exponent = spec.alpha * (norm.inv_r() - 1.0);
    let mut out = ApproxWithBound::zero();
    for j in 0..spec.d {
        let k_j = spec.k_coeffs[j];
        let lam: f64 = (0..spec.q).map(|l| spec.p(l, j)).sum();
        // The column functional applied to the Poisson count itself:
        // E[1{X_j >= 1} X_j^{alpha(1/r - 1)}].
        out.approx += k_j
            * pois_expect(
                lam,
                |m| {
                    if m >= 1 {
                        (m as f64).powf(exponent)
                    } else {
                        0.0
                    }
                },
                POIS_TOL,
            );
        out.bound += k_j * b_j(spec, j);
    }
    if spec.is_insurance() {
        out.exact = Some(c_ind_sys(spec, norm, EvalMethod::Exact)?);
    }
    Ok(out)
}

/// The Poisson approximations of the three min-term sums behind the
/// conditional tail-dependence limits, each with its guaranteed bound.
#[derive(Debug, Clone, PartialEq)]
pub struct MinTermsApprox {
    pub agent_given_sys: ApproxWithBound,
    pub sys_given_agent: ApproxWithBound,
    pub mutual: Option<ApproxWithBound>,
    /// True when the normalizing constants themselves came from Poisson
    /// approximations rather than the exact path.
    pub poisson_constants: bool,
}

/// Constants C^i, C^S (and C^k) either exactly or, when requested or when no
/// exact path exists, from their own Poisson approximations.
fn min_term_constants(
    spec: &MarketSpec,
    norm: NormSpec,
    i: usize,
    k: Option<usize>,
    force_poisson: bool,
) -> Result<(f64, f64, Option<f64>, bool)> {
    let poisson = force_poisson || !spec.is_insurance();
    let (c_i, c_s, c_k) = if poisson {
        let c_i = approx_c_ind_agent(spec, i)?.1.approx;
        let c_s = approx_c_ind_sys(spec, norm)?.approx;
        let c_k = match k {
            Some(k) => Some(approx_c_ind_agent(spec, k)?.1.approx),
            None => None,
        };
        (c_i, c_s, c_k)
    } else {
        let c_i = c_ind_agent(spec, i, EvalMethod::Exact)?;
        let c_s = c_ind_sys(spec, norm, EvalMethod::Exact)?;
        let c_k = match k {
            Some(k) => Some(c_ind_agent(spec, k, EvalMethod::Exact)?),
            None => None,
        };
        (c_i, c_s, c_k)
    };
    if c_i == 0.0 {
        return Err(Error::RisklessAgent(i));
    }
    if c_s == 0.0 {
        return Err(Error::EmptyMarket);
    }
    if let (Some(ck), Some(kk)) = (c_k, k) {
        if ck == 0.0 {
            return Err(Error::RisklessAgent(kk));
        }
    }
    Ok((c_i, c_s, c_k, poisson))
}

/// Poisson approximation of the min-term sums
/// sum_j K_j E min{||Ae_j||^a / C^S, kappa A_ij^a / C^i} (and the swapped and
/// mutual variants) with bounds M_1/M_2 B(i,j) and p_ij p_kj M_3 B(i,j,k).
/// `force_poisson` replaces the exact constants inside M_1..M_3 by their own
/// Poisson approximations.
pub fn approx_min_terms(
    spec: &MarketSpec,
    norm: NormSpec,
    i: usize,
    k: Option<usize>,
    kappa: f64,
    force_poisson: bool,
) -> Result<MinTermsApprox> {
    spec.validate()?;
    require_norm_ge_one(norm)?;
    assert!(kappa > 0.0, "kappa must be positive");
    if k == Some(i) {
        return Err(Error::SameAgent(i));
    }
    let alpha = spec.alpha;
    let (c_i, c_s, c_k, poisson) = min_term_constants(spec, norm, i, k, force_poisson)?;
    let sys_exp = -alpha + alpha * norm.inv_r();
    let m1 = (kappa / c_i).min(1.0 / c_s);
    let m2 = (1.0 / c_i).min(kappa / c_s);

    let mut ags = ApproxWithBound::zero();
    let mut sga = ApproxWithBound::zero();
    let mut mutual = k.map(|_| ApproxWithBound::zero());
    for j in 0..spec.d {
        let k_j = spec.k_coeffs[j];
        let p_ij = spec.p(i, j);
        let lam_i = PoissonParams::for_column(spec, j, i, None).lambda_i;
        let bij = b_ij(spec, i, j);
        if p_ij > 0.0 {
            ags.approx += k_j
                * p_ij
                * pois_expect(
                    lam_i,
                    |m| {
                        let base = 1.0 + m as f64;
                        (base.powf(sys_exp) / c_s).min(kappa * base.powf(-alpha) / c_i)
                    },
                    POIS_TOL,
                );
            sga.approx += k_j
                * p_ij
                * pois_expect(
                    lam_i,
                    |m| {
                        let base = 1.0 + m as f64;
                        (kappa * base.powf(sys_exp) / c_s).min(base.powf(-alpha) / c_i)
                    },
                    POIS_TOL,
                );
        }
        ags.bound += k_j * m1 * bij;
        sga.bound += k_j * m2 * bij;
        if let (Some(mt), Some(kk)) = (mutual.as_mut(), k) {
            let p_kj = spec.p(kk, j);
            let m3 = (kappa / c_i).min(1.0 / c_k.expect("k was provided"));
            if p_ij * p_kj > 0.0 {
                let lam_ik = PoissonParams::for_column(spec, j, i, Some(kk)).lambda_ik;
                mt.approx += k_j
                    * p_ij
                    * p_kj
                    * m3
                    * pois_expect(lam_ik, |m| (2.0 + m as f64).powf(-alpha), POIS_TOL);
            }
            mt.bound += k_j * p_ij * p_kj * m3 * b_ijk(spec, i, j, kk);
        }
    }
    if spec.is_insurance() {
        ags.exact = Some(tail_dep_agent_given_sys(
            spec,
            norm,
            i,
            kappa,
            EvalMethod::Exact,
        )?);
        sga.exact = Some(tail_dep_sys_given_agent(
            spec,
            norm,
            i,
            kappa,
            EvalMethod::Exact,
        )?);
        if let (Some(mt), Some(kk)) = (mutual.as_mut(), k) {
            mt.exact = Some(tail_dep_agent_given_agent(
                spec,
                i,
                kk,
                kappa,
                EvalMethod::Exact,
            )?);
        }
    }
    Ok(MinTermsApprox {
        agent_given_sys: ags,
        sys_given_agent: sga,
        mutual,
        poisson_constants: poisson,
    })
}

/// Poisson approximations of the CoTE building-block sums.
#[derive(Debug, Clone, PartialEq)]
pub struct CoteTermsApprox {
    /// sum_j K_j E[A_ij ||Ae_j||^{alpha-1}].
    pub agent_sys: ApproxWithBound,
    /// sum_j K_j E[A_ij^{alpha-1} ||Ae_j||].
    pub sys_agent: ApproxWithBound,
    /// sum_j K_j E[A_kj^{alpha-1} A_ij].
    pub mutual: Option<ApproxWithBound>,
}

/// Poisson approximation of the CoTE term sums, alpha > 1, r >= 1. The
/// mutual surrogate uses the exponent -alpha on (2 + X_j^{i,k}).
pub fn approx_cote_terms(
    spec: &MarketSpec,
    norm: NormSpec,
    i: usize,
    k: Option<usize>,
) -> Result<CoteTermsApprox> {
    spec.validate()?;
    require_norm_ge_one(norm)?;
    if spec.alpha <= 1.0 {
        return Err(Error::InfiniteMean(spec.alpha));
    }
    if k == Some(i) {
        return Err(Error::SameAgent(i));
    }
    let alpha = spec.alpha;
    let inv_r = norm.inv_r();
    // A_ij ||Ae_j||^{a-1} = deg^{-(a(r-1)+1)/r}; A_ij^{a-1} ||Ae_j|| = deg^{1/r - a}.
    let as_exp = (alpha - 1.0) * inv_r - alpha;
    let sa_exp = inv_r - alpha;

    let mut agent_sys = ApproxWithBound::zero();
    let mut sys_agent = ApproxWithBound::zero();
    let mut mutual = k.map(|_| ApproxWithBound::zero());
    for j in 0..spec.d {
        let k_j = spec.k_coeffs[j];
        let p_ij = spec.p(i, j);
        let lam_i = PoissonParams::for_column(spec, j, i, None).lambda_i;
        if p_ij > 0.0 {
            agent_sys.approx += k_j
                * p_ij
                * pois_expect(lam_i, |m| (1.0 + m as f64).powf(as_exp), POIS_TOL);
            sys_agent.approx += k_j
                * p_ij
                * pois_expect(lam_i, |m| (1.0 + m as f64).powf(sa_exp), POIS_TOL);
        }
        let bij = b_ij(spec, i, j);
        agent_sys.bound += k_j * bij;
        sys_agent.bound += k_j * bij;
        if let (Some(mt), Some(kk)) = (mutual.as_mut(), k) {
            let p_kj = spec.p(kk, j);
            if p_ij * p_kj > 0.0 {
                let lam_ik = PoissonParams::for_column(spec, j, i, Some(kk)).lambda_ik;
                mt.approx += k_j
                    * p_ij
                    * p_kj
                    * pois_expect(lam_ik, |m| (2.0 + m as f64).powf(-alpha), POIS_TOL);
            }
            mt.bound += k_j * p_ij * p_kj * b_ijk(spec, i, j, kk);
        }
    }
    if spec.is_insurance() {
        let sys = Aggregation::Norm(norm);
        let proj_i = Aggregation::Projection(i);
        agent_sys.exact = Some(prod_term_sum(spec, &proj_i, &sys, EvalMethod::Exact)?);
        sys_agent.exact = Some(prod_term_sum(spec, &sys, &proj_i, EvalMethod::Exact)?);
        if let (Some(mt), Some(kk)) = (mutual.as_mut(), k) {
            mt.exact = Some(prod_term_sum(
                spec,
                &proj_i,
                &Aggregation::Projection(kk),
                EvalMethod::Exact,
            )?);
        }
    }
    Ok(CoteTermsApprox {
        agent_sys,
        sys_agent,
        mutual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn within_bound(t: &ApproxWithBound) -> bool {
        // 1e-12 slack absorbs the truncation and convolution roundoff.
        (t.approx - t.exact.expect("exact available")).abs() <= t.bound + 1e-12
    }

    #[test]
    fn pois_expect_degenerate_and_normalized() {
        assert_eq!(pois_expect(0.0, |m| (m as f64).cos(), POIS_TOL), 1.0);
        let one = pois_expect(3.7, |_| 1.0, POIS_TOL);
        assert!((one - 1.0).abs() <= POIS_TOL);
    }

    #[test]
    fn pois_expect_matches_sampling_oracle() {
        // Knuth multiplication sampler as an independent oracle.
        let lambda = 0.8f64;
        let limit = (-lambda).exp();
        let mut r = rng::stream(99);
        let reps = 10_000_000u64;
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in 0..reps {
            let mut m = 0usize;
            let mut prod = 1.0;
            loop {
                prod *= r.random::<f64>();
                if prod <= limit {
                    break;
                }
                m += 1;
            }
            let v = (1.0 + m as f64).powi(-2);
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / reps as f64;
        let se = ((sumsq / reps as f64 - mean * mean) / reps as f64).sqrt();
        let series = pois_expect(lambda, |m| (1.0 + m as f64).powi(-2), POIS_TOL);
        assert!(
            (series - mean).abs() < 4.0 * se,
            "series {series}, mc {mean} +- {se}"
        );
    }

    #[test]
    fn pois_expect_tol_stability() {
        for tol in [1e-10, 1e-12, 1e-14] {
            let a = pois_expect(2.5, |m| (1.0 + m as f64).powf(-1.5), tol);
            let b = pois_expect(2.5, |m| (1.0 + m as f64).powf(-1.5), 2.0 * tol);
            assert!((a - b).abs() <= 2.0 * tol);
        }
    }

    #[test]
    fn homogeneous_bound_arithmetic() {
        // q=5, p=0.2: lambda_j^i = 0.8, B(i,j) = 0.2 * 1 * 4 * 0.04 = 0.032.
        let spec = MarketSpec::homogeneous(5, 1, 0.2, 2.0);
        let (per, _) = approx_c_ind_agent(&spec, 0).unwrap();
        assert!((per[0].bound - 0.032).abs() < 1e-15);
        // B(j) = 1 * 5 * 0.04 = 0.2.
        let sys = approx_c_ind_sys(&spec, NormSpec::Finite(2.0)).unwrap();
        assert!((sys.bound - 0.2).abs() < 1e-15);
    }

    #[test]
    fn zero_probabilities_give_zero() {
        let spec = MarketSpec::homogeneous(5, 3, 0.0, 2.0);
        let (_, total) = approx_c_ind_agent(&spec, 0).unwrap();
        assert_eq!(total.approx, 0.0);
        assert_eq!(total.bound, 0.0);
        let sys = approx_c_ind_sys(&spec, NormSpec::Finite(1.0)).unwrap();
        assert_eq!(sys.approx, 0.0);
        assert_eq!(sys.bound, 0.0);
    }

    #[test]
    fn sparse_market_within_bound() {
        let spec = MarketSpec::homogeneous(50, 10, 0.02, 2.0);
        let (_, total) = approx_c_ind_agent(&spec, 0).unwrap();
        assert!(within_bound(&total));
        let sys = approx_c_ind_sys(&spec, NormSpec::Finite(2.0)).unwrap();
        assert!(within_bound(&sys));
        let cote = approx_cote_terms(&spec, NormSpec::Finite(2.0), 0, Some(1)).unwrap();
        assert!(within_bound(&cote.agent_sys));
        assert!(within_bound(&cote.sys_agent));
        assert!(within_bound(&cote.mutual.unwrap()));
    }

    #[test]
    fn min_terms_within_bound() {
        let spec = MarketSpec::homogeneous(5, 10, 0.2, 5.0);
        let mt = approx_min_terms(&spec, NormSpec::Finite(1.0), 0, Some(1), 1.0, false).unwrap();
        assert!(!mt.poisson_constants);
        assert!(within_bound(&mt.agent_given_sys));
        assert!(within_bound(&mt.sys_given_agent));
        assert!(within_bound(&mt.mutual.unwrap()));
    }

    #[test]
    fn min_term_bound_scales_with_small_kappa() {
        let spec = MarketSpec::homogeneous(5, 10, 0.2, 2.0);
        let norm = NormSpec::Finite(1.0);
        let at = |kappa: f64| approx_min_terms(&spec, norm, 0, None, kappa, false).unwrap();
        let small = at(1e-6);
        let smaller = at(1e-7);
        // M_1 -> kappa / C^i, so approximation and bound both scale linearly.
        assert!(small.agent_given_sys.approx < 1e-4);
        assert!(
            (small.agent_given_sys.bound / smaller.agent_given_sys.bound - 10.0).abs() < 1e-6
        );
        assert!(
            (small.agent_given_sys.approx / smaller.agent_given_sys.approx - 10.0).abs() < 1e-6
        );
    }

    #[test]
    fn disjoint_mutual_support_is_zero() {
        let mut spec = MarketSpec::homogeneous(3, 2, 0.5, 2.0);
        // Agent 0 only on object 0, agent 1 only on object 1.
        spec.edge_probs = vec![0.9, 0.0, 0.0, 0.9, 0.5, 0.5];
        let mt = approx_min_terms(&spec, NormSpec::Finite(1.0), 0, Some(1), 1.0, false).unwrap();
        let m = mt.mutual.unwrap();
        assert_eq!(m.approx, 0.0);
        assert_eq!(m.bound, 0.0);
        assert_eq!(m.exact, Some(0.0));
    }

    #[test]
    fn quasi_norm_rejected() {
        let spec = MarketSpec::homogeneous(4, 3, 0.3, 2.0);
        assert!(matches!(
            approx_c_ind_sys(&spec, NormSpec::Finite(0.5)),
            Err(Error::QuasiNormApprox)
        ));
        assert!(matches!(
            approx_min_terms(&spec, NormSpec::Finite(0.5), 0, None, 1.0, false),
            Err(Error::QuasiNormApprox)
        ));
    }

    #[test]
    fn max_norm_accepted() {
        let spec = MarketSpec::homogeneous(8, 4, 0.1, 2.0);
        let sys = approx_c_ind_sys(&spec, NormSpec::Max).unwrap();
        assert!(within_bound(&sys));
    }

    #[test]
    fn cote_r1_exponent_collapses_to_reciprocal_degree() {
        // At r=1 the agent-sys exponent is -1: the surrogate approximates
        // E A_ij itself.
        let spec = MarketSpec::homogeneous(6, 5, 0.3, 3.0);
        let cote = approx_cote_terms(&spec, NormSpec::Finite(1.0), 2, None).unwrap();
        let direct: f64 = (0..spec.d)
            .map(|j| {
                spec.k_coeffs[j]
                    * 0.3
                    * pois_expect(5.0 * 0.3, |m| 1.0 / (1.0 + m as f64), POIS_TOL)
            })
            .sum();
        assert!((cote.agent_sys.approx - direct).abs() < 1e-12);
    }

    #[test]
    fn poisson_constants_flagged() {
        let spec = MarketSpec::homogeneous(5, 10, 0.2, 2.0);
        let mt = approx_min_terms(&spec, NormSpec::Finite(1.0), 0, None, 1.0, true).unwrap();
        assert!(mt.poisson_constants);
        // Sparse market: the fully-Poisson value stays close to the default.
        let mt0 = approx_min_terms(&spec, NormSpec::Finite(1.0), 0, None, 1.0, false).unwrap();
        assert!((mt.agent_given_sys.approx - mt0.agent_given_sys.approx).abs() < 0.05);
    }

    #[test]
    fn randomized_markets_respect_bounds() {
        // Randomized heterogeneous insurance markets; every approximation
        // must sit within its guaranteed bound of the exact value.
        let mut r = rng::stream(2024);
        for case in 0..400 {
            let q = r.random_range(2..=40usize);
            let d = r.random_range(1..=4usize);
            let alpha = r.random_range(1.2..6.0f64);
            let scale = r.random_range(0.0..0.4f64);
            let mut spec = MarketSpec::homogeneous(q, d, 0.0, alpha);
            for p in spec.edge_probs.iter_mut() {
                *p = r.random_range(0.0..1.0f64) * scale;
            }
            for k in spec.k_coeffs.iter_mut() {
                *k = r.random_range(0.1..3.0f64);
            }
            let norm = NormSpec::Finite(r.random_range(1.0..4.0f64));
            let i = r.random_range(0..q);
            let (_, agent) = approx_c_ind_agent(&spec, i).unwrap();
            assert!(within_bound(&agent), "case {case}: agent constant");
            let sys = approx_c_ind_sys(&spec, norm).unwrap();
            assert!(within_bound(&sys), "case {case}: system constant");
            let kappa = r.random_range(0.1..5.0f64);
            let k2 = (i + 1 + r.random_range(0..q - 1)) % q;
            match approx_min_terms(&spec, norm, i, Some(k2), kappa, false) {
                Ok(mt) => {
                    assert!(within_bound(&mt.agent_given_sys), "case {case}: ags");
                    assert!(within_bound(&mt.sys_given_agent), "case {case}: sga");
                    assert!(within_bound(&mt.mutual.unwrap()), "case {case}: mutual");
                }
                // Zero-probability draws can produce riskless agents.
                Err(Error::RisklessAgent(_)) | Err(Error::EmptyMarket) => {}
                Err(e) => panic!("case {case}: {e}"),
            }
            let cote = approx_cote_terms(&spec, norm, i, Some(k2)).unwrap();
            assert!(within_bound(&cote.agent_sys), "case {case}: cote as");
            assert!(within_bound(&cote.sys_agent), "case {case}: cote sa");
            assert!(within_bound(&cote.mutual.unwrap()), "case {case}: cote mm");
        }
    }
}
