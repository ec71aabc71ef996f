//! Finite-gamma simulation of the exposure vector F = AV under both
//! dependence regimes, with empirical VaR / CoTE / tail-dependence estimates
//! and their asymptotic predictions side by side.

use rayon::prelude::*;

use crate::agg::Aggregation;
use crate::cond::{cond_prob_limit, CondTarget};
use crate::constants::{
    c_agg_generic, column_separable, cote_asymptotic, var_asymptotic, EvalMethod, ENUM_BITS,
};
use crate::market::{MarketSpec, Regime};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub reps: u64,
    pub seed: u64,
    /// Tail levels, strictly inside (0,1), largest first.
    pub gammas: Vec<f64>,
    /// Fresh graph every replication (the default semantics of all
    /// constants) or one fixed realized graph.
    pub resample_graph: bool,
}

/// One requested empirical quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimTarget {
    Var(Aggregation),
    Cote(Aggregation),
    /// Symmetric conditional exceedance: P(g > VaR_{1-gamma}(g) | h > VaR_{1-gamma}(h)).
    TailDep(CondTarget),
}

impl std::fmt::Display for SimTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SimTarget::Var(a) => write!(f, "var:{a}"),
            SimTarget::Cote(a) => write!(f, "cote:{a}"),
            SimTarget::TailDep(t) => write!(f, "taildep:{}|{}", t.g, t.h),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailRecord {
    pub gamma: f64,
    pub target: String,
    pub empirical: f64,
    pub stderr: f64,
    /// Asymptotic prediction; NaN when unavailable (flagged).
    pub asymptotic: f64,
    pub abs_gap: f64,
    pub rel_gap: f64,
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalTailReport {
    pub records: Vec<TailRecord>,
    pub reps: u64,
    pub seed: u64,
    /// Set when reps * min(gamma) < 100: too few tail observations for the
    /// finest level.
    pub low_tail_warning: bool,
}

/// One claim vector. Independent regime: V_j = K_j^{1/alpha} U_j^{-1/alpha}
/// with independent uniforms (exact Pareto tails). Fully dependent regime:
/// one uniform drives every coordinate (comonotone).
pub fn sample_claims(spec: &MarketSpec, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed);
    let inv_alpha = 1.0 / spec.alpha;
    match spec.regime {
        Regime::AsymptoticallyIndependent => (0..spec.d)
            .map(|j| spec.k_coeffs[j].powf(inv_alpha) * rng::open_closed01(&mut r).powf(-inv_alpha))
            .collect(),
        Regime::AsymptoticallyFullyDependent => {
            let u = rng::open_closed01(&mut r).powf(-inv_alpha);
            (0..spec.d)
                .map(|j| spec.k_coeffs[j].powf(inv_alpha) * u)
                .collect()
        }
    }
}

/// Left-continuous empirical VaR: the order statistic at index
/// ceil(n (1-gamma)), matching inf{t : P(X > t) <= gamma}.
pub fn empirical_var(sorted: &[f64], gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::GammaOutOfRange(gamma));
    }
    let needed = (1.0 / gamma).ceil() as usize;
    if sorted.len() < needed {
        return Err(Error::InsufficientSamples {
            needed,
            got: sorted.len(),
        });
    }
    let n = sorted.len() as f64;
    let idx = (n * (1.0 - gamma)).ceil() as usize;
    Ok(sorted[idx.clamp(1, sorted.len()) - 1])
}

/// Mean of the strict exceedances above the empirical VaR; `None` when no
/// sample exceeds it.
pub fn empirical_cote(sorted: &[f64], gamma: f64) -> Result<Option<f64>> {
    let var = empirical_var(sorted, gamma)?;
    let first = sorted.partition_point(|&x| x <= var);
    if first == sorted.len() {
        return Ok(None);
    }
    let tail = &sorted[first..];
    Ok(Some(tail.iter().sum::<f64>() / tail.len() as f64))
}

/// Evaluation method for the asymptotic predictions: exact when available,
/// else exhaustive enumeration when feasible, else an independent Monte
/// Carlo run.
fn prediction_method(spec: &MarketSpec, seed: u64) -> EvalMethod {
    let exact_ok =
        spec.is_insurance() && spec.regime == Regime::AsymptoticallyIndependent;
    if exact_ok {
        EvalMethod::Exact
    } else if (column_separable(spec)
        && spec.regime == Regime::AsymptoticallyIndependent
        && spec.q as u32 <= ENUM_BITS)
        || (spec.q * spec.d) as u32 <= ENUM_BITS
    {
        EvalMethod::Enumeration
    } else {
        EvalMethod::MonteCarlo {
            reps: 2_000_000,
            seed: rng::substream(seed, u64::MAX - 2),
        }
    }
}

fn validate_config(cfg: &SimConfig) -> Result<()> {
    if cfg.reps == 0 {
        return Err(Error::Config("reps must be positive".into()));
    }
    if cfg.gammas.is_empty() {
        return Err(Error::Config("at least one gamma required".into()));
    }
    for &g in &cfg.gammas {
        if !(g > 0.0 && g < 1.0) {
            return Err(Error::GammaOutOfRange(g));
        }
    }
    Ok(())
}

const SIM_CHUNK: u64 = 8192;

/// Simulate the requested targets. Replication t derives its claim and graph
/// seeds from substream t of the master seed, so the result is bit-identical
/// for a given (spec, config) regardless of thread count.
pub fn simulate(
    spec: &MarketSpec,
    cfg: &SimConfig,
    targets: &[SimTarget],
) -> Result<EmpiricalTailReport> {
    spec.validate()?;
    validate_config(cfg)?;
    if targets.is_empty() {
        return Err(Error::Config("at least one target required".into()));
    }

    // Distinct aggregations across all targets.
    let mut aggs: Vec<Aggregation> = Vec::new();
    let agg_idx = |a: &Aggregation, aggs: &mut Vec<Aggregation>| {
        match aggs.iter().position(|b| b == a) {
            Some(t) => t,
            None => {
                aggs.push(*a);
                aggs.len() - 1
            }
        }
    };
    enum Plan {
        Var(usize),
        Cote(usize),
        TailDep(usize, usize),
    }
    let plans: Vec<(Plan, String)> = targets
        .iter()
        .map(|t| {
            let plan = match t {
                SimTarget::Var(a) => Plan::Var(agg_idx(a, &mut aggs)),
                SimTarget::Cote(a) => Plan::Cote(agg_idx(a, &mut aggs)),
                SimTarget::TailDep(ct) => {
                    Plan::TailDep(agg_idx(&ct.g, &mut aggs), agg_idx(&ct.h, &mut aggs))
                }
            };
            (plan, t.to_string())
        })
        .collect();

    let fixed_graph = if cfg.resample_graph {
        None
    } else {
        Some(spec.sample_adjacency(rng::substream(cfg.seed, u64::MAX)))
    };

    // Per-replication aggregation values, chunked for parallelism but
    // assembled in replication order.
    let naggs = aggs.len();
    let nchunks = cfg.reps.div_ceil(SIM_CHUNK);
    let chunks: Vec<Vec<f64>> = (0..nchunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * SIM_CHUNK;
            let hi = (lo + SIM_CHUNK).min(cfg.reps);
            let mut out = Vec::with_capacity(((hi - lo) as usize) * naggs);
            for t in lo..hi {
                let claims = sample_claims(spec, rng::substream(cfg.seed, 2 * t));
                let exposures = match &fixed_graph {
                    Some(g) => g.exposures(&claims),
                    None => spec
                        .sample_adjacency(rng::substream(cfg.seed, 2 * t + 1))
                        .exposures(&claims),
                };
                for a in &aggs {
                    out.push(a.apply(&exposures));
                }
            }
            out
        })
        .collect();

    let n = cfg.reps as usize;
    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(n); naggs];
    for chunk in &chunks {
        for row in chunk.chunks_exact(naggs) {
            for (a, &v) in row.iter().enumerate() {
                values[a].push(v);
            }
        }
    }
    drop(chunks);
    let sorted: Vec<Vec<f64>> = values
        .iter()
        .map(|v| {
            let mut s = v.clone();
            s.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            s
        })
        .collect();

    let min_gamma = cfg.gammas.iter().cloned().fold(f64::INFINITY, f64::min);
    let low_tail_warning = (cfg.reps as f64) * min_gamma < 100.0;
    let method = prediction_method(spec, cfg.seed);

    let mut records = Vec::new();
    for &gamma in &cfg.gammas {
        for (plan, label) in &plans {
            let rec = match plan {
                Plan::Var(a) => {
                    let emp = empirical_var(&sorted[*a], gamma)?;
                    let stderr = quantile_stderr(&sorted[*a], gamma);
                    let asym = c_agg_generic(spec, &aggs[*a], method)
                        .and_then(|c| var_asymptotic(c, spec.alpha, gamma));
                    build_record(gamma, label, emp, stderr, asym, None)
                }
                Plan::Cote(a) => {
                    let stderr_and_emp = cote_with_stderr(&sorted[*a], gamma)?;
                    let asym = c_agg_generic(spec, &aggs[*a], method)
                        .and_then(|c| cote_asymptotic(c, spec.alpha, gamma));
                    match stderr_and_emp {
                        Some((emp, se)) => build_record(gamma, label, emp, se, asym, None),
                        None => build_record(
                            gamma,
                            label,
                            f64::NAN,
                            f64::NAN,
                            asym,
                            Some("no_exceedances".into()),
                        ),
                    }
                }
                Plan::TailDep(g, h) => {
                    let var_g = empirical_var(&sorted[*g], gamma)?;
                    let var_h = empirical_var(&sorted[*h], gamma)?;
                    let mut joint = 0usize;
                    let mut cond = 0usize;
                    for t in 0..n {
                        if values[*h][t] > var_h {
                            cond += 1;
                            if values[*g][t] > var_g {
                                joint += 1;
                            }
                        }
                    }
                    let asym = taildep_prediction(spec, &aggs[*g], &aggs[*h], method);
                    if cond == 0 {
                        build_record(
                            gamma,
                            label,
                            f64::NAN,
                            f64::NAN,
                            asym,
                            Some("no_exceedances".into()),
                        )
                    } else {
                        let emp = joint as f64 / cond as f64;
                        let se = (emp * (1.0 - emp) / cond as f64).sqrt();
                        build_record(gamma, label, emp, se, asym, None)
                    }
                }
            };
            records.push(rec);
        }
    }
    Ok(EmpiricalTailReport {
        records,
        reps: cfg.reps,
        seed: cfg.seed,
        low_tail_warning,
    })
}

/// Asymptotic symmetric conditional exceedance: the conditional limit at the
/// threshold ratio aligning the two marginal VaRs, u = (C^h / C^g)^{1/alpha}.
fn taildep_prediction(
    spec: &MarketSpec,
    g: &Aggregation,
    h: &Aggregation,
    method: EvalMethod,
) -> Result<f64> {
    let c_g = c_agg_generic(spec, g, method)?;
    let c_h = c_agg_generic(spec, h, method)?;
    if c_g == 0.0 || c_h == 0.0 {
        return Err(Error::EmptyMarket);
    }
    let u = (c_h / c_g).powf(1.0 / spec.alpha);
    cond_prob_limit(spec, &CondTarget { g: *g, h: *h }, u, method)
}

fn build_record(
    gamma: f64,
    label: &str,
    empirical: f64,
    stderr: f64,
    asymptotic: Result<f64>,
    flag: Option<String>,
) -> TailRecord {
    let (asym, flag) = match asymptotic {
        Ok(v) => (v, flag),
        Err(e) => (f64::NAN, flag.or(Some(format!("no_asymptotic: {e}")))),
    };
    TailRecord {
        gamma,
        target: label.to_string(),
        empirical,
        stderr,
        asymptotic: asym,
        abs_gap: (empirical - asym).abs(),
        rel_gap: if asym != 0.0 {
            (empirical - asym).abs() / asym.abs()
        } else {
            f64::NAN
        },
        flag,
    }
}

/// Quantile standard error from the spread of the order statistics one
/// binomial standard deviation away in count space.
fn quantile_stderr(sorted: &[f64], gamma: f64) -> f64 {
    let n = sorted.len();
    let center = ((n as f64) * (1.0 - gamma)).ceil();
    let spread = ((n as f64) * gamma * (1.0 - gamma)).sqrt();
    let lo = ((center - spread).floor().max(1.0) as usize).min(n) - 1;
    let hi = ((center + spread).ceil().max(1.0) as usize).min(n) - 1;
    (sorted[hi] - sorted[lo]) / 2.0
}

fn cote_with_stderr(sorted: &[f64], gamma: f64) -> Result<Option<(f64, f64)>> {
    let var = empirical_var(sorted, gamma)?;
    let first = sorted.partition_point(|&x| x <= var);
    if first == sorted.len() {
        return Ok(None);
    }
    let tail = &sorted[first..];
    let m = tail.len() as f64;
    let mean = tail.iter().sum::<f64>() / m;
    let varsum: f64 = tail.iter().map(|x| (x - mean).powi(2)).sum();
    let se = if tail.len() > 1 {
        (varsum / (m - 1.0) / m).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(Some((mean, se)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agg::NormSpec;

    fn sum_norm() -> Aggregation {
        Aggregation::Norm(NormSpec::Finite(1.0))
    }

    #[test]
    fn inverse_cdf_arithmetic() {
        // K = (1,4), alpha = 2, U = 0.01 in both coordinates -> V = (10, 20).
        let v1 = 1.0f64.powf(0.5) * 0.01f64.powf(-0.5);
        let v4 = 4.0f64.powf(0.5) * 0.01f64.powf(-0.5);
        assert!((v1 - 10.0).abs() < 1e-12 && (v4 - 20.0).abs() < 1e-12);
        // Comonotone sampler realizes exactly this shape.
        let mut spec = MarketSpec::homogeneous(1, 2, 1.0, 2.0);
        spec.k_coeffs = vec![1.0, 4.0];
        spec.regime = Regime::AsymptoticallyFullyDependent;
        let v = sample_claims(&spec, 7);
        assert!((v[1] / v[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn comonotone_coordinates_equal() {
        let mut spec = MarketSpec::homogeneous(2, 5, 0.5, 2.0);
        spec.regime = Regime::AsymptoticallyFullyDependent;
        let v = sample_claims(&spec, 11);
        assert!(v.iter().all(|&x| (x - v[0]).abs() < 1e-12));
    }

    #[test]
    fn pareto_sampler_exact_tail() {
        let spec = MarketSpec::homogeneous(1, 1, 1.0, 2.0);
        let reps = 200_000u64;
        let t = 3.0f64;
        let mut hits = 0u64;
        for s in 0..reps {
            if sample_claims(&spec, rng::substream(5, s))[0] > t {
                hits += 1;
            }
        }
        let p = hits as f64 / reps as f64;
        let expect = t.powf(-2.0);
        let se = (expect * (1.0 - expect) / reps as f64).sqrt();
        assert!((p - expect).abs() < 4.0 * se, "{p} vs {expect}");
    }

    #[test]
    fn empirical_var_cote_counting() {
        let samples: Vec<f64> = (1..=100).map(|x| x as f64).collect();
        assert_eq!(empirical_var(&samples, 0.05).unwrap(), 95.0);
        assert_eq!(empirical_cote(&samples, 0.05).unwrap(), Some(98.0));
    }

    #[test]
    fn constant_samples_have_no_exceedances() {
        let samples = vec![3.0; 50];
        assert_eq!(empirical_var(&samples, 0.1).unwrap(), 3.0);
        assert_eq!(empirical_cote(&samples, 0.1).unwrap(), None);
    }

    #[test]
    fn insufficient_samples_rejected() {
        let samples = vec![1.0, 2.0];
        assert!(matches!(
            empirical_var(&samples, 0.01),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn pareto_quantile_oracle() {
        // 10^6 unit-Pareto(alpha=2) samples: VaR_{0.99} = 10.
        let spec = MarketSpec::homogeneous(1, 1, 1.0, 2.0);
        let cfg = SimConfig {
            reps: 1_000_000,
            seed: 42,
            gammas: vec![0.01],
            resample_graph: true,
        };
        let rep = simulate(&spec, &cfg, &[SimTarget::Var(Aggregation::Projection(0))]).unwrap();
        let r = &rep.records[0];
        assert!((r.asymptotic - 10.0).abs() < 1e-12);
        assert!(r.abs_gap < 4.0 * r.stderr.max(0.01), "{r:?}");
    }

    #[test]
    fn cote_var_ratio_approaches_alpha_over_alpha_minus_one() {
        let spec = MarketSpec::homogeneous(1, 1, 1.0, 2.0);
        let cfg = SimConfig {
            reps: 2_000_000,
            seed: 9,
            gammas: vec![1e-3],
            resample_graph: true,
        };
        let rep = simulate(
            &spec,
            &cfg,
            &[
                SimTarget::Var(Aggregation::Projection(0)),
                SimTarget::Cote(Aggregation::Projection(0)),
            ],
        )
        .unwrap();
        let ratio = rep.records[1].empirical / rep.records[0].empirical;
        assert!((ratio - 2.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn reproducible_and_thread_invariant_inputs() {
        let spec = MarketSpec::homogeneous(3, 4, 0.5, 2.0);
        let cfg = SimConfig {
            reps: 20_000,
            seed: 123,
            gammas: vec![0.05, 0.01],
            resample_graph: true,
        };
        let targets = [SimTarget::Var(sum_norm()), SimTarget::Cote(sum_norm())];
        let a = simulate(&spec, &cfg, &targets).unwrap();
        let b = simulate(&spec, &cfg, &targets).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn taildep_matches_exact_limit() {
        let spec = MarketSpec::homogeneous(5, 10, 0.3, 5.0);
        let cfg = SimConfig {
            reps: 200_000,
            seed: 77,
            gammas: vec![1e-3],
            resample_graph: true,
        };
        let target = SimTarget::TailDep(CondTarget {
            g: Aggregation::Projection(0),
            h: sum_norm(),
        });
        let rep = simulate(&spec, &cfg, &[target]).unwrap();
        let r = &rep.records[0];
        assert!(r.flag.is_none(), "{r:?}");
        // Finite-gamma bias on top of sampling noise: allow 4 SE + a small
        // bias allowance.
        assert!(r.abs_gap < 4.0 * r.stderr + 0.03, "{r:?}");
    }

    #[test]
    fn dependent_complete_graph_taildep_is_one() {
        let mut spec = MarketSpec::homogeneous(3, 4, 1.0, 2.0);
        spec.regime = Regime::AsymptoticallyFullyDependent;
        let cfg = SimConfig {
            reps: 100_000,
            seed: 5,
            gammas: vec![0.01],
            resample_graph: true,
        };
        let target = SimTarget::TailDep(CondTarget {
            g: Aggregation::Projection(0),
            h: sum_norm(),
        });
        let rep = simulate(&spec, &cfg, &[target]).unwrap();
        let r = &rep.records[0];
        assert!(r.empirical > 0.99, "{r:?}");
        assert!((r.asymptotic - 1.0).abs() < 1e-9, "{r:?}");
    }

    #[test]
    fn low_tail_warning_set() {
        let spec = MarketSpec::homogeneous(1, 1, 1.0, 2.0);
        let cfg = SimConfig {
            reps: 1000,
            seed: 1,
            gammas: vec![0.01],
            resample_graph: true,
        };
        let rep = simulate(&spec, &cfg, &[SimTarget::Var(Aggregation::Projection(0))]).unwrap();
        assert!(rep.low_tail_warning);
    }

    #[test]
    fn stderr_scales_with_reps() {
        let spec = MarketSpec::homogeneous(3, 4, 0.5, 2.0);
        let mk = |reps| SimConfig {
            reps,
            seed: 31,
            gammas: vec![0.01],
            resample_graph: true,
        };
        let targets = [SimTarget::Cote(sum_norm())];
        let a = simulate(&spec, &mk(100_000), &targets).unwrap().records[0].stderr;
        let b = simulate(&spec, &mk(400_000), &targets).unwrap().records[0].stderr;
        let ratio = a / b;
        assert!((ratio - 2.0).abs() < 0.4, "ratio {ratio}");
    }

    #[test]
    fn fixed_graph_mode_is_deterministic() {
        let spec = MarketSpec::homogeneous(4, 6, 0.5, 2.0);
        let cfg = SimConfig {
            reps: 10_000,
            seed: 8,
            gammas: vec![0.05],
            resample_graph: false,
        };
        let a = simulate(&spec, &cfg, &[SimTarget::Var(sum_norm())]).unwrap();
        let b = simulate(&spec, &cfg, &[SimTarget::Var(sum_norm())]).unwrap();
        assert_eq!(a, b);
    }
}
