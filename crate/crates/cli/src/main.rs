//! Command-line front end: reads a market configuration, dispatches the
//! computations and writes CSV tables.
//!
//! Exit codes: 0 success, 2 configuration problem, 3 requested computation
//! infeasible, 4 simulation warning escalated by --strict.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tailnet::agg::{Aggregation, NormSpec};
use tailnet::cond::{
    cote_constants, tail_dep_agent_given_agent, tail_dep_agent_given_sys,
    tail_dep_sys_given_agent, CondTarget,
};
use tailnet::constants::{EvalMethod, RiskConstants, ENUM_BITS};
use tailnet::market::MarketSpec;
use tailnet::montecarlo::{simulate, SimConfig, SimTarget};
use tailnet::poisson::{approx_c_ind_agent, approx_c_ind_sys, approx_cote_terms, approx_min_terms};
use tailnet::uncovered::uncovered;
use tailnet::Error;

#[derive(Parser)]
#[command(name = "tailnet", version, about = "Asymptotic systemic risk measures on bipartite markets")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Tail constants of every agent and of the system, in both regimes.
    Constants(ConstantsArgs),
    /// Curve sweeps over the edge probability or over kappa.
    Curves(CurvesArgs),
    /// Poisson approximations with guaranteed error bounds.
    Approx(ApproxArgs),
    /// Tail constant of the losses no agent covers.
    Uncovered(UncoveredArgs),
    /// Monte Carlo validation of the asymptotic formulas.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct Common {
    /// Market configuration (JSON).
    config: PathBuf,
    /// Master seed for any Monte Carlo evaluation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the table here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format (only csv).
    #[arg(long, default_value = "csv")]
    format: String,
    /// Escalate warnings to exit code 4.
    #[arg(long)]
    strict: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Exact,
    Enumeration,
    Mc,
}

#[derive(Args)]
struct ConstantsArgs {
    #[command(flatten)]
    common: Common,
    /// Norm exponent r for the system aggregation ("inf" for the max norm).
    #[arg(long, default_value = "1")]
    norm: String,
    /// Evaluation method for the independent-regime constants.
    #[arg(long, value_enum, default_value_t = MethodArg::Exact)]
    method: MethodArg,
    /// Evaluation method for the dependent-regime constants (no exact path;
    /// defaults to enumeration when feasible, else Monte Carlo).
    #[arg(long, value_enum)]
    dep_method: Option<MethodArg>,
    /// Replications for Monte Carlo evaluation.
    #[arg(long, default_value_t = 1_000_000)]
    mc_reps: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepVar {
    P,
    Kappa,
}

#[derive(Clone, Copy, ValueEnum)]
enum Measure {
    /// CoTE prefactor, agent given system.
    Cas,
    /// CoTE prefactor, system given agent.
    Csa,
    /// Tail dependence, agent given system.
    TaildepAgs,
    /// Tail dependence, system given agent.
    TaildepSga,
    /// Tail dependence, agent given agent.
    TaildepAga,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridKind {
    Linear,
    Log,
}

#[derive(Args)]
struct CurvesArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    sweep: SweepVar,
    #[arg(long, value_enum)]
    measure: Measure,
    /// Conditioned agent (1-based).
    #[arg(long, default_value_t = 1)]
    agent: usize,
    /// Conditioning agent for the mutual measure (1-based).
    #[arg(long, default_value_t = 2)]
    agent2: usize,
    /// Norm series for a p-sweep, comma separated.
    #[arg(long, default_value = "0.5,1,2,inf")]
    r_list: String,
    /// Norm for a kappa-sweep.
    #[arg(long, default_value = "1")]
    norm: String,
    /// Edge-probability series for a kappa-sweep, comma separated; empty
    /// uses the configured probabilities as a single series.
    #[arg(long, default_value = "")]
    p_list: String,
    /// Fixed kappa for tail-dependence measures in a p-sweep.
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    #[arg(long, value_enum)]
    grid: Option<GridKind>,
    #[arg(long)]
    start: Option<f64>,
    #[arg(long)]
    stop: Option<f64>,
    #[arg(long, default_value_t = 100)]
    steps: usize,
}

#[derive(Args)]
struct ApproxArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1)]
    agent: usize,
    /// Second agent for the mutual terms (1-based).
    #[arg(long)]
    agent2: Option<usize>,
    #[arg(long, default_value = "1")]
    norm: String,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    /// Use Poisson-approximated constants inside the min-term multipliers.
    #[arg(long)]
    poisson_constants: bool,
}

#[derive(Args)]
struct UncoveredArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1_000_000)]
    reps: u64,
    /// Tail levels, comma separated, largest first.
    #[arg(long, default_value = "0.1,0.01,0.001")]
    gammas: String,
    /// Requested quantities, comma separated: var:AGG, cote:AGG or
    /// taildep:AGG|AGG where AGG is agentN, normR or norminf.
    #[arg(long, default_value = "")]
    targets: String,
    #[arg(long, default_value_t = 1)]
    agent: usize,
    #[arg(long, default_value = "1")]
    norm: String,
    /// Keep one realized graph instead of resampling per replication.
    #[arg(long)]
    fixed_graph: bool,
}

fn main() -> ExitCode {
    if let Ok(v) = std::env::var("TAILNET_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        } else {
            eprintln!("tailnet: invalid TAILNET_THREADS value {v:?}");
            return ExitCode::from(2);
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("tailnet: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::InvalidSpec(_)
        | Error::GammaOutOfRange(_)
        | Error::InvalidNorm(_)
        | Error::SameAgent(_) => 2,
        _ => 3,
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    let common = match &cli.cmd {
        Cmd::Constants(a) => &a.common,
        Cmd::Curves(a) => &a.common,
        Cmd::Approx(a) => &a.common,
        Cmd::Uncovered(a) => &a.common,
        Cmd::Simulate(a) => &a.common,
    };
    if common.format != "csv" {
        return Err(Error::Config(format!(
            "unsupported format {:?}",
            common.format
        )));
    }
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| Error::Config(format!("{}: {e}", common.config.display())))?;
    let spec = MarketSpec::from_json(&text)?;

    let (csv, warn) = match &cli.cmd {
        Cmd::Constants(a) => (cmd_constants(&spec, a)?, false),
        Cmd::Curves(a) => (cmd_curves(&spec, a)?, false),
        Cmd::Approx(a) => cmd_approx(&spec, a)?,
        Cmd::Uncovered(_) => (cmd_uncovered(&spec)?, false),
        Cmd::Simulate(a) => cmd_simulate(&spec, a)?,
    };
    match &common.out {
        Some(path) => std::fs::write(path, &csv)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        None => print!("{csv}"),
    }
    Ok(if warn && common.strict { 4 } else { 0 })
}

fn parse_norm(s: &str) -> Result<NormSpec, Error> {
    match s {
        "inf" | "max" => Ok(NormSpec::Max),
        other => {
            let r: f64 = other
                .parse()
                .map_err(|_| Error::Config(format!("invalid norm {other:?}")))?;
            NormSpec::new(r)
        }
    }
}

/// 1-based agent index from the command line to 0-based.
fn agent_index(i: usize, q: usize) -> Result<usize, Error> {
    if i == 0 || i > q {
        return Err(Error::Config(format!(
            "agent index {i} out of range 1..={q}"
        )));
    }
    Ok(i - 1)
}

fn parse_agg(s: &str, q: usize) -> Result<Aggregation, Error> {
    if let Some(rest) = s.strip_prefix("agent") {
        let i: usize = rest
            .parse()
            .map_err(|_| Error::Config(format!("invalid aggregation {s:?}")))?;
        Ok(Aggregation::Projection(agent_index(i, q)?))
    } else if let Some(rest) = s.strip_prefix("norm") {
        Ok(Aggregation::Norm(parse_norm(rest)?))
    } else {
        Err(Error::Config(format!("invalid aggregation {s:?}")))
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, Error> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid number {t:?}")))
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

// ---------------------------------------------------------------------------
// constants
// ---------------------------------------------------------------------------

fn cmd_constants(spec: &MarketSpec, a: &ConstantsArgs) -> Result<String, Error> {
    let norm = parse_norm(&a.norm)?;
    let mc = EvalMethod::MonteCarlo {
        reps: a.mc_reps,
        seed: a.common.seed,
    };
    let pick = |m: MethodArg| match m {
        MethodArg::Exact => EvalMethod::Exact,
        MethodArg::Enumeration => EvalMethod::Enumeration,
        MethodArg::Mc => mc,
    };
    let ind_method = pick(a.method);
    let dep_method = match a.dep_method {
        Some(m) => pick(m),
        // No exact path exists in the dependent regime.
        None => {
            if ((spec.q * spec.d) as u32) <= ENUM_BITS {
                EvalMethod::Enumeration
            } else {
                mc
            }
        }
    };
    let rc = RiskConstants::compute(spec, norm, ind_method, dep_method)?;
    let mut out = String::from("quantity,agent,value,method\n");
    for (i, v) in rc.c_ind_agent.iter().enumerate() {
        writeln!(out, "c_ind_agent,{},{v},{}", i + 1, rc.ind_method).unwrap();
    }
    writeln!(out, "c_ind_sys,,{},{}", rc.c_ind_sys, rc.ind_method).unwrap();
    for (i, v) in rc.c_dep_agent.iter().enumerate() {
        writeln!(out, "c_dep_agent,{},{v},{}", i + 1, rc.dep_method).unwrap();
    }
    writeln!(out, "c_dep_sys,,{},{}", rc.c_dep_sys, rc.dep_method).unwrap();
    Ok(out)
}

// ---------------------------------------------------------------------------
// curves
// ---------------------------------------------------------------------------

fn grid_points(a: &CurvesArgs) -> Result<Vec<f64>, Error> {
    let (kind, start, stop) = match a.sweep {
        SweepVar::P => (
            a.grid.unwrap_or(GridKind::Linear),
            a.start.unwrap_or(0.01),
            a.stop.unwrap_or(1.0),
        ),
        SweepVar::Kappa => (
            a.grid.unwrap_or(GridKind::Log),
            a.start.unwrap_or(1e-4),
            a.stop.unwrap_or(10.0),
        ),
    };
    if !(start < stop) || a.steps < 2 {
        return Err(Error::Config(
            "need start < stop and at least 2 steps".into(),
        ));
    }
    if matches!(a.sweep, SweepVar::P) && (start <= 0.0 || stop > 1.0) {
        return Err(Error::Config("p grid must lie in (0,1]".into()));
    }
    if matches!(a.sweep, SweepVar::Kappa) && start <= 0.0 {
        return Err(Error::Config("kappa grid must be positive".into()));
    }
    let n = a.steps;
    Ok((0..n)
        .map(|t| {
            let f = t as f64 / (n - 1) as f64;
            match kind {
                GridKind::Linear => start + f * (stop - start),
                GridKind::Log => (start.ln() + f * (stop.ln() - start.ln())).exp(),
            }
        })
        .collect())
}

fn measure_value(
    spec: &MarketSpec,
    m: Measure,
    norm: NormSpec,
    i: usize,
    k: usize,
    kappa: f64,
) -> Result<f64, Error> {
    let method = EvalMethod::Exact;
    match m {
        Measure::Cas => Ok(cote_constants(spec, norm, i, None, method)?.c_as),
        Measure::Csa => Ok(cote_constants(spec, norm, i, None, method)?.c_sa),
        Measure::TaildepAgs => tail_dep_agent_given_sys(spec, norm, i, kappa, method),
        Measure::TaildepSga => tail_dep_sys_given_agent(spec, norm, i, kappa, method),
        Measure::TaildepAga => tail_dep_agent_given_agent(spec, i, k, kappa, method),
    }
}

fn cmd_curves(spec: &MarketSpec, a: &CurvesArgs) -> Result<String, Error> {
    let i = agent_index(a.agent, spec.q)?;
    let k = agent_index(a.agent2, spec.q)?;
    let grid = grid_points(a)?;
    let mut out = String::from("sweep_value,series_label,value\n");
    match a.sweep {
        SweepVar::P => {
            // The mutual measure carries no norm, so it has a single series.
            let norms: Vec<(String, NormSpec)> = if matches!(a.measure, Measure::TaildepAga) {
                vec![("aga".to_string(), NormSpec::Finite(1.0))]
            } else {
                a.r_list
                    .split(',')
                    .map(|t| Ok((format!("r={}", t.trim()), parse_norm(t.trim())?)))
                    .collect::<Result<_, Error>>()?
            };
            for (label, norm) in &norms {
                for &p in &grid {
                    let sub = MarketSpec {
                        edge_probs: vec![p; spec.q * spec.d],
                        ..spec.clone()
                    };
                    let v = measure_value(&sub, a.measure, *norm, i, k, a.kappa)?;
                    writeln!(out, "{p},{label},{v}").unwrap();
                }
            }
        }
        SweepVar::Kappa => {
            let norm = parse_norm(&a.norm)?;
            let series: Vec<(String, MarketSpec)> = if a.p_list.is_empty() {
                vec![("config".to_string(), spec.clone())]
            } else {
                parse_list(&a.p_list)?
                    .into_iter()
                    .map(|p| {
                        (
                            format!("p={p}"),
                            MarketSpec {
                                edge_probs: vec![p; spec.q * spec.d],
                                ..spec.clone()
                            },
                        )
                    })
                    .collect()
            };
            for (label, sub) in &series {
                for &kappa in &grid {
                    let v = measure_value(sub, a.measure, norm, i, k, kappa)?;
                    writeln!(out, "{kappa},{label},{v}").unwrap();
                }
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// approx
// ---------------------------------------------------------------------------

fn cmd_approx(spec: &MarketSpec, a: &ApproxArgs) -> Result<(String, bool), Error> {
    let norm = parse_norm(&a.norm)?;
    let i = agent_index(a.agent, spec.q)?;
    let k = a.agent2.map(|k| agent_index(k, spec.q)).transpose()?;
    let mut out = String::from("quantity,approx,bound,exact,within_bound\n");
    let mut warn = false;
    let mut row = |name: &str, t: &tailnet::ApproxWithBound| {
        let within = t
            .exact
            .map(|e| ((t.approx - e).abs() <= t.bound + 1e-12).to_string())
            .unwrap_or_default();
        if within == "false" {
            warn = true;
        }
        writeln!(
            out,
            "{name},{},{},{},{within}",
            t.approx,
            t.bound,
            fmt_opt(t.exact)
        )
        .unwrap();
    };
    let (_, agent_total) = approx_c_ind_agent(spec, i)?;
    row("c_ind_agent", &agent_total);
    row("c_ind_sys", &approx_c_ind_sys(spec, norm)?);
    let mt = approx_min_terms(spec, norm, i, k, a.kappa, a.poisson_constants)?;
    row("min_agent_given_sys", &mt.agent_given_sys);
    row("min_sys_given_agent", &mt.sys_given_agent);
    if let Some(m) = &mt.mutual {
        row("min_mutual", m);
    }
    if spec.alpha > 1.0 {
        let ct = approx_cote_terms(spec, norm, i, k)?;
        row("cote_agent_sys", &ct.agent_sys);
        row("cote_sys_agent", &ct.sys_agent);
        if let Some(m) = &ct.mutual {
            row("cote_mutual", m);
        }
    }
    Ok((out, warn))
}

// ---------------------------------------------------------------------------
// uncovered
// ---------------------------------------------------------------------------

fn cmd_uncovered(spec: &MarketSpec) -> Result<String, Error> {
    let r = uncovered(spec)?;
    let mut out = String::from("quantity,object,value\n");
    for (j, p0) in r.p_zero.iter().enumerate() {
        writeln!(out, "p_zero,{},{p0}", j + 1).unwrap();
    }
    writeln!(out, "constant,,{}", r.constant).unwrap();
    writeln!(out, "expected_count,,{}", r.expected_count).unwrap();
    Ok(out)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn cmd_simulate(spec: &MarketSpec, a: &SimulateArgs) -> Result<(String, bool), Error> {
    let gammas = parse_list(&a.gammas)?;
    let targets: Vec<SimTarget> = if a.targets.is_empty() {
        let i = agent_index(a.agent, spec.q)?;
        let norm = Aggregation::Norm(parse_norm(&a.norm)?);
        let agent = Aggregation::Projection(i);
        vec![
            SimTarget::Var(agent),
            SimTarget::Cote(agent),
            SimTarget::Var(norm),
            SimTarget::Cote(norm),
            SimTarget::TailDep(CondTarget { g: agent, h: norm }),
        ]
    } else {
        a.targets
            .split(',')
            .map(|t| parse_target(t.trim(), spec.q))
            .collect::<Result<_, Error>>()?
    };
    let cfg = SimConfig {
        reps: a.reps,
        seed: a.common.seed,
        gammas,
        resample_graph: !a.fixed_graph,
    };
    let report = simulate(spec, &cfg, &targets)?;
    let mut out = String::from("gamma,target,empirical,stderr,asymptotic,abs_gap,rel_gap,flag\n");
    let mut warn = report.low_tail_warning;
    for r in &report.records {
        if r.flag.is_some() {
            warn = true;
        }
        let mut flags: Vec<&str> = Vec::new();
        if report.low_tail_warning {
            flags.push("low_tail_count");
        }
        if let Some(f) = &r.flag {
            flags.push(f);
        }
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.gamma,
            r.target,
            r.empirical,
            r.stderr,
            r.asymptotic,
            r.abs_gap,
            r.rel_gap,
            flags.join(";")
        )
        .unwrap();
    }
    Ok((out, warn))
}

fn parse_target(s: &str, q: usize) -> Result<SimTarget, Error> {
    if let Some(rest) = s.strip_prefix("var:") {
        Ok(SimTarget::Var(parse_agg(rest, q)?))
    } else if let Some(rest) = s.strip_prefix("cote:") {
        Ok(SimTarget::Cote(parse_agg(rest, q)?))
    } else if let Some(rest) = s.strip_prefix("taildep:") {
        let (g, h) = rest
            .split_once('|')
            .ok_or_else(|| Error::Config(format!("invalid target {s:?}")))?;
        Ok(SimTarget::TailDep(CondTarget {
            g: parse_agg(g, q)?,
            h: parse_agg(h, q)?,
        }))
    } else {
        Err(Error::Config(format!("invalid target {s:?}")))
    }
}
