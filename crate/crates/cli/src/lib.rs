//! Command implementations behind the `tracemeta` binary.
//!
//! Every command returns a JSON report (or DOT text for `graph`). Reports
//! embed the tool version and the fully resolved configuration, and are
//! byte-identical for identical inputs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value as Json};
use thiserror::Error;
use tracemeta_core::analysis::{
    build_kernel_matrix, check_aperiodic, check_connectivity, check_irreducible, check_reversible, check_stationary,
    decompose_by_strategy, enumerate_traces, posterior, tv_distance, AnalysisError, ConnectivityMode, KernelMatrix,
    Posterior, TraceSpace, Verdict,
};
use tracemeta_core::depgraph::build_graph;
use tracemeta_core::exec::{
    execute, readback, trace_to_json, AugNode, AugStmt, ExecError, RandomSource, Registry, Trace, Value,
};
use tracemeta_core::inference::{
    metaprogram_from_json, metaprogram_to_json, run_chain_with, select, strategy_from_json, strategy_to_json,
    ChainConfig, ChainStats, Engine, InferError, Kernel, Metaprogram,
};
use tracemeta_core::lang::{parse_program, print_expr, print_program, Program};
use tracemeta_core::transform::extract_trace;
use tracemeta_core::{format_rational, Rational};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Default bound on enumerated traces.
pub const DEFAULT_CAP: usize = 4096;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input: unreadable files, malformed programs or configs, programs
    /// that fail to run.
    #[error("{path}: {message}")]
    Input { path: String, message: String },
    /// A broken invariant inside the tool.
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    fn input(path: impl Into<String>, message: impl ToString) -> Self {
        CliError::Input { path: path.into(), message: message.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input { .. } => 1,
            CliError::Internal(_) => 2,
        }
    }

    pub fn to_json(&self) -> Json {
        let error = match self {
            CliError::Input { path, message } => json!({ "kind": "input", "path": path, "message": message }),
            CliError::Internal(message) => json!({ "kind": "internal", "message": message }),
        };
        json!({ "tool": tool(), "error": error })
    }
}

fn from_infer(e: InferError) -> CliError {
    match e {
        InferError::Config(c) => CliError::input(c.path, c.message),
        InferError::Exec(e) => CliError::input("program", e),
        InferError::Dist(e) => CliError::input("program", e),
        InferError::NoPositiveInit(_) => CliError::input("program", e),
        InferError::Contract(_) | InferError::Replay(_) | InferError::Transform(_) => CliError::Internal(e.to_string()),
    }
}

fn from_analysis(e: AnalysisError) -> CliError {
    match e {
        AnalysisError::Exec(ExecError::CapExceeded { .. }) => {
            CliError::input("program", format!("enumeration cap exceeded ({e})"))
        }
        AnalysisError::Exec(_) | AnalysisError::Dist(_) | AnalysisError::ZeroMass => CliError::input("program", e),
        AnalysisError::Infer(e) => from_infer(e),
        _ => CliError::Internal(e.to_string()),
    }
}

fn tool() -> Json {
    json!({ "name": "tracemeta", "version": VERSION })
}

fn display_path(p: &Path) -> String {
    p.display().to_string()
}

/// Reads and parses a program file.
pub fn load_program(path: &Path) -> Result<Program, CliError> {
    let src = std::fs::read_to_string(path).map_err(|e| CliError::input(display_path(path), e))?;
    parse_program(&src).map_err(|e| CliError::input(format!("{}:{}:{}", display_path(path), e.line, e.col), e.message))
}

/// Reads a metaprogram JSON file. `None` stands for the exact Gibbs kernel.
pub fn load_metaprogram(path: Option<&Path>) -> Result<Metaprogram, CliError> {
    let Some(path) = path else { return Ok(Metaprogram::BlackBox(Kernel::EnumGibbs)) };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(display_path(path), e))?;
    parse_metaprogram_text(&text)
}

pub fn parse_metaprogram_text(text: &str) -> Result<Metaprogram, CliError> {
    let v: Json = serde_json::from_str(text).map_err(|e| CliError::input("$", e))?;
    metaprogram_from_json(&v).map_err(|e| CliError::input(e.path, e.message))
}

/// Text of a value, used as its key in marginal tables.
pub fn value_text(v: &Value) -> String {
    if let Some(e) = readback(v) {
        return print_expr(&e);
    }
    match v {
        Value::Closure(c) => {
            let env: Vec<String> = c.env.iter().map(|(k, b)| format!("{k}={}", value_text(&b.value))).collect();
            format!("(closure (lambda ({}) {}) [{}])", c.param, print_expr(&c.body), env.join(" "))
        }
        Value::Stuck(f, a) => format!("({} {})", value_text(f), value_text(a)),
        Value::Symbol(_) | Value::Rational(_) => unreachable!("read back above"),
    }
}

/// `label=value` for every choice of `t`, in evaluation order.
pub fn choice_summary(t: &Trace) -> String {
    let mut parts = Vec::new();
    t.visit(&mut |e| {
        if let AugNode::Dist { label, .. } = &e.node {
            parts.push(format!("{label}={}", value_text(&e.value)));
        }
    });
    parts.join(" ")
}

fn assume_values(t: &Trace) -> Vec<(String, String)> {
    t.stmts
        .iter()
        .filter_map(|s| match s {
            AugStmt::Assume { name, expr } => Some((name.to_string(), value_text(&expr.value))),
            AugStmt::Observe { .. } => None,
        })
        .collect()
}

fn ratio(count: u64, total: u64) -> f64 {
    if total == 0 {
        0.0
    } else {
        count as f64 / total as f64
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    pub program_path: PathBuf,
    pub metaprogram_path: Option<PathBuf>,
    pub iters: u64,
    pub burnin: u64,
    pub thin: u64,
    pub seed: u64,
    pub chains: u64,
    pub cap: usize,
    /// Include the last trace of the first chain in the report.
    pub dump_trace: bool,
}

impl RunConfig {
    pub fn new(program_path: impl Into<PathBuf>) -> Self {
        RunConfig {
            program_path: program_path.into(),
            metaprogram_path: None,
            iters: 1000,
            burnin: 0,
            thin: 1,
            seed: 0,
            chains: 1,
            cap: DEFAULT_CAP,
            dump_trace: false,
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.iters < self.burnin {
            return Err(CliError::input("burnin", "must not exceed iters"));
        }
        if self.thin == 0 {
            return Err(CliError::input("thin", "must be at least 1"));
        }
        if self.chains == 0 {
            return Err(CliError::input("chains", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Default)]
struct Histogram {
    traces: BTreeMap<String, (String, u64)>,
    marginals: BTreeMap<String, BTreeMap<String, u64>>,
    total: u64,
    stats: ChainStats,
    last: Option<Trace>,
}

impl Histogram {
    fn add(&mut self, t: &Trace) {
        self.total += 1;
        let entry = self.traces.entry(t.canonical_key()).or_insert_with(|| (choice_summary(t), 0));
        entry.1 += 1;
        for (name, value) in assume_values(t) {
            *self.marginals.entry(name).or_default().entry(value).or_default() += 1;
        }
    }

    fn merge(&mut self, other: Histogram) {
        self.total += other.total;
        for (k, (summary, c)) in other.traces {
            self.traces.entry(k).or_insert_with(|| (summary, 0)).1 += c;
        }
        for (name, values) in other.marginals {
            let m = self.marginals.entry(name).or_default();
            for (v, c) in values {
                *m.entry(v).or_default() += c;
            }
        }
        let s = &mut self.stats;
        s.steps += other.stats.steps;
        s.proposals += other.stats.proposals;
        s.accepted += other.stats.accepted;
        s.init_attempts += other.stats.init_attempts;
        s.empty_selections += other.stats.empty_selections;
    }
}

fn run_one(
    registry: &Registry,
    cap: usize,
    mp: &Metaprogram,
    p: &Program,
    cfg: &ChainConfig,
    mut rng: RandomSource,
) -> Result<Histogram, InferError> {
    let engine = Engine::with_cap(registry, cap);
    let mut h = Histogram::default();
    let mut last = None;
    h.stats = run_chain_with(&engine, mp, p, cfg, &mut rng, &mut |_, t| {
        h.add(t);
        last = Some(t.clone());
    })?;
    h.last = last;
    Ok(h)
}

fn stats_json(s: &ChainStats) -> Json {
    json!({
        "steps": s.steps,
        "proposals": s.proposals,
        "accepted": s.accepted,
        "init_attempts": s.init_attempts,
        "empty_selections": s.empty_selections,
    })
}

fn marginals_json(m: &BTreeMap<String, BTreeMap<String, u64>>, total: u64) -> Json {
    let mut out = Map::new();
    for (name, values) in m {
        let vals: Map<String, Json> = values
            .iter()
            .map(|(v, c)| (v.clone(), json!({ "count": c, "frequency": ratio(*c, total) })))
            .collect();
        out.insert(name.clone(), Json::Object(vals));
    }
    Json::Object(out)
}

/// Exact marginals of assume variables under the posterior.
fn exact_marginals(space: &TraceSpace, post: &Posterior) -> Json {
    let mut m: BTreeMap<String, BTreeMap<String, Rational>> = BTreeMap::new();
    for (t, p) in space.traces.iter().zip(&post.probs) {
        for (name, value) in assume_values(t) {
            *m.entry(name).or_default().entry(value).or_default() += p;
        }
    }
    let mut out = Map::new();
    for (name, values) in m {
        let vals: Map<String, Json> = values.iter().map(|(v, p)| (v.clone(), json!(format_rational(p)))).collect();
        out.insert(name, Json::Object(vals));
    }
    Json::Object(out)
}

/// Runs the configured chains and reports sample statistics, compared with
/// the exact posterior when the program is small enough to enumerate.
pub fn cmd_run(cfg: &RunConfig) -> Result<Json, CliError> {
    cfg.validate()?;
    let p = load_program(&cfg.program_path)?;
    let mp = load_metaprogram(cfg.metaprogram_path.as_deref())?;
    let registry = Registry::builtin();
    let chain_cfg = ChainConfig { iters: cfg.iters, burnin: cfg.burnin, thin: cfg.thin, ..Default::default() };
    let mut base = RandomSource::seed(cfg.seed);
    let sources: Vec<RandomSource> = (0..cfg.chains).map(|_| base.split()).collect();
    let results: Vec<Result<Histogram, InferError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = sources
            .into_iter()
            .map(|rng| {
                let (registry, mp, p, chain_cfg) = (&registry, &mp, &p, &chain_cfg);
                scope.spawn(move || run_one(registry, cfg.cap, mp, p, chain_cfg, rng))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    });
    let mut hist = Histogram::default();
    let mut final_trace = None;
    for (i, r) in results.into_iter().enumerate() {
        let mut h = r.map_err(from_infer)?;
        if i == 0 {
            final_trace = h.last.take();
        }
        hist.merge(h);
    }

    let exact = match enumerate_traces(&p, &registry, cfg.cap).and_then(|s| Ok((posterior(&s)?, s))) {
        Ok((post, space)) => {
            let counts: HashMap<String, u64> = hist.traces.iter().map(|(k, (_, c))| (k.clone(), *c)).collect();
            let tv = if hist.total == 0 {
                Json::Null
            } else {
                json!(tv_distance(&space, &counts, &post).map_err(|e| match e {
                    AnalysisError::UnknownTrace(_) => {
                        CliError::Internal("chain produced a trace outside the enumerated space".into())
                    }
                    e => from_analysis(e),
                })?)
            };
            let traces: Vec<Json> = space
                .traces
                .iter()
                .zip(&post.probs)
                .map(|(t, pr)| json!({ "choices": choice_summary(t), "probability": format_rational(pr) }))
                .collect();
            json!({ "traces": traces, "marginals": exact_marginals(&space, &post), "tv": tv })
        }
        Err(e) => json!({ "unavailable": e.to_string() }),
    };

    let mut traces: Vec<(&String, &(String, u64))> = hist.traces.iter().collect();
    traces.sort_by(|a, b| b.1 .1.cmp(&a.1 .1).then_with(|| a.0.cmp(b.0)));
    let traces: Vec<Json> = traces
        .into_iter()
        .map(|(_, (summary, c))| json!({ "choices": summary, "count": c, "frequency": ratio(*c, hist.total) }))
        .collect();

    let mut report = json!({
        "tool": tool(),
        "config": {
            "command": "run",
            "program": display_path(&cfg.program_path),
            "program_source": print_program(&p),
            "metaprogram": metaprogram_to_json(&mp),
            "iters": cfg.iters,
            "burnin": cfg.burnin,
            "thin": cfg.thin,
            "seed": cfg.seed,
            "chains": cfg.chains,
            "cap": cfg.cap,
        },
        "stats": stats_json(&hist.stats),
        "samples": {
            "count": hist.total,
            "traces": traces,
            "marginals": marginals_json(&hist.marginals, hist.total),
        },
        "exact": exact,
    });
    if cfg.dump_trace {
        report["final_trace"] = final_trace.as_ref().map(trace_to_json).unwrap_or(Json::Null);
    }
    Ok(report)
}

/// Every trace of the program with its exact prior, likelihood, density and
/// posterior probability.
pub fn cmd_enumerate(program_path: &Path, cap: usize) -> Result<Json, CliError> {
    let p = load_program(program_path)?;
    let registry = Registry::builtin();
    let space = enumerate_traces(&p, &registry, cap).map_err(from_analysis)?;
    let post = posterior(&space).ok();
    let traces: Vec<Json> = (0..space.len())
        .map(|i| {
            json!({
                "index": i,
                "choices": choice_summary(&space.traces[i]),
                "prior": format_rational(&space.priors[i]),
                "likelihood": format_rational(&space.likelihoods[i]),
                "density": format_rational(&space.densities[i]),
                "posterior": post.as_ref().map(|q| json!(format_rational(&q.probs[i]))).unwrap_or(Json::Null),
            })
        })
        .collect();
    Ok(json!({
        "tool": tool(),
        "config": { "command": "enumerate", "program": display_path(program_path), "cap": cap },
        "total_mass": format_rational(&space.total_mass()),
        "traces": traces,
        "posterior": post.map(|q| json!(q.probs.iter().map(format_rational).collect::<Vec<_>>())).unwrap_or(Json::Null),
    }))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckConfig {
    pub program_path: PathBuf,
    pub metaprogram_path: Option<PathBuf>,
    pub cap: usize,
    pub seed: u64,
    /// Length of the chain behind the TV table; zero skips it.
    pub iters: u64,
}

impl CheckConfig {
    pub fn new(program_path: impl Into<PathBuf>) -> Self {
        CheckConfig { program_path: program_path.into(), metaprogram_path: None, cap: DEFAULT_CAP, seed: 0, iters: 10_000 }
    }
}

fn verdict_json(v: Verdict) -> Json {
    match v {
        Verdict::Holds => json!(true),
        Verdict::Fails => json!(false),
        Verdict::Inconclusive => Json::Null,
    }
}

/// Diagnostics of `mp` on one trace space, recursing into nested mixtures
/// on each distinct extracted subprogram.
fn check_space(engine: &Engine<'_>, mp: &Metaprogram, space: &TraceSpace) -> Result<Json, CliError> {
    let post = posterior(space).map_err(from_analysis)?;
    let clauses = match mp {
        Metaprogram::Mix(c) => c.as_slice(),
        Metaprogram::BlackBox(_) => &[],
    };
    let mut strategies = Vec::new();
    for (i, c) in clauses.iter().enumerate() {
        let d = decompose_by_strategy(&c.strategy, space);
        let rev = check_reversible(&d);
        let mut nested = Vec::new();
        if let Metaprogram::Mix(_) = c.sub {
            let mut seen = BTreeSet::new();
            for t in &space.traces {
                let sub = extract_trace(t, &select(&c.strategy, t).nodes, engine.registry)
                    .map_err(|e| CliError::Internal(e.to_string()))?;
                if !seen.insert(sub.program.canonical_key()) {
                    continue;
                }
                let sub_space = enumerate_traces(&sub.program, engine.registry, engine.enum_cap).map_err(from_analysis)?;
                nested.push(json!({
                    "subprogram": print_program(&sub.program),
                    "report": check_space(engine, &c.sub, &sub_space)?,
                }));
            }
        }
        let mut entry = json!({
            "path": format!("mix[{i}]"),
            "weight": format_rational(&c.weight),
            "strategy": strategy_to_json(&c.strategy),
            "reversible": rev.reversible,
            "witness": rev.witness,
            "classes": d.classes.len(),
        });
        if !nested.is_empty() {
            entry["nested"] = json!(nested);
        }
        strategies.push(entry);
    }
    let strats: Vec<_> = clauses.iter().map(|c| c.strategy.clone()).collect();
    let conn = check_connectivity(&strats, space, &post);
    let mut report = json!({
        "traces": space.len(),
        "posterior": post.probs.iter().map(format_rational).collect::<Vec<_>>(),
        "strategies": strategies,
        "connectivity": verdict_json(conn.verdict),
        "connectivity_mode": match conn.mode {
            ConnectivityMode::Exact => "exact",
            ConnectivityMode::SufficientOnly => "sufficient-only",
        },
        "connectivity_pairwise": conn.pairwise,
        "connectivity_witness": conn.witness.map(|w| json!({
            "set": w.set, "f": w.f, "g": w.g, "class_aligned": w.class_aligned,
        })),
        "unaligned_violation": conn.unaligned_violation,
    });
    match build_kernel_matrix(engine, mp, space) {
        Ok(k) => {
            let res = check_stationary(&k, &post);
            let support = post.support();
            report["matrix"] = json!("ok");
            report["stationarity_residual"] = match &res.exact {
                Some(r) => json!(format_rational(r)),
                None => json!(res.float.to_string()),
            };
            report["stationary"] = json!(res.exact.as_ref().map_or(res.float < 1e-9, |r| *r == Rational::from_integer(0.into())));
            report["row_sum_deviation"] = json!(k.max_row_deviation());
            report["irreducible"] = json!(check_irreducible(&k, &post));
            report["aperiodic"] = json!(check_aperiodic(&k, Some(&support)));
            report["kernel"] = matrix_json(&k);
        }
        Err(AnalysisError::NotReversible { class, first, second }) => {
            report["matrix"] = json!({ "not_reversible": { "class": class, "first": first, "second": second } });
            for key in ["stationarity_residual", "stationary", "row_sum_deviation", "irreducible", "aperiodic"] {
                report[key] = Json::Null;
            }
        }
        Err(e) => return Err(from_analysis(e)),
    }
    Ok(report)
}

fn matrix_json(k: &KernelMatrix) -> Json {
    match k {
        KernelMatrix::Exact(m) => json!(m.iter().map(|row| row.iter().map(format_rational).collect::<Vec<_>>()).collect::<Vec<_>>()),
        KernelMatrix::Float(m) => json!(m),
    }
}

/// Checkpoints of the TV table: powers of ten below `iters`, then `iters`.
fn checkpoints(iters: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut c = 10;
    while c < iters {
        out.push(c);
        c *= 10;
    }
    if iters > 0 {
        out.push(iters);
    }
    out
}

/// Convergence diagnostics of a metaprogram on a program.
pub fn cmd_check(cfg: &CheckConfig) -> Result<Json, CliError> {
    let p = load_program(&cfg.program_path)?;
    let mp = load_metaprogram(cfg.metaprogram_path.as_deref())?;
    let registry = Registry::builtin();
    let engine = Engine::with_cap(&registry, cfg.cap);
    let space = enumerate_traces(&p, &registry, cfg.cap).map_err(from_analysis)?;
    let mut report = check_space(&engine, &mp, &space)?;

    let post = posterior(&space).map_err(from_analysis)?;
    let marks = checkpoints(cfg.iters);
    let mut table = Vec::new();
    if !marks.is_empty() {
        let mut counts: HashMap<String, u64> = HashMap::new();
        let mut unknown = false;
        let mut rows = Vec::new();
        let chain_cfg = ChainConfig { iters: cfg.iters, ..Default::default() };
        let mut rng = RandomSource::seed(cfg.seed);
        run_chain_with(&engine, &mp, &p, &chain_cfg, &mut rng, &mut |i, t| {
            *counts.entry(t.canonical_key()).or_default() += 1;
            if marks.contains(&(i + 1)) {
                match tv_distance(&space, &counts, &post) {
                    Ok(tv) => rows.push(json!({ "iters": i + 1, "tv": tv })),
                    Err(_) => unknown = true,
                }
            }
        })
        .map_err(from_infer)?;
        if unknown {
            return Err(CliError::Internal("chain produced a trace outside the enumerated space".into()));
        }
        table = rows;
    }
    report["tv_table"] = json!(table);
    let report = json!({
        "tool": tool(),
        "config": {
            "command": "check",
            "program": display_path(&cfg.program_path),
            "metaprogram": metaprogram_to_json(&mp),
            "cap": cfg.cap,
            "seed": cfg.seed,
            "iters": cfg.iters,
        },
        "report": report,
    });
    Ok(flatten_report(report))
}

/// Lifts the top-level diagnostics next to `tool` and `config`.
fn flatten_report(mut v: Json) -> Json {
    let inner = v.as_object_mut().and_then(|m| m.remove("report"));
    if let (Some(Json::Object(inner)), Some(m)) = (inner, v.as_object_mut()) {
        m.extend(inner);
    }
    v
}

/// Executes the program once, extracts the subproblem chosen by `strategy`
/// and reports the subprogram source with both traces.
pub fn cmd_extract(program_path: &Path, strategy: &str, seed: u64) -> Result<Json, CliError> {
    let p = load_program(program_path)?;
    let v: Json = serde_json::from_str(strategy).map_err(|e| CliError::input("strategy", e))?;
    let st = strategy_from_json(&v).map_err(|e| CliError::input(format!("strategy.{}", e.path), e.message))?;
    let registry = Registry::builtin();
    let t = execute(&p, &registry, &mut RandomSource::seed(seed)).map_err(|e| CliError::input("program", e))?;
    let sub = select(&st, &t);
    let ex = extract_trace(&t, &sub.nodes, &registry).map_err(|e| CliError::Internal(e.to_string()))?;
    let ids = |s: &BTreeSet<_>| s.iter().map(|n: &tracemeta_core::exec::NodeId| n.0).collect::<Vec<_>>();
    let provenance: Map<String, Json> = ex.provenance.iter().map(|(k, v)| (k.0.to_string(), json!(v.0))).collect();
    Ok(json!({
        "tool": tool(),
        "config": {
            "command": "extract",
            "program": display_path(program_path),
            "strategy": strategy_to_json(&st),
            "seed": seed,
        },
        "choices": choice_summary(&t),
        "subproblem": { "nodes": ids(&sub.nodes), "absorbing": ids(&sub.absorbing), "boundary": ids(&sub.boundary) },
        "subprogram": print_program(&ex.program),
        "trace": trace_to_json(&t),
        "subtrace": trace_to_json(&ex.trace),
        "provenance": provenance,
    }))
}

/// Dependence graph of one execution, as DOT.
pub fn cmd_graph(program_path: &Path, seed: u64) -> Result<String, CliError> {
    let p = load_program(program_path)?;
    let t = execute(&p, &Registry::builtin(), &mut RandomSource::seed(seed)).map_err(|e| CliError::input("program", e))?;
    Ok(build_graph(&t).to_dot())
}

/// Pretty JSON with a trailing newline.
pub fn render(v: &Json) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}
