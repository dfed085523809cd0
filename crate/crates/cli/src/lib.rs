//! Command-line front end. `run` parses `argv`, writes everything to `out`
//! and returns the process exit code: 0 on success, 1 on a domain error,
//! 2 when a budget or cost guard runs out.

use std::io::{self, Write};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::BigRational;
use serde::Serialize;
use serde_json::{json, Value};

use reghyper::enumeration::{all_hypergraphs, brute_force_count, compare, formula_estimate};
use reghyper::exact::{factorial, rational_string, to_f64, uint_rational};
use reghyper::generator::{Delta1Source, GenConfig, GenTrace, Generator, Mode};
use reghyper::model::{build_multigraph, sample_permutation, Multigraph, PermSeq};
use reghyper::rng::{par_replicas, stream_rng, RNG_ALGORITHM};
use reghyper::stats::{
    chi_square_uniformity, exact_lambda_mean, exact_loop_indicator, exact_pair_collision, exhaustive_summary,
    mc_summary_par, ratio_table,
};
use reghyper::switching::{
    backward_bound, enumerate_backward, enumerate_forward, exhaustive_switch_scan, forward_bound,
    forward_injectivity_violations,
};
use reghyper::{CostGuard, LPolicy, Params};

#[derive(Debug, Parser)]
#[command(name = "reghyper", version, about = "Random regular uniform hypergraphs: sampling, counting, checks")]
pub struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Number of vertices.
    #[arg(short = 'n', global = true)]
    n: Option<usize>,
    /// Vertex degree.
    #[arg(short = 'd', global = true)]
    d: Option<usize>,
    /// Edge size.
    #[arg(short = 'k', global = true, default_value_t = 3)]
    k: usize,
    /// Base seed. Randomized commands print a generated one when absent.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Jsonl)]
    format: Format,
    /// Loop cap: `sqrt` or `kd-omega:<w>`.
    #[arg(long = "l-policy", global = true, default_value = "sqrt")]
    l_policy: LPolicy,
    #[arg(long, global = true, value_enum, default_value_t = ModeArg::Exact)]
    mode: ModeArg,
    /// Number of samples.
    #[arg(long, global = true)]
    count: Option<u64>,
    /// Restart budget per generated hypergraph.
    #[arg(long, global = true, default_value_t = 1_000_000)]
    budget: u64,
    /// Significant digits for the exponential correction.
    #[arg(long, global = true, default_value_t = 50)]
    precision: u32,
    /// `<max |P|>` or `<max |P|>,<max C(n,k)>` for exhaustive work.
    #[arg(long = "cost-guard", global = true, value_parser = parse_guard)]
    cost_guard: Option<CostGuard>,
    /// Worker threads for replica-parallel work; output does not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Jsonl,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Exact,
    Approx,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Exact => Mode::Exact,
            ModeArg::Approx => Mode::Approximate,
        }
    }
}

fn parse_guard(s: &str) -> Result<CostGuard, String> {
    let mut g = CostGuard::default();
    let mut it = s.split(',');
    let first = it.next().unwrap_or_default();
    g.max_permutations = first.trim().parse().map_err(|_| format!("bad permutation limit {first:?}"))?;
    if let Some(second) = it.next() {
        g.max_subsets = second.trim().parse().map_err(|_| format!("bad subset limit {second:?}"))?;
    }
    if it.next().is_some() {
        return Err("expected at most two limits".into());
    }
    Ok(g)
}

/// Where `delta_1` comes from: `formula`, `exhaustive`, or a rational `p/q`.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Delta1Arg(Delta1Source);

impl FromStr for Delta1Arg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Delta1Arg(match s {
            "formula" => Delta1Source::Formula,
            "exhaustive" => Delta1Source::ExhaustiveOracle,
            other => Delta1Source::Override(
                BigRational::from_str(other).map_err(|_| format!("expected formula, exhaustive or p/q, got {other:?}"))?,
            ),
        }))
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate hypergraphs as JSON lines.
    Sample {
        #[arg(long, default_value = "formula")]
        delta1: Delta1Arg,
        /// Write per-sample traces to this file as JSON.
        #[arg(long)]
        trace_out: Option<std::path::PathBuf>,
    },
    /// Brute-force count next to the asymptotic formula.
    Enumerate {
        /// Also stream every hypergraph.
        #[arg(long)]
        emit: bool,
        /// Add exhaustive class sizes and level ratios.
        #[arg(long)]
        compare: bool,
    },
    /// Evaluate the asymptotic formula only.
    Formula,
    /// Exhaustive and statistical checks.
    Verify {
        #[arg(value_enum)]
        check: VerifyKind,
        /// delta_1 source for `uniformity`.
        #[arg(long, default_value = "exhaustive")]
        delta1: Delta1Arg,
    },
    /// Exact values and Monte-Carlo estimates.
    Stats {
        #[arg(value_enum)]
        stat: StatKind,
        /// Scan all of P instead of sampling.
        #[arg(long)]
        exhaustive: bool,
        /// omega of the extra `kd-omega` tail policy.
        #[arg(long, default_value_t = 10)]
        omega: usize,
    },
    /// Count (and optionally list) the switchings of one permutation.
    SwitchCount {
        /// Comma-separated labels; sampled from `--seed` when absent.
        #[arg(long)]
        perm: Option<String>,
        /// List every op as a JSON record.
        #[arg(long)]
        explain: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VerifyKind {
    Identity,
    Ratio,
    Uniformity,
    Bounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StatKind {
    Lambda,
    ProbE,
    Collision,
    Tail,
}

#[derive(Debug)]
enum Failure {
    Domain(String),
    Resource(String),
    Io(io::Error),
}

impl From<reghyper::Error> for Failure {
    fn from(e: reghyper::Error) -> Self {
        if e.is_resource_limit() {
            Failure::Resource(e.to_string())
        } else {
            Failure::Domain(e.to_string())
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

type CliResult<T> = Result<T, Failure>;

/// Parse `argv` (including the program name) and run. Diagnostics go to `err`.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = write!(err, "{}", e.render());
            return 1;
        }
        Err(e) => {
            let _ = write!(out, "{}", e.render());
            return 0;
        }
    };
    let result = execute(&cli, out).and_then(|()| out.flush().map_err(Failure::from));
    match result {
        Ok(()) => 0,
        Err(Failure::Domain(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
        Err(Failure::Resource(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            2
        }
        Err(Failure::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => 0,
        Err(Failure::Io(e)) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

struct Ctx<'a> {
    g: &'a Global,
    params: Params,
    guard: CostGuard,
    seed: Option<(u64, bool)>,
    out: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn seed(&self) -> u64 {
        self.seed.expect("randomized command has a seed").0
    }

    fn header(&mut self, command: &str, extra: Value) -> CliResult<()> {
        let mut meta = json!({
            "tool": "reghyper",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "params": self.params,
            "l_policy": self.g.l_policy.to_string(),
            "loop_cap": self.params.loop_cap(self.g.l_policy),
        });
        let obj = meta.as_object_mut().expect("object");
        if let Some((seed, generated)) = self.seed {
            obj.insert("seed".into(), json!(seed));
            obj.insert("seed_generated".into(), json!(generated));
            obj.insert("rng".into(), json!(RNG_ALGORITHM));
        }
        if let Value::Object(extra) = extra {
            obj.extend(extra);
        }
        let meta = json!({ "meta": meta });
        match self.g.format {
            Format::Jsonl => writeln!(self.out, "{meta}")?,
            Format::Text => write_text(self.out, &meta, "")?,
        }
        Ok(())
    }

    fn record<T: Serialize>(&mut self, value: &T) -> CliResult<()> {
        let v = serde_json::to_value(value).map_err(|e| Failure::Domain(e.to_string()))?;
        match self.g.format {
            Format::Jsonl => writeln!(self.out, "{v}")?,
            Format::Text => {
                write_text(self.out, &v, "")?;
                writeln!(self.out)?;
            }
        }
        Ok(())
    }
}

/// `path = value` lines, one per leaf.
fn write_text(out: &mut dyn Write, v: &Value, prefix: &str) -> io::Result<()> {
    let join = |key: &str| {
        if prefix.is_empty() {
            key.to_string()
        } else {
            format!("{prefix}.{key}")
        }
    };
    match v {
        Value::Object(map) => {
            for (key, val) in map {
                write_text(out, val, &join(key))?;
            }
            Ok(())
        }
        Value::Array(items) if items.iter().any(|x| x.is_object()) => {
            for (i, val) in items.iter().enumerate() {
                write_text(out, val, &join(&i.to_string()))?;
            }
            Ok(())
        }
        other => writeln!(out, "{prefix} = {other}"),
    }
}

fn is_randomized(cmd: &Command) -> bool {
    match cmd {
        Command::Sample { .. } => true,
        Command::Verify { check, .. } => *check == VerifyKind::Uniformity,
        Command::Stats { exhaustive, .. } => !exhaustive,
        Command::SwitchCount { perm, .. } => perm.is_none(),
        Command::Enumerate { .. } | Command::Formula => false,
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    let g = &cli.global;
    let (n, d) = match (g.n, g.d) {
        (Some(n), Some(d)) => (n, d),
        _ => return Err(Failure::Domain("both -n and -d are required".into())),
    };
    let params = Params::new(n, d, g.k)?;
    let seed = is_randomized(&cli.command).then(|| match g.seed {
        Some(s) => (s, false),
        None => (rand::random::<u64>(), true),
    });
    let mut ctx = Ctx {
        g,
        params,
        guard: g.cost_guard.unwrap_or_default(),
        seed,
        out,
    };
    match &cli.command {
        Command::Sample { delta1, trace_out } => sample(&mut ctx, &delta1.0, trace_out.as_deref()),
        Command::Enumerate { emit, compare } => enumerate(&mut ctx, *emit, *compare),
        Command::Formula => {
            let mut report = formula_estimate(params, g.precision);
            let source = if params.d == 1 {
                // perfect matchings: n! / ((n/k)! (k!)^(n/k)), no search needed
                let (n, k) = (params.n as u64, params.k as u64);
                let exact = factorial(n) / (factorial(n / k) * factorial(k).pow((n / k) as u32));
                report.ratio = Some(to_f64(&(uint_rational(exact.clone()) / &report.estimate_exact)));
                report.exact_count = Some(exact);
                "closed form for d = 1"
            } else {
                "none (use enumerate)"
            };
            ctx.header("formula", json!({ "precision": g.precision, "exact_count_source": source }))?;
            ctx.record(&report)
        }
        Command::Verify { check, delta1 } => verify(&mut ctx, *check, &delta1.0),
        Command::Stats {
            stat,
            exhaustive,
            omega,
        } => stats(&mut ctx, *stat, *exhaustive, *omega),
        Command::SwitchCount { perm, explain } => switch_count(&mut ctx, perm.as_deref(), *explain),
    }
}

fn gen_config(ctx: &Ctx, source: &Delta1Source) -> GenConfig {
    GenConfig {
        l_policy: ctx.g.l_policy,
        delta1_source: source.clone(),
        mode: ctx.g.mode.into(),
        max_attempts: ctx.g.budget,
        guard: ctx.guard,
    }
}

fn generator_meta(gen: &Generator) -> Value {
    let mode = gen.config().mode;
    json!({
        "mode": mode,
        "exactly_uniform": mode == Mode::Exact,
        "delta1": gen.delta1(),
        "budget": gen.config().max_attempts,
    })
}

/// Draw `count` hypergraphs; sample `i` uses stream `i` of the seed.
fn draw(gen: &Generator, count: u64, seed: u64, jobs: usize) -> CliResult<Vec<(Multigraph, GenTrace)>> {
    let results = par_replicas(count as usize, jobs, |i| gen.generate(&mut stream_rng(seed, i as u64)));
    results.into_iter().map(|r| r.map_err(Failure::from)).collect()
}

fn sample(ctx: &mut Ctx, source: &Delta1Source, trace_out: Option<&std::path::Path>) -> CliResult<()> {
    let gen = Generator::new(ctx.params, gen_config(ctx, source))?;
    let count = ctx.g.count.unwrap_or(1);
    ctx.header("sample", generator_meta(&gen))?;
    let samples = draw(&gen, count, ctx.seed(), ctx.g.jobs)?;
    for (h, _) in &samples {
        match ctx.g.format {
            Format::Jsonl => writeln!(ctx.out, "{}", h.to_json())?,
            Format::Text => {
                let edges: Vec<String> = h.edges().iter().map(|e| e.to_string()).collect();
                writeln!(ctx.out, "{}", edges.join(" "))?;
            }
        }
    }
    if let Some(path) = trace_out {
        let traces: Vec<&GenTrace> = samples.iter().map(|(_, t)| t).collect();
        let body = serde_json::to_string(&json!({ "seed": ctx.seed(), "traces": traces }))
            .map_err(|e| Failure::Domain(e.to_string()))?;
        std::fs::write(path, body + "\n")?;
    }
    Ok(())
}

fn enumerate(ctx: &mut Ctx, emit: bool, full: bool) -> CliResult<()> {
    ctx.header("enumerate", json!({ "precision": ctx.g.precision, "cost_guard": ctx.guard }))?;
    if full {
        let c = compare(ctx.params, ctx.g.l_policy, ctx.guard, ctx.g.precision)?;
        ctx.record(&c)?;
    } else {
        let exact = brute_force_count(ctx.params, ctx.guard, None)?;
        let mut report = formula_estimate(ctx.params, ctx.g.precision);
        report.ratio = Some(to_f64(&(uint_rational(exact.clone()) / &report.estimate_exact)));
        report.exact_count = Some(exact);
        ctx.record(&report)?;
    }
    if emit {
        for h in all_hypergraphs(ctx.params, ctx.guard)? {
            writeln!(ctx.out, "{}", h.to_json())?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct IdentityRow {
    level: usize,
    sum_forward: u64,
    sum_backward: u64,
    status: &'static str,
}

fn verify(ctx: &mut Ctx, check: VerifyKind, source: &Delta1Source) -> CliResult<()> {
    let (p, pol, guard) = (ctx.params, ctx.g.l_policy, ctx.guard);
    match check {
        VerifyKind::Identity => {
            ctx.header("verify identity", json!({}))?;
            let scan = exhaustive_switch_scan(p, pol, guard)?;
            let mut all_equal = true;
            for (level, f, b) in scan.double_counting() {
                all_equal &= f == b;
                ctx.record(&IdentityRow {
                    level,
                    sum_forward: f,
                    sum_backward: b,
                    status: if f == b { "exact-equal" } else { "mismatch" },
                })?;
            }
            if !all_equal {
                return Err(Failure::Domain("double-counting identity fails".into()));
            }
        }
        VerifyKind::Ratio => {
            ctx.header("verify ratio", json!({}))?;
            let table = ratio_table(p, pol, guard)?;
            ctx.record(&table)?;
        }
        VerifyKind::Bounds => {
            ctx.header("verify bounds", json!({}))?;
            let scan = exhaustive_switch_scan(p, pol, guard)?;
            let collisions = forward_injectivity_violations(p, pol, guard)?;
            let violations = scan.bound_violations();
            ctx.record(&json!({
                "backward_bound": rational_string(&backward_bound(p)),
                "levels": scan.levels,
                "bound_violations": violations,
                "forward_output_collisions": collisions,
            }))?;
            if violations > 0 || collisions > 0 {
                return Err(Failure::Domain("switching bounds or injectivity violated".into()));
            }
        }
        VerifyKind::Uniformity => {
            let classes = all_hypergraphs(p, guard)?;
            let gen = Generator::new(p, gen_config(ctx, source))?;
            let count = ctx.g.count.unwrap_or_else(|| (50 * classes.len() as u64).max(1000));
            ctx.header("verify uniformity", generator_meta(&gen))?;
            let samples: Vec<Multigraph> = draw(&gen, count, ctx.seed(), ctx.g.jobs)?
                .into_iter()
                .map(|(h, _)| h)
                .collect();
            let result = chi_square_uniformity(&samples, &classes)?;
            ctx.record(&result)?;
        }
    }
    Ok(())
}

fn stats(ctx: &mut Ctx, stat: StatKind, exhaustive: bool, omega: usize) -> CliResult<()> {
    let (p, pol) = (ctx.params, ctx.g.l_policy);
    let name = match stat {
        StatKind::Lambda => "lambda",
        StatKind::ProbE => "prob-e",
        StatKind::Collision => "collision",
        StatKind::Tail => "tail",
    };
    let exact = match stat {
        StatKind::Lambda => json!({
            "loop_indicator": rational_string(&exact_loop_indicator(p)),
            "lambda_mean": rational_string(&exact_lambda_mean(p)),
            "lambda_mean_f64": to_f64(&exact_lambda_mean(p)),
            "asymptote": (p.k - 1) as f64 * (p.d - 1) as f64 / 2.0,
        }),
        StatKind::Collision => json!({
            "pair_collision": rational_string(&exact_pair_collision(p)),
            "pair_collision_f64": to_f64(&exact_pair_collision(p)),
        }),
        StatKind::ProbE | StatKind::Tail => json!({}),
    };
    if exhaustive {
        ctx.header(&format!("stats {name}"), json!({ "exhaustive": true, "cost_guard": ctx.guard }))?;
        let summary = exhaustive_summary(p, pol, ctx.guard)?;
        ctx.record(&json!({ "stat": name, "exact": exact, "summary": summary }))
    } else {
        let count = ctx.g.count.unwrap_or(100_000);
        ctx.header(&format!("stats {name}"), json!({ "exhaustive": false, "samples": count }))?;
        let tails = [LPolicy::SqrtNd, LPolicy::KdOmega { omega }];
        let summary = mc_summary_par(p, count, pol, &tails, ctx.seed(), ctx.g.jobs);
        ctx.record(&json!({ "stat": name, "exact": exact, "summary": summary }))
    }
}

fn switch_count(ctx: &mut Ctx, perm: Option<&str>, explain: bool) -> CliResult<()> {
    let (p, pol) = (ctx.params, ctx.g.l_policy);
    let y = match perm {
        Some(text) => {
            let seq = text
                .split(',')
                .map(|t| t.trim().parse::<u32>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Failure::Domain(format!("bad --perm: {e}")))?;
            PermSeq::new(p, seq)?
        }
        None => sample_permutation(p, &mut stream_rng(ctx.seed(), 0)),
    };
    ctx.header("switch-count", json!({}))?;
    let c = reghyper::classify_perm(&y, pol);
    let forward = match enumerate_forward(&y, pol) {
        Ok(ops) => Some(ops),
        Err(reghyper::Error::NoLoops | reghyper::Error::NotInE) => None,
        Err(e) => return Err(e.into()),
    };
    let backward = match enumerate_backward(&y, pol) {
        Ok(ops) => Some(ops),
        Err(reghyper::Error::AboveLoopCap { .. } | reghyper::Error::NotInE) => None,
        Err(e) => return Err(e.into()),
    };
    let f_bound = match c.level {
        Some(l) if l >= 1 => Some(forward_bound(p, l)?.to_string()),
        _ => None,
    };
    ctx.record(&json!({
        "perm": y.as_slice(),
        "hypergraph": serde_json::from_str::<Value>(&build_multigraph(&y).to_json()).expect("valid json"),
        "classification": c,
        "forward_count": forward.as_ref().map(Vec::len),
        "forward_bound": f_bound,
        "backward_count": backward.as_ref().map(Vec::len),
        "backward_bound": rational_string(&backward_bound(p)),
    }))?;
    if explain {
        for op in forward.iter().flatten() {
            ctx.record(&json!({ "forward": op }))?;
        }
        for op in backward.iter().flatten() {
            ctx.record(&json!({ "backward": op }))?;
        }
    }
    Ok(())
}
