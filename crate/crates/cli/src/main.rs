use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use gen2sat::analysis::{branching_matrix, first_moment_bound, path_count_bound, rho_numeric_check};
use gen2sat::branching::{estimate_extinction, linear_growth_check, FBranchingConfig, NodeType};
use gen2sat::digraph::{is_satisfiable, ImplicationDigraph};
use gen2sat::experiments::{
    bootstrap_delta, bootstrap_rounds_with, check_bootstrap, find_threshold, fit_threshold, sweep, write_csv, BootstrapVerdict,
    ExperimentConfig,
};
use gen2sat::exploration::{explore_with, DigraphSource, ExploreOptions, LazySource, PopPolicy, VarSet};
use gen2sat::formula::{read_dimacs, sample_formula, write_dimacs, Provenance};
use gen2sat::{seed, Error, Literal, ModelParams};

const EXIT_SAT: u8 = 10;
const EXIT_UNSAT: u8 = 20;
const EXIT_USAGE: u8 = 2;

/// Generalized random 2-SAT: solver, generator and phase-transition experiments.
#[derive(Parser, Debug)]
#[command(name = "gen2sat", version)]
struct Cli {
    /// Worker threads for Monte Carlo trials (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decide a DIMACS 2-CNF formula (exit 10 if SAT, 20 if UNSAT).
    Solve(SolveArgs),
    /// Sample a formula from the random model and write it as DIMACS.
    Gen(GenArgs),
    /// Branching matrix, spectral radius and first-moment bound as JSON.
    Bounds(BoundsArgs),
    /// Run one exploration and print its trace as JSON lines.
    Explore(ExploreArgs),
    /// F-branching configuration, extinction and growth estimates as JSON.
    Branch(BranchArgs),
    /// Satisfiability sweep over sizes and parameters, as CSV or JSON.
    Sweep(SweepArgs),
    /// Locate the satisfiability threshold along a parameter ray.
    Threshold(ThresholdArgs),
    /// Round bootstrap searching for a contradictory cycle.
    Rounds(RoundsArgs),
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// DIMACS file; standard input when omitted or "-".
    file: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Number of variables.
    #[arg(long)]
    n: usize,
    /// Clause intensities alpha0,alpha1,alpha2.
    #[arg(long, value_parser = parse_triple, value_name = "A0,A1,A2")]
    alphas: [f64; 3],
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Output file; also writes `<out>.json` with the provenance record.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    /// Clause intensities alpha0,alpha1,alpha2.
    #[arg(long, value_parser = parse_triple, value_name = "A0,A1,A2")]
    alphas: [f64; 3],
    /// Number of variables for the first-moment bound.
    #[arg(long)]
    n: Option<usize>,
    /// Longest path length for the path-count bounds.
    #[arg(long, default_value_t = 6)]
    max_s: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PolicyArg {
    PreferPositive,
    PreferNegative,
    Uniform,
}

impl From<PolicyArg> for PopPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::PreferPositive => PopPolicy::PreferPositive,
            PolicyArg::PreferNegative => PopPolicy::PreferNegative,
            PolicyArg::Uniform => PopPolicy::Uniform,
        }
    }
}

#[derive(Args, Debug)]
struct ExploreArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Horizon T (default floor(sqrt n)).
    #[arg(long)]
    steps: Option<usize>,
    /// Start literal in DIMACS notation.
    #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
    start: i64,
    /// Which stack to pop.
    #[arg(long, value_enum, default_value_t = PolicyArg::PreferPositive)]
    policy: PolicyArg,
    /// Explore this DIMACS formula instead of revealing the model lazily.
    #[arg(long)]
    formula: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BranchArgs {
    /// Clause intensities alpha0,alpha1,alpha2.
    #[arg(long, value_parser = parse_triple, value_name = "A0,A1,A2")]
    alphas: [f64; 3],
    /// Slack delta (derived from rho when omitted).
    #[arg(long, requires = "beta")]
    delta: Option<f64>,
    /// Truncation slack beta (derived from rho when omitted).
    #[arg(long, requires = "delta")]
    beta: Option<f64>,
    /// Traversal steps for the growth and extinction estimates.
    #[arg(long, default_value_t = 1000)]
    horizon: usize,
    /// Trajectories per estimate.
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TableFormat {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// TOML file with the ExperimentConfig fields; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    /// A single parameter point.
    #[arg(long, value_parser = parse_triple, value_name = "A0,A1,A2", conflicts_with = "ray")]
    alphas: Option<[f64; 3]>,
    /// Ray direction; points are lambda * direction.
    #[arg(long, value_parser = parse_triple, value_name = "A0,A1,A2")]
    ray: Option<[f64; 3]>,
    /// Strictly increasing lambda grid, comma separated.
    #[arg(long, value_delimiter = ',')]
    lambdas: Vec<f64>,
    /// Formulas per point.
    #[arg(long)]
    trials: Option<u64>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (standard output when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record wall time in the seconds column (breaks byte reproducibility).
    #[arg(long)]
    timing: bool,
    /// Output format.
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    format: TableFormat,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ThresholdMethod {
    /// Bisection on p_hat = 1/2.
    Bisect,
    /// Logistic fit over rho in [0.8, 1.2].
    Logistic,
}

#[derive(Args, Debug)]
struct ThresholdArgs {
    /// Ray direction alpha0,alpha1,alpha2.
    #[arg(long, value_parser = parse_triple, value_name = "A0,A1,A2")]
    ray: [f64; 3],
    /// Number of variables.
    #[arg(long, default_value_t = 20_000)]
    n: usize,
    /// Formulas per evaluated point.
    #[arg(long, default_value_t = 200)]
    trials: u64,
    /// Bracket width at which bisection stops.
    #[arg(long, default_value_t = 0.02)]
    tol: f64,
    #[arg(long, value_enum, default_value_t = ThresholdMethod::Bisect)]
    method: ThresholdMethod,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct RoundsArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Slack delta (default (1 - 1/rho) / 2).
    #[arg(long)]
    delta: Option<f64>,
    /// Independent repetitions.
    #[arg(long, default_value_t = 1)]
    reps: u64,
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got {s:?}"));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p.parse::<f64>().map_err(|e| format!("{p:?}: {e}"))?;
        if !(o.is_finite() && *o >= 0.0) {
            return Err(format!("{p:?} is not a finite nonnegative number"));
        }
    }
    Ok(out)
}

fn params_of(a: [f64; 3]) -> gen2sat::Result<ModelParams> {
    ModelParams::new(a[0], a[1], a[2])
}

/// Errors that should exit with the usage code.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage<T>(r: gen2sat::Result<T>) -> anyhow::Result<T> {
    r.map_err(|e| match e {
        Error::InvalidParams(_) | Error::Precondition(_) | Error::TooLarge(_) => Usage(e.to_string()).into(),
        other => other.into(),
    })
}

fn emit_json(v: &impl serde::Serialize) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn model_json(p: &ModelParams) -> Value {
    json!({ "alpha0": p.alpha0, "alpha1": p.alpha1, "alpha2": p.alpha2, "rho": p.rho() })
}

fn solve(args: &SolveArgs) -> anyhow::Result<u8> {
    let f = match args.file.as_deref() {
        None => read_dimacs(io::stdin().lock())?,
        Some(p) if p == Path::new("-") => read_dimacs(io::stdin().lock())?,
        Some(p) => {
            let file = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            read_dimacs(BufReader::new(file))?
        }
    };
    let v = is_satisfiable(&f);
    let mut out = io::stdout().lock();
    match v.witness {
        Some(w) => {
            writeln!(out, "SAT")?;
            let mut line = String::from("v");
            for (i, &b) in w.iter().enumerate() {
                let lit = (i + 1) as i64;
                line.push_str(&format!(" {}", if b { lit } else { -lit }));
            }
            writeln!(out, "{line} 0")?;
            Ok(EXIT_SAT)
        }
        None => {
            writeln!(out, "UNSAT")?;
            writeln!(out, "c contradiction variable {}", v.contradiction_variable.expect("unsat verdict"))?;
            Ok(EXIT_UNSAT)
        }
    }
}

fn gen(args: &GenArgs) -> anyhow::Result<u8> {
    let m = &args.model;
    let params = usage(params_of(m.alphas))?;
    usage(params.check_for(m.n))?;
    let f = usage(sample_formula(m.n, &params, m.seed))?;
    let prov = Provenance::new(m.n, &params, m.seed);
    match &args.out {
        None => {
            let mut out = BufWriter::new(io::stdout().lock());
            write_dimacs(&f, &mut out)?;
            out.flush()?;
        }
        Some(path) => {
            let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
            write_dimacs(&f, &mut out)?;
            out.flush()?;
            let mut side = path.clone().into_os_string();
            side.push(".json");
            let mut s = serde_json::to_string_pretty(&prov)?;
            s.push('\n');
            std::fs::write(&side, s).with_context(|| format!("writing {}", side.to_string_lossy()))?;
        }
    }
    Ok(0)
}

fn bounds(args: &BoundsArgs) -> anyhow::Result<u8> {
    let params = usage(params_of(args.alphas))?;
    if args.max_s == 0 {
        return Err(Usage("--max-s must be at least 1".into()).into());
    }
    let m = branching_matrix(&params);
    let (closed, numeric) = rho_numeric_check(&params);
    let paths: Vec<[f64; 2]> = (1..=args.max_s).map(|s| path_count_bound(&params, s)).collect();
    let mut v = model_json(&params);
    v["matrix"] = json!(m.entries);
    v["eigenvalues"] = json!([m.rho, m.rho_minus]);
    v["rho_closed_form"] = json!(closed);
    v["rho_numeric"] = json!(numeric);
    v["path_count_bound"] = json!(paths);
    if let Some(n) = args.n {
        usage(params.check_for(n))?;
        v["n"] = json!(n);
        v["first_moment_bound"] = json!(first_moment_bound(&params, n));
    }
    emit_json(&v)?;
    Ok(0)
}

fn explore_cmd(args: &ExploreArgs) -> anyhow::Result<u8> {
    let m = &args.model;
    let params = usage(params_of(m.alphas))?;
    usage(params.check_for(m.n))?;
    let horizon = args.steps.unwrap_or_else(|| gen2sat::exploration::horizon_for(m.n)).max(1);
    let start = Literal::from_dimacs(args.start)
        .filter(|l| l.var() as usize <= m.n)
        .ok_or_else(|| Usage(format!("--start {} is not a literal over {} variables", args.start, m.n)))?;
    let opts = ExploreOptions { horizon, alpha_max: params.alpha_max(), policy: args.policy.into() };
    let restriction = Arc::new(VarSet::full(m.n));
    let mut rng = seed::rng_for(m.seed, &[0]);
    let trace = match &args.formula {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let f = read_dimacs(BufReader::new(file))?;
            if f.n() != m.n {
                bail!(Usage(format!("formula has {} variables but --n is {}", f.n(), m.n)));
            }
            let g = ImplicationDigraph::build(&f);
            usage(explore_with(&mut DigraphSource::new(&g), restriction, start, &opts, &mut rng))?
        }
        None => {
            let mut src = usage(LazySource::new(m.n, params, seed::rng_for(m.seed, &[1])))?;
            usage(explore_with(&mut src, restriction, start, &opts, &mut rng))?
        }
    };
    let mut out = BufWriter::new(io::stdout().lock());
    for r in &trace.steps {
        let line = json!({
            "t": r.t,
            "u": r.u,
            "a_pos": r.a_pos,
            "a_neg": r.a_neg,
            "current": r.current.to_dimacs(),
            "current_type": if r.current.is_positive() { "positive" } else { "negative" },
        });
        serde_json::to_writer(&mut out, &line)?;
        writeln!(out)?;
    }
    out.flush()?;
    let summary = json!({
        "u0": trace.u0,
        "horizon": trace.horizon,
        "tau": trace.tau,
        "stopped_early": trace.stopped_early,
        "exhausted": trace.exhausted,
    });
    eprintln!("{summary}");
    Ok(0)
}

fn branch(args: &BranchArgs) -> anyhow::Result<u8> {
    let params = usage(params_of(args.alphas))?;
    if args.trials == 0 || args.horizon == 0 {
        return Err(Usage("--trials and --horizon must be positive".into()).into());
    }
    let cfg = usage(match (args.delta, args.beta) {
        (Some(d), Some(b)) => FBranchingConfig::new(&params, d, b),
        _ => FBranchingConfig::auto(&params),
    })?;
    let n0 = cfg.dominance_threshold().ok();
    let extinction = estimate_extinction(&cfg, args.trials, args.horizon, args.seed)?;
    let mut v = json!({
        "params": model_json(&params),
        "delta": cfg.delta,
        "beta": cfg.beta,
        "cutoffs": cfg.offspring.iter().map(|d| d.cutoff).collect::<Vec<_>>(),
        "means": cfg.means(),
        "m0": cfg.m0,
        "rho0": cfg.rho0,
        "dominance_n0": n0,
        "extinction": extinction,
    });
    match cfg.supercrit() {
        Ok(sp) => {
            v["a"] = json!(sp.a);
            v["b"] = json!(sp.b);
            v["mu"] = json!(sp.mu);
            let growth: Vec<_> = [NodeType::One, NodeType::Two]
                .into_iter()
                .map(|t| linear_growth_check(&cfg, t, args.horizon, args.trials, args.seed))
                .collect::<gen2sat::Result<_>>()?;
            v["growth"] = json!(growth);
        }
        Err(e) => v["supercritical"] = json!(e.to_string()),
    }
    emit_json(&v)?;
    Ok(0)
}

fn sweep_config(args: &SweepArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<ExperimentConfig>(&text).map_err(|e| Usage(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig {
            n: Vec::new(),
            alphas: None,
            ray: None,
            lambdas: Vec::new(),
            trials: 0,
            seed: 0,
            out: None,
            timing: false,
        },
    };
    if !args.n.is_empty() {
        cfg.n = args.n.clone();
    }
    if args.alphas.is_some() {
        cfg.alphas = args.alphas;
        cfg.ray = None;
        cfg.lambdas.clear();
    }
    if args.ray.is_some() {
        cfg.ray = args.ray;
        cfg.alphas = None;
    }
    if !args.lambdas.is_empty() {
        cfg.lambdas = args.lambdas.clone();
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.out.is_some() {
        cfg.out = args.out.clone();
    }
    cfg.timing |= args.timing;
    usage(cfg.validate())?;
    Ok(cfg)
}

fn sweep_cmd(args: &SweepArgs) -> anyhow::Result<u8> {
    let cfg = sweep_config(args)?;
    let rows = sweep(&cfg)?;
    let mut sink: Box<dyn Write> = match &cfg.out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    match args.format {
        TableFormat::Csv => write_csv(&rows, &mut sink)?,
        TableFormat::Json => {
            serde_json::to_writer_pretty(&mut sink, &rows)?;
            writeln!(sink)?;
        }
    }
    sink.flush()?;
    Ok(0)
}

fn threshold(args: &ThresholdArgs) -> anyhow::Result<u8> {
    let dir = usage(params_of(args.ray))?;
    if args.trials == 0 {
        return Err(Usage("--trials must be positive".into()).into());
    }
    if dir.rho() <= 0.0 {
        return Err(Usage("the ray never reaches rho = 1".into()).into());
    }
    usage(dir.scaled(1.5 / dir.rho()).check_for(args.n))?;
    let v = match args.method {
        ThresholdMethod::Bisect => serde_json::to_value(find_threshold(&dir, args.n, args.trials, args.tol, args.seed)?)?,
        ThresholdMethod::Logistic => {
            if dir.alpha0 * dir.alpha2 == 0.0 {
                json!({ "outcome": "no_transition", "reason": "alpha0 * alpha2 = 0: every formula is satisfiable" })
            } else {
                let mut v = serde_json::to_value(fit_threshold(&dir, args.n, args.trials, args.seed)?)?;
                v["outcome"] = json!("crossing");
                v
            }
        }
    };
    let mut v = v;
    v["direction"] = model_json(&dir);
    v["n"] = json!(args.n);
    v["trials"] = json!(args.trials);
    emit_json(&v)?;
    Ok(0)
}

fn rounds(args: &RoundsArgs) -> anyhow::Result<u8> {
    let m = &args.model;
    let params = usage(params_of(m.alphas))?;
    if args.reps == 0 {
        return Err(Usage("--reps must be positive".into()).into());
    }
    let delta = match args.delta {
        Some(d) => d,
        None => usage(bootstrap_delta(params.rho()))?,
    };
    usage(check_bootstrap(&params, m.n, delta))?;
    use rayon::prelude::*;
    let outcomes = (0..args.reps)
        .into_par_iter()
        .map(|r| bootstrap_rounds_with(m.n, &params, delta, seed::derive(m.seed, &[r])))
        .collect::<gen2sat::Result<Vec<_>>>();
    let outcomes = usage(outcomes)?;
    let count = |v: BootstrapVerdict| outcomes.iter().filter(|o| o.verdict == v).count();
    let v = json!({
        "params": model_json(&params),
        "n": m.n,
        "delta": delta,
        "reps": args.reps,
        "contradictory_cycle": count(BootstrapVerdict::ContradictoryCycle),
        "round_stopped": count(BootstrapVerdict::RoundStopped),
        "exhausted_rounds": count(BootstrapVerdict::ExhaustedRounds),
        "outcomes": outcomes,
    });
    emit_json(&v)?;
    Ok(0)
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    match &cli.command {
        Command::Solve(a) => solve(a),
        Command::Gen(a) => gen(a),
        Command::Bounds(a) => bounds(a),
        Command::Explore(a) => explore_cmd(a),
        Command::Branch(a) => branch(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Threshold(a) => threshold(a),
        Command::Rounds(a) => rounds(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = if e.downcast_ref::<Usage>().is_some() { EXIT_USAGE } else { 1 };
            ExitCode::from(code)
        }
    }
}
