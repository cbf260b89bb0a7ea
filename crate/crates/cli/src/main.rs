//! `updown`: exact verification, spectra, separation distances, simulation
//! and frame output for the permutation and graph up-down chains.
//!
//! Exit codes: 0 when every check passes, 1 when a property fails or a
//! computation cannot meet its error budget, 2 for invalid input.

mod args;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use updown::chain::{Chain, ChainSpec, DEFAULT_CAP};
use updown::montecarlo::{
    distribution_check, emit_frames, estimate_density_curve, steps_at, InitialState, InstanceKind, Pattern, Reference,
    SimConfig,
};
use updown::rational::{format_rational, to_f64};
use updown::semidiscrete::{
    generator_chain, generator_limit_check, inf_eps_expected_polynomial, mc_inflated_density, permuton_density_exact,
    PermutonMeasure,
};
use updown::separation::{Mode, SepCurve};
use updown::verify::verify_suite;
use updown::{Error, GraphInstance, PermInstance, Permutation};

use crate::args::{decimal_rational, exact_rational, parse_float_grid, parse_int_grid};
use crate::output::Run;

#[derive(Parser)]
#[command(name = "updown", version, about = "Exact analysis and simulation of up-down chains on permutations and graphs")]
struct Cli {
    /// Worker threads for trajectory-parallel work.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// `key = value` file with default flag values; explicit flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for result files and the run manifest.
    #[arg(long, global = true, default_value = "updown-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact property suite over levels 1..=nmax.
    Verify(VerifyArgs),
    /// Export an exact kernel as JSON.
    Kernel(KernelArgs),
    /// Eigenvalues and multiplicities of T_n.
    Spectrum(SpectrumArgs),
    /// Exact stationary law, optionally checked against the sampler.
    Stationary(StationaryArgs),
    /// Separation distance curves.
    Sepdist(SepdistArgs),
    /// Pattern-density curve from simulated trajectories.
    Simulate(SimulateArgs),
    /// PGM snapshots of one trajectory.
    Frames(FramesArgs),
    /// Epsilon-inflation expansion and generator limit on mu_sigma.
    Semidiscrete(SemidiscreteArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Instance {
    Perm,
    Graph,
}

impl From<Instance> for InstanceKind {
    fn from(i: Instance) -> Self {
        match i {
            Instance::Perm => InstanceKind::Perm,
            Instance::Graph => InstanceKind::Graph,
        }
    }
}

#[derive(Args, Serialize)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    instance: Instance,
    #[arg(long)]
    nmax: usize,
    /// Parameter as a/b.
    #[arg(long, default_value = "1/2")]
    p: String,
    /// Largest enumerated level; levels up to nmax + 1 are needed.
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum KernelKind {
    Up,
    Down,
    Updown,
}

#[derive(Args, Serialize)]
struct KernelArgs {
    #[arg(long, value_enum)]
    instance: Instance,
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum, default_value = "updown")]
    kind: KernelKind,
    #[arg(long, default_value = "1/2")]
    p: String,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
}

#[derive(Args, Serialize)]
struct SpectrumArgs {
    #[arg(long, value_enum)]
    instance: Instance,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value = "1/2")]
    p: String,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
}

#[derive(Args, Serialize)]
struct StationaryArgs {
    #[arg(long, value_enum)]
    instance: Instance,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value = "1/2")]
    p: String,
    /// Draws from the exact sampler for a chi-square check (0 skips it).
    #[arg(long, default_value_t = 0)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SepMode {
    Discrete,
    Continuous,
    Limit,
}

#[derive(Args, Serialize)]
struct SepdistArgs {
    #[arg(long, value_enum)]
    mode: SepMode,
    #[arg(long)]
    n: Option<usize>,
    /// Step counts for the discrete mode, e.g. 0..20.
    #[arg(long)]
    m: Option<String>,
    /// Scaled times, e.g. 0.05..10 or 0..2:0.1; discrete mode uses floor(n(n+1)t) steps.
    #[arg(long)]
    t: Option<String>,
    /// Parameter as a/b; the distance does not depend on it inside (0, 1).
    #[arg(long)]
    p: Option<String>,
    /// Add product and symmetry residual columns (limit mode).
    #[arg(long)]
    check_eta: bool,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    instance: Instance,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value = "1/2")]
    p: String,
    #[arg(long, default_value_t = 64)]
    traj: usize,
    #[arg(long)]
    t: String,
    /// Permutation such as 2413, or a graph such as K2, P4, 4:101000.
    #[arg(long)]
    pattern: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// reverse, uniform, stationary, or an explicit state.
    #[arg(long, default_value = "reverse")]
    initial: String,
}

#[derive(Args, Serialize)]
struct FramesArgs {
    #[arg(long, value_enum)]
    instance: Instance,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value = "1/2")]
    p: String,
    /// Cumulative step counts, e.g. 0..1500:50.
    #[arg(long, conflicts_with = "t")]
    steps: Option<String>,
    /// Scaled times; frame i is taken after floor(n(n+1)t_i) steps.
    #[arg(long)]
    t: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "uniform")]
    initial: String,
}

#[derive(Args, Serialize)]
struct SemidiscreteArgs {
    #[arg(long)]
    sigma: String,
    #[arg(long)]
    pi: String,
    #[arg(long, default_value = "1/2")]
    p: String,
    /// Inflation size as a decimal or a/b.
    #[arg(long, default_value = "1/10")]
    eps: String,
    /// Monte Carlo draws for the direct estimate (0 skips it).
    #[arg(long, default_value_t = 200_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Invalid input; maps to exit code 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage<T>(r: anyhow::Result<T>) -> anyhow::Result<T> {
    r.map_err(|e| Usage(format!("{e:#}")).into())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::PrecisionLoss { .. } | Error::Io(_)) | None => 1,
        Some(_) => 2,
    }
}

fn config_echo<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).expect("arguments serialize")
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    print!("{text}");
    Ok(text)
}

macro_rules! with_chain {
    ($instance:expr, $p:expr, $cap:expr, |$chain:ident| $body:expr) => {
        match $instance {
            Instance::Perm => {
                let $chain = Chain::new(ChainSpec::new(PermInstance, $p, $cap)?);
                $body
            }
            Instance::Graph => {
                let $chain = Chain::new(ChainSpec::new(GraphInstance::from_env(), $p, $cap)?);
                $body
            }
        }
    };
}

fn verify(cli: &Cli, a: &VerifyArgs) -> anyhow::Result<bool> {
    let p = usage(exact_rational(&a.p))?;
    let mut run = Run::start(&cli.out, "verify", config_echo(a), None, cli.workers)?;
    let report = with_chain!(a.instance, p, a.cap, |chain| verify_suite(&chain, a.nmax)?);
    run.mark("checks");
    let text = print_json(&report)?;
    run.write("verify.json", text.as_bytes())?;
    run.finish(report.all_passed)?;
    Ok(report.all_passed)
}

fn kernel(cli: &Cli, a: &KernelArgs) -> anyhow::Result<bool> {
    let p = usage(exact_rational(&a.p))?;
    let mut run = Run::start(&cli.out, "kernel", config_echo(a), None, cli.workers)?;
    let export = with_chain!(a.instance, p, a.cap, |chain| {
        let k = match a.kind {
            KernelKind::Up => (*chain.up_kernel(a.n)?).clone(),
            KernelKind::Down => (*chain.down_kernel(a.n)?).clone(),
            KernelKind::Updown => chain.updown_operator(a.n)?,
        };
        chain.export(&k)?
    });
    let text = print_json(&export)?;
    run.write("kernel.json", text.as_bytes())?;
    run.finish(true)?;
    Ok(true)
}

fn spectrum(cli: &Cli, a: &SpectrumArgs) -> anyhow::Result<bool> {
    let p = usage(exact_rational(&a.p))?;
    let mut run = Run::start(&cli.out, "spectrum", config_echo(a), None, cli.workers)?;
    let report = with_chain!(a.instance, p, a.cap, |chain| chain.spectrum_report(a.n)?);
    let passed = report.consistent();
    let text = print_json(&json!({ "report": report, "consistent": passed }))?;
    run.write("spectrum.json", text.as_bytes())?;
    run.finish(passed)?;
    Ok(passed)
}

fn stationary(cli: &Cli, a: &StationaryArgs) -> anyhow::Result<bool> {
    let p = usage(exact_rational(&a.p))?;
    let mut run = Run::start(&cli.out, "stationary", config_echo(a), Some(a.seed), cli.workers)?;
    let (states, law, exact_ok) = with_chain!(a.instance, p.clone(), a.cap, |chain| {
        let law = chain.stationary(a.n)?;
        let ok = if a.n < chain.cap() { Some(chain.check_stationary(a.n)?) } else { None };
        (chain.encode_level(a.n)?, law, ok)
    });
    run.mark("exact");
    let sampler = if a.samples > 0 {
        let config = SimConfig {
            instance: a.instance.into(),
            n: a.n,
            p,
            t_grid: vec![0.0],
            trajectories: a.samples,
            master_seed: a.seed,
            initial: InitialState::Stationary,
        };
        Some(distribution_check(&config, &Reference::Stationary, cli.workers)?)
    } else {
        None
    };
    run.mark("sampler");
    let support = law.iter().filter(|w| **w != num_traits::Zero::zero()).count();
    let entries: Vec<_> = states
        .iter()
        .zip(&law)
        .map(|(s, w)| json!({ "state": s, "probability": format_rational(w) }))
        .collect();
    let passed = exact_ok != Some(false) && sampler.as_ref().is_none_or(|s| s.chi_square.pass);
    let text = print_json(&json!({
        "level": a.n,
        "support_size": support,
        "level_size": states.len(),
        "stationarity_relations_hold": exact_ok,
        "law": entries,
        "sampler_check": sampler,
        "passed": passed,
    }))?;
    run.write("stationary.json", text.as_bytes())?;
    run.finish(passed)?;
    Ok(passed)
}

fn sepdist(cli: &Cli, a: &SepdistArgs) -> anyhow::Result<bool> {
    let mode = match a.mode {
        SepMode::Discrete => Mode::Discrete,
        SepMode::Continuous => Mode::Continuous,
        SepMode::Limit => Mode::Limit,
    };
    let p = a.p.as_deref().map(exact_rational).transpose();
    let p = usage(p)?;
    if let Some(p) = &p {
        if !updown::rational::is_open_unit(p) {
            return Err(Error::DegenerateParameter(format!("p = {} must lie in (0, 1)", format_rational(p))).into());
        }
    }
    let abscissae: Vec<f64> = usage((|| match (mode, &a.m, &a.t) {
        (Mode::Discrete, Some(m), None) => Ok(parse_int_grid(m)?.into_iter().map(|v| v as f64).collect()),
        (Mode::Discrete, None, Some(t)) => {
            let n = a.n.context("discrete mode needs --n")?;
            Ok(parse_float_grid(t)?.into_iter().map(|t| steps_at(n, t) as f64).collect())
        }
        (Mode::Discrete, _, _) => anyhow::bail!("discrete mode needs exactly one of --m and --t"),
        (_, None, Some(t)) => parse_float_grid(t),
        _ => anyhow::bail!("{mode} mode needs --t and no --m"),
    })())?;
    let mut run = Run::start(&cli.out, "sepdist", config_echo(a), None, cli.workers)?;
    let curve = SepCurve::evaluate(mode, a.n, p.as_ref().map(format_rational), &abscissae, a.check_eta)?;
    run.mark("evaluate");
    let csv = curve.to_csv();
    print!("{csv}");
    run.write("sepdist.csv", csv.as_bytes())?;
    run.finish(true)?;
    Ok(true)
}

fn initial_state(text: &str) -> InitialState {
    text.parse().expect("initial state parsing is infallible")
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> anyhow::Result<bool> {
    let p = usage(exact_rational(&a.p))?;
    let t_grid = usage(parse_float_grid(&a.t))?;
    let kind: InstanceKind = a.instance.into();
    let pattern = Pattern::parse(kind, &a.pattern)?;
    let config = SimConfig {
        instance: kind,
        n: a.n,
        p,
        t_grid,
        trajectories: a.traj,
        master_seed: a.seed,
        initial: initial_state(&a.initial),
    };
    config.validate()?;
    let mut run = Run::start(&cli.out, "simulate", config_echo(a), Some(a.seed), cli.workers)?;
    let curve = estimate_density_curve(&config, &pattern, cli.workers)?;
    run.mark("simulate");
    let csv = curve.to_csv();
    print!("{csv}");
    run.write("curve.csv", csv.as_bytes())?;
    let mut summary = serde_json::to_string_pretty(&curve)?;
    summary.push('\n');
    run.write("curve.json", summary.as_bytes())?;
    run.finish(true)?;
    Ok(true)
}

fn frames(cli: &Cli, a: &FramesArgs) -> anyhow::Result<bool> {
    let p = usage(exact_rational(&a.p))?;
    let steps = usage((|| match (&a.steps, &a.t) {
        (Some(s), None) => parse_int_grid(s),
        (None, Some(t)) => Ok(parse_float_grid(t)?.into_iter().map(|t| steps_at(a.n, t)).collect()),
        _ => anyhow::bail!("give exactly one of --steps and --t"),
    })())?;
    let config = SimConfig {
        instance: a.instance.into(),
        n: a.n,
        p,
        t_grid: vec![0.0],
        trajectories: 1,
        master_seed: a.seed,
        initial: initial_state(&a.initial),
    };
    config.validate()?;
    let mut run = Run::start(&cli.out, "frames", config_echo(a), Some(a.seed), cli.workers)?;
    let dir = run.dir().join("frames");
    let paths = emit_frames(&config, &steps, &dir)?;
    run.mark("frames");
    for path in &paths {
        run.register(path)?;
        println!("{}", path.display());
    }
    run.finish(true)?;
    Ok(true)
}

/// Standard errors allowed between the direct estimate and the expansion.
const MC_TOLERANCE_SE: f64 = 3.0;

fn semidiscrete(cli: &Cli, a: &SemidiscreteArgs) -> anyhow::Result<bool> {
    let p = usage(exact_rational(&a.p))?;
    let eps = usage(decimal_rational(&a.eps))?;
    let sigma: Permutation = a.sigma.parse()?;
    let pi: Permutation = a.pi.parse()?;
    let mut run = Run::start(&cli.out, "semidiscrete", config_echo(a), Some(a.seed), cli.workers)?;
    let chain = generator_chain(&p)?;
    let report = generator_limit_check(&chain, &sigma, &pi, Some(&eps))?;
    run.mark("exact");
    let poly = inf_eps_expected_polynomial(&pi, &p, &mut |tau| permuton_density_exact(&sigma, tau))?;
    let expected = poly.evaluate(&eps);
    let mc = if a.samples > 0 {
        let mu = PermutonMeasure::from_permutation(&sigma);
        let (mean, se) = mc_inflated_density(&mu, &pi, to_f64(&p), to_f64(&eps), a.samples, a.seed, cli.workers)?;
        let gap = (mean - to_f64(&expected)).abs();
        Some(json!({
            "samples": a.samples,
            "estimate": mean,
            "stderr": se,
            "expansion": to_f64(&expected),
            "within_tolerance": gap <= MC_TOLERANCE_SE * se,
        }))
    } else {
        None
    };
    run.mark("monte_carlo");
    let mc_ok = mc.as_ref().is_none_or(|m| m["within_tolerance"] == json!(true));
    let passed = report.passed() && mc_ok;
    let text = print_json(&json!({
        "generator": report,
        "expected_density_at_eps": format_rational(&expected),
        "expansion_coefficients": poly.to_strings(),
        "direct_estimate": mc,
        "passed": passed,
    }))?;
    run.write("semidiscrete.json", text.as_bytes())?;
    run.finish(passed)?;
    Ok(passed)
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    if cli.workers == 0 {
        return Err(Usage("--workers must be at least 1".into()).into());
    }
    match &cli.command {
        Command::Verify(a) => verify(cli, a),
        Command::Kernel(a) => kernel(cli, a),
        Command::Spectrum(a) => spectrum(cli, a),
        Command::Stationary(a) => stationary(cli, a),
        Command::Sepdist(a) => sepdist(cli, a),
        Command::Simulate(a) => simulate(cli, a),
        Command::Frames(a) => frames(cli, a),
        Command::Semidiscrete(a) => semidiscrete(cli, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut argv: Vec<String> = std::env::args().collect();
    if let Some(path) = args::config_path(&argv) {
        match args::read_config(std::path::Path::new(&path)) {
            Ok(cfg) => argv = args::merge_config(argv, &cfg),
            Err(e) => {
                eprintln!("error: {e:#}");
                return ExitCode::from(2);
            }
        }
    }
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: one or more checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
