//! `braket`: run, verify and sweep the bra-ket plurality protocol.
//!
//! Exit codes: 0 success, 1 I/O or internal error, 2 usage error,
//! 3 not quiescent at the step cap, 4 invariant violation or wrong output.

mod input;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use braket_core::engine::{self, EngineError};
use braket_core::experiment::{self, SweepSpec};
use braket_core::verify::{self, Check};
use braket_core::{
    AgentPair, AssertionLevel, Configuration, RunOptions, SchedulerKind, StopPolicy, TraceMode,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::input::RandomColors;
use crate::output::{Format, MetricsDocument, TraceWriter};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;
pub const EXIT_VIOLATION: u8 = 4;

/// Malformed arguments or inputs; maps to exit code 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(
    name = "braket",
    version,
    about = "k^3-state population protocol for plurality consensus"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one population and print its metrics document
    Run(RunArgs),
    /// Check stabilization and correctness over many instances
    Verify(VerifyArgs),
    /// Aggregate run statistics over an (n, k) grid
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchedulerName {
    Roundrobin,
    Random,
    Adversary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AssertArg {
    Off,
    Safety,
    Full,
}

impl From<AssertArg> for AssertionLevel {
    fn from(a: AssertArg) -> Self {
        match a {
            AssertArg::Off => AssertionLevel::Off,
            AssertArg::Safety => AssertionLevel::Safety,
            AssertArg::Full => AssertionLevel::Full,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Number of colors (inferred from the input when omitted)
    #[arg(long)]
    k: Option<u32>,
    /// Population size for --random-colors
    #[arg(long)]
    n: Option<usize>,
    /// Inline list ("0,1,1" or "0:2,1:5") or a file with one entry per line
    #[arg(
        long,
        conflicts_with = "random_colors",
        required_unless_present = "random_colors"
    )]
    colors: Option<String>,
    /// uniform | weights:w0,w1,… | planted:<margin>
    #[arg(long)]
    random_colors: Option<RandomColors>,
    /// Remap sparse color labels onto 0..d in increasing order
    #[arg(long)]
    densify: bool,
    #[arg(long, value_enum, default_value = "roundrobin")]
    scheduler: SchedulerName,
    /// Seed for the random scheduler and for --random-colors
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seed for --random-colors only (defaults to --seed)
    #[arg(long)]
    color_seed: Option<u64>,
    /// Pair starved by the adversary scheduler
    #[arg(long, default_value = "0,1")]
    exclude: String,
    /// Step at which the adversary turns round-robin (never by default)
    #[arg(long)]
    release: Option<u64>,
    /// Interaction cap for running until quiescence (default 50·n² cycles)
    #[arg(long, conflicts_with = "steps")]
    cap: Option<u64>,
    /// Run exactly this many interactions instead of stopping at quiescence
    #[arg(long)]
    steps: Option<u64>,
    /// Quiescence check period in interactions (default one cycle)
    #[arg(long)]
    check_every: Option<u64>,
    #[arg(long = "assert", value_enum, default_value = "full")]
    assertions: AssertArg,
    /// Write the event trace here
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Record every interaction, not only those that changed a state
    #[arg(long)]
    full_trace: bool,
    /// Trace format
    #[arg(long, value_enum, default_value = "json-lines")]
    format: Format,
    /// Metrics document destination (stdout by default)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VerifyMode {
    Exhaustive,
    Randomized,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    n_max: usize,
    #[arg(long)]
    k_max: u32,
    #[arg(long, value_enum, default_value = "exhaustive")]
    mode: VerifyMode,
    /// Instances for randomized mode
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-instance interaction cap (default 50·n² cycles)
    #[arg(long)]
    cap: Option<u64>,
    /// Report destination (stdout by default)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Population sizes, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    /// Color counts, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    k: Vec<u32>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// roundrobin or random (adversary is not meaningful for sweeps)
    #[arg(long, value_enum, default_value = "roundrobin")]
    scheduler: SchedulerName,
    #[arg(long)]
    cap: Option<u64>,
    #[arg(long = "assert", value_enum, default_value = "off")]
    assertions: AssertArg,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_pair(text: &str) -> Result<AgentPair, UsageError> {
    let bad = || {
        UsageError(format!(
            "--exclude expects two agent indices like 0,1, got `{text}`"
        ))
    };
    let (a, b) = text.split_once(',').ok_or_else(bad)?;
    let a = a.trim().parse().map_err(|_| bad())?;
    let b = b.trim().parse().map_err(|_| bad())?;
    AgentPair::new(a, b).map_err(|e| UsageError(e.to_string()))
}

fn cmd_run(args: RunArgs) -> anyhow::Result<u8> {
    let population = match (&args.colors, &args.random_colors) {
        (Some(arg), _) => {
            let labels = input::read_colors_arg(arg)?;
            let p = input::resolve_labels(&labels, args.k, args.densify)?;
            if let Some(n) = args.n {
                if n != p.colors.len() {
                    return Err(
                        UsageError(format!("--n {n} but {} colors given", p.colors.len())).into(),
                    );
                }
            }
            p
        }
        (None, Some(spec)) => {
            let n = args
                .n
                .ok_or_else(|| UsageError("--random-colors needs --n".into()))?;
            input::generate(spec, n, args.k, args.color_seed.unwrap_or(args.seed))?
        }
        (None, None) => {
            return Err(UsageError("one of --colors or --random-colors is required".into()).into())
        }
    };
    if let Some(map) = &population.label_map {
        let pairs: Vec<String> = map.iter().map(|(l, c)| format!("{l}->{c}")).collect();
        eprintln!("label map: {}", pairs.join(", "));
    }

    let scheduler = match args.scheduler {
        SchedulerName::Roundrobin => SchedulerKind::RoundRobin,
        SchedulerName::Random => SchedulerKind::UniformRandom { seed: args.seed },
        SchedulerName::Adversary => SchedulerKind::StarvationAdversary {
            excluded: parse_pair(&args.exclude)?,
            release_step: args.release.unwrap_or(u64::MAX),
        },
    };
    let options = RunOptions {
        stop: match args.steps {
            Some(t) => StopPolicy::FixedSteps(t),
            None => StopPolicy::UntilQuiescent { cap: args.cap },
        },
        assertions: args.assertions.into(),
        trace: match (&args.trace, args.full_trace) {
            (None, _) => TraceMode::Off,
            (Some(_), false) => TraceMode::Changes,
            (Some(_), true) => TraceMode::Full,
        },
        check_every: args.check_every,
    };

    let config = Configuration::new(&population.colors, population.k)
        .map_err(|e| UsageError(e.to_string()))?;
    let n = config.n();
    let mut trace = match &args.trace {
        Some(path) => Some(TraceWriter::new(
            output::open_sink(Some(path))?,
            args.format,
        )?),
        None => None,
    };
    let mut trace_error = None;
    let result = engine::run_observed(config, &scheduler, &options, |e| {
        if let (Some(t), None) = (trace.as_mut(), &trace_error) {
            if let Err(err) = t.write(e) {
                trace_error = Some(err);
            }
        }
    });
    if let Some(t) = trace {
        t.finish().context("writing trace")?;
    }
    if let Some(err) = trace_error {
        return Err(err.context("writing trace"));
    }

    let (config, metrics) = match result {
        Ok(r) => r,
        Err(EngineError::InvariantViolation(v)) => {
            eprintln!("invariant violation at {v}");
            return Ok(EXIT_VIOLATION);
        }
        Err(EngineError::Scheduler(e)) => return Err(UsageError(e.to_string()).into()),
        Err(e) => return Err(e.into()),
    };

    let doc = MetricsDocument::new(n, config.k(), scheduler.name(), args.seed, &metrics);
    output::write_json_document(&mut *output::open_sink(args.out.as_deref())?, &doc)?;

    if !metrics.converged {
        if matches!(options.stop, StopPolicy::UntilQuiescent { .. }) {
            eprintln!(
                "not quiescent after {} interactions",
                metrics.total_interactions
            );
            return Ok(EXIT_NOT_CONVERGED);
        }
        return Ok(EXIT_OK);
    }
    if let Some(winner) = metrics.winner {
        if config.agents().iter().any(|a| a.out != winner) {
            eprintln!("quiescent but not every agent outputs the plurality color {winner}");
            return Ok(EXIT_VIOLATION);
        }
    }
    Ok(EXIT_OK)
}

fn cmd_verify(args: VerifyArgs) -> anyhow::Result<u8> {
    let report = match args.mode {
        VerifyMode::Exhaustive => verify::verify_exhaustive(args.n_max, args.k_max, args.cap),
        VerifyMode::Randomized => {
            verify::verify_randomized(args.n_max, args.k_max, args.trials, args.seed, args.cap)
        }
    }
    .map_err(|e| UsageError(e.to_string()))?;
    output::write_json_document(&mut *output::open_sink(args.out.as_deref())?, &report)?;
    if report.passed() {
        eprintln!(
            "verify {}: {} instances ({} unique majority, {} ties), all checks passed",
            report.mode, report.instances, report.unique_majority, report.ties
        );
        return Ok(EXIT_OK);
    }
    eprintln!(
        "verify {}: {} of {} instances failed",
        report.mode, report.failures, report.instances
    );
    for c in &report.counterexamples {
        eprintln!(
            "  n={} k={} colors={:?}: {}: {}",
            c.n, c.k, c.colors, c.check, c.detail
        );
    }
    let only_caps = report
        .counterexamples
        .iter()
        .all(|c| c.check == Check::Converged);
    Ok(if only_caps {
        EXIT_NOT_CONVERGED
    } else {
        EXIT_VIOLATION
    })
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<u8> {
    let random_schedule = match args.scheduler {
        SchedulerName::Roundrobin => false,
        SchedulerName::Random => true,
        SchedulerName::Adversary => {
            return Err(UsageError("sweep supports roundrobin and random schedulers".into()).into())
        }
    };
    let spec = SweepSpec {
        ns: args.n,
        ks: args.k,
        trials: args.trials,
        seed: args.seed,
        random_schedule,
        cap: args.cap,
        assertions: args.assertions.into(),
    };
    let rows = match experiment::sweep(&spec) {
        Ok(rows) => rows,
        Err(experiment::ExperimentError::Engine(EngineError::InvariantViolation(v))) => {
            eprintln!("invariant violation at {v}");
            return Ok(EXIT_VIOLATION);
        }
        Err(e) => return Err(UsageError(e.to_string()).into()),
    };
    output::write_sweep(
        &mut *output::open_sink(args.out.as_deref())?,
        &rows,
        args.format,
    )?;
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_ERROR)
            }
        }
    }
}
