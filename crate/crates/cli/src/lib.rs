//! `mcheck` command-line front end.
//!
//! Exit codes: 0 no violation, 1 violation found, 2 usage or parse error,
//! 3 internal error or resource limit.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use mcheck_core::bench::{run_suite, BenchError, BenchSuite, Benchmark};
use mcheck_core::report::{render_report, Format};
use mcheck_core::vm::load_program;
use mcheck_core::{explore, Mode, SearchConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VIOLATION: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INTERNAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "mcheck", version, about = "Explicit-state model checker for concurrent stack-machine programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Explore every interleaving of a program and report the first violation.
    Run(RunArgs),
    /// Compare both execution modes on the built-in benchmarks.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Abstracted,
    Reference,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Abstracted => Mode::Abstracted,
            ModeArg::Reference => Mode::Reference,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Switch {
    fn on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RunOutput {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BenchOutput {
    Csv,
    Json,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// Program file.
    file: PathBuf,
    #[arg(long, value_enum, default_value = "abstracted")]
    mode: ModeArg,
    /// Override a declared constant, e.g. `--define N=3`.
    #[arg(long = "define", value_name = "NAME=V", value_parser = parse_define)]
    defines: Vec<(String, i64)>,
    /// Stop expanding paths at this many transitions.
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long, value_enum, default_value = "off")]
    trace_filter: Switch,
    #[arg(long, value_enum, default_value = "off")]
    peer_gc: Switch,
    #[arg(long, value_enum, default_value = "text")]
    output: RunOutput,
    /// Abort the search after this many seconds (exit 3).
    #[arg(long, value_name = "SECS")]
    time_limit: Option<u64>,
}

#[derive(Debug, clap::Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "lock,map,atomicint", value_parser = parse_benchmark)]
    benchmarks: Vec<Benchmark>,
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    threads: Vec<u32>,
    #[arg(long, default_value_t = 10)]
    repeat: u32,
    #[arg(long, value_enum, default_value = "csv")]
    output: BenchOutput,
    /// Per-run limit in seconds; slower runs are reported as incomplete.
    #[arg(long, value_name = "SECS")]
    time_limit: Option<u64>,
}

fn parse_define(s: &str) -> Result<(String, i64), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected NAME=V, got `{s}`"))?;
    let value = value
        .trim()
        .parse::<i64>()
        .map_err(|e| format!("bad value for `{name}`: {e}"))?;
    Ok((name.trim().to_string(), value))
}

fn parse_benchmark(s: &str) -> Result<Benchmark, String> {
    s.trim().parse()
}

/// Captured result of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: u8,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn ok(code: u8, stdout: String) -> Self {
        Outcome {
            code,
            stdout,
            stderr: String::new(),
        }
    }

    fn err(code: u8, stderr: String) -> Self {
        Outcome {
            code,
            stdout: String::new(),
            stderr,
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn execute<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            return if e.use_stderr() {
                Outcome::err(code, text)
            } else {
                Outcome::ok(code, text)
            };
        }
    };
    match cli.command {
        Command::Run(args) => run_command(&args),
        Command::Bench(args) => bench_command(&args),
    }
}

fn run_command(args: &RunArgs) -> Outcome {
    let mut overrides = BTreeMap::new();
    for (name, value) in &args.defines {
        overrides.insert(name.clone(), *value);
    }
    let program = match load_program(&args.file, &overrides) {
        Ok(p) => p,
        Err(e) => return Outcome::err(EXIT_USAGE, format!("error: {e}\n")),
    };
    let config = SearchConfig {
        max_depth: args.max_depth,
        trace_filter: args.trace_filter.on(),
        peer_gc: args.peer_gc.on(),
        overrides,
        time_limit: args.time_limit.map(Duration::from_secs),
        ..SearchConfig::new(args.mode.into())
    };
    match explore(&program, &config) {
        Ok(report) => {
            let format = match args.output {
                RunOutput::Text => Format::Text,
                RunOutput::Json => Format::Json,
            };
            let code = if report.violation.is_some() {
                EXIT_VIOLATION
            } else {
                EXIT_OK
            };
            Outcome::ok(code, render_report(&report, format))
        }
        Err(e) => Outcome::err(EXIT_INTERNAL, format!("error: {e}\n")),
    }
}

fn bench_command(args: &BenchArgs) -> Outcome {
    let suite = BenchSuite {
        benchmarks: args.benchmarks.clone(),
        threads: args.threads.clone(),
        repeat: args.repeat,
        time_limit: args.time_limit.map(Duration::from_secs),
    };
    match run_suite(&suite) {
        Ok(results) => {
            let stdout = match args.output {
                BenchOutput::Csv => results.to_csv(),
                BenchOutput::Json => results.to_json(),
            };
            let t = &results.trends;
            let stderr = format!(
                "trend: abstracted never worse: {}\n\
                 trend: lock state ratio non-decreasing: {}\n\
                 trend: lock time ratio non-decreasing: {}\n\
                 trend: lock > map > atomicint at max threads: {}\n",
                t.abstracted_never_worse,
                t.lock_state_ratio_non_decreasing,
                t.lock_time_ratio_non_decreasing,
                t.ordering_at_max_threads,
            );
            Outcome {
                code: EXIT_OK,
                stdout,
                stderr,
            }
        }
        Err(e @ (BenchError::TooFewThreads(_) | BenchError::NoRepeats)) => {
            Outcome::err(EXIT_USAGE, format!("error: {e}\n"))
        }
        Err(e) => Outcome::err(EXIT_INTERNAL, format!("error: {e}\n")),
    }
}
