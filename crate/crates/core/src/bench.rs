//! Benchmark suite comparing reference and abstracted exploration.
//!
//! Each benchmark is one program template whose thread count is the
//! constant `N`; both modes run the same parsed program, and the two search
//! configurations differ only in their mode.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::explorer::{explore, SearchConfig, SearchError, SearchReport};
use crate::vm::{parse_program, Mode, ParseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    Lock,
    Map,
    AtomicInt,
}

impl Benchmark {
    pub const ALL: [Benchmark; 3] = [Benchmark::Lock, Benchmark::Map, Benchmark::AtomicInt];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Lock => "lock",
            Benchmark::Map => "map",
            Benchmark::AtomicInt => "atomicint",
        }
    }

    /// Program template; `N` is the worker count.
    pub fn source(self) -> &'static str {
        match self {
            Benchmark::Lock => include_str!("../benchmarks/lock.asm"),
            Benchmark::Map => include_str!("../benchmarks/map.asm"),
            Benchmark::AtomicInt => include_str!("../benchmarks/atomicint.asm"),
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Benchmark::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| format!("unknown benchmark `{s}` (expected lock, map or atomicint)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchSuite {
    pub benchmarks: Vec<Benchmark>,
    pub threads: Vec<u32>,
    pub repeat: u32,
    /// Per-run limit; a mode exceeding it marks the row incomplete.
    pub time_limit: Option<Duration>,
}

impl Default for BenchSuite {
    fn default() -> Self {
        BenchSuite {
            benchmarks: Benchmark::ALL.to_vec(),
            threads: vec![2, 3, 4],
            repeat: 10,
            time_limit: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("thread count {0} is below 2")]
    TooFewThreads(u32),
    #[error("repeat count must be at least 1")]
    NoRepeats,
    #[error("benchmark {benchmark}: {source}")]
    Parse {
        benchmark: Benchmark,
        #[source]
        source: ParseError,
    },
    #[error("benchmark {benchmark} (N={threads}, {mode}): {source}")]
    Search {
        benchmark: Benchmark,
        threads: u32,
        mode: Mode,
        #[source]
        source: SearchError,
    },
    #[error("benchmark {benchmark} (N={threads}, {mode}) reported a {kind} violation")]
    UnexpectedViolation {
        benchmark: Benchmark,
        threads: u32,
        mode: Mode,
        kind: &'static str,
    },
    #[error("benchmark {benchmark} (N={threads}, {mode}) gave different counts across repeats")]
    Nondeterministic {
        benchmark: Benchmark,
        threads: u32,
        mode: Mode,
    },
}

/// One benchmark, thread count and mode. Counts are `None` when the run hit
/// the time limit; ratios are set only when both modes completed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub benchmark: Benchmark,
    pub threads: u32,
    pub mode: Mode,
    pub states: Option<usize>,
    pub transitions: Option<usize>,
    pub time_ms: Option<f64>,
    pub state_ratio: Option<f64>,
    pub time_ratio: Option<f64>,
}

impl BenchRow {
    pub fn complete(&self) -> bool {
        self.states.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendSummary {
    /// Every abstracted run explores no more states than its reference run.
    pub abstracted_never_worse: bool,
    /// Lock state-ratio does not decrease as N grows.
    pub lock_state_ratio_non_decreasing: bool,
    /// Lock time-ratio does not decrease by more than the noise tolerance.
    pub lock_time_ratio_non_decreasing: bool,
    /// At the largest N: lock > map > atomicint >= 1 by state-ratio.
    pub ordering_at_max_threads: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResults {
    pub rows: Vec<BenchRow>,
    pub trends: TrendSummary,
}

/// Relative slack allowed when comparing consecutive time ratios.
pub const TIME_NOISE_TOLERANCE: f64 = 0.10;

impl BenchResults {
    pub fn row(&self, benchmark: Benchmark, threads: u32, mode: Mode) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.benchmark == benchmark && r.threads == threads && r.mode == mode)
    }

    /// Ratios of one benchmark in ascending thread order.
    pub fn ratios(&self, benchmark: Benchmark) -> Vec<(u32, Option<f64>, Option<f64>)> {
        let mut out: Vec<_> = self
            .rows
            .iter()
            .filter(|r| r.benchmark == benchmark && r.mode == Mode::Abstracted)
            .map(|r| (r.threads, r.state_ratio, r.time_ratio))
            .collect();
        out.sort_by_key(|r| r.0);
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("benchmark,threads,mode,states,transitions,time_ms,state_ratio,time_ratio\n");
        for r in &self.rows {
            let opt = |v: Option<usize>| v.map_or(String::new(), |v| v.to_string());
            let float = |v: Option<f64>, digits: usize| v.map_or(String::new(), |v| format!("{v:.digits$}"));
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.benchmark,
                r.threads,
                r.mode,
                opt(r.states),
                opt(r.transitions),
                float(r.time_ms, 3),
                float(r.state_ratio, 4),
                float(r.time_ratio, 4),
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bench results serialize");
        s.push('\n');
        s
    }
}

/// Runs one benchmark at one thread count in one mode, `repeat` times.
/// Returns the report of the first run and the median wall time, or `None`
/// when the time limit was hit.
pub fn run_benchmark(
    benchmark: Benchmark,
    threads: u32,
    mode: Mode,
    repeat: u32,
    time_limit: Option<Duration>,
) -> Result<Option<(SearchReport, Duration)>, BenchError> {
    let base = base_config(threads, time_limit);
    let program = parse_program(benchmark.source(), &base.overrides)
        .map_err(|source| BenchError::Parse { benchmark, source })?;
    let config = SearchConfig { mode, ..base };
    let mut first: Option<SearchReport> = None;
    let mut times = Vec::with_capacity(repeat as usize);
    for _ in 0..repeat.max(1) {
        let report = match explore(&program, &config) {
            Ok(r) => r,
            Err(SearchError::TimeLimit(_)) => return Ok(None),
            Err(source) => {
                return Err(BenchError::Search {
                    benchmark,
                    threads,
                    mode,
                    source,
                })
            }
        };
        if let Some(v) = &report.violation {
            return Err(BenchError::UnexpectedViolation {
                benchmark,
                threads,
                mode,
                kind: v.kind.name(),
            });
        }
        times.push(report.time);
        match &first {
            None => first = Some(report),
            Some(f) if (f.states, f.transitions) != (report.states, report.transitions) => {
                return Err(BenchError::Nondeterministic {
                    benchmark,
                    threads,
                    mode,
                })
            }
            Some(_) => {}
        }
    }
    Ok(first.map(|r| (r, median(&mut times))))
}

fn base_config(threads: u32, time_limit: Option<Duration>) -> SearchConfig {
    let mut config = SearchConfig::default();
    config.overrides.insert("N".to_string(), i64::from(threads));
    config.time_limit = time_limit;
    config
}

fn median(times: &mut [Duration]) -> Duration {
    times.sort_unstable();
    let n = times.len();
    if n % 2 == 1 {
        times[n / 2]
    } else {
        (times[n / 2 - 1] + times[n / 2]) / 2
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

pub fn run_suite(suite: &BenchSuite) -> Result<BenchResults, BenchError> {
    if suite.repeat == 0 {
        return Err(BenchError::NoRepeats);
    }
    if let Some(&n) = suite.threads.iter().find(|&&n| n < 2) {
        return Err(BenchError::TooFewThreads(n));
    }
    let mut rows = Vec::new();
    for &benchmark in &suite.benchmarks {
        for &threads in &suite.threads {
            let reference = run_benchmark(benchmark, threads, Mode::Reference, suite.repeat, suite.time_limit)?;
            let abstracted = run_benchmark(benchmark, threads, Mode::Abstracted, suite.repeat, suite.time_limit)?;
            let (state_ratio, time_ratio) = match (&reference, &abstracted) {
                (Some((r, rt)), Some((a, at))) => (
                    Some(r.states as f64 / a.states as f64),
                    Some(ms(*rt) / ms(*at).max(1e-6)),
                ),
                _ => (None, None),
            };
            for (mode, result) in [(Mode::Reference, reference), (Mode::Abstracted, abstracted)] {
                rows.push(BenchRow {
                    benchmark,
                    threads,
                    mode,
                    states: result.as_ref().map(|(r, _)| r.states),
                    transitions: result.as_ref().map(|(r, _)| r.transitions),
                    time_ms: result.as_ref().map(|(_, t)| ms(*t)),
                    state_ratio,
                    time_ratio,
                });
            }
        }
    }
    let mut results = BenchResults {
        rows,
        trends: TrendSummary {
            abstracted_never_worse: false,
            lock_state_ratio_non_decreasing: false,
            lock_time_ratio_non_decreasing: false,
            ordering_at_max_threads: false,
        },
    };
    results.trends = trends(&results);
    Ok(results)
}

/// Trend flags over whatever the results contain. A flag whose inputs are
/// missing (incomplete rows, benchmark not run) is false.
pub fn trends(results: &BenchResults) -> TrendSummary {
    let abstracted: Vec<&BenchRow> = results.rows.iter().filter(|r| r.mode == Mode::Abstracted).collect();
    let abstracted_never_worse =
        !abstracted.is_empty() && abstracted.iter().all(|r| r.state_ratio.is_some_and(|s| s >= 1.0));

    let lock = results.ratios(Benchmark::Lock);
    let non_decreasing = |values: Option<Vec<f64>>, slack: f64| {
        values.is_some_and(|v| !v.is_empty() && v.windows(2).all(|w| w[1] >= w[0] * (1.0 - slack)))
    };
    let lock_states: Option<Vec<f64>> = lock.iter().map(|r| r.1).collect();
    let lock_times: Option<Vec<f64>> = lock.iter().map(|r| r.2).collect();

    let max_n = results.rows.iter().map(|r| r.threads).max();
    let ratio_at = |b: Benchmark| {
        max_n.and_then(|n| results.row(b, n, Mode::Abstracted)).and_then(|r| r.state_ratio)
    };
    let ordering_at_max_threads = match (
        ratio_at(Benchmark::Lock),
        ratio_at(Benchmark::Map),
        ratio_at(Benchmark::AtomicInt),
    ) {
        (Some(l), Some(m), Some(a)) => l > m && m > a && a >= 1.0,
        _ => false,
    };

    TrendSummary {
        abstracted_never_worse,
        lock_state_ratio_non_decreasing: non_decreasing(lock_states, 0.0),
        lock_time_ratio_non_decreasing: non_decreasing(lock_times, TIME_NOISE_TOLERANCE),
        ordering_at_max_threads,
    }
}
