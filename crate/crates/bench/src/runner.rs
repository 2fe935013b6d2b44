//! Timed benchmark drivers.

use std::time::{Duration, Instant};

use hdrhistogram::Histogram;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;
use thiserror::Error;
use uplif::bmat::{Backend, PerfMeasures};
use uplif::index::{Op, OpResult, UplifIndex};
use uplif::tuner::{Action, Agent, TunerError, TuningEnv};

use crate::oracle::KvIndex;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("range [{lo}, {hi}] returned unsorted rows")]
    UnsortedRange { lo: u64, hi: u64 },
    #[error("range [{lo}, {hi}] returned a key outside the bounds")]
    RangeOutOfBounds { lo: u64, hi: u64 },
    #[error(transparent)]
    Tuner(#[from] TunerError),
}

/// When a run stops: whichever bound is hit first.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunLimit {
    pub ops: Option<usize>,
    pub duration: Option<Duration>,
}

impl RunLimit {
    pub fn ops(n: usize) -> Self {
        Self {
            ops: Some(n),
            duration: None,
        }
    }

    pub fn secs(s: f64) -> Self {
        Self {
            ops: None,
            duration: Some(Duration::from_secs_f64(s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct Metrics {
    pub workload: String,
    pub dataset: String,
    pub run: usize,
    pub ops_completed: usize,
    pub elapsed_secs: f64,
    /// Operations per second.
    pub throughput: f64,
    pub p50_us: f64,
    pub p99_us: f64,
    pub index_bytes: usize,
    /// Tree height after every tuning step (or at the end without an agent).
    pub bmat_height_series: Vec<usize>,
    pub action_log: Vec<String>,
    /// Rows returned by range queries.
    pub rows: usize,
}

impl Metrics {
    pub fn labelled(mut self, workload: &str, dataset: &str, run: usize) -> Self {
        self.workload = workload.to_string();
        self.dataset = dataset.to_string();
        self.run = run;
        self
    }
}

fn histogram() -> Histogram<u64> {
    // One nanosecond to one minute at three significant digits.
    Histogram::new_with_bounds(1, 60_000_000_000, 3).expect("static bounds")
}

fn finish(hist: &Histogram<u64>, ops: usize, elapsed: Duration, index_bytes: usize) -> Metrics {
    let secs = elapsed.as_secs_f64();
    let pct = |q: f64| if hist.is_empty() { 0.0 } else { hist.value_at_quantile(q) as f64 / 1e3 };
    Metrics {
        ops_completed: ops,
        elapsed_secs: secs,
        throughput: if secs > 0.0 { ops as f64 / secs } else { 0.0 },
        p50_us: pct(0.5),
        p99_us: pct(0.99),
        index_bytes,
        ..Metrics::default()
    }
}

fn result_rows(r: &OpResult) -> usize {
    match r {
        OpResult::Range(rows) => rows.len(),
        _ => 0,
    }
}

/// Drives `store` with `ops` until the stream or the limit runs out.
pub fn run_benchmark(store: &mut dyn KvIndex, ops: &mut dyn Iterator<Item = Op>, limit: RunLimit) -> Metrics {
    let mut hist = histogram();
    let start = Instant::now();
    let deadline = limit.duration.map(|d| start + d);
    let max_ops = limit.ops.unwrap_or(usize::MAX);
    let mut done = 0;
    let mut rows = 0;
    let mut now = start;
    while done < max_ops && deadline.is_none_or(|d| now < d) {
        let Some(op) = ops.next() else { break };
        let t0 = Instant::now();
        let r = store.apply(&op);
        now = Instant::now();
        rows += result_rows(&r);
        std::hint::black_box(r);
        hist.saturating_record((now - t0).as_nanos().max(1) as u64);
        done += 1;
    }
    let mut m = finish(&hist, done, start.elapsed(), store.index_bytes());
    m.rows = rows;
    m.bmat_height_series = store.height().into_iter().collect();
    m
}

/// Tuning environment that records per-operation latency.
struct BenchEnv<'a> {
    index: &'a mut UplifIndex,
    ops: &'a mut dyn Iterator<Item = Op>,
    hist: &'a mut Histogram<u64>,
    clock: Instant,
    deadline: Option<Instant>,
    remaining: usize,
    exhausted: bool,
}

impl TuningEnv for BenchEnv<'_> {
    fn measures(&self) -> PerfMeasures {
        self.index.stats()
    }

    fn backend(&self) -> Backend {
        self.index.backend()
    }

    fn apply(&mut self, a: Action) -> Result<(), String> {
        match a {
            Action::Keep => Ok(()),
            Action::Retrain => self.index.prune_retrain().map(|_| ()).map_err(|e| e.to_string()),
            Action::Convert => {
                let target = self.index.backend().other();
                self.index.convert(target).map_err(|e| e.to_string())
            }
        }
    }

    fn run_ops(&mut self, n: usize) -> usize {
        let mut done = 0;
        while done < n && self.remaining > 0 {
            if self.deadline.is_some_and(|d| Instant::now() >= d) {
                self.exhausted = true;
                break;
            }
            let Some(op) = self.ops.next() else {
                self.exhausted = true;
                break;
            };
            let t0 = Instant::now();
            std::hint::black_box(self.index.apply(&op));
            self.hist.saturating_record(t0.elapsed().as_nanos().max(1) as u64);
            done += 1;
            self.remaining -= 1;
        }
        if self.remaining == 0 {
            self.exhausted = true;
        }
        done
    }

    fn memory_usage(&self) -> usize {
        self.index.memory_usage()
    }

    fn now(&self) -> f64 {
        self.clock.elapsed().as_secs_f64()
    }
}

/// Like [`run_benchmark`], with `agent` taking a tuning step every N ops.
///
/// Tuning time is part of the measured elapsed time.
pub fn run_with_agent(
    index: &mut UplifIndex,
    ops: &mut dyn Iterator<Item = Op>,
    limit: RunLimit,
    agent: &mut Agent,
) -> Result<Metrics, BenchError> {
    let mut hist = histogram();
    let start = Instant::now();
    let mut heights = Vec::new();
    let mut actions = Vec::new();
    let mut total = 0;
    let mut env = BenchEnv {
        index,
        ops,
        hist: &mut hist,
        clock: start,
        deadline: limit.duration.map(|d| start + d),
        remaining: limit.ops.unwrap_or(usize::MAX),
        exhausted: false,
    };
    while !env.exhausted {
        let rep = agent.step(&mut env)?;
        total += rep.ops;
        heights.push(env.index.bmat().height());
        actions.push(rep.action.to_string());
        if rep.ops == 0 {
            break;
        }
    }
    let bytes = env.index.memory_usage();
    let mut m = finish(&hist, total, start.elapsed(), bytes);
    m.bmat_height_series = heights;
    m.action_log = actions;
    Ok(m)
}

/// Runs up to `steps` learning steps over `ops`; returns how many ran.
pub fn train_agent(
    index: &mut UplifIndex,
    ops: &mut dyn Iterator<Item = Op>,
    steps: usize,
    agent: &mut Agent,
) -> Result<usize, BenchError> {
    let mut hist = histogram();
    let mut env = BenchEnv {
        index,
        ops,
        hist: &mut hist,
        clock: Instant::now(),
        deadline: None,
        remaining: usize::MAX,
        exhausted: false,
    };
    let mut taken = 0;
    while taken < steps && !env.exhausted {
        agent.step(&mut env)?;
        taken += 1;
    }
    Ok(taken)
}

/// `n` inclusive ranges each spanning `span_fraction` of `[lo, hi]`, placed uniformly.
pub fn range_queries(domain: (u64, u64), n: usize, span_fraction: f64, seed: u64) -> Vec<(u64, u64)> {
    let (lo, hi) = domain;
    let width = hi.saturating_sub(lo);
    let span = ((width as f64) * span_fraction.clamp(0.0, 1.0)).round() as u64;
    let span = span.min(width);
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let start = rng.gen_range(lo..=hi - span);
            (start, start + span)
        })
        .collect()
}

/// Times `n_queries` range scans and checks each result is sorted and in bounds.
pub fn run_range_benchmark(
    store: &mut dyn KvIndex,
    domain: (u64, u64),
    n_queries: usize,
    span_fraction: f64,
    seed: u64,
) -> Result<Metrics, BenchError> {
    let queries = range_queries(domain, n_queries, span_fraction, seed);
    let mut hist = histogram();
    let mut rows = 0;
    let start = Instant::now();
    for &(lo, hi) in &queries {
        let t0 = Instant::now();
        let r = store.apply(&Op::Range(lo, hi));
        hist.saturating_record(t0.elapsed().as_nanos().max(1) as u64);
        let OpResult::Range(found) = r else {
            unreachable!("range op yields range result")
        };
        if found.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(BenchError::UnsortedRange { lo, hi });
        }
        if found.iter().any(|&(k, _)| k < lo || k > hi) {
            return Err(BenchError::RangeOutOfBounds { lo, hi });
        }
        rows += found.len();
    }
    let mut m = finish(&hist, queries.len(), start.elapsed(), store.index_bytes());
    m.rows = rows;
    Ok(m)
}
