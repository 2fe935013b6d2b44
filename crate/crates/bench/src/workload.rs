//! Read/insert workload streams.
//!
//! Writes are placed by exact ratio scheduling: operation `i` is an insert
//! exactly when `floor((i+1)·w/d) > floor(i·w/d)` for write ratio `w/d`, so
//! every prefix holds the nominal share of writes up to rounding.

use std::fmt;
use std::str::FromStr;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uplif::index::Op;

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("workload needs at least one key")]
    NoKeys,
    #[error("init fraction must be in (0, 1], got {0}")]
    InitFraction(f64),
    #[error("unknown workload {0:?}")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadKind {
    ReadOnly,
    ReadHeavy,
    WriteHeavy,
    WriteOnly,
    DistributionShift,
}

impl WorkloadKind {
    pub const ALL: [WorkloadKind; 5] = [
        WorkloadKind::ReadOnly,
        WorkloadKind::ReadHeavy,
        WorkloadKind::WriteHeavy,
        WorkloadKind::WriteOnly,
        WorkloadKind::DistributionShift,
    ];

    /// Write share as a reduced fraction.
    pub fn write_ratio(self) -> (u64, u64) {
        match self {
            WorkloadKind::ReadOnly => (0, 1),
            WorkloadKind::ReadHeavy => (1, 10),
            WorkloadKind::WriteHeavy | WorkloadKind::DistributionShift => (1, 2),
            WorkloadKind::WriteOnly => (1, 1),
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            WorkloadKind::ReadOnly => "ro",
            WorkloadKind::ReadHeavy => "rh",
            WorkloadKind::WriteHeavy => "wh",
            WorkloadKind::WriteOnly => "wo",
            WorkloadKind::DistributionShift => "shift",
        }
    }
}

impl fmt::Display for WorkloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for WorkloadKind {
    type Err = WorkloadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        WorkloadKind::ALL
            .into_iter()
            .find(|k| k.short_name() == s)
            .ok_or_else(|| WorkloadError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    pub seed: u64,
    /// Share of the dataset bulk-loaded before the stream starts.
    pub init_fraction: f64,
    /// Stream length; `None` makes the stream unbounded.
    pub op_count: Option<usize>,
    /// Wall-clock budget for drivers that honour it.
    pub duration_secs: Option<f64>,
}

impl WorkloadSpec {
    pub fn new(kind: WorkloadKind, seed: u64) -> Self {
        Self {
            kind,
            seed,
            init_fraction: 0.5,
            op_count: None,
            duration_secs: None,
        }
    }

    pub fn with_ops(mut self, n: usize) -> Self {
        self.op_count = Some(n);
        self
    }

    pub fn with_init_fraction(mut self, f: f64) -> Self {
        self.init_fraction = f;
        self
    }
}

/// Bulk-load input plus the operation stream that follows it.
#[derive(Debug, Clone)]
pub struct Workload {
    pub initial: Vec<(u64, u64)>,
    pub stream: OpStream,
}

/// Splits `keys` into an initial load and an insert pool, then builds the stream.
///
/// `keys` must be sorted and distinct. For the distribution-shift kind the
/// initial load is the smallest keys and the pool is exactly the remaining
/// suffix; otherwise the initial keys are a uniform random subset. Inserts
/// draw from the pool in uniformly random order.
pub fn generate_workload(spec: &WorkloadSpec, keys: &[u64]) -> Result<Workload, WorkloadError> {
    if keys.is_empty() {
        return Err(WorkloadError::NoKeys);
    }
    if !(spec.init_fraction > 0.0 && spec.init_fraction <= 1.0) {
        return Err(WorkloadError::InitFraction(spec.init_fraction));
    }
    let mut rng = StdRng::seed_from_u64(spec.seed);
    let n_init = ((keys.len() as f64 * spec.init_fraction).ceil() as usize).clamp(1, keys.len());
    let (mut init, mut pool): (Vec<u64>, Vec<u64>) = if spec.kind == WorkloadKind::DistributionShift {
        (keys[..n_init].to_vec(), keys[n_init..].to_vec())
    } else {
        let mut shuffled = keys.to_vec();
        shuffled.shuffle(&mut rng);
        let pool = shuffled.split_off(n_init);
        (shuffled, pool)
    };
    init.sort_unstable();
    pool.shuffle(&mut rng);
    // Popped from the back.
    pool.reverse();
    let initial: Vec<(u64, u64)> = init.iter().map(|&k| (k, rng.gen())).collect();
    let (w, d) = spec.kind.write_ratio();
    Ok(Workload {
        initial,
        stream: OpStream {
            rng,
            live: init,
            pool,
            write_num: w,
            write_den: d,
            emitted: 0,
            limit: spec.op_count,
            inserts: 0,
            pool_exhausted: false,
        },
    })
}

#[derive(Debug, Clone)]
pub struct OpStream {
    rng: StdRng,
    live: Vec<u64>,
    pool: Vec<u64>,
    write_num: u64,
    write_den: u64,
    emitted: usize,
    limit: Option<usize>,
    inserts: usize,
    pool_exhausted: bool,
}

impl OpStream {
    /// True once a write slot found the insert pool empty and became a read.
    pub fn pool_exhausted(&self) -> bool {
        self.pool_exhausted
    }

    pub fn emitted(&self) -> usize {
        self.emitted
    }

    pub fn inserts(&self) -> usize {
        self.inserts
    }

    pub fn pool_remaining(&self) -> usize {
        self.pool.len()
    }

    fn is_write_slot(&self, i: usize) -> bool {
        let i = i as u128;
        let (w, d) = (self.write_num as u128, self.write_den as u128);
        (i + 1) * w / d > i * w / d
    }
}

impl Iterator for OpStream {
    type Item = Op;

    fn next(&mut self) -> Option<Op> {
        if self.limit.is_some_and(|l| self.emitted >= l) {
            return None;
        }
        let slot = self.emitted;
        self.emitted += 1;
        if self.is_write_slot(slot) {
            if let Some(k) = self.pool.pop() {
                self.live.push(k);
                self.inserts += 1;
                return Some(Op::Insert(k, self.rng.gen()));
            }
            self.pool_exhausted = true;
        }
        let k = self.live[self.rng.gen_range(0..self.live.len())];
        Some(Op::Get(k))
    }
}
