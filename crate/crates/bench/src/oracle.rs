use std::collections::BTreeMap;

use uplif::index::{Op, OpResult, UplifIndex};

/// Anything a benchmark can drive.
pub trait KvIndex {
    fn apply(&mut self, op: &Op) -> OpResult;
    /// Bytes attributed to the structure itself.
    fn index_bytes(&self) -> usize;
    fn height(&self) -> Option<usize> {
        None
    }
}

impl KvIndex for UplifIndex {
    fn apply(&mut self, op: &Op) -> OpResult {
        UplifIndex::apply(self, op)
    }

    fn index_bytes(&self) -> usize {
        self.memory_usage()
    }

    fn height(&self) -> Option<usize> {
        Some(self.bmat().height())
    }
}

/// Reference implementation over a sorted map.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SortedMapOracle {
    map: BTreeMap<u64, u64>,
}

/// Rough per-entry cost of a B-tree map: key, value and node overhead.
const ORACLE_ENTRY_BYTES: usize = 24;

impl SortedMapOracle {
    pub fn new(pairs: &[(u64, u64)]) -> Self {
        Self {
            map: pairs.iter().copied().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, k: u64) -> Option<u64> {
        self.map.get(&k).copied()
    }

    pub fn range(&self, lo: u64, hi: u64) -> Vec<(u64, u64)> {
        if lo > hi {
            return Vec::new();
        }
        self.map.range(lo..=hi).map(|(&k, &v)| (k, v)).collect()
    }

    pub fn keys(&self) -> impl Iterator<Item = u64> + '_ {
        self.map.keys().copied()
    }
}

impl KvIndex for SortedMapOracle {
    fn apply(&mut self, op: &Op) -> OpResult {
        match *op {
            Op::Get(k) => OpResult::Value(self.get(k)),
            Op::Insert(k, v) => {
                self.map.insert(k, v);
                OpResult::Inserted
            }
            Op::Remove(k) => OpResult::Removed(self.map.remove(&k).is_some()),
            Op::Range(lo, hi) => OpResult::Range(self.range(lo, hi)),
        }
    }

    fn index_bytes(&self) -> usize {
        self.map.len() * ORACLE_ENTRY_BYTES
    }
}

/// Index of an operation whose results differ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    pub position: usize,
    pub op: Op,
    pub expected: OpResult,
    pub actual: OpResult,
}

/// Replays `ops` against both stores and collects every divergence.
pub fn replay_against_oracle(
    subject: &mut dyn KvIndex,
    oracle: &mut SortedMapOracle,
    ops: impl IntoIterator<Item = Op>,
) -> Vec<Mismatch> {
    let mut out = Vec::new();
    for (position, op) in ops.into_iter().enumerate() {
        let expected = oracle.apply(&op);
        let actual = subject.apply(&op);
        if expected != actual {
            out.push(Mismatch {
                position,
                op,
                expected,
                actual,
            });
        }
    }
    out
}
