//! Public key/value index.
//!
//! A bulk load lays the keys out in a gapped array with uniform placeholder
//! allocation and trains one model over them. Later inserts land in
//! placeholders when possible and otherwise split segments through the
//! [`Bmat`]. Recent update keys feed a density estimate that shapes the
//! placeholders of every segment created afterwards.

use std::collections::VecDeque;
use std::sync::Arc;

use thiserror::Error;

use crate::bmat::{
    Backend, Bmat, BmatConfig, BmatError, DeleteOutcome, InsertOutcome, LookupTrace, PerfMeasures,
    PruneReport, SplitParams,
};
use crate::model::{ModelConfig, ModelError, ModelTrainer, SharedModel, SplineTrainer};
use crate::nullifier::{
    expand_segment, fit_update_distribution, DensityError, DensityModel, FitConfig, SLOT_BYTES,
    VALUE_BYTES,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IndexError {
    #[error("bulk load requires sorted keys")]
    UnsortedBulkLoad,
    #[error("bulk load requires at least one pair")]
    EmptyBulkLoad,
    #[error("inverted range")]
    InvertedRange,
    #[error("invalid config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Bmat(#[from] BmatError),
    #[error(transparent)]
    Density(#[from] DensityError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexConfig {
    /// Successor keys moved into the middle segment of a split.
    pub aux_distance: usize,
    /// Placeholder budget per segment expansion.
    pub d_max: u64,
    /// Search margin added to each side of the certified window.
    pub xi: u64,
    pub gmm_components: usize,
    pub min_fit_samples: usize,
    /// Entries that may slide one slot to open a placeholder.
    pub shift_window: usize,
    pub backend: Backend,
    pub branching: usize,
    pub model: ModelConfig,
    pub update_log_capacity: usize,
    /// Updates between automatic density refits; 0 disables them.
    pub density_refresh_interval: usize,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            aux_distance: 64,
            d_max: 64,
            xi: 8,
            gmm_components: 4,
            min_fit_samples: 256,
            shift_window: 8,
            backend: Backend::RedBlack,
            branching: 32,
            model: ModelConfig::default(),
            update_log_capacity: 65_536,
            density_refresh_interval: 65_536,
        }
    }
}

impl IndexConfig {
    pub fn validate(&self) -> Result<(), IndexError> {
        if self.aux_distance == 0 {
            return Err(IndexError::InvalidConfig("aux_distance must be positive"));
        }
        if self.gmm_components == 0 {
            return Err(IndexError::InvalidConfig("gmm_components must be positive"));
        }
        if self.min_fit_samples == 0 {
            return Err(IndexError::InvalidConfig("min_fit_samples must be positive"));
        }
        if self.update_log_capacity == 0 {
            return Err(IndexError::InvalidConfig("update_log_capacity must be positive"));
        }
        if self.branching < 4 {
            return Err(IndexError::InvalidConfig("branching must be at least 4"));
        }
        self.model.validate()?;
        Ok(())
    }

    fn fit_config(&self) -> FitConfig {
        FitConfig {
            components: self.gmm_components,
            min_fit_samples: self.min_fit_samples,
            ..FitConfig::default()
        }
    }
}

/// One operation against a key/value store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Get(u64),
    Insert(u64, u64),
    Remove(u64),
    /// Inclusive bounds.
    Range(u64, u64),
}

impl Op {
    pub fn is_write(&self) -> bool {
        matches!(self, Op::Insert(..) | Op::Remove(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpResult {
    Value(Option<u64>),
    Inserted,
    Removed(bool),
    Range(Vec<(u64, u64)>),
}

/// Bytes held by index structures, excluding user values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MemoryBreakdown {
    /// Live slots without their value payload.
    pub key_slots: usize,
    /// Placeholder slots.
    pub null_slots: usize,
    /// Distinct model parameters plus per-segment adjustments.
    pub models: usize,
    pub nodes: usize,
    /// Per-segment bookkeeping.
    pub segments: usize,
    pub density: usize,
}

impl MemoryBreakdown {
    pub fn total(&self) -> usize {
        self.key_slots + self.null_slots + self.models + self.nodes + self.segments + self.density
    }
}

/// Per-segment bytes for the adjusted model (scale, offset, error).
pub const ADJUSTMENT_BYTES: usize = 3 * 8;
/// Per-segment bytes for slot array header, live counter and key range.
pub const SEGMENT_HEADER_BYTES: usize = 3 * 8 + 8 + 2 * 8;

pub struct UplifIndex {
    cfg: IndexConfig,
    base_model: SharedModel,
    bmat: Bmat,
    density: DensityModel,
    update_log: VecDeque<u64>,
    since_refresh: usize,
    live: usize,
    trainer: Arc<dyn ModelTrainer>,
}

impl std::fmt::Debug for UplifIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UplifIndex")
            .field("live", &self.live)
            .field("backend", &self.bmat.backend())
            .field("height", &self.bmat.height())
            .finish_non_exhaustive()
    }
}

impl UplifIndex {
    pub fn bulk_load(pairs: &[(u64, u64)], cfg: IndexConfig) -> Result<Self, IndexError> {
        Self::bulk_load_with(pairs, cfg, Arc::new(SplineTrainer))
    }

    pub fn bulk_load_with(
        pairs: &[(u64, u64)],
        cfg: IndexConfig,
        trainer: Arc<dyn ModelTrainer>,
    ) -> Result<Self, IndexError> {
        cfg.validate()?;
        if pairs.is_empty() {
            return Err(IndexError::EmptyBulkLoad);
        }
        if pairs.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(IndexError::UnsortedBulkLoad);
        }
        let keys: Vec<u64> = pairs.iter().map(|p| p.0).collect();
        let base_model = trainer.train(&keys, &cfg.model)?;
        let density = DensityModel::uniform();
        let data = expand_segment(pairs, &density, cfg.d_max, (0, u64::MAX));
        let bcfg = BmatConfig {
            backend: cfg.backend,
            branching: cfg.branching,
            search_margin: cfg.xi,
        };
        let bmat = Bmat::new(bcfg, base_model.clone(), data)?;
        Ok(Self {
            cfg,
            base_model,
            bmat,
            density,
            update_log: VecDeque::with_capacity(cfg.update_log_capacity.min(1 << 16)),
            since_refresh: 0,
            live: pairs.len(),
            trainer,
        })
    }

    pub fn config(&self) -> &IndexConfig {
        &self.cfg
    }

    /// Model trained at bulk load.
    pub fn base_model(&self) -> &SharedModel {
        &self.base_model
    }

    pub fn bmat(&self) -> &Bmat {
        &self.bmat
    }

    pub fn density(&self) -> &DensityModel {
        &self.density
    }

    pub fn len(&self) -> usize {
        self.live
    }

    pub fn is_empty(&self) -> bool {
        self.live == 0
    }

    pub fn get(&self, key: u64) -> Option<u64> {
        self.bmat.get(key)
    }

    /// Lookup with cost counters.
    pub fn get_traced(&self, key: u64) -> LookupTrace {
        self.bmat.get_traced(key)
    }

    pub fn insert(&mut self, key: u64, value: u64) -> InsertOutcome {
        let p = SplitParams {
            aux_distance: self.cfg.aux_distance,
            d_max: self.cfg.d_max,
            shift_window: self.cfg.shift_window,
            density: &self.density,
        };
        let out = self.bmat.insert_update(key, value, &p);
        if matches!(out, InsertOutcome::InGap | InsertOutcome::SegmentSplit) {
            self.live += 1;
        }
        self.log_update(key);
        out
    }

    /// Returns whether the key was live.
    pub fn remove(&mut self, key: u64) -> bool {
        let out = self.bmat.delete_update(key);
        let removed = out != DeleteOutcome::NotFound;
        if removed {
            self.live -= 1;
            self.log_update(key);
        }
        removed
    }

    /// Live pairs in `[lo, hi]`, ascending.
    pub fn range(&self, lo: u64, hi: u64) -> Result<Vec<(u64, u64)>, IndexError> {
        if lo > hi {
            return Err(IndexError::InvertedRange);
        }
        Ok(self.bmat.range(lo, hi))
    }

    pub fn apply(&mut self, op: &Op) -> OpResult {
        match *op {
            Op::Get(k) => OpResult::Value(self.get(k)),
            Op::Insert(k, v) => {
                self.insert(k, v);
                OpResult::Inserted
            }
            Op::Remove(k) => OpResult::Removed(self.remove(k)),
            Op::Range(lo, hi) => OpResult::Range(self.range(lo, hi).unwrap_or_default()),
        }
    }

    fn log_update(&mut self, key: u64) {
        if self.update_log.len() == self.cfg.update_log_capacity {
            self.update_log.pop_front();
        }
        self.update_log.push_back(key);
        self.since_refresh += 1;
        let every = self.cfg.density_refresh_interval;
        if every > 0 && self.since_refresh >= every {
            self.refresh_density();
        }
    }

    /// Recent update keys, oldest first.
    pub fn update_log(&self) -> impl ExactSizeIterator<Item = u64> + '_ {
        self.update_log.iter().copied()
    }

    /// Refits the update density when the log holds enough samples; returns
    /// whether a refit happened.
    pub fn refresh_density(&mut self) -> bool {
        self.since_refresh = 0;
        if self.update_log.len() < self.cfg.min_fit_samples {
            return false;
        }
        let samples: Vec<u64> = self.update_log.iter().copied().collect();
        match fit_update_distribution(&samples, &self.cfg.fit_config()) {
            Ok(d) => {
                self.density = d;
                true
            }
            Err(_) => false,
        }
    }

    pub fn stats(&self) -> PerfMeasures {
        self.bmat.stats()
    }

    pub fn backend(&self) -> Backend {
        self.bmat.backend()
    }

    pub fn convert(&mut self, target: Backend) -> Result<(), IndexError> {
        Ok(self.bmat.convert(target)?)
    }

    pub fn prune_retrain(&mut self) -> Result<PruneReport, IndexError> {
        Ok(self.bmat.prune_retrain(
            self.trainer.as_ref(),
            &self.cfg.model,
            &self.density,
            self.cfg.d_max,
        )?)
    }

    pub fn memory_breakdown(&self) -> MemoryBreakdown {
        let mut m = MemoryBreakdown::default();
        for seg in self.bmat.segments() {
            let d = seg.data();
            m.key_slots += d.live_count() * (SLOT_BYTES - VALUE_BYTES);
            m.null_slots += d.null_count() * SLOT_BYTES;
            m.models += ADJUSTMENT_BYTES;
            m.segments += SEGMENT_HEADER_BYTES;
        }
        m.models += self
            .bmat
            .distinct_models()
            .iter()
            .map(|x| x.size_bytes())
            .sum::<usize>();
        m.nodes = self.bmat.node_bytes();
        m.density = self.density.size_bytes();
        m
    }

    /// Bytes held by index structures (user values excluded).
    pub fn memory_usage(&self) -> usize {
        self.memory_breakdown().total()
    }

    /// Full structural audit; intended for tests.
    pub fn validate(&self) -> Result<(), String> {
        self.bmat.validate()?;
        let live: usize = self.bmat.segments().map(|s| s.data().live_count()).sum();
        if live != self.live {
            return Err(format!("live counter {} but {} live slots", self.live, live));
        }
        Ok(())
    }
}
