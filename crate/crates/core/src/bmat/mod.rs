//! Balanced model adjustment tree.
//!
//! Every node marks the lower boundary of a gapped segment. Keys that found no
//! placeholder are buffered in the node that starts their own segment, and the
//! subtree weight sums give the signed count of buffered keys below a probe in
//! a single descent. Each segment carries an adjusted model:
//!
//! `slot(k) ~ offset + gamma * (model(k) + bias(k))`
//!
//! where `gamma = 1 + alpha` of the segment when it was laid out and `bias(k)`
//! counts buffered keys in `[segment start, k)`.

mod bplus;
mod rb;
mod tree;

use std::ops::Range;
use std::sync::Arc;

use thiserror::Error;

use crate::model::{ModelConfig, ModelError, ModelTrainer, SharedModel};
use crate::nullifier::{expand_segment, DensityModel, GapInsert, GappedSegment, SegmentError};

pub use tree::{Backend, Floor, Locate, NodeEntry, SegmentId};
use tree::{build_tree, built_height, OrderedTree};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BmatError {
    #[error("no-op conversion")]
    NoOpConversion,
    #[error("nothing to prune")]
    NothingToPrune,
    #[error("branching factor must be at least 4, got {0}")]
    InvalidBranching(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BmatConfig {
    pub backend: Backend,
    /// Fan-out of the B+ backend.
    pub branching: usize,
    /// Extra slots searched on each side of the certified window.
    pub search_margin: u64,
}

impl Default for BmatConfig {
    fn default() -> Self {
        Self {
            backend: Backend::RedBlack,
            branching: 32,
            search_margin: 8,
        }
    }
}

/// A shared key model rescaled and shifted onto one segment's slots.
#[derive(Debug, Clone)]
pub struct AdjustedModel {
    model: SharedModel,
    gamma: f64,
    offset: f64,
    err: u64,
}

impl AdjustedModel {
    /// Fits the offset to the segment's current layout and certifies the
    /// error by a scan. `buffered` lists the buffered keys inside the
    /// segment's range, ascending.
    fn fit(model: SharedModel, data: &GappedSegment, buffered: &[u64]) -> Self {
        let mut m = Self {
            model,
            gamma: 1.0 + data.alpha(),
            offset: 0.0,
            err: 0,
        };
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let each = |f: &mut dyn FnMut(usize, f64)| {
            let mut b = 0;
            for (slot, e) in data.entries() {
                while b < buffered.len() && buffered[b] < e.key {
                    b += 1;
                }
                f(slot, m.gamma * (m.model.predict(e.key) + b as f64));
            }
        };
        each(&mut |slot, scaled| {
            let r = slot as f64 - scaled;
            lo = lo.min(r);
            hi = hi.max(r);
        });
        if lo.is_finite() {
            m.offset = (lo + hi) / 2.0;
        }
        let offset = m.offset;
        let mut err = 0f64;
        each(&mut |slot, scaled| err = err.max((slot as f64 - (offset + scaled)).abs()));
        m.err = err.ceil() as u64;
        m
    }

    pub fn estimate(&self, key: u64, bias: i64) -> f64 {
        self.offset + self.gamma * (self.model.predict(key) + bias as f64)
    }

    pub fn model(&self) -> &SharedModel {
        &self.model
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Certified maximum distance between estimate and true slot.
    pub fn error(&self) -> u64 {
        self.err
    }

    fn absorb(&mut self, est: f64, slot: usize) {
        let dev = (slot as f64 - est).abs().ceil() as u64;
        self.err = self.err.max(dev);
    }
}

#[derive(Debug, Clone)]
pub struct Segment {
    data: GappedSegment,
    model: AdjustedModel,
}

impl Segment {
    pub fn data(&self) -> &GappedSegment {
        &self.data
    }

    pub fn model(&self) -> &AdjustedModel {
        &self.model
    }

    fn lo(&self) -> u64 {
        self.data.key_range().0
    }
}

/// What a descent learns about a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Adjustment {
    pub bias: i64,
    pub hit: Option<u64>,
    pub segment: SegmentId,
    pub nodes_visited: usize,
}

/// Knobs for update routing.
#[derive(Debug, Clone, Copy)]
pub struct SplitParams<'a> {
    /// Successors moved into the middle segment on a split.
    pub aux_distance: usize,
    pub d_max: u64,
    pub shift_window: usize,
    pub density: &'a DensityModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    /// The key was buffered in a node; node and slot now hold the new value.
    UpdatedNode,
    /// The key was already live in a segment slot.
    UpdatedSlot,
    InGap,
    SegmentSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeleteOutcome {
    /// A buffered key: its node entry was dropped.
    Removed,
    /// A plain slot key: the slot became a placeholder.
    Tombstoned,
    NotFound,
}

/// Counters gathered by one point lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LookupTrace {
    pub value: Option<u64>,
    pub nodes_visited: usize,
    pub slots_inspected: usize,
    pub window: Range<usize>,
    pub segment: SegmentId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerfMeasures {
    pub height: usize,
    /// Smallest live key count over all segments.
    pub granularity: usize,
    /// Largest placeholder ratio over all segments.
    pub error_scaling: f64,
    /// Segments, each with its own adjusted model.
    pub model_count: usize,
    pub node_count: usize,
    pub backend: Backend,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneReport {
    pub height_before: usize,
    pub height_after: usize,
    pub segments_merged: usize,
    pub keys_retrained: usize,
    /// Sum of model error bounds over all segments.
    pub error_sum_before: u64,
    pub error_sum_after: u64,
}

#[derive(Debug)]
pub struct Bmat {
    tree: Box<dyn OrderedTree>,
    segments: Vec<Option<Segment>>,
    free: Vec<u32>,
    root: SegmentId,
    cfg: BmatConfig,
    splits: u64,
}

impl Bmat {
    /// A tree with no nodes whose root segment covers the whole key space.
    pub fn new(cfg: BmatConfig, model: SharedModel, data: GappedSegment) -> Result<Self, BmatError> {
        if cfg.branching < 4 {
            return Err(BmatError::InvalidBranching(cfg.branching));
        }
        let mut data = data;
        data.set_key_range((0, u64::MAX));
        let model = AdjustedModel::fit(model, &data, &[]);
        Ok(Self {
            tree: build_tree(cfg.backend, cfg.branching, Vec::new()),
            segments: vec![Some(Segment { data, model })],
            free: Vec::new(),
            root: SegmentId(0),
            cfg,
            splits: 0,
        })
    }

    pub fn config(&self) -> &BmatConfig {
        &self.cfg
    }

    pub fn backend(&self) -> Backend {
        self.tree.backend()
    }

    pub fn height(&self) -> usize {
        self.tree.height()
    }

    pub fn node_count(&self) -> usize {
        self.tree.len()
    }

    pub fn split_count(&self) -> u64 {
        self.splits
    }

    pub fn root_segment(&self) -> SegmentId {
        self.root
    }

    pub fn segment(&self, id: SegmentId) -> &Segment {
        self.segments[id.index()].as_ref().expect("dangling segment id")
    }

    fn segment_mut(&mut self, id: SegmentId) -> &mut Segment {
        self.segments[id.index()].as_mut().expect("dangling segment id")
    }

    fn alloc(&mut self, seg: Segment) -> SegmentId {
        match self.free.pop() {
            Some(i) => {
                self.segments[i as usize] = Some(seg);
                SegmentId(i)
            }
            None => {
                self.segments.push(Some(seg));
                SegmentId((self.segments.len() - 1) as u32)
            }
        }
    }

    fn release(&mut self, id: SegmentId) -> Segment {
        self.free.push(id.0);
        self.segments[id.index()].take().expect("dangling segment id")
    }

    /// Segments in key order with their start keys.
    pub fn segments_in_order(&self) -> Vec<(u64, SegmentId)> {
        let mut out = Vec::with_capacity(self.tree.len() + 1);
        if self.tree.get(0).is_none() {
            out.push((0, self.root));
        }
        self.tree.visit_from(0, &mut |k, e| {
            out.push((k, e.segment));
            true
        });
        out
    }

    /// Buffered (key, value) pairs in key order.
    pub fn buffered(&self) -> Vec<(u64, u64)> {
        let mut out = Vec::new();
        self.tree.visit_from(0, &mut |k, e| {
            if let Some(v) = e.buffered {
                out.push((k, v));
            }
            true
        });
        out
    }

    pub fn lookup_adjustment(&self, key: u64) -> Adjustment {
        let loc = self.tree.locate(key);
        match loc.floor {
            Some(f) => Adjustment {
                bias: loc.rank_below - f.rank_below,
                hit: if f.key == key { f.entry.buffered } else { None },
                segment: f.entry.segment,
                nodes_visited: loc.nodes_visited,
            },
            None => Adjustment {
                bias: loc.rank_below,
                hit: None,
                segment: self.root,
                nodes_visited: loc.nodes_visited,
            },
        }
    }

    /// Signed buffered count in `[segment start, key)` for the owner of `key`.
    fn bias_within(&self, seg: &Segment, key: u64) -> i64 {
        self.tree.rank(key) - self.tree.rank(seg.lo())
    }

    /// Integer slots within `err + margin` of the estimate. The tolerance
    /// absorbs float noise between estimate paths without widening the
    /// window by more than one slot in total.
    fn window(&self, seg: &Segment, est: f64) -> Range<usize> {
        const TOL: f64 = 1e-6;
        let half = (seg.model.err + self.cfg.search_margin) as f64;
        let len = seg.data.len();
        let lo = (est - half - TOL).ceil();
        let hi = (est + half + TOL).floor();
        let lo = if lo <= 0.0 { 0 } else { (lo as usize).min(len) };
        let hi = if hi < 0.0 { 0 } else { (hi as usize).saturating_add(1).min(len) };
        lo.min(hi)..hi
    }

    fn probe(&self, key: u64, adj: &Adjustment) -> (Option<usize>, usize, Range<usize>, f64) {
        let seg = self.segment(adj.segment);
        let est = seg.model.estimate(key, adj.bias);
        let window = self.window(seg, est);
        let p = seg.data.find_in(key, window.clone());
        (p.slot, p.inspected, window, est)
    }

    pub fn get(&self, key: u64) -> Option<u64> {
        self.get_traced(key).value
    }

    pub fn get_traced(&self, key: u64) -> LookupTrace {
        let adj = self.lookup_adjustment(key);
        if adj.hit.is_some() {
            return LookupTrace {
                value: adj.hit,
                nodes_visited: adj.nodes_visited,
                slots_inspected: 0,
                window: 0..0,
                segment: adj.segment,
            };
        }
        let (slot, inspected, window, _) = self.probe(key, &adj);
        let seg = self.segment(adj.segment);
        LookupTrace {
            value: slot.and_then(|s| seg.data.get(s)).map(|e| e.value),
            nodes_visited: adj.nodes_visited,
            slots_inspected: inspected,
            window,
            segment: adj.segment,
        }
    }

    /// Live pairs with keys in `[lo, hi]`, ascending.
    pub fn range(&self, lo: u64, hi: u64) -> Vec<(u64, u64)> {
        let mut out = Vec::new();
        let mut scan = |seg: &Segment| {
            let data = &seg.data;
            let start = data.lower_bound(lo);
            for s in &data.slots()[start..] {
                if let Some(e) = s {
                    if e.key > hi {
                        return false;
                    }
                    out.push((e.key, e.value));
                }
            }
            true
        };
        let first = self.lookup_adjustment(lo).segment;
        if scan(self.segment(first)) && lo < u64::MAX {
            self.tree.visit_from(lo + 1, &mut |k, e| k <= hi && scan(self.segment(e.segment)));
        }
        out
    }

    /// Widens the certified error so that `slots` of segment `id` are covered.
    fn certify_slots(&mut self, id: SegmentId, slots: impl Iterator<Item = usize>) {
        let seg = self.segment(id);
        let mut ests = Vec::new();
        for s in slots {
            let key = seg.data.get(s).expect("certifying an empty slot").key;
            ests.push((s, seg.model.estimate(key, self.bias_within(seg, key))));
        }
        let seg = self.segment_mut(id);
        for (s, est) in ests {
            seg.model.absorb(est, s);
        }
    }

    pub fn insert_update(&mut self, key: u64, value: u64, p: &SplitParams<'_>) -> InsertOutcome {
        let adj = self.lookup_adjustment(key);
        let (slot, _, _, est) = self.probe(key, &adj);
        if let Some(slot) = slot {
            self.segment_mut(adj.segment).data.set_value(slot, value);
            if adj.hit.is_some() {
                self.tree.insert(
                    key,
                    NodeEntry {
                        segment: adj.segment,
                        buffered: Some(value),
                    },
                );
                return InsertOutcome::UpdatedNode;
            }
            return InsertOutcome::UpdatedSlot;
        }
        debug_assert!(adj.hit.is_none(), "buffered key missing from its slot");
        let target = if est <= 0.0 { 0 } else { est.round() as usize };
        let seg = self.segment_mut(adj.segment);
        match seg.data.insert_in_gap(key, value, target, p.shift_window) {
            Ok(GapInsert::Placed { slot, moved }) => {
                let moved = moved.unwrap_or(0..0);
                self.certify_slots(adj.segment, std::iter::once(slot).chain(moved));
                InsertOutcome::InGap
            }
            Ok(GapInsert::NoRoom) => {
                self.split(adj.segment, key, value, p);
                InsertOutcome::SegmentSplit
            }
            Err(SegmentError::KeyExists) => {
                // Unreachable while the certified window holds; stay correct anyway.
                let seg = self.segment_mut(adj.segment);
                let slot = seg.data.find(key).expect("existing key");
                seg.data.set_value(slot, value);
                InsertOutcome::UpdatedSlot
            }
            Err(e @ SegmentError::OutOfRange(_)) => panic!("segment ranges must partition keys: {e}"),
        }
    }

    /// Breaks segment `id` around `key` into left `[lo, key)`, middle
    /// `[key, aux]` and right `(aux, hi]`.
    fn split(&mut self, id: SegmentId, key: u64, value: u64, p: &SplitParams<'_>) {
        let (lo, hi) = self.segment(id).data.key_range();
        let lo_rank = self.tree.rank(lo);
        let mut seg = self.segments[id.index()].take().expect("dangling segment id");
        let succ = seg.data.lower_bound(key);

        let mut middle = vec![(key, value)];
        let mut right_start = succ;
        for (i, s) in seg.data.slots()[succ..].iter().enumerate() {
            if middle.len() > p.aux_distance {
                break;
            }
            if let Some(e) = s {
                middle.push((e.key, e.value));
                right_start = succ + i + 1;
            }
        }
        let aux = middle.last().unwrap().0;
        let right_slots = seg.data.take_tail(right_start);
        let right_live = right_slots.iter().filter(|s| s.is_some()).count();
        seg.data.truncate(succ);
        // Buffered keys in [lo, aux] shift every right-hand estimate.
        let right_shift = if right_live > 0 {
            self.tree.rank(aux + 1) - lo_rank
        } else {
            0
        };

        let mid_hi = if right_live > 0 { aux } else { hi };
        let mid_data = expand_segment(&middle, p.density, p.d_max, (key, mid_hi));
        let mid_model = AdjustedModel::fit(seg.model.model.clone(), &mid_data, &[key]);

        let right = (right_live > 0).then(|| {
            let mut model = seg.model.clone();
            model.offset = model.offset - right_start as f64 + model.gamma * right_shift as f64;
            Segment {
                data: GappedSegment::from_slots(right_slots, (aux + 1, hi)),
                model,
            }
        });

        let mid_id = self.alloc(Segment {
            data: mid_data,
            model: mid_model,
        });
        if key == lo {
            // Nothing below `key` remains; the middle takes over the boundary.
            self.free.push(id.0);
            if id == self.root {
                self.root = mid_id;
            }
        } else {
            seg.data.set_key_range((lo, key - 1));
            self.segments[id.index()] = Some(seg);
        }
        self.tree.insert(
            key,
            NodeEntry {
                segment: mid_id,
                buffered: Some(value),
            },
        );
        if let Some(right) = right {
            let right_id = self.alloc(right);
            self.tree.insert(
                aux + 1,
                NodeEntry {
                    segment: right_id,
                    buffered: None,
                },
            );
        }
        self.splits += 1;
    }

    pub fn delete_update(&mut self, key: u64) -> DeleteOutcome {
        let adj = self.lookup_adjustment(key);
        let (slot, _, _, _) = self.probe(key, &adj);
        let Some(slot) = slot else {
            return DeleteOutcome::NotFound;
        };
        self.segment_mut(adj.segment).data.remove_at(slot);
        if adj.hit.is_none() {
            return DeleteOutcome::Tombstoned;
        }
        self.tree.insert(
            key,
            NodeEntry {
                segment: adj.segment,
                buffered: None,
            },
        );
        // Keys above lose one unit of bias.
        let seg = self.segment_mut(adj.segment);
        seg.model.err += seg.model.gamma.ceil() as u64;
        DeleteOutcome::Removed
    }

    /// Rebuilds the node set in the other backend.
    pub fn convert(&mut self, target: Backend) -> Result<(), BmatError> {
        if target == self.backend() {
            return Err(BmatError::NoOpConversion);
        }
        self.tree = build_tree(target, self.cfg.branching, self.tree.entries());
        self.cfg.backend = target;
        Ok(())
    }

    fn error_sum(&self) -> u64 {
        self.segments
            .iter()
            .flatten()
            .map(|s| s.model.model.error_bound())
            .sum()
    }

    /// Merges the cheapest run of consecutive segments whose removal lowers the
    /// tree height, retrains one model on the merged keys and rebuilds the
    /// tree.
    pub fn prune_retrain(
        &mut self,
        trainer: &dyn ModelTrainer,
        model_cfg: &ModelConfig,
        density: &DensityModel,
        d_max: u64,
    ) -> Result<PruneReport, BmatError> {
        model_cfg.validate()?;
        let height_before = self.height();
        if height_before < 2 {
            return Err(BmatError::NothingToPrune);
        }
        let error_sum_before = self.error_sum();
        let order = self.segments_in_order();
        let n = self.tree.len();
        let (backend, b) = (self.backend(), self.cfg.branching);

        // Largest node count a rebuilt tree can keep below the current height.
        let (mut ok, mut bad) = (0usize, n + 1);
        while bad - ok > 1 {
            let mid = (ok + bad) / 2;
            if built_height(backend, b, mid) < height_before {
                ok = mid;
            } else {
                bad = mid;
            }
        }
        let need = n.saturating_sub(ok).max(1).min(order.len() - 1);

        let volume: Vec<usize> = order
            .iter()
            .map(|&(_, id)| self.segment(id).data.live_count())
            .collect();
        let mut prefix = vec![0usize; volume.len() + 1];
        for (i, v) in volume.iter().enumerate() {
            prefix[i + 1] = prefix[i] + v;
        }
        let span = need + 1;
        let mut first = (0..=order.len() - span)
            .min_by_key(|&i| prefix[i + span] - prefix[i])
            .unwrap();
        let mut last = first + span - 1;
        while prefix[last + 1] - prefix[first] < model_cfg.min_keys_per_model
            && (first > 0 || last + 1 < order.len())
        {
            if last + 1 < order.len() {
                last += 1;
            } else {
                first -= 1;
            }
        }

        let merged: Vec<SegmentId> = order[first..=last].iter().map(|&(_, id)| id).collect();
        let start = order[first].0;
        let end = self.segment(merged[merged.len() - 1]).data.key_range().1;
        let mut pairs = Vec::with_capacity(prefix[last + 1] - prefix[first]);
        let mut before = 0u64;
        for &id in &merged {
            let seg = self.segment(id);
            before += seg.model.model.error_bound();
            pairs.extend(seg.data.entries().map(|(_, e)| (e.key, e.value)));
        }

        // A fresh fit may not certify a larger error than the pieces it replaces.
        let fallback = self.segment(merged[0]).model.model.clone();
        let model = if pairs.is_empty() {
            fallback
        } else {
            let keys: Vec<u64> = pairs.iter().map(|p| p.0).collect();
            let cfg = ModelConfig {
                spline_error_budget: model_cfg.spline_error_budget.min(before.max(1)),
                ..*model_cfg
            };
            let fresh = trainer.train(&keys, &cfg)?;
            if fresh.error_bound() <= before || fallback.error_bound() > before {
                fresh
            } else {
                fallback
            }
        };
        let data = expand_segment(&pairs, density, d_max, (start, end));
        let model = AdjustedModel::fit(model, &data, &[]);
        for &id in &merged {
            self.release(id);
        }
        let new_id = self.alloc(Segment { data, model });

        let removed: std::collections::HashSet<u64> =
            order[first + 1..=last].iter().map(|&(k, _)| k).collect();
        let head_is_root = first == 0 && self.tree.get(0).is_none();
        let mut entries = self.tree.entries();
        entries.retain(|(k, _)| !removed.contains(k));
        for (k, e) in entries.iter_mut() {
            if *k == start && !head_is_root {
                *e = NodeEntry {
                    segment: new_id,
                    buffered: None,
                };
            }
        }
        if merged.contains(&self.root) {
            self.root = new_id;
        }
        self.tree = build_tree(backend, b, entries);

        Ok(PruneReport {
            height_before,
            height_after: self.height(),
            segments_merged: merged.len(),
            keys_retrained: pairs.len(),
            error_sum_before,
            error_sum_after: self.error_sum(),
        })
    }

    pub fn stats(&self) -> PerfMeasures {
        let mut granularity = usize::MAX;
        let mut error_scaling = 0f64;
        let mut model_count = 0;
        for seg in self.segments() {
            granularity = granularity.min(seg.data.live_count());
            error_scaling = error_scaling.max(seg.data.alpha());
            model_count += 1;
        }
        PerfMeasures {
            height: self.height(),
            granularity,
            error_scaling,
            model_count,
            node_count: self.tree.len(),
            backend: self.backend(),
        }
    }

    pub fn node_bytes(&self) -> usize {
        self.tree.memory_bytes()
    }

    /// Live segments (unordered).
    pub fn segments(&self) -> impl Iterator<Item = &Segment> + '_ {
        self.segments.iter().flatten()
    }

    /// Distinct underlying models, each listed once however many segments
    /// share it.
    pub fn distinct_models(&self) -> Vec<SharedModel> {
        let mut seen = std::collections::HashSet::new();
        self.segments()
            .filter(|s| seen.insert(Arc::as_ptr(&s.model.model) as *const () as usize))
            .map(|s| s.model.model.clone())
            .collect()
    }

    /// Exhaustive structural check: tree invariants, segment partition of the
    /// key space, buffered copies, and that every live key is reachable
    /// through its certified window.
    pub fn validate(&self) -> Result<(), String> {
        self.tree.check_invariants()?;
        let order = self.segments_in_order();
        let mut expect_lo = Some(0u64);
        let mut referenced = std::collections::HashSet::new();
        for &(start, id) in &order {
            let seg = self.segments[id.index()]
                .as_ref()
                .ok_or_else(|| format!("node {start} points at a freed segment"))?;
            if !referenced.insert(id) {
                return Err(format!("segment {id:?} referenced twice"));
            }
            let (lo, hi) = seg.data.key_range();
            if Some(lo) != expect_lo || lo != start {
                return Err(format!("segment at {start} has range {lo}..={hi}, expected start {expect_lo:?}"));
            }
            seg.data.check_invariants()?;
            expect_lo = hi.checked_add(1);
        }
        if expect_lo.is_some() {
            return Err("segments do not reach the top of the key space".into());
        }
        let live = self.segments.iter().filter(|s| s.is_some()).count();
        if live != order.len() {
            return Err(format!("{live} live segments but {} reachable", order.len()));
        }
        for (k, v) in self.buffered() {
            let seg = self.segment(self.tree.get(k).unwrap().segment);
            if seg.lo() != k {
                return Err(format!("buffered key {k} does not start its segment"));
            }
            let got = seg.data.find(k).and_then(|s| seg.data.get(s)).map(|e| e.value);
            if got != Some(v) {
                return Err(format!("buffered key {k}: node {v}, slot {got:?}"));
            }
        }
        for &(_, id) in &order {
            for (_, e) in self.segment(id).data.entries() {
                let t = self.get_traced(e.key);
                if t.value != Some(e.value) {
                    return Err(format!("key {} not found through window {:?}", e.key, t.window));
                }
            }
        }
        Ok(())
    }
}
