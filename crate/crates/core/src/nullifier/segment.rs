use std::ops::Range;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Entry {
    pub key: u64,
    pub value: u64,
}

/// A slot is either a live entry or a NULL placeholder.
pub type Slot = Option<Entry>;

/// Size of one slot in the array.
pub const SLOT_BYTES: usize = std::mem::size_of::<Slot>();
/// Payload bytes per live slot that belong to the user, not the index.
pub const VALUE_BYTES: usize = std::mem::size_of::<u64>();

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SegmentError {
    #[error("key exists")]
    KeyExists,
    #[error("key {0} outside segment range")]
    OutOfRange(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GapInsert {
    /// Placed at `slot`; `moved` holds the new positions of any entries that
    /// were shifted by one slot to open the gap.
    Placed {
        slot: usize,
        moved: Option<Range<usize>>,
    },
    NoRoom,
}

/// Outcome of a bounded search over part of the slot array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Probe {
    pub slot: Option<usize>,
    pub inspected: usize,
}

/// Sorted key/value array with NULL placeholders between entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GappedSegment {
    slots: Vec<Slot>,
    live: usize,
    key_range: (u64, u64),
}

impl GappedSegment {
    /// Builds a segment from an already laid-out slot array.
    pub fn from_slots(slots: Vec<Slot>, key_range: (u64, u64)) -> Self {
        let live = slots.iter().filter(|s| s.is_some()).count();
        Self {
            slots,
            live,
            key_range,
        }
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn live_count(&self) -> usize {
        self.live
    }

    pub fn null_count(&self) -> usize {
        self.slots.len() - self.live
    }

    pub fn key_range(&self) -> (u64, u64) {
        self.key_range
    }

    pub(crate) fn set_key_range(&mut self, range: (u64, u64)) {
        self.key_range = range;
    }

    pub fn contains_key_range(&self, key: u64) -> bool {
        self.key_range.0 <= key && key <= self.key_range.1
    }

    /// Average placeholder count per live key.
    pub fn alpha(&self) -> f64 {
        if self.live == 0 {
            0.0
        } else {
            self.null_count() as f64 / self.live as f64
        }
    }

    /// Per-key placeholder counts: NULL slots directly preceding each live key.
    pub fn gaps(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.live);
        let mut run = 0;
        for s in &self.slots {
            match s {
                Some(_) => {
                    out.push(run);
                    run = 0;
                }
                None => run += 1,
            }
        }
        out
    }

    /// NULL slots after the last live key.
    pub fn trailing_nulls(&self) -> usize {
        self.slots.iter().rev().take_while(|s| s.is_none()).count()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, &Entry)> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().map(|e| (i, e)))
    }

    pub fn first_key(&self) -> Option<u64> {
        self.entries().next().map(|(_, e)| e.key)
    }

    /// First slot index holding a live key `>= key`, or `len()`.
    pub fn lower_bound(&self, key: u64) -> usize {
        self.lower_bound_in(key, 0, self.slots.len()).0
    }

    /// Binary search confined to `[lo, hi)`, skipping NULL slots; returns the
    /// first live index `>= key` in the window (or `hi`) and the number of
    /// slots inspected, which never exceeds the window length.
    fn lower_bound_in(&self, key: u64, mut lo: usize, mut hi: usize) -> (usize, usize) {
        // Everything in [hi, found) is NULL.
        let mut found = hi;
        let mut inspected = 0;
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            let mut j = mid;
            while j < hi && self.slots[j].is_none() {
                j += 1;
            }
            inspected += j - mid + usize::from(j < hi);
            if j == hi {
                hi = mid;
            } else if self.slots[j].unwrap().key < key {
                lo = j + 1;
            } else {
                found = j;
                hi = mid;
            }
        }
        (found, inspected)
    }

    /// Searches for `key` among slots `window` only.
    pub fn find_in(&self, key: u64, window: Range<usize>) -> Probe {
        let hi = window.end.min(self.slots.len());
        let lo = window.start.min(hi);
        let (i, inspected) = self.lower_bound_in(key, lo, hi);
        let slot = (i < hi && self.slots[i].unwrap().key == key).then_some(i);
        Probe { slot, inspected }
    }

    /// Unrestricted search.
    pub fn find(&self, key: u64) -> Option<usize> {
        self.find_in(key, 0..self.slots.len()).slot
    }

    pub fn get(&self, slot: usize) -> Option<&Entry> {
        self.slots.get(slot).and_then(|s| s.as_ref())
    }

    pub fn set_value(&mut self, slot: usize, value: u64) {
        if let Some(e) = self.slots[slot].as_mut() {
            e.value = value;
        }
    }

    /// Turns a live slot back into a placeholder.
    pub fn remove_at(&mut self, slot: usize) -> Option<Entry> {
        let e = self.slots[slot].take();
        if e.is_some() {
            self.live -= 1;
        }
        e
    }

    /// Places `key` in a NULL slot between its sort neighbours, choosing the
    /// slot nearest `target`. If the neighbours are adjacent, up to
    /// `shift_window` entries may slide one slot toward the nearest NULL.
    pub fn insert_in_gap(
        &mut self,
        key: u64,
        value: u64,
        target: usize,
        shift_window: usize,
    ) -> Result<GapInsert, SegmentError> {
        if !self.contains_key_range(key) {
            return Err(SegmentError::OutOfRange(key));
        }
        let succ = self.lower_bound(key);
        if succ < self.slots.len() && self.slots[succ].unwrap().key == key {
            return Err(SegmentError::KeyExists);
        }
        let mut start = succ;
        while start > 0 && self.slots[start - 1].is_none() {
            start -= 1;
        }
        let entry = Some(Entry { key, value });

        if start < succ {
            let slot = target.clamp(start, succ - 1);
            self.slots[slot] = entry;
            self.live += 1;
            return Ok(GapInsert::Placed { slot, moved: None });
        }
        if shift_window == 0 {
            return Ok(GapInsert::NoRoom);
        }

        // `start == succ`: the predecessor (if any) sits at succ - 1.
        let left = (succ > 0)
            .then(|| self.nearest_null_left(succ - 1, shift_window))
            .flatten();
        let right = self.nearest_null_right(succ, shift_window);
        let (slot, moved) = match (left, right) {
            (Some(j), r) if r.is_none_or(|r| succ - 1 - j < r - succ) => {
                let pred = succ - 1;
                self.slots[j..=pred].rotate_left(1);
                (pred, j..pred)
            }
            (_, Some(j)) => {
                self.slots[succ..=j].rotate_right(1);
                (succ, succ + 1..j + 1)
            }
            _ => return Ok(GapInsert::NoRoom),
        };
        self.slots[slot] = entry;
        self.live += 1;
        Ok(GapInsert::Placed {
            slot,
            moved: Some(moved),
        })
    }

    /// NULL at or left of `from` reachable by passing at most `limit` entries.
    fn nearest_null_left(&self, from: usize, limit: usize) -> Option<usize> {
        let lowest = from.saturating_sub(limit);
        (lowest..=from).rev().find(|&i| self.slots[i].is_none())
    }

    fn nearest_null_right(&self, from: usize, limit: usize) -> Option<usize> {
        if from >= self.slots.len() {
            return None;
        }
        let highest = (from + limit).min(self.slots.len().saturating_sub(1));
        (from..=highest).find(|&i| self.slots[i].is_none())
    }

    pub(crate) fn truncate(&mut self, len: usize) {
        self.slots.truncate(len);
        self.live = self.slots.iter().filter(|s| s.is_some()).count();
    }

    pub(crate) fn take_tail(&mut self, at: usize) -> Vec<Slot> {
        let tail = self.slots.split_off(at);
        self.live -= tail.iter().filter(|s| s.is_some()).count();
        tail
    }

    /// Verifies sortedness, range containment and the live counter.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut prev: Option<u64> = None;
        let mut live = 0;
        for (i, e) in self.entries() {
            live += 1;
            if !self.contains_key_range(e.key) {
                return Err(format!("slot {i}: key {} outside {:?}", e.key, self.key_range));
            }
            if prev.is_some_and(|p| p >= e.key) {
                return Err(format!("slot {i}: key {} not ascending", e.key));
            }
            prev = Some(e.key);
        }
        if live != self.live {
            return Err(format!("live counter {} but {} live slots", self.live, live));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(layout: &[Option<u64>]) -> GappedSegment {
        let slots = layout
            .iter()
            .map(|k| k.map(|key| Entry { key, value: key * 10 }))
            .collect();
        GappedSegment::from_slots(slots, (0, 100))
    }

    fn keys(s: &GappedSegment) -> Vec<Option<u64>> {
        s.slots().iter().map(|s| s.map(|e| e.key)).collect()
    }

    #[test]
    fn insert_into_leading_gap() {
        let mut s = seg(&[None, None, Some(1), None, None, Some(2)]);
        let out = s.insert_in_gap(0, 0, 0, 8).unwrap();
        assert_eq!(
            out,
            GapInsert::Placed {
                slot: 0,
                moved: None
            }
        );
        assert_eq!(keys(&s), [Some(0), None, Some(1), None, None, Some(2)]);
        s.check_invariants().unwrap();
        assert_eq!(s.live_count(), 3);
    }

    #[test]
    fn target_is_clamped_into_the_gap() {
        let mut s = seg(&[Some(1), None, None, None, Some(9)]);
        s.insert_in_gap(5, 0, 100, 0).unwrap();
        assert_eq!(keys(&s), [Some(1), None, None, Some(5), Some(9)]);
    }

    #[test]
    fn no_gaps_means_no_room() {
        let mut s = seg(&[Some(1), Some(2), Some(3)]);
        assert_eq!(s.insert_in_gap(2, 0, 1, 0), Err(SegmentError::KeyExists));
        let mut s = seg(&[Some(10), Some(20), Some(30)]);
        assert_eq!(s.insert_in_gap(25, 0, 1, 8).unwrap(), GapInsert::NoRoom);
        assert_eq!(s.live_count(), 3);
    }

    #[test]
    fn shifting_uses_the_cheaper_side() {
        let mut s = seg(&[None, Some(10), Some(20), Some(30), Some(40), None, None]);
        // Right gap is two entries away, left gap one.
        let out = s.insert_in_gap(15, 0, 2, 8).unwrap();
        assert_eq!(
            out,
            GapInsert::Placed {
                slot: 1,
                moved: Some(0..1)
            }
        );
        assert_eq!(
            keys(&s),
            [Some(10), Some(15), Some(20), Some(30), Some(40), None, None]
        );
        let out = s.insert_in_gap(35, 0, 4, 8).unwrap();
        assert_eq!(
            out,
            GapInsert::Placed {
                slot: 4,
                moved: Some(5..6)
            }
        );
        s.check_invariants().unwrap();
    }

    #[test]
    fn shift_window_limits_movement() {
        let mut s = seg(&[Some(1), Some(2), Some(3), Some(4), None]);
        assert_eq!(s.insert_in_gap(0, 0, 0, 3).unwrap(), GapInsert::NoRoom);
        let out = s.insert_in_gap(0, 0, 0, 4).unwrap();
        assert_eq!(
            out,
            GapInsert::Placed {
                slot: 0,
                moved: Some(1..5)
            }
        );
        assert_eq!(keys(&s), [Some(0), Some(1), Some(2), Some(3), Some(4)]);
    }

    #[test]
    fn out_of_range_is_rejected() {
        let mut s = GappedSegment::from_slots(vec![None], (10, 20));
        assert_eq!(
            s.insert_in_gap(21, 0, 0, 0),
            Err(SegmentError::OutOfRange(21))
        );
    }

    #[test]
    fn windowed_search_and_gap_accounting() {
        let s = seg(&[None, None, Some(1), None, None, Some(2), None, None, Some(3)]);
        assert_eq!(s.gaps(), vec![2, 2, 2]);
        assert_eq!(s.alpha(), 2.0);
        assert_eq!(s.find(2), Some(5));
        assert_eq!(s.find_in(2, 0..5).slot, None);
        assert_eq!(s.find_in(3, 6..9).slot, Some(8));
        assert_eq!(s.find(4), None);
        assert_eq!(s.lower_bound(0), 2);
        assert_eq!(s.lower_bound(4), 9);
        let p = s.find_in(2, 3..7);
        assert_eq!(p.slot, Some(5));
        assert!(p.inspected <= 4);
    }

    #[test]
    fn remove_leaves_a_reusable_placeholder() {
        let mut s = seg(&[Some(1), Some(2), Some(3)]);
        assert_eq!(s.remove_at(1).map(|e| e.key), Some(2));
        assert_eq!(s.live_count(), 2);
        assert_eq!(s.insert_in_gap(2, 7, 0, 0).unwrap(), GapInsert::Placed { slot: 1, moved: None });
        assert_eq!(s.get(1).unwrap().value, 7);
    }

    #[test]
    fn empty_segment_has_no_room() {
        let mut s = GappedSegment::from_slots(Vec::new(), (0, 100));
        assert_eq!(s.insert_in_gap(5, 1, 0, 4), Ok(GapInsert::NoRoom));
        assert_eq!(s.find(5), None);
    }
}
