//! Window intervals and ordered interval sets.
//!
//! A window interval `[l, r]` stands for the consecutive sliding-window start
//! positions `l..=r` (1-based, inclusive). Interval sets keep their intervals
//! sorted, pairwise disjoint and non-adjacent, so `n_I` (interval count) and
//! `n_P` (covered position count) are well defined.

/// A run `[l, r]` of consecutive window start positions, `1 <= l <= r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WindowInterval {
    pub l: usize,
    pub r: usize,
}

impl WindowInterval {
    pub fn new(l: usize, r: usize) -> Self {
        debug_assert!(l >= 1 && l <= r, "invalid interval [{l}, {r}]");
        Self { l, r }
    }

    /// Number of positions covered.
    pub fn len(&self) -> usize {
        self.r - self.l + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, pos: usize) -> bool {
        self.l <= pos && pos <= self.r
    }
}

/// A sorted sequence of disjoint, non-adjacent window intervals with cached
/// position count.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IntervalSet {
    intervals: Vec<WindowInterval>,
    positions: usize,
}

impl IntervalSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a set from intervals already in canonical form: ascending and
    /// with a gap of at least one position between neighbors.
    pub fn from_sorted(intervals: Vec<WindowInterval>) -> Self {
        debug_assert!(intervals
            .windows(2)
            .all(|w| w[0].r + 1 < w[1].l));
        let positions = intervals.iter().map(WindowInterval::len).sum();
        Self {
            intervals,
            positions,
        }
    }

    /// Builds a set from arbitrary intervals, sorting and coalescing
    /// overlapping or adjacent ones.
    pub fn from_unsorted(mut intervals: Vec<WindowInterval>) -> Self {
        if intervals.is_empty() {
            return Self::empty();
        }
        intervals.sort_unstable_by_key(|wi| wi.l);
        let mut merged: Vec<WindowInterval> = Vec::with_capacity(intervals.len());
        for wi in intervals {
            match merged.last_mut() {
                Some(last) if wi.l <= last.r + 1 => last.r = last.r.max(wi.r),
                _ => merged.push(wi),
            }
        }
        Self::from_sorted(merged)
    }

    pub fn intervals(&self) -> &[WindowInterval] {
        &self.intervals
    }

    /// Interval count `n_I`.
    pub fn n_i(&self) -> usize {
        self.intervals.len()
    }

    /// Position count `n_P`.
    pub fn n_p(&self) -> usize {
        self.positions
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, pos: usize) -> bool {
        let idx = self.intervals.partition_point(|wi| wi.r < pos);
        idx < self.intervals.len() && self.intervals[idx].contains(pos)
    }

    /// All covered positions in ascending order.
    pub fn iter_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.intervals.iter().flat_map(|wi| wi.l..=wi.r)
    }

    /// Shifts every interval left by `offset` and clips it to the legal start
    /// range `[1, max_start]`; emptied intervals are dropped. Order, the
    /// disjointness gap and (absent clipping) the counts are preserved.
    pub fn shift_clip(&self, offset: usize, max_start: usize) -> IntervalSet {
        let mut out = Vec::with_capacity(self.intervals.len());
        for wi in &self.intervals {
            if wi.r <= offset {
                continue;
            }
            let l = wi.l.saturating_sub(offset).max(1);
            let r = (wi.r - offset).min(max_start);
            if l <= r {
                out.push(WindowInterval::new(l, r));
            }
        }
        Self::from_sorted(out)
    }

    /// Exact intersection of the covered positions, by a two-pointer sweep
    /// linear in the interval counts.
    pub fn intersect(&self, other: &IntervalSet) -> IntervalSet {
        let a = &self.intervals;
        let b = &other.intervals;
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            let lo = a[i].l.max(b[j].l);
            let hi = a[i].r.min(b[j].r);
            if lo <= hi {
                out.push(WindowInterval::new(lo, hi));
            }
            if a[i].r < b[j].r {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self::from_sorted(out)
    }
}
