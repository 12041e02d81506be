//! The mean-value key-value index over sliding windows and its disk format.
//!
//! Logically the index is a sorted sequence of rows. A row's key is a
//! half-open range `[low, up)` of window mean values; its value is the sorted
//! list of window intervals whose sliding-window means fall inside the key.
//! A meta table mirrors the rows with their file offsets and counts, so a
//! query can locate the one contiguous byte range it needs without touching
//! anything else.
//!
//! ## File format (all integers and reals little-endian)
//!
//! ```text
//! header:  "KVMI" | version u32 | w u32 | n u64
//! rows:    per row: low f64 | up f64 | interval count u64 | (l u64, r u64)...
//! meta:    per row: low f64 | up f64 | pos u64 | n_I u64 | n_P u64
//! trailer: meta start offset u64 | meta entry count u64 | "KVMI"
//! ```
//!
//! Building happens in two passes. Pass 1 streams the series with a rolling
//! window mean and appends each window position to the fixed-width row
//! `floor(mean / d)`, extending the row's last interval when consecutive
//! windows land in the same row. Pass 2 walks the rows left to right once and
//! merges an adjacent pair when the coalesced interval count falls below the
//! `gamma` fraction of the separate counts; a merged pair is consumed and the
//! walk resumes after it. Merging never cascades: with continuous data every
//! row transition happens at adjacent positions, so chained merges would
//! swallow the whole table into one row and with it all pruning power.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::os::unix::fs::FileExt;
use std::path::Path;

use crate::bounds::MeanRange;
use crate::error::{Error, Result};
use crate::interval::{IntervalSet, WindowInterval};
use crate::series::TimeSeries;
use crate::source::DataSource;

const MAGIC: &[u8; 4] = b"KVMI";
const VERSION: u32 = 1;
const HEADER_LEN: u64 = 20;
const TRAILER_LEN: u64 = 20;
const META_ENTRY_LEN: u64 = 40;

/// Default fixed width `d` of the pass-1 mean ranges.
pub const DEFAULT_WIDTH: f64 = 0.5;
/// Default merge threshold `gamma` of the pass-2 greedy merge.
pub const DEFAULT_MERGE_THRESHOLD: f64 = 0.8;

/// Index building parameters.
#[derive(Debug, Clone, Copy)]
pub struct BuildParams {
    /// Fixed key width of the first pass.
    pub width: f64,
    /// Merge acceptance threshold of the second pass, in `(0, 1]`.
    pub merge_threshold: f64,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            width: DEFAULT_WIDTH,
            merge_threshold: DEFAULT_MERGE_THRESHOLD,
        }
    }
}

impl BuildParams {
    fn validate(&self) -> Result<()> {
        if !self.width.is_finite() || self.width <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "row width must be positive, got {}",
                self.width
            )));
        }
        if !self.merge_threshold.is_finite()
            || self.merge_threshold <= 0.0
            || self.merge_threshold > 1.0
        {
            return Err(Error::InvalidParameter(format!(
                "merge threshold must be in (0, 1], got {}",
                self.merge_threshold
            )));
        }
        Ok(())
    }
}

/// One index row: key range and the window intervals covered by it.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexRow {
    pub low: f64,
    pub up: f64,
    pub intervals: Vec<WindowInterval>,
}

impl IndexRow {
    pub fn n_i(&self) -> usize {
        self.intervals.len()
    }

    pub fn n_p(&self) -> usize {
        self.intervals.iter().map(WindowInterval::len).sum()
    }

    fn byte_len(&self) -> u64 {
        24 + 16 * self.intervals.len() as u64
    }
}

/// Meta table entry: row key, row offset in the file, and the row's counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaEntry {
    pub low: f64,
    pub up: f64,
    pub pos: u64,
    pub n_i: u64,
    pub n_p: u64,
}

/// An in-memory KV-index. Immutable once built; scans are read-only.
#[derive(Debug, Clone, PartialEq)]
pub struct KVIndex {
    w: usize,
    n: usize,
    rows: Vec<IndexRow>,
    meta: Vec<MetaEntry>,
}

/// Result of one range scan: the coalesced union of the touched rows'
/// intervals and the number of rows read.
#[derive(Debug, Clone)]
pub struct ScanResult {
    pub intervals: IntervalSet,
    pub rows_scanned: usize,
}

/// Row indexes (inclusive) of the meta entries whose key range intersects the
/// closed query range, or `None` if no row does. Keys are sorted and disjoint,
/// so the hit rows are one contiguous run.
pub fn meta_row_range(meta: &[MetaEntry], range: &MeanRange) -> Option<(usize, usize)> {
    let first = meta.partition_point(|e| e.up <= range.lower);
    let last = meta.partition_point(|e| e.low <= range.upper);
    if first < last {
        Some((first, last - 1))
    } else {
        None
    }
}

/// Read access shared by the in-memory index and the disk-backed reader.
pub trait IndexScan: Sync {
    /// Sliding-window length `w`.
    fn window_len(&self) -> usize;
    /// Length of the indexed series.
    fn series_len(&self) -> usize;
    fn meta(&self) -> &[MetaEntry];
    /// Fetches the contiguous run of rows `first..=last`.
    fn fetch_rows(&self, first: usize, last: usize) -> Result<Vec<IndexRow>>;

    /// Upper bound on the interval count a scan of `range` can return, from
    /// the meta table alone.
    fn estimate_n_i(&self, range: &MeanRange) -> u64 {
        match meta_row_range(self.meta(), range) {
            Some((first, last)) => self.meta()[first..=last].iter().map(|e| e.n_i).sum(),
            None => 0,
        }
    }

    /// Single contiguous scan of every row intersecting `range`. Boundary
    /// rows may contribute positions whose means fall outside the range;
    /// those are false candidates only, never missing ones.
    fn scan(&self, range: &MeanRange) -> Result<ScanResult> {
        let Some((first, last)) = meta_row_range(self.meta(), range) else {
            return Ok(ScanResult {
                intervals: IntervalSet::empty(),
                rows_scanned: 0,
            });
        };
        let rows = self.fetch_rows(first, last)?;
        let mut intervals = Vec::with_capacity(rows.iter().map(IndexRow::n_i).sum());
        for row in &rows {
            intervals.extend_from_slice(&row.intervals);
        }
        Ok(ScanResult {
            intervals: IntervalSet::from_unsorted(intervals),
            rows_scanned: last - first + 1,
        })
    }
}

impl IndexScan for KVIndex {
    fn window_len(&self) -> usize {
        self.w
    }

    fn series_len(&self) -> usize {
        self.n
    }

    fn meta(&self) -> &[MetaEntry] {
        &self.meta
    }

    fn fetch_rows(&self, first: usize, last: usize) -> Result<Vec<IndexRow>> {
        Ok(self.rows[first..=last].to_vec())
    }
}

impl KVIndex {
    /// Builds the index over an in-memory series.
    pub fn build(series: &TimeSeries, w: usize, params: &BuildParams) -> Result<Self> {
        Self::build_from_source(series, w, params)
    }

    /// Builds the index by streaming the series from a data source; only the
    /// current window and the row table live in memory.
    pub fn build_from_source(src: &dyn DataSource, w: usize, params: &BuildParams) -> Result<Self> {
        params.validate()?;
        if w == 0 {
            return Err(Error::InvalidParameter("window length must be positive".into()));
        }
        let n = src.len();
        if n < w {
            return Err(Error::SeriesTooShort { len: n, w });
        }

        let fixed = fixed_width_pass(src, w, params.width)?;
        let rows = merge_pass(fixed, params.merge_threshold);
        Ok(Self::assemble(w, n, rows))
    }

    fn assemble(w: usize, n: usize, rows: Vec<IndexRow>) -> Self {
        let mut pos = HEADER_LEN;
        let meta = rows
            .iter()
            .map(|row| {
                let entry = MetaEntry {
                    low: row.low,
                    up: row.up,
                    pos,
                    n_i: row.n_i() as u64,
                    n_p: row.n_p() as u64,
                };
                pos += row.byte_len();
                entry
            })
            .collect();
        Self { w, n, rows, meta }
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> &[IndexRow] {
        &self.rows
    }

    /// Total covered positions; always `n - w + 1` for a well-formed index.
    pub fn n_p_total(&self) -> usize {
        self.rows.iter().map(IndexRow::n_p).sum()
    }

    pub fn n_i_total(&self) -> usize {
        self.rows.iter().map(IndexRow::n_i).sum()
    }

    /// Serializes the index in the documented format.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(self.w as u32).to_le_bytes())?;
        out.write_all(&(self.n as u64).to_le_bytes())?;
        for row in &self.rows {
            out.write_all(&row.low.to_le_bytes())?;
            out.write_all(&row.up.to_le_bytes())?;
            out.write_all(&(row.intervals.len() as u64).to_le_bytes())?;
            for wi in &row.intervals {
                out.write_all(&(wi.l as u64).to_le_bytes())?;
                out.write_all(&(wi.r as u64).to_le_bytes())?;
            }
        }
        let meta_start = self
            .meta
            .last()
            .map(|e| e.pos + 24 + 16 * e.n_i)
            .unwrap_or(HEADER_LEN);
        for entry in &self.meta {
            out.write_all(&entry.low.to_le_bytes())?;
            out.write_all(&entry.up.to_le_bytes())?;
            out.write_all(&entry.pos.to_le_bytes())?;
            out.write_all(&entry.n_i.to_le_bytes())?;
            out.write_all(&entry.n_p.to_le_bytes())?;
        }
        out.write_all(&meta_start.to_le_bytes())?;
        out.write_all(&(self.meta.len() as u64).to_le_bytes())?;
        out.write_all(MAGIC)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_to_path<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = File::create(path)?;
        self.write_to(BufWriter::with_capacity(1 << 20, file))
    }

    /// Loads a serialized index fully into memory.
    pub fn read_from_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        FileIndex::open(path)?.load()
    }
}

/// Pass 1: fixed-width rows keyed by `floor(mean / d)`.
///
/// The rolling window sum is recomputed from the ring buffer every `w`
/// windows, which keeps the drift of any emitted mean within a few ulps of a
/// fresh summation at O(1) amortized cost per window.
fn fixed_width_pass(src: &dyn DataSource, w: usize, width: f64) -> Result<Vec<IndexRow>> {
    let n = src.len();
    let mut buckets: std::collections::BTreeMap<i64, Vec<WindowInterval>> =
        std::collections::BTreeMap::new();

    let mut ring = vec![0.0f64; w];
    let mut sum = 0.0f64;
    let mut seen = 0usize;
    // Consecutive windows usually stay in one row; buffering the current run
    // turns most windows into a counter bump instead of a map operation.
    let mut run: Option<(i64, WindowInterval)> = None;

    const CHUNK: usize = 1 << 20;
    let mut offset = 1usize;
    while offset <= n {
        let take = CHUNK.min(n - offset + 1);
        let chunk = src.fetch(offset, take)?;
        for v in chunk {
            let slot = seen % w;
            let old = ring[slot];
            ring[slot] = v;
            seen += 1;
            if seen < w {
                sum += v;
                continue;
            }
            let window_pos = seen - w + 1;
            if (window_pos - 1) % w == 0 {
                sum = ring.iter().sum();
            } else {
                sum += v - old;
            }
            let mean = sum / w as f64;
            let key = (mean / width).floor() as i64;
            match &mut run {
                Some((k, wi)) if *k == key => wi.r = window_pos,
                Some((k, wi)) => {
                    buckets.entry(*k).or_default().push(*wi);
                    *k = key;
                    *wi = WindowInterval::new(window_pos, window_pos);
                }
                None => run = Some((key, WindowInterval::new(window_pos, window_pos))),
            }
        }
        offset += take;
    }
    if let Some((k, wi)) = run {
        buckets.entry(k).or_default().push(wi);
    }

    Ok(buckets
        .into_iter()
        .map(|(key, intervals)| IndexRow {
            low: key as f64 * width,
            up: (key + 1) as f64 * width,
            intervals,
        })
        .collect())
}

/// Pass 2: one left-to-right greedy merge pass over adjacent row pairs. A
/// pair that merges is consumed; the merged row is not reconsidered.
fn merge_pass(rows: Vec<IndexRow>, gamma: f64) -> Vec<IndexRow> {
    let mut merged: Vec<IndexRow> = Vec::with_capacity(rows.len());
    let mut pending: Option<IndexRow> = None;
    for row in rows {
        match pending.take() {
            Some(prev) => {
                let union_count = union_n_i(&prev.intervals, &row.intervals);
                let separate = prev.n_i() + row.n_i();
                if (union_count as f64) < gamma * separate as f64 {
                    merged.push(IndexRow {
                        low: prev.low,
                        up: row.up,
                        intervals: union_intervals(&prev.intervals, &row.intervals),
                    });
                } else {
                    merged.push(prev);
                    pending = Some(row);
                }
            }
            None => pending = Some(row),
        }
    }
    if let Some(prev) = pending {
        merged.push(prev);
    }
    merged
}

/// Number of intervals the coalesced union of two rows' interval lists would
/// have, without materializing it.
fn union_n_i(a: &[WindowInterval], b: &[WindowInterval]) -> usize {
    let mut count = 0usize;
    let mut current: Option<WindowInterval> = None;
    for wi in merge_sorted(a, b) {
        match current {
            Some(ref mut cur) if wi.l <= cur.r + 1 => cur.r = cur.r.max(wi.r),
            Some(_) => {
                count += 1;
                current = Some(wi);
            }
            None => current = Some(wi),
        }
    }
    count + usize::from(current.is_some())
}

/// Coalesced union of two rows' interval lists. Positions never overlap
/// across rows, but runs that touch are merged into one interval.
fn union_intervals(a: &[WindowInterval], b: &[WindowInterval]) -> Vec<WindowInterval> {
    let mut out: Vec<WindowInterval> = Vec::with_capacity(a.len() + b.len());
    for wi in merge_sorted(a, b) {
        match out.last_mut() {
            Some(last) if wi.l <= last.r + 1 => last.r = last.r.max(wi.r),
            _ => out.push(wi),
        }
    }
    out
}

fn merge_sorted<'a>(
    a: &'a [WindowInterval],
    b: &'a [WindowInterval],
) -> impl Iterator<Item = WindowInterval> + 'a {
    let mut ai = a.iter().peekable();
    let mut bi = b.iter().peekable();
    std::iter::from_fn(move || match (ai.peek(), bi.peek()) {
        (Some(x), Some(y)) => {
            if x.l <= y.l {
                ai.next().copied()
            } else {
                bi.next().copied()
            }
        }
        (Some(_), None) => ai.next().copied(),
        (None, Some(_)) => bi.next().copied(),
        (None, None) => None,
    })
}

/// A disk-backed index: the meta table lives in memory, rows are fetched with
/// one positioned read per contiguous run.
pub struct FileIndex {
    file: File,
    w: usize,
    n: usize,
    meta: Vec<MetaEntry>,
    meta_start: u64,
}

impl FileIndex {
    pub fn open<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = File::open(path)?;
        let file_len = file.metadata()?.len();
        if file_len < HEADER_LEN + TRAILER_LEN {
            return Err(Error::CorruptIndex("file too short".into()));
        }

        let mut header = [0u8; HEADER_LEN as usize];
        file.read_exact_at(&mut header, 0)?;
        if &header[0..4] != MAGIC {
            return Err(Error::CorruptIndex("bad magic".into()));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::CorruptIndex(format!(
                "unsupported version {version}"
            )));
        }
        let w = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let n = u64::from_le_bytes(header[12..20].try_into().unwrap()) as usize;
        if w == 0 || n < w {
            return Err(Error::CorruptIndex(format!("bad dimensions w={w}, n={n}")));
        }

        let mut trailer = [0u8; TRAILER_LEN as usize];
        file.read_exact_at(&mut trailer, file_len - TRAILER_LEN)?;
        if &trailer[16..20] != MAGIC {
            return Err(Error::CorruptIndex("bad trailer magic".into()));
        }
        let meta_start = u64::from_le_bytes(trailer[0..8].try_into().unwrap());
        let meta_count = u64::from_le_bytes(trailer[8..16].try_into().unwrap());
        if meta_start < HEADER_LEN
            || meta_start + meta_count * META_ENTRY_LEN + TRAILER_LEN != file_len
        {
            return Err(Error::CorruptIndex("meta table does not fit".into()));
        }

        let mut meta_bytes = vec![0u8; (meta_count * META_ENTRY_LEN) as usize];
        file.read_exact_at(&mut meta_bytes, meta_start)?;
        let mut meta = Vec::with_capacity(meta_count as usize);
        let mut expected_pos = HEADER_LEN;
        let mut total_n_p = 0u64;
        for chunk in meta_bytes.chunks_exact(META_ENTRY_LEN as usize) {
            let entry = MetaEntry {
                low: f64::from_le_bytes(chunk[0..8].try_into().unwrap()),
                up: f64::from_le_bytes(chunk[8..16].try_into().unwrap()),
                pos: u64::from_le_bytes(chunk[16..24].try_into().unwrap()),
                n_i: u64::from_le_bytes(chunk[24..32].try_into().unwrap()),
                n_p: u64::from_le_bytes(chunk[32..40].try_into().unwrap()),
            };
            if !(entry.low < entry.up) {
                return Err(Error::CorruptIndex("row key is not a valid range".into()));
            }
            if let Some(prev) = meta.last() {
                let prev: &MetaEntry = prev;
                if entry.low < prev.up {
                    return Err(Error::CorruptIndex("row keys overlap".into()));
                }
            }
            if entry.pos != expected_pos {
                return Err(Error::CorruptIndex(format!(
                    "row offset {} does not follow the previous row (expected {})",
                    entry.pos, expected_pos
                )));
            }
            expected_pos += 24 + 16 * entry.n_i;
            total_n_p += entry.n_p;
            meta.push(entry);
        }
        if expected_pos != meta_start {
            return Err(Error::CorruptIndex("rows do not fill the body".into()));
        }
        if total_n_p != (n - w + 1) as u64 {
            return Err(Error::CorruptIndex(format!(
                "position counts sum to {total_n_p}, expected {}",
                n - w + 1
            )));
        }

        Ok(Self {
            file,
            w,
            n,
            meta,
            meta_start,
        })
    }

    /// Reads every row and returns the in-memory index.
    pub fn load(&self) -> Result<KVIndex> {
        let rows = if self.meta.is_empty() {
            Vec::new()
        } else {
            self.fetch_rows(0, self.meta.len() - 1)?
        };
        Ok(KVIndex::assemble(self.w, self.n, rows))
    }
}

impl IndexScan for FileIndex {
    fn window_len(&self) -> usize {
        self.w
    }

    fn series_len(&self) -> usize {
        self.n
    }

    fn meta(&self) -> &[MetaEntry] {
        &self.meta
    }

    fn fetch_rows(&self, first: usize, last: usize) -> Result<Vec<IndexRow>> {
        debug_assert!(first <= last && last < self.meta.len());
        let start = self.meta[first].pos;
        let end = self
            .meta
            .get(last + 1)
            .map(|e| e.pos)
            .unwrap_or(self.meta_start);
        let mut bytes = vec![0u8; (end - start) as usize];
        self.file.read_exact_at(&mut bytes, start)?;

        let mut rows = Vec::with_capacity(last - first + 1);
        let mut cursor = 0usize;
        for entry in &self.meta[first..=last] {
            let low = f64::from_le_bytes(bytes[cursor..cursor + 8].try_into().unwrap());
            let up = f64::from_le_bytes(bytes[cursor + 8..cursor + 16].try_into().unwrap());
            let count =
                u64::from_le_bytes(bytes[cursor + 16..cursor + 24].try_into().unwrap()) as usize;
            if low != entry.low || up != entry.up || count as u64 != entry.n_i {
                return Err(Error::CorruptIndex(
                    "row header disagrees with the meta table".into(),
                ));
            }
            cursor += 24;
            let mut intervals = Vec::with_capacity(count);
            for _ in 0..count {
                let l = u64::from_le_bytes(bytes[cursor..cursor + 8].try_into().unwrap()) as usize;
                let r =
                    u64::from_le_bytes(bytes[cursor + 8..cursor + 16].try_into().unwrap()) as usize;
                if l == 0 || l > r || r > self.n - self.w + 1 {
                    return Err(Error::CorruptIndex(format!("bad interval [{l}, {r}]")));
                }
                intervals.push(WindowInterval::new(l, r));
                cursor += 16;
            }
            rows.push(IndexRow { low, up, intervals });
        }
        Ok(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_series(seed: u64, len: usize) -> TimeSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(len);
        let mut v = 0.0f64;
        for _ in 0..len {
            v += rng.random_range(-1.0..1.0);
            values.push(v);
        }
        TimeSeries::new(values).unwrap()
    }

    fn wi(l: usize, r: usize) -> WindowInterval {
        WindowInterval::new(l, r)
    }

    #[test]
    fn zigzag_rows_merge_into_one_interval() {
        // V_i = {[5,5], [7,7]} and V_{i+1} = {[6,6], [8,8]}: coalesced union
        // has a single interval [5,8], ratio 1/4 < gamma, so the rows merge.
        let a = IndexRow {
            low: 0.0,
            up: 0.5,
            intervals: vec![wi(5, 5), wi(7, 7)],
        };
        let b = IndexRow {
            low: 0.5,
            up: 1.0,
            intervals: vec![wi(6, 6), wi(8, 8)],
        };
        assert_eq!(union_n_i(&a.intervals, &b.intervals), 1);
        let merged = merge_pass(vec![a, b], DEFAULT_MERGE_THRESHOLD);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].low, 0.0);
        assert_eq!(merged[0].up, 1.0);
        assert_eq!(merged[0].intervals, vec![wi(5, 8)]);
    }

    #[test]
    fn disjoint_rows_do_not_merge() {
        let a = IndexRow {
            low: 0.0,
            up: 0.5,
            intervals: vec![wi(1, 1)],
        };
        let b = IndexRow {
            low: 0.5,
            up: 1.0,
            intervals: vec![wi(100, 100)],
        };
        // Ratio is 2/2 = 1, never below a threshold <= 1.
        let merged = merge_pass(vec![a.clone(), b.clone()], 1.0);
        assert_eq!(merged, vec![a, b]);
    }

    #[test]
    fn merge_consumes_pairs_without_cascading() {
        // The first two rows merge; the third would also interleave with the
        // merged result but stays separate because the pass moves on.
        let rows = vec![
            IndexRow {
                low: 0.0,
                up: 0.5,
                intervals: vec![wi(1, 1), wi(3, 3)],
            },
            IndexRow {
                low: 0.5,
                up: 1.0,
                intervals: vec![wi(2, 2), wi(4, 4)],
            },
            IndexRow {
                low: 1.0,
                up: 1.5,
                intervals: vec![wi(5, 5)],
            },
        ];
        let merged = merge_pass(rows, 0.8);
        assert_eq!(merged.len(), 2);
        assert_eq!(merged[0].intervals, vec![wi(1, 4)]);
        assert_eq!(merged[0].low, 0.0);
        assert_eq!(merged[0].up, 1.0);
        assert_eq!(merged[1].intervals, vec![wi(5, 5)]);
    }

    #[test]
    fn build_conserves_positions() {
        let series = random_series(31, 10_000);
        let idx = KVIndex::build(&series, 50, &BuildParams::default()).unwrap();
        assert_eq!(idx.n_p_total(), 10_000 - 50 + 1);
        // Row keys strictly ascending and disjoint.
        for pair in idx.rows().windows(2) {
            assert!(pair[0].up <= pair[1].low);
        }
        // Within each row: sorted, disjoint, non-adjacent.
        for row in idx.rows() {
            for pair in row.intervals.windows(2) {
                assert!(pair[0].r + 1 < pair[1].l);
            }
        }
    }

    #[test]
    fn build_membership_matches_recomputed_means() {
        let series = random_series(32, 2_000);
        let w = 16;
        let idx = KVIndex::build(&series, w, &BuildParams::default()).unwrap();
        let values = series.values();
        for row in idx.rows() {
            for pos in row.intervals.iter().flat_map(|wi| wi.l..=wi.r) {
                let mean: f64 =
                    values[pos - 1..pos - 1 + w].iter().sum::<f64>() / w as f64;
                assert!(
                    row.low <= mean && mean < row.up,
                    "mean {mean} outside [{}, {}) at position {pos}",
                    row.low,
                    row.up
                );
            }
        }
    }

    #[test]
    fn gap_separated_rows_never_merge() {
        // Two rows whose interval runs neither interleave nor touch: the
        // coalesced union keeps both intervals, the ratio is exactly 1, and
        // 1 < gamma never holds for gamma <= 1.
        let a = IndexRow {
            low: 0.0,
            up: 0.5,
            intervals: vec![wi(10, 15)],
        };
        let b = IndexRow {
            low: 0.5,
            up: 1.0,
            intervals: vec![wi(30, 35)],
        };
        assert_eq!(union_n_i(&a.intervals, &b.intervals), 2);
        let merged = merge_pass(vec![a.clone(), b.clone()], 1.0);
        assert_eq!(merged, vec![a, b]);
    }

    #[test]
    fn monotone_ramp_merges_pairwise_only() {
        // Strictly increasing means put consecutive window positions in
        // consecutive rows; each adjacent pair coalesces (ratio 1/2) and the
        // single pass merges disjoint pairs, halving the table exactly once.
        let values: Vec<f64> = (0..64).map(|i| i as f64 * 2.0).collect();
        let series = TimeSeries::new(values).unwrap();
        let idx = KVIndex::build(&series, 1, &BuildParams::default()).unwrap();
        assert_eq!(idx.rows().len(), 32);
        for (i, row) in idx.rows().iter().enumerate() {
            assert_eq!(row.intervals, vec![wi(2 * i + 1, 2 * i + 2)]);
        }
        // A threshold at or below the 1/2 ratio keeps every singleton row.
        let unmerged = KVIndex::build(
            &series,
            1,
            &BuildParams {
                width: 0.5,
                merge_threshold: 0.5,
            },
        )
        .unwrap();
        assert_eq!(unmerged.rows().len(), 64);
        assert!(unmerged.rows().iter().all(|r| r.intervals.len() == 1));
    }

    /// Engineered series whose only windows with means in [1.5, 2.0) are the
    /// sliding windows 1000..=1002.
    fn plateau_series() -> TimeSeries {
        let mut values = vec![0.0f64; 1_200];
        values[998] = -50.0; // position 999
        for v in values.iter_mut().take(1_051).skip(999) {
            *v = 1.75; // positions 1000..=1051
        }
        values[1051] = -50.0; // position 1052
        TimeSeries::new(values).unwrap()
    }

    #[test]
    fn plateau_row_and_scan() {
        let series = plateau_series();
        let idx = KVIndex::build(
            &series,
            50,
            &BuildParams {
                width: 0.5,
                merge_threshold: 0.01,
            },
        )
        .unwrap();
        let row = idx
            .rows()
            .iter()
            .find(|r| r.low == 1.5 && r.up == 2.0)
            .expect("row [1.5, 2.0) must exist");
        assert_eq!(row.intervals, vec![wi(1000, 1002)]);
        assert_eq!(row.n_i(), 1);
        assert_eq!(row.n_p(), 3);

        let result = idx
            .scan(&MeanRange {
                lower: 1.6,
                upper: 1.9,
            })
            .unwrap();
        assert_eq!(result.rows_scanned, 1);
        assert_eq!(result.intervals.intervals(), &[wi(1000, 1002)]);
        assert_eq!(
            idx.estimate_n_i(&MeanRange {
                lower: 1.6,
                upper: 1.9
            }),
            1
        );
    }

    #[test]
    fn scan_below_all_keys_is_empty() {
        let series = random_series(33, 500);
        let idx = KVIndex::build(&series, 10, &BuildParams::default()).unwrap();
        let lowest = idx.rows().first().unwrap().low;
        let result = idx
            .scan(&MeanRange {
                lower: lowest - 10.0,
                upper: lowest - 5.0,
            })
            .unwrap();
        assert!(result.intervals.is_empty());
        assert_eq!(result.rows_scanned, 0);
    }

    #[test]
    fn scan_covering_everything_conserves_positions() {
        let series = random_series(34, 3_000);
        let idx = KVIndex::build(&series, 25, &BuildParams::default()).unwrap();
        let range = MeanRange {
            lower: f64::MIN,
            upper: f64::MAX,
        };
        let result = idx.scan(&range).unwrap();
        assert_eq!(result.intervals.n_p(), 3_000 - 25 + 1);
        assert_eq!(result.rows_scanned, idx.rows().len());
        // Meta-table estimate never undercounts the coalesced scan.
        assert!(idx.estimate_n_i(&range) >= result.intervals.n_i() as u64);
    }

    #[test]
    fn scan_boundary_semantics_are_half_open() {
        let series = plateau_series();
        let idx = KVIndex::build(
            &series,
            50,
            &BuildParams {
                width: 0.5,
                merge_threshold: 0.01,
            },
        )
        .unwrap();
        // A range ending exactly at a key's low touches that row; a range
        // starting exactly at a key's up does not.
        let at_low = idx
            .scan(&MeanRange {
                lower: 1.0,
                upper: 1.5,
            })
            .unwrap();
        assert!(at_low
            .intervals
            .intervals()
            .contains(&wi(1000, 1002)));
        let at_up = idx
            .scan(&MeanRange {
                lower: 2.0,
                upper: 2.4,
            })
            .unwrap();
        assert!(!at_up.intervals.intervals().contains(&wi(1000, 1002)));
    }

    #[test]
    fn estimate_upper_bounds_scan(){
        let series = random_series(35, 5_000);
        let idx = KVIndex::build(&series, 20, &BuildParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        for _ in 0..200 {
            let a: f64 = rng.random_range(-30.0..30.0);
            let b: f64 = rng.random_range(-30.0..30.0);
            let range = MeanRange {
                lower: a.min(b),
                upper: a.max(b),
            };
            let scan = idx.scan(&range).unwrap();
            assert!(idx.estimate_n_i(&range) >= scan.intervals.n_i() as u64);
        }
    }

    #[test]
    fn serialization_round_trip_is_field_identical() {
        let series = random_series(37, 10_000);
        let idx = KVIndex::build(&series, 50, &BuildParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.kvi");
        idx.write_to_path(&path).unwrap();
        let loaded = KVIndex::read_from_path(&path).unwrap();
        assert_eq!(idx, loaded);
        assert_eq!(loaded.n_p_total(), 10_000 - 50 + 1);

        // Disk-backed scans agree with in-memory scans.
        let file_idx = FileIndex::open(&path).unwrap();
        let range = MeanRange {
            lower: -5.0,
            upper: 5.0,
        };
        let a = idx.scan(&range).unwrap();
        let b = file_idx.scan(&range).unwrap();
        assert_eq!(a.intervals, b.intervals);
        assert_eq!(a.rows_scanned, b.rows_scanned);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let series = random_series(38, 1_000);
        let idx = KVIndex::build(&series, 10, &BuildParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.kvi");
        idx.write_to_path(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        for keep in [10, bytes.len() / 2, bytes.len() - 1] {
            let truncated = dir.path().join(format!("trunc_{keep}.kvi"));
            std::fs::write(&truncated, &bytes[..keep]).unwrap();
            assert!(
                matches!(FileIndex::open(&truncated), Err(Error::CorruptIndex(_))),
                "keep={keep}"
            );
        }
    }

    #[test]
    fn window_means_agree_with_rolling_build() {
        // The block-refreshed rolling mean must stay within a few ulps of the
        // per-window summation used everywhere else.
        let series = random_series(39, 4_000);
        let w = 32;
        let idx = KVIndex::build(&series, w, &BuildParams::default()).unwrap();
        let mut owner = vec![None; series.len() - w + 2];
        for (ri, row) in idx.rows().iter().enumerate() {
            for pos in row.intervals.iter().flat_map(|wi| wi.l..=wi.r) {
                assert!(owner[pos].is_none(), "position {pos} in two rows");
                owner[pos] = Some(ri);
            }
        }
        for pos in 1..=series.len() - w + 1 {
            let mean: f64 =
                series.values()[pos - 1..pos - 1 + w].iter().sum::<f64>() / w as f64;
            let row = &idx.rows()[owner[pos].unwrap()];
            assert!(
                row.low - 1e-9 <= mean && mean < row.up + 1e-9,
                "position {pos}: fresh mean {mean} vs row [{}, {})",
                row.low,
                row.up
            );
        }
    }
}
