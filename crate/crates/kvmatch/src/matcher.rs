//! The two-phase matching algorithm.
//!
//! Phase 1 probes the index once per query window: compute the window's
//! admissible mean range, scan the matching rows, shift the found intervals
//! left by the window's offset into the query, and intersect across windows.
//! Phase 2 fetches the covering subsequences for the surviving candidate set
//! and verifies every candidate offset against the query definition.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::bounds::{envelope, window_mean_range, Envelope, PaaBound};
use crate::error::{Error, Result};
use crate::index::IndexScan;
use crate::interval::IntervalSet;
use crate::series::{
    dtw_banded, ed_sq_within, meets_cnsm_constraints, normalize_into, MatchKind,
    NormalizationStats, QuerySpec,
};
use crate::source::DataSource;

/// A verified match: 1-based start offset and its distance from the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchResult {
    pub offset: usize,
    pub distance: f64,
}

/// One query window of a (possibly variable-length) segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryWindow {
    /// 1-based offset into the query.
    pub start: usize,
    pub len: usize,
}

/// Per-window probe statistics.
#[derive(Debug, Clone, Copy)]
pub struct WindowStats {
    pub window: QueryWindow,
    /// Rows of the index whose key range intersected the window's mean range.
    pub rows_scanned: usize,
    /// Contiguous read operations issued against the index.
    pub scan_ops: usize,
    /// Interval / position counts of the scanned set `IS_i`.
    pub n_i: usize,
    pub n_p: usize,
}

/// Everything a query reports besides the matches themselves.
#[derive(Debug, Clone, Default)]
pub struct QueryStats {
    pub windows: Vec<WindowStats>,
    pub cs_n_i: usize,
    pub cs_n_p: usize,
    pub candidates_verified: usize,
    pub matches: usize,
    pub phase1: Duration,
    pub phase2: Duration,
    /// The chosen segmentation when the dynamic planner ran.
    pub segmentation: Option<Vec<QueryWindow>>,
}

impl QueryStats {
    pub fn rows_scanned_total(&self) -> usize {
        self.windows.iter().map(|w| w.rows_scanned).sum()
    }

    pub fn scan_ops_total(&self) -> usize {
        self.windows.iter().map(|w| w.scan_ops).sum()
    }
}

/// Order in which query windows are probed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowOrder {
    /// Left to right, as they appear in the query.
    #[default]
    Natural,
    /// Ascending by the meta-table interval-count estimate, so cheap windows
    /// shrink the candidate set first.
    EstimateAscending,
}

/// Knobs of the matching algorithm. The defaults probe every window in
/// natural order and verify with the PAA prefilter for DTW queries.
#[derive(Debug, Clone, Copy)]
pub struct MatchConfig {
    pub window_order: WindowOrder,
    /// Process at most this many query windows; correctness does not depend
    /// on probing them all, only pruning power does.
    pub max_windows: Option<usize>,
    /// Cache fetched rows within one query and fetch only missing runs.
    pub row_cache: bool,
    /// Skip DTW verification when the PAA lower bound already exceeds epsilon.
    pub lb_paa_filter: bool,
    /// Verify candidate groups in parallel; output order stays deterministic.
    pub parallel_verify: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            window_order: WindowOrder::Natural,
            max_windows: None,
            row_cache: false,
            lb_paa_filter: true,
            parallel_verify: true,
        }
    }
}

/// Outcome of phase 1: the candidate set and what it cost to produce.
#[derive(Debug, Clone)]
pub struct ProbeOutcome {
    pub candidates: IntervalSet,
    pub windows: Vec<WindowStats>,
}

pub(crate) struct PlannedWindow<'a> {
    pub window: QueryWindow,
    pub index: &'a dyn IndexScan,
}

/// Phase 1 for a single fixed-width index: `floor(|Q| / w)` uniform windows.
pub fn probe(idx: &dyn IndexScan, spec: &QuerySpec, cfg: &MatchConfig) -> Result<ProbeOutcome> {
    let w = idx.window_len();
    let m = spec.query().len();
    if m < w {
        return Err(Error::QueryTooShort { len: m, w });
    }
    let p = m / w;
    let plan: Vec<PlannedWindow> = (0..p)
        .map(|i| PlannedWindow {
            window: QueryWindow {
                start: i * w + 1,
                len: w,
            },
            index: idx,
        })
        .collect();
    probe_windows(&plan, spec, idx.series_len(), cfg)
}

/// Phase 1 over an explicit window plan (uniform or from the DP planner).
pub(crate) fn probe_windows(
    plan: &[PlannedWindow],
    spec: &QuerySpec,
    n: usize,
    cfg: &MatchConfig,
) -> Result<ProbeOutcome> {
    let m = spec.query().len();
    if n < m {
        return Err(Error::InvalidParameter(format!(
            "query of length {m} is longer than the series ({n})"
        )));
    }
    if cfg.max_windows == Some(0) {
        return Err(Error::InvalidParameter(
            "max_windows must be at least 1".into(),
        ));
    }
    let env = match spec.kind() {
        MatchKind::RsmDtw | MatchKind::CnsmDtw => Some(envelope(
            spec.query().values(),
            spec.rho().expect("rho required for DTW"),
        )?),
        _ => None,
    };

    // Window ranges first: ordering by estimate needs them all anyway.
    let mut windows: Vec<(PlannedWindow, crate::bounds::MeanRange)> = plan
        .iter()
        .map(|pw| {
            let range = window_mean_range(spec, env.as_ref(), pw.window.start, pw.window.len)?;
            Ok((
                PlannedWindow {
                    window: pw.window,
                    index: pw.index,
                },
                range,
            ))
        })
        .collect::<Result<_>>()?;
    if cfg.window_order == WindowOrder::EstimateAscending {
        windows.sort_by_key(|(pw, range)| (pw.index.estimate_n_i(range), pw.window.start));
    }
    let keep = cfg.max_windows.unwrap_or(windows.len()).min(windows.len());
    windows.truncate(keep);

    let max_start = n - m + 1;
    let mut cache: HashMap<(usize, usize), crate::index::IndexRow> = HashMap::new();
    let mut stats = Vec::with_capacity(windows.len());
    let mut candidates: Option<IntervalSet> = None;

    for (pw, range) in &windows {
        let (set, rows_scanned, scan_ops) = if cfg.row_cache {
            scan_with_cache(pw.index, range, &mut cache)?
        } else {
            let scan = pw.index.scan(range)?;
            (scan.intervals, scan.rows_scanned, 1)
        };
        stats.push(WindowStats {
            window: pw.window,
            rows_scanned,
            scan_ops,
            n_i: set.n_i(),
            n_p: set.n_p(),
        });
        let shifted = set.shift_clip(pw.window.start - 1, max_start);
        candidates = Some(match candidates {
            None => shifted,
            Some(cs) => cs.intersect(&shifted),
        });
        if candidates.as_ref().unwrap().is_empty() {
            break;
        }
    }

    Ok(ProbeOutcome {
        candidates: candidates.unwrap_or_default(),
        windows: stats,
    })
}

/// Range scan that reuses rows already fetched for this query and reads only
/// the missing contiguous runs.
fn scan_with_cache(
    idx: &dyn IndexScan,
    range: &crate::bounds::MeanRange,
    cache: &mut HashMap<(usize, usize), crate::index::IndexRow>,
) -> Result<(IntervalSet, usize, usize)> {
    let Some((first, last)) = crate::index::meta_row_range(idx.meta(), range) else {
        return Ok((IntervalSet::empty(), 0, 1));
    };
    let key = idx.window_len();
    let mut scan_ops = 0;
    let mut run_start: Option<usize> = None;
    for row in first..=last {
        let missing = !cache.contains_key(&(key, row));
        if missing && run_start.is_none() {
            run_start = Some(row);
        }
        if !missing || row == last {
            if let Some(start) = run_start.take() {
                let end = if missing { row } else { row - 1 };
                for (i, fetched) in idx.fetch_rows(start, end)?.into_iter().enumerate() {
                    cache.insert((key, start + i), fetched);
                }
                scan_ops += 1;
            }
        }
    }
    let mut intervals = Vec::new();
    for row in first..=last {
        intervals.extend_from_slice(&cache[&(key, row)].intervals);
    }
    Ok((
        IntervalSet::from_unsorted(intervals),
        last - first + 1,
        scan_ops.max(1),
    ))
}

/// Per-candidate verification logic, built once per query.
struct CandidateEvaluator {
    kind: MatchKind,
    epsilon: f64,
    query: Vec<f64>,
    query_stats: NormalizationStats,
    alpha: f64,
    beta: f64,
    rho: usize,
    /// Normalized query for the constrained kinds.
    query_hat: Vec<f64>,
    /// PAA bound against the (plain or normalized) query envelope.
    paa: Option<PaaBound>,
}

impl CandidateEvaluator {
    fn new(spec: &QuerySpec, cfg: &MatchConfig, lb_window: usize) -> Result<Self> {
        let query = spec.query().values().to_vec();
        let query_stats = spec.query_stats();
        let rho = spec.rho().unwrap_or(0);
        let query_hat = if spec.kind().is_normalized() {
            let mut hat = Vec::with_capacity(query.len());
            normalize_into(&query, query_stats, &mut hat);
            hat
        } else {
            Vec::new()
        };
        let paa = if spec.kind().is_dtw() && cfg.lb_paa_filter {
            let reference: &[f64] = if spec.kind().is_normalized() {
                &query_hat
            } else {
                &query
            };
            let env: Envelope = envelope(reference, rho)?;
            Some(PaaBound::new(&env, lb_window))
        } else {
            None
        };
        Ok(Self {
            kind: spec.kind(),
            epsilon: spec.epsilon(),
            query,
            query_stats,
            alpha: spec.alpha().unwrap_or(1.0),
            beta: spec.beta().unwrap_or(0.0),
            rho,
            query_hat,
            paa,
        })
    }

    /// Thresholds carry a hair of slack so the cheap rejection paths only
    /// ever drop candidates that the full computation would also reject.
    fn ed_cutoff(&self) -> f64 {
        self.epsilon * self.epsilon * (1.0 + 1e-12) + 1e-12
    }

    fn lb_cutoff(&self) -> f64 {
        self.epsilon * (1.0 + 1e-12) + 1e-12
    }

    fn accept_ed(&self, s: &[f64], reference: &[f64]) -> Option<f64> {
        let sq = ed_sq_within(s, reference, self.ed_cutoff())?;
        let d = sq.sqrt();
        (d <= self.epsilon).then_some(d)
    }

    fn accept_dtw(&self, s: &[f64], reference: &[f64]) -> Option<f64> {
        if let Some(paa) = &self.paa {
            if paa.evaluate_series(s) > self.lb_cutoff() {
                return None;
            }
        }
        let d = dtw_banded(s, reference, self.rho);
        (d <= self.epsilon).then_some(d)
    }

    /// Distance of an accepted candidate, or `None` when it fails the
    /// constraints or the threshold.
    fn evaluate(&self, s: &[f64], scratch: &mut Vec<f64>) -> Option<f64> {
        match self.kind {
            MatchKind::RsmEd => self.accept_ed(s, &self.query),
            MatchKind::RsmDtw => self.accept_dtw(s, &self.query),
            MatchKind::CnsmEd | MatchKind::CnsmDtw => {
                let stats = NormalizationStats::compute(s);
                if !meets_cnsm_constraints(stats, self.query_stats, self.alpha, self.beta) {
                    return None;
                }
                normalize_into(s, stats, scratch);
                if self.kind == MatchKind::CnsmEd {
                    self.accept_ed(scratch, &self.query_hat)
                } else {
                    // Borrow juggling: scratch is the normalized candidate.
                    let s_hat = std::mem::take(scratch);
                    let out = self.accept_dtw(&s_hat, &self.query_hat);
                    *scratch = s_hat;
                    out
                }
            }
        }
    }
}

/// Phase 2: fetch each candidate interval's covering subsequence and verify
/// every offset in it. Overlapping fetch spans are coalesced so no byte is
/// read twice; groups may be verified in parallel.
pub fn verify(
    data: &dyn DataSource,
    candidates: &IntervalSet,
    spec: &QuerySpec,
    cfg: &MatchConfig,
) -> Result<Vec<MatchResult>> {
    let m = spec.query().len();
    let lb_window = default_lb_window(m);
    verify_with_evaluator(
        data,
        candidates,
        &CandidateEvaluator::new(spec, cfg, lb_window)?,
        m,
        cfg,
    )
}

fn default_lb_window(m: usize) -> usize {
    (m / 8).max(1)
}

fn verify_with_evaluator(
    data: &dyn DataSource,
    candidates: &IntervalSet,
    evaluator: &CandidateEvaluator,
    m: usize,
    cfg: &MatchConfig,
) -> Result<Vec<MatchResult>> {
    // Coalesce intervals whose fetch spans [l, r + m - 1] touch or overlap.
    let mut groups: Vec<(usize, usize, Vec<crate::interval::WindowInterval>)> = Vec::new();
    for wi in candidates.intervals() {
        let span_end = wi.r + m - 1;
        match groups.last_mut() {
            Some((_, end, members)) if wi.l <= *end + 1 => {
                *end = (*end).max(span_end);
                members.push(*wi);
            }
            _ => groups.push((wi.l, span_end, vec![*wi])),
        }
    }

    let verify_group = |(start, end, members): &(usize, usize, Vec<crate::interval::WindowInterval>)|
     -> Result<Vec<MatchResult>> {
        let buf = data.fetch(*start, *end - *start + 1)?;
        let mut scratch = Vec::with_capacity(m);
        let mut out = Vec::new();
        for wi in members {
            for offset in wi.l..=wi.r {
                let s = &buf[offset - start..offset - start + m];
                if let Some(distance) = evaluator.evaluate(s, &mut scratch) {
                    out.push(MatchResult { offset, distance });
                }
            }
        }
        Ok(out)
    };

    let nested: Vec<Vec<MatchResult>> = if cfg.parallel_verify && groups.len() > 1 {
        groups.par_iter().map(verify_group).collect::<Result<_>>()?
    } else {
        groups.iter().map(verify_group).collect::<Result<_>>()?
    };
    let results: Vec<MatchResult> = nested.into_iter().flatten().collect();
    debug_assert!(results.windows(2).all(|w| w[0].offset < w[1].offset));
    Ok(results)
}

/// The full matching algorithm: probe, then verify.
pub fn match_subsequence(
    data: &dyn DataSource,
    idx: &dyn IndexScan,
    spec: &QuerySpec,
    cfg: &MatchConfig,
) -> Result<(Vec<MatchResult>, QueryStats)> {
    if data.len() != idx.series_len() {
        return Err(Error::InvalidParameter(format!(
            "index was built over {} values but the data holds {}",
            idx.series_len(),
            data.len()
        )));
    }
    let started = Instant::now();
    let outcome = probe(idx, spec, cfg)?;
    let phase1 = started.elapsed();

    let evaluator = CandidateEvaluator::new(spec, cfg, idx.window_len())?;
    let verifying = Instant::now();
    let results =
        verify_with_evaluator(data, &outcome.candidates, &evaluator, spec.query().len(), cfg)?;
    let phase2 = verifying.elapsed();

    let stats = QueryStats {
        cs_n_i: outcome.candidates.n_i(),
        cs_n_p: outcome.candidates.n_p(),
        candidates_verified: outcome.candidates.n_p(),
        matches: results.len(),
        windows: outcome.windows,
        phase1,
        phase2,
        segmentation: None,
    };
    Ok((results, stats))
}

pub(crate) fn match_planned(
    data: &dyn DataSource,
    plan: &[PlannedWindow],
    lb_window: usize,
    spec: &QuerySpec,
    cfg: &MatchConfig,
) -> Result<(Vec<MatchResult>, QueryStats)> {
    let n = data.len();
    let started = Instant::now();
    let outcome = probe_windows(plan, spec, n, cfg)?;
    let phase1 = started.elapsed();

    let evaluator = CandidateEvaluator::new(spec, cfg, lb_window)?;
    let verifying = Instant::now();
    let results =
        verify_with_evaluator(data, &outcome.candidates, &evaluator, spec.query().len(), cfg)?;
    let phase2 = verifying.elapsed();

    let stats = QueryStats {
        cs_n_i: outcome.candidates.n_i(),
        cs_n_p: outcome.candidates.n_p(),
        candidates_verified: outcome.candidates.n_p(),
        matches: results.len(),
        windows: outcome.windows,
        phase1,
        phase2,
        segmentation: None,
    };
    Ok((results, stats))
}
