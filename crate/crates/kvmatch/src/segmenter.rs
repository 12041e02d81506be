//! Dynamic query segmentation over a family of doubling window lengths.
//!
//! A query is tiled with disjoint windows whose lengths come from
//! `{w_u * 2^(k-1) | 1 <= k <= L}`, each window probed against the index of
//! its own length. The tiling is chosen by a two-dimensional dynamic program
//! minimizing the geometric mean of the per-window interval-count estimates,
//! normalized by the series length: fewer, tighter windows mean fewer
//! candidate fetches in phase 2. Segmentation only affects cost; the result
//! set is the same for every valid tiling.

use crate::bounds::{envelope, window_mean_range};
use crate::error::{Error, Result};
use crate::index::IndexScan;
use crate::matcher::{
    match_planned, MatchConfig, MatchResult, PlannedWindow, QueryStats, QueryWindow,
};
use crate::series::{MatchKind, QuerySpec};
use crate::source::DataSource;

/// Default number of index levels.
pub const DEFAULT_LEVELS: usize = 5;
/// Estimates of zero are floored to this value so log-domain scores stay
/// finite; relative order among nonzero estimates is unaffected.
pub const DEFAULT_ZERO_COST_FLOOR: u64 = 1;

/// Indexes over the same series with window lengths forming a doubling
/// ladder starting at the base length.
#[derive(Debug)]
pub struct IndexFamily<I> {
    base: usize,
    indexes: Vec<I>,
}

impl<I: IndexScan> IndexFamily<I> {
    pub fn new(mut indexes: Vec<I>) -> Result<Self> {
        if indexes.is_empty() {
            return Err(Error::InvalidParameter(
                "an index family needs at least one index".into(),
            ));
        }
        indexes.sort_by_key(|idx| idx.window_len());
        let base = indexes[0].window_len();
        let n = indexes[0].series_len();
        for (k, idx) in indexes.iter().enumerate() {
            if idx.window_len() != base << k {
                return Err(Error::InvalidParameter(format!(
                    "window lengths must double from {base}, found {}",
                    idx.window_len()
                )));
            }
            if idx.series_len() != n {
                return Err(Error::InvalidParameter(
                    "family indexes cover different series lengths".into(),
                ));
            }
        }
        Ok(Self { base, indexes })
    }

    pub fn base_window(&self) -> usize {
        self.base
    }

    pub fn levels(&self) -> usize {
        self.indexes.len()
    }

    pub fn series_len(&self) -> usize {
        self.indexes[0].series_len()
    }

    pub fn window_lengths(&self) -> Vec<usize> {
        self.indexes.iter().map(|i| i.window_len()).collect()
    }

    /// The index built with window length `w`, if `w` is on the ladder.
    pub fn index_for(&self, w: usize) -> Option<&I> {
        self.indexes.iter().find(|i| i.window_len() == w)
    }

    pub fn indexes(&self) -> &[I] {
        &self.indexes
    }
}

/// The per-window quality measure: `(1/n) * (prod n_I)^(1/p)`, evaluated in
/// the log domain. A zero factor makes the whole objective zero.
pub fn objective(n_i_values: &[u64], n: usize) -> f64 {
    assert!(!n_i_values.is_empty(), "objective needs at least one window");
    if n_i_values.iter().any(|&v| v == 0) {
        return 0.0;
    }
    let log_mean = n_i_values.iter().map(|&v| (v as f64).ln()).sum::<f64>()
        / n_i_values.len() as f64;
    log_mean.exp() / n as f64
}

/// A chosen tiling of the query and its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub windows: Vec<QueryWindow>,
    pub score: f64,
}

/// A tiling in unit space: `(start_unit, phi)` pairs, both 1-based units of
/// the base window length, plus the floored cost per window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitSegmentation {
    pub windows: Vec<(usize, usize)>,
    pub costs: Vec<u64>,
}

/// The dynamic program over the unit grid `1..=m_units`.
///
/// `v[i][j]` is the best score of tiling the prefix of length `i` with `j`
/// windows; the transition tries every `phi = 2^(k-1) <= i` and evaluates the
/// `j`-th root of `v[i-phi][j-1]^(j-1) * cost(i-phi+1, phi)` in logs. Ties
/// between window counts prefer more windows.
pub fn segment_units<F: Fn(usize, usize) -> u64>(
    m_units: usize,
    levels: usize,
    zero_floor: u64,
    cost: F,
) -> Result<UnitSegmentation> {
    if m_units == 0 {
        return Err(Error::InvalidParameter("empty unit grid".into()));
    }
    if levels == 0 {
        return Err(Error::InvalidParameter("need at least one level".into()));
    }

    // Floored log-cost of the window of phi units ending at unit i.
    let phis: Vec<usize> = (0..levels)
        .map(|k| 1usize << k)
        .take_while(|&phi| phi <= m_units)
        .collect();
    let mut log_cost = vec![vec![f64::INFINITY; m_units + 1]; phis.len()];
    let mut raw_cost = vec![vec![0u64; m_units + 1]; phis.len()];
    for (ki, &phi) in phis.iter().enumerate() {
        for end in phi..=m_units {
            let c = cost(end - phi + 1, phi).max(zero_floor);
            raw_cost[ki][end] = c;
            log_cost[ki][end] = (c as f64).ln();
        }
    }

    let mut v = vec![vec![f64::INFINITY; m_units + 1]; m_units + 1];
    let mut back = vec![vec![0usize; m_units + 1]; m_units + 1];
    v[0][0] = 0.0;
    for i in 1..=m_units {
        for j in 1..=i {
            let mut best = f64::INFINITY;
            let mut best_phi = 0;
            for (ki, &phi) in phis.iter().enumerate() {
                if phi > i {
                    break;
                }
                let prev = v[i - phi][j - 1];
                if !prev.is_finite() {
                    continue;
                }
                let score = ((j - 1) as f64 * prev + log_cost[ki][i]) / j as f64;
                if score < best {
                    best = score;
                    best_phi = phi;
                }
            }
            v[i][j] = best;
            back[i][j] = best_phi;
        }
    }

    let mut best_j = 0;
    let mut best = f64::INFINITY;
    for j in 1..=m_units {
        if v[m_units][j] <= best {
            best = v[m_units][j];
            best_j = j;
        }
    }
    debug_assert!(best.is_finite(), "all-unit tiling is always feasible");

    let mut windows = Vec::with_capacity(best_j);
    let mut costs = Vec::with_capacity(best_j);
    let (mut i, mut j) = (m_units, best_j);
    while j > 0 {
        let phi = back[i][j];
        let start = i - phi + 1;
        let ki = phis.iter().position(|&p| p == phi).unwrap();
        windows.push((start, phi));
        costs.push(raw_cost[ki][i]);
        i -= phi;
        j -= 1;
    }
    windows.reverse();
    costs.reverse();
    Ok(UnitSegmentation { windows, costs })
}

/// Chooses the segmentation of the query for this index family, costing each
/// candidate window by the meta-table estimate of its scan on the index of
/// its own length.
pub fn segment<I: IndexScan>(spec: &QuerySpec, fam: &IndexFamily<I>) -> Result<Segmentation> {
    let m = spec.query().len();
    let w_u = fam.base_window();
    if m < w_u {
        return Err(Error::QueryTooShort { len: m, w: w_u });
    }
    let m_units = m / w_u;
    let env = match spec.kind() {
        MatchKind::RsmDtw | MatchKind::CnsmDtw => Some(envelope(
            spec.query().values(),
            spec.rho().expect("rho required for DTW"),
        )?),
        _ => None,
    };

    // Estimate table, indexed the same way the DP asks for it.
    let mut estimates: Vec<Vec<u64>> = Vec::with_capacity(fam.levels());
    for k in 0..fam.levels() {
        let phi = 1usize << k;
        let w = phi * w_u;
        let mut row = vec![0u64; m_units + 1];
        if phi <= m_units {
            let idx = fam.index_for(w).expect("ladder is validated");
            for end in phi..=m_units {
                let start = (end - phi) * w_u + 1;
                let range = window_mean_range(spec, env.as_ref(), start, w)?;
                row[end] = idx.estimate_n_i(&range);
            }
        }
        estimates.push(row);
    }

    let units = segment_units(m_units, fam.levels(), DEFAULT_ZERO_COST_FLOOR, |start, phi| {
        let k = phi.trailing_zeros() as usize;
        estimates[k][start + phi - 1]
    })?;

    let windows = map_units_to_windows(&units.windows, w_u);
    let score = objective(&units.costs, fam.series_len());
    Ok(Segmentation { windows, score })
}

/// Maps a unit-space tiling onto query windows: unit `(start_unit, phi)`
/// becomes the window of `phi * w_u` values starting at value
/// `(start_unit - 1) * w_u + 1`.
pub fn map_units_to_windows(units: &[(usize, usize)], w_u: usize) -> Vec<QueryWindow> {
    units
        .iter()
        .map(|&(start_unit, phi)| QueryWindow {
            start: (start_unit - 1) * w_u + 1,
            len: phi * w_u,
        })
        .collect()
}

/// Phase 1 of the planned match: segmentation plus the probe outcome, for
/// callers that need the candidate set itself.
pub fn probe_dp<I: IndexScan>(
    spec: &QuerySpec,
    fam: &IndexFamily<I>,
    cfg: &MatchConfig,
) -> Result<(crate::matcher::ProbeOutcome, Segmentation)> {
    let seg = segment(spec, fam)?;
    let plan = family_plan(&seg, fam);
    let outcome = crate::matcher::probe_windows(&plan, spec, fam.series_len(), cfg)?;
    Ok((outcome, seg))
}

fn family_plan<'a, I: IndexScan>(
    seg: &Segmentation,
    fam: &'a IndexFamily<I>,
) -> Vec<PlannedWindow<'a>> {
    seg.windows
        .iter()
        .map(|qw| PlannedWindow {
            window: *qw,
            index: fam.index_for(qw.len).expect("segmentation uses ladder lengths")
                as &dyn IndexScan,
        })
        .collect()
}

/// The full matching algorithm over an index family: segment, probe each
/// window against its own index, intersect, verify. Same result-set contract
/// as single-index matching.
pub fn match_dp<I: IndexScan>(
    data: &dyn DataSource,
    fam: &IndexFamily<I>,
    spec: &QuerySpec,
    cfg: &MatchConfig,
) -> Result<(Vec<MatchResult>, QueryStats)> {
    if data.len() != fam.series_len() {
        return Err(Error::InvalidParameter(format!(
            "family was built over {} values but the data holds {}",
            fam.series_len(),
            data.len()
        )));
    }
    let seg = segment(spec, fam)?;
    let plan = family_plan(&seg, fam);
    let (results, mut stats) = match_planned(data, &plan, fam.base_window(), spec, cfg)?;
    stats.segmentation = Some(seg.windows);
    Ok((results, stats))
}
