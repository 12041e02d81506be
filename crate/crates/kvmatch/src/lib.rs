//! Subsequence matching over long, disk-resident time series.
//!
//! A single mean-value key-value index answers four query types — raw and
//! constrained-normalized matching, each under Euclidean or band-restricted
//! DTW distance — with no false dismissals. Queries probe the index with one
//! contiguous scan per query window, intersect the resulting candidate
//! interval sets, and verify the survivors against the data. A family of
//! doubling window lengths plus a dynamic-programming planner
//! ([`segmenter::match_dp`]) handles arbitrary query lengths.

pub mod bounds;
pub mod error;
pub mod index;
pub mod interval;
pub mod matcher;
pub mod segmenter;
pub mod series;
pub mod source;
pub mod testkit;

pub use bounds::{envelope, lb_paa, mean_ranges, window_mean_range, Envelope, MeanRange, PaaBound};
pub use error::{Error, Result};
pub use index::{
    BuildParams, FileIndex, IndexRow, IndexScan, KVIndex, MetaEntry, ScanResult, DEFAULT_MERGE_THRESHOLD,
    DEFAULT_WIDTH,
};
pub use interval::{IntervalSet, WindowInterval};
pub use matcher::{
    match_subsequence, probe, verify, MatchConfig, MatchResult, ProbeOutcome, QueryStats,
    QueryWindow, WindowOrder, WindowStats,
};
pub use segmenter::{
    match_dp, objective, segment, segment_units, IndexFamily, Segmentation, UnitSegmentation,
    DEFAULT_LEVELS,
};
pub use series::{
    dtw, ed, window_means, znormalize, MatchKind, NormalizationStats, QuerySpec, TimeSeries,
};
pub use source::{DataFile, DataSource};
