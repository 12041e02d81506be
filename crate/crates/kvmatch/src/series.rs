//! Fundamental series types, z-normalization, and the two distance measures.
//!
//! All offsets in the public API are 1-based: the subsequence `X(i, l)` is the
//! length-`l` run of values starting at the `i`-th value of `X`.

use crate::error::{Error, Result};

/// An in-memory time series of finite 64-bit values.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Vec<f64>,
}

impl TimeSeries {
    /// Wraps a value vector, rejecting empty input and non-finite values.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySeries);
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { position: idx + 1 });
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// The subsequence `X(offset, len)`, valid iff `1 <= offset` and
    /// `offset + len - 1 <= |X|`.
    pub fn subsequence(&self, offset: usize, len: usize) -> Result<&[f64]> {
        let n = self.values.len();
        if offset == 0 || len == 0 || offset + len - 1 > n {
            return Err(Error::SubsequenceOutOfRange { offset, len, n });
        }
        Ok(&self.values[offset - 1..offset - 1 + len])
    }
}

/// Mean and population standard deviation of a series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationStats {
    pub mean: f64,
    pub stddev: f64,
}

impl NormalizationStats {
    /// Two-pass mean and standard deviation. The deviation divides by the
    /// length (population convention).
    pub fn compute(values: &[f64]) -> Self {
        let m = values.len() as f64;
        let mean = values.iter().sum::<f64>() / m;
        let var = values
            .iter()
            .map(|v| {
                let d = v - mean;
                d * d
            })
            .sum::<f64>()
            / m;
        Self {
            mean,
            stddev: var.sqrt(),
        }
    }
}

fn is_constant(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] == w[1])
}

/// Z-normalizes a series: `(v - mean) / stddev` per value.
///
/// Fails with [`Error::ZeroVariance`] on constant input.
pub fn znormalize(values: &[f64]) -> Result<(Vec<f64>, NormalizationStats)> {
    if values.is_empty() {
        return Err(Error::EmptySeries);
    }
    let stats = NormalizationStats::compute(values);
    if stats.stddev == 0.0 || is_constant(values) {
        return Err(Error::ZeroVariance);
    }
    let mut out = Vec::with_capacity(values.len());
    normalize_into(values, stats, &mut out);
    Ok((out, stats))
}

pub(crate) fn normalize_into(values: &[f64], stats: NormalizationStats, out: &mut Vec<f64>) {
    out.clear();
    out.extend(values.iter().map(|v| (v - stats.mean) / stats.stddev));
}

/// Accumulates the squared Euclidean distance left to right and gives up as
/// soon as the partial sum exceeds `cutoff`. Squared differences are
/// non-negative, so a partial sum past the cutoff can never come back down.
pub(crate) fn ed_sq_within(a: &[f64], b: &[f64], cutoff: f64) -> Option<f64> {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
        if acc > cutoff {
            return None;
        }
    }
    Some(acc)
}

/// Euclidean distance between two equal-length sequences.
pub fn ed(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(ed_sq_within(a, b, f64::INFINITY).unwrap().sqrt())
}

/// Dynamic time warping distance restricted to a Sakoe-Chiba band of width
/// `rho`: every aligned pair `(i, j)` satisfies `|i - j| <= rho`.
///
/// `rho = 0` degenerates into the Euclidean distance. Requires equal lengths
/// and `rho < m`.
pub fn dtw(a: &[f64], b: &[f64], rho: usize) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if rho >= a.len() {
        return Err(Error::BandTooWide { rho, len: a.len() });
    }
    Ok(dtw_banded(a, b, rho))
}

/// Band-restricted DTW dynamic program over squared costs, two working rows.
pub(crate) fn dtw_banded(a: &[f64], b: &[f64], rho: usize) -> f64 {
    let m = a.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut curr = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=m {
        let lo = i.saturating_sub(rho).max(1);
        let hi = (i + rho).min(m);
        // Left sentinel for the curr[j - 1] read at j = lo.
        curr[lo - 1] = f64::INFINITY;
        let ai = a[i - 1];
        for j in lo..=hi {
            let d = ai - b[j - 1];
            let best = prev[j - 1].min(prev[j]).min(curr[j - 1]);
            curr[j] = d * d + best;
        }
        // The next row may read one cell past this band; clear the stale value.
        if hi < m {
            curr[hi + 1] = f64::INFINITY;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[m].sqrt()
}

/// Means of the `floor(|S| / w)` disjoint length-`w` windows of `S`; a
/// trailing remainder shorter than `w` is ignored.
///
/// Panics if `w` is zero.
pub fn window_means(values: &[f64], w: usize) -> Vec<f64> {
    assert!(w >= 1, "window length must be positive");
    values
        .chunks_exact(w)
        .map(|c| c.iter().sum::<f64>() / w as f64)
        .collect()
}

/// The four supported query types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatchKind {
    RsmEd,
    RsmDtw,
    CnsmEd,
    CnsmDtw,
}

impl MatchKind {
    /// Whether candidates are compared after z-normalization.
    pub fn is_normalized(self) -> bool {
        matches!(self, MatchKind::CnsmEd | MatchKind::CnsmDtw)
    }

    pub fn is_dtw(self) -> bool {
        matches!(self, MatchKind::RsmDtw | MatchKind::CnsmDtw)
    }
}

impl std::fmt::Display for MatchKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MatchKind::RsmEd => "rsm-ed",
            MatchKind::RsmDtw => "rsm-dtw",
            MatchKind::CnsmEd => "cnsm-ed",
            MatchKind::CnsmDtw => "cnsm-dtw",
        };
        f.write_str(s)
    }
}

/// A fully validated query: the query series, the query type and its
/// parameters.
///
/// For the constrained-normalized kinds a subsequence `S` matches iff
/// `1/alpha <= sigma_S/sigma_Q <= alpha`, `|mu_S - mu_Q| <= beta` and the
/// distance between the normalized series is within `epsilon`.
#[derive(Debug, Clone)]
pub struct QuerySpec {
    query: TimeSeries,
    kind: MatchKind,
    epsilon: f64,
    alpha: Option<f64>,
    beta: Option<f64>,
    rho: Option<usize>,
    query_stats: NormalizationStats,
}

impl QuerySpec {
    pub fn rsm_ed(query: TimeSeries, epsilon: f64) -> Result<Self> {
        Self::build(query, MatchKind::RsmEd, epsilon, None, None, None)
    }

    pub fn rsm_dtw(query: TimeSeries, epsilon: f64, rho: usize) -> Result<Self> {
        Self::build(query, MatchKind::RsmDtw, epsilon, None, None, Some(rho))
    }

    pub fn cnsm_ed(query: TimeSeries, epsilon: f64, alpha: f64, beta: f64) -> Result<Self> {
        Self::build(
            query,
            MatchKind::CnsmEd,
            epsilon,
            Some(alpha),
            Some(beta),
            None,
        )
    }

    pub fn cnsm_dtw(
        query: TimeSeries,
        epsilon: f64,
        alpha: f64,
        beta: f64,
        rho: usize,
    ) -> Result<Self> {
        Self::build(
            query,
            MatchKind::CnsmDtw,
            epsilon,
            Some(alpha),
            Some(beta),
            Some(rho),
        )
    }

    pub fn new(
        query: TimeSeries,
        kind: MatchKind,
        epsilon: f64,
        alpha: Option<f64>,
        beta: Option<f64>,
        rho: Option<usize>,
    ) -> Result<Self> {
        match kind {
            MatchKind::RsmEd => Self::build(query, kind, epsilon, None, None, None),
            MatchKind::RsmDtw => {
                let rho = rho.ok_or_else(|| missing("rho", kind))?;
                Self::build(query, kind, epsilon, None, None, Some(rho))
            }
            MatchKind::CnsmEd => {
                let alpha = alpha.ok_or_else(|| missing("alpha", kind))?;
                let beta = beta.ok_or_else(|| missing("beta", kind))?;
                Self::build(query, kind, epsilon, Some(alpha), Some(beta), None)
            }
            MatchKind::CnsmDtw => {
                let alpha = alpha.ok_or_else(|| missing("alpha", kind))?;
                let beta = beta.ok_or_else(|| missing("beta", kind))?;
                let rho = rho.ok_or_else(|| missing("rho", kind))?;
                Self::build(query, kind, epsilon, Some(alpha), Some(beta), Some(rho))
            }
        }
    }

    fn build(
        query: TimeSeries,
        kind: MatchKind,
        epsilon: f64,
        alpha: Option<f64>,
        beta: Option<f64>,
        rho: Option<usize>,
    ) -> Result<Self> {
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be finite and non-negative, got {epsilon}"
            )));
        }
        if let Some(alpha) = alpha {
            if !alpha.is_finite() || alpha < 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "alpha must be finite and >= 1, got {alpha}"
                )));
            }
        }
        if let Some(beta) = beta {
            if !beta.is_finite() || beta < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "beta must be finite and non-negative, got {beta}"
                )));
            }
        }
        if let Some(rho) = rho {
            if rho >= query.len() {
                return Err(Error::BandTooWide {
                    rho,
                    len: query.len(),
                });
            }
        }
        let query_stats = NormalizationStats::compute(query.values());
        if kind.is_normalized() && (query_stats.stddev == 0.0 || is_constant(query.values())) {
            return Err(Error::ZeroVariance);
        }
        Ok(Self {
            query,
            kind,
            epsilon,
            alpha,
            beta,
            rho,
            query_stats,
        })
    }

    pub fn query(&self) -> &TimeSeries {
        &self.query
    }

    pub fn kind(&self) -> MatchKind {
        self.kind
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn beta(&self) -> Option<f64> {
        self.beta
    }

    pub fn rho(&self) -> Option<usize> {
        self.rho
    }

    /// Mean and deviation of the whole query series.
    pub fn query_stats(&self) -> NormalizationStats {
        self.query_stats
    }

    /// Replaces `epsilon`, keeping everything else.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::build(
            self.query.clone(),
            self.kind,
            epsilon,
            self.alpha,
            self.beta,
            self.rho,
        )
    }
}

fn missing(field: &str, kind: MatchKind) -> Error {
    Error::InvalidParameter(format!("{field} is required for {kind} queries"))
}

/// The amplitude-scaling and offset-shifting constraint of the constrained
/// normalized match, evaluated multiplicatively so that a zero-deviation
/// (constant) subsequence always fails for finite `alpha`.
pub fn meets_cnsm_constraints(
    s: NormalizationStats,
    q: NormalizationStats,
    alpha: f64,
    beta: f64,
) -> bool {
    s.stddev * alpha >= q.stddev && s.stddev <= q.stddev * alpha && (s.mean - q.mean).abs() <= beta
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    /// Exhaustive enumeration of every legal warping path inside the band;
    /// independent of the dynamic program it checks.
    fn dtw_path_enumeration(a: &[f64], b: &[f64], rho: usize) -> f64 {
        fn walk(a: &[f64], b: &[f64], rho: usize, i: usize, j: usize, acc: f64, best: &mut f64) {
            if i.abs_diff(j) > rho {
                return;
            }
            let d = a[i] - b[j];
            let acc = acc + d * d;
            if i == a.len() - 1 && j == b.len() - 1 {
                if acc < *best {
                    *best = acc;
                }
                return;
            }
            if i + 1 < a.len() && j + 1 < b.len() {
                walk(a, b, rho, i + 1, j + 1, acc, best);
            }
            if i + 1 < a.len() {
                walk(a, b, rho, i + 1, j, acc, best);
            }
            if j + 1 < b.len() {
                walk(a, b, rho, i, j + 1, acc, best);
            }
        }
        let mut best = f64::INFINITY;
        walk(a, b, rho, 0, 0, 0.0, &mut best);
        best.sqrt()
    }

    fn random_values(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| rng.random_range(-10.0..10.0)).collect()
    }

    #[test]
    fn timeseries_rejects_empty_and_non_finite() {
        assert!(matches!(TimeSeries::new(vec![]), Err(Error::EmptySeries)));
        assert!(matches!(
            TimeSeries::new(vec![1.0, f64::NAN]),
            Err(Error::NonFinite { position: 2 })
        ));
        assert!(matches!(
            TimeSeries::new(vec![f64::INFINITY]),
            Err(Error::NonFinite { position: 1 })
        ));
    }

    #[test]
    fn subsequence_bounds() {
        let x = TimeSeries::new((1..=10).map(f64::from).collect()).unwrap();
        assert_eq!(x.subsequence(1, 10).unwrap().len(), 10);
        assert_eq!(x.subsequence(10, 1).unwrap(), &[10.0]);
        assert!(x.subsequence(0, 1).is_err());
        assert!(x.subsequence(10, 2).is_err());
        assert!(x.subsequence(11, 1).is_err());
    }

    #[test]
    fn znormalize_identity_case() {
        // (1, 1, -1, -1) already has mean 0 and population deviation 1.
        let (out, stats) = znormalize(&[1.0, 1.0, -1.0, -1.0]).unwrap();
        assert_eq!(out, vec![1.0, 1.0, -1.0, -1.0]);
        assert_eq!(stats.mean, 0.0);
        assert_eq!(stats.stddev, 1.0);
    }

    #[test]
    fn znormalize_constant_is_zero_variance() {
        assert!(matches!(
            znormalize(&[5.0, 5.0, 5.0]),
            Err(Error::ZeroVariance)
        ));
    }

    #[test]
    fn znormalize_even_ramp() {
        // Frozen from the definition: mean 5, population deviation sqrt(5).
        let (out, stats) = znormalize(&[2.0, 4.0, 6.0, 8.0]).unwrap();
        assert_close(stats.mean, 5.0, 0.0);
        assert_close(stats.stddev, 2.23606797749979, 1e-15);
        let expected = [
            -1.3416407864998738,
            -0.4472135954999579,
            0.4472135954999579,
            1.3416407864998738,
        ];
        for (got, want) in out.iter().zip(expected) {
            assert_close(*got, want, 1e-15);
        }
        let check = NormalizationStats::compute(&out);
        assert_close(check.mean, 0.0, 1e-9);
        assert_close(check.stddev, 1.0, 1e-9);
    }

    #[test]
    fn ed_right_triangle() {
        assert_eq!(ed(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
    }

    #[test]
    fn ed_identity_and_mismatch() {
        let v = [1.5, -2.0, 7.25];
        assert_eq!(ed(&v, &v).unwrap(), 0.0);
        assert!(matches!(
            ed(&v, &[1.0]),
            Err(Error::LengthMismatch { left: 3, right: 1 })
        ));
    }

    #[test]
    fn ed_matches_plain_resummation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_values(&mut rng, 16);
        let b = random_values(&mut rng, 16);
        let mut acc = 0.0;
        for k in 0..16 {
            acc += (a[k] - b[k]) * (a[k] - b[k]);
        }
        assert_close(ed(&a, &b).unwrap(), acc.sqrt(), 1e-12);
    }

    #[test]
    fn dtw_zero_band_degenerates_to_ed() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let a = random_values(&mut rng, 32);
            let b = random_values(&mut rng, 32);
            let e = ed(&a, &b).unwrap();
            assert_close(dtw(&a, &b, 0).unwrap(), e, 1e-9 * (1.0 + e));
        }
    }

    #[test]
    fn dtw_self_distance_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_values(&mut rng, 20);
        for rho in [0, 1, 5, 19] {
            assert_eq!(dtw(&a, &a, rho).unwrap(), 0.0);
        }
    }

    #[test]
    fn dtw_matches_path_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..200 {
            let a = random_values(&mut rng, 6);
            let b = random_values(&mut rng, 6);
            let got = dtw(&a, &b, 2).unwrap();
            let want = dtw_path_enumeration(&a, &b, 2);
            assert_close(got, want, 1e-9 * (1.0 + want));
        }
    }

    #[test]
    fn dtw_rejects_band_as_wide_as_series() {
        assert!(matches!(
            dtw(&[1.0, 2.0], &[3.0, 4.0], 2),
            Err(Error::BandTooWide { rho: 2, len: 2 })
        ));
    }

    #[test]
    fn window_means_drops_remainder() {
        let values: Vec<f64> = (1..=161).map(f64::from).collect();
        let means = window_means(&values, 50);
        assert_eq!(means.len(), 3);
        assert_close(means[0], 25.5, 1e-12);
        assert_close(means[1], 75.5, 1e-12);
        assert_close(means[2], 125.5, 1e-12);
    }

    #[test]
    fn window_means_single_window_is_global_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let values = random_values(&mut rng, 37);
        let means = window_means(&values, 37);
        assert_eq!(means.len(), 1);
        assert_close(means[0], NormalizationStats::compute(&values).mean, 1e-12);
    }

    #[test]
    fn window_means_match_per_window_resummation() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let values = random_values(&mut rng, 200);
        let means = window_means(&values, 25);
        assert_eq!(means.len(), 8);
        for (i, mean) in means.iter().enumerate() {
            let mut acc = 0.0;
            for k in 0..25 {
                acc += values[i * 25 + k];
            }
            assert_close(*mean, acc / 25.0, 1e-12);
        }
    }

    #[test]
    fn query_spec_validation() {
        let q = TimeSeries::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(QuerySpec::rsm_ed(q.clone(), -1.0).is_err());
        assert!(QuerySpec::rsm_dtw(q.clone(), 1.0, 4).is_err());
        assert!(QuerySpec::cnsm_ed(q.clone(), 1.0, 0.5, 1.0).is_err());
        assert!(QuerySpec::cnsm_ed(q.clone(), 1.0, 1.0, -0.1).is_err());
        let constant = TimeSeries::new(vec![2.0; 8]).unwrap();
        assert!(matches!(
            QuerySpec::cnsm_ed(constant.clone(), 1.0, 2.0, 1.0),
            Err(Error::ZeroVariance)
        ));
        // RSM kinds do not need a defined query deviation.
        assert!(QuerySpec::rsm_ed(constant, 1.0).is_ok());
        assert!(QuerySpec::cnsm_dtw(q, 1.0, 2.0, 1.0, 1).is_ok());
    }

    #[test]
    fn cnsm_constraint_rejects_constant_subsequence() {
        let s = NormalizationStats {
            mean: 0.0,
            stddev: 0.0,
        };
        let q = NormalizationStats {
            mean: 0.0,
            stddev: 1.0,
        };
        assert!(!meets_cnsm_constraints(s, q, 100.0, 100.0));
    }

    proptest! {
        #[test]
        fn dtw_non_increasing_in_rho(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_values(&mut rng, 12);
            let b = random_values(&mut rng, 12);
            let mut last = f64::INFINITY;
            for rho in 0..12 {
                let d = dtw(&a, &b, rho).unwrap();
                prop_assert!(d <= last + 1e-12 * (1.0 + last));
                last = d;
            }
        }

        #[test]
        fn znormalize_is_idempotent(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = random_values(&mut rng, 24);
            let (once, _) = znormalize(&v).unwrap();
            let (twice, _) = znormalize(&once).unwrap();
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn normalized_self_distance_is_zero(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = random_values(&mut rng, 16);
            let (hat, _) = znormalize(&v).unwrap();
            prop_assert_eq!(ed(&hat, &hat).unwrap(), 0.0);
            prop_assert_eq!(dtw(&hat, &hat, 3).unwrap(), 0.0);
        }
    }
}
