//! Reference implementations and fixtures: a pruning-free matching oracle,
//! a reproducible synthetic series generator, and exhaustive segmentation
//! enumeration. The oracle is the ground truth the engine is tested against;
//! it slides over every offset and applies the match definitions directly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matcher::MatchResult;
use crate::series::{
    dtw, ed, meets_cnsm_constraints, MatchKind, NormalizationStats, QuerySpec, TimeSeries,
};

/// Synthetic data configuration mirroring the usual mixed workload: random
/// walk, Gaussian and mixed-sine segments concatenated until `length` values
/// exist. Ranges are inclusive `(low, high)` pairs.
#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub length: usize,
    pub seed: u64,
    /// Uniform range of segment lengths.
    pub segment_len: (usize, usize),
    /// Relative weights of the walk / Gaussian / sine segment types.
    pub weights: [f64; 3],
    pub walk_start: (f64, f64),
    pub walk_step: (f64, f64),
    pub gauss_mean: (f64, f64),
    pub gauss_std: (f64, f64),
    pub sine_period: (f64, f64),
    pub sine_amplitude: (f64, f64),
    pub sine_mean: (f64, f64),
}

impl GeneratorConfig {
    pub fn new(length: usize, seed: u64) -> Self {
        Self {
            length,
            seed,
            segment_len: (100, 1_000),
            weights: [1.0, 1.0, 1.0],
            walk_start: (-5.0, 5.0),
            walk_step: (-1.0, 1.0),
            gauss_mean: (-5.0, 5.0),
            gauss_std: (0.0, 2.0),
            sine_period: (2.0, 10.0),
            sine_amplitude: (2.0, 10.0),
            sine_mean: (-5.0, 5.0),
        }
    }
}

/// Deterministic synthetic series: same config, same bytes, on every platform
/// (fixed ChaCha8 generator, fixed draw order).
pub fn generate(cfg: &GeneratorConfig) -> TimeSeries {
    assert!(cfg.length >= 1, "length must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let total_weight: f64 = cfg.weights.iter().sum();
    let mut values = Vec::with_capacity(cfg.length);

    while values.len() < cfg.length {
        let mut pick = rng.random_range(0.0..total_weight);
        let mut kind = 0;
        for (i, w) in cfg.weights.iter().enumerate() {
            if pick < *w {
                kind = i;
                break;
            }
            pick -= w;
        }
        let seg_len = rng.random_range(cfg.segment_len.0..=cfg.segment_len.1);
        match kind {
            0 => {
                let mut v = rng.random_range(cfg.walk_start.0..=cfg.walk_start.1);
                for _ in 0..seg_len {
                    v += rng.random_range(cfg.walk_step.0..=cfg.walk_step.1);
                    values.push(v);
                }
            }
            1 => {
                let mean = rng.random_range(cfg.gauss_mean.0..=cfg.gauss_mean.1);
                let std = rng.random_range(cfg.gauss_std.0..=cfg.gauss_std.1);
                if std == 0.0 {
                    values.extend(std::iter::repeat_n(mean, seg_len));
                } else {
                    let normal = Normal::new(mean, std).unwrap();
                    for _ in 0..seg_len {
                        values.push(normal.sample(&mut rng));
                    }
                }
            }
            _ => {
                let waves = rng.random_range(2..=3);
                let mean = rng.random_range(cfg.sine_mean.0..=cfg.sine_mean.1);
                let params: Vec<(f64, f64, f64)> = (0..waves)
                    .map(|_| {
                        (
                            rng.random_range(cfg.sine_period.0..=cfg.sine_period.1),
                            rng.random_range(cfg.sine_amplitude.0..=cfg.sine_amplitude.1),
                            rng.random_range(0.0..std::f64::consts::TAU),
                        )
                    })
                    .collect();
                for t in 0..seg_len {
                    let mut v = mean;
                    for &(period, amplitude, phase) in &params {
                        v += amplitude
                            * (std::f64::consts::TAU * t as f64 / period + phase).sin();
                    }
                    values.push(v);
                }
            }
        }
    }
    values.truncate(cfg.length);
    TimeSeries::new(values).expect("generator only emits finite values")
}

/// Distance of every candidate offset under the query definition, ignoring
/// the spec's epsilon: `None` where the constrained kinds fail their
/// scale/shift constraints, `Some(distance)` otherwise.
pub fn oracle_distances(series: &TimeSeries, spec: &QuerySpec) -> Vec<Option<f64>> {
    let m = spec.query().len();
    let n = series.len();
    assert!(n >= m, "series shorter than the query");
    let q = spec.query().values();
    let values = series.values();
    let q_stats = spec.query_stats();
    let rho = spec.rho().unwrap_or(0);
    let kind = spec.kind();
    let q_hat: Vec<f64> = if kind.is_normalized() {
        q.iter()
            .map(|v| (v - q_stats.mean) / q_stats.stddev)
            .collect()
    } else {
        Vec::new()
    };

    (0..n - m + 1)
        .into_par_iter()
        .map(|start| {
            let s = &values[start..start + m];
            match kind {
                MatchKind::RsmEd => Some(ed(s, q).unwrap()),
                MatchKind::RsmDtw => Some(dtw(s, q, rho).unwrap()),
                MatchKind::CnsmEd | MatchKind::CnsmDtw => {
                    let stats = NormalizationStats::compute(s);
                    if !meets_cnsm_constraints(
                        stats,
                        q_stats,
                        spec.alpha().unwrap(),
                        spec.beta().unwrap(),
                    ) {
                        return None;
                    }
                    let s_hat: Vec<f64> = s
                        .iter()
                        .map(|v| (v - stats.mean) / stats.stddev)
                        .collect();
                    if kind == MatchKind::CnsmEd {
                        Some(ed(&s_hat, &q_hat).unwrap())
                    } else {
                        Some(dtw(&s_hat, &q_hat, rho).unwrap())
                    }
                }
            }
        })
        .collect()
}

/// The matching oracle of record: every offset whose (possibly normalized)
/// distance is within epsilon and whose constraints hold. No pruning of any
/// kind.
pub fn oracle_match(series: &TimeSeries, spec: &QuerySpec) -> Vec<MatchResult> {
    oracle_distances(series, spec)
        .into_iter()
        .enumerate()
        .filter_map(|(i, d)| match d {
            Some(distance) if distance <= spec.epsilon() => Some(MatchResult {
                offset: i + 1,
                distance,
            }),
            _ => None,
        })
        .collect()
}

const MAX_ENUMERATION_UNITS: usize = 16;

/// Every tiling of `1..=m_units` by window sizes `2^(k-1) <= 2^(levels-1)`
/// units, as `(start_unit, phi)` lists. Guarded to small grids.
pub fn enumerate_segmentations(m_units: usize, levels: usize) -> Result<Vec<Vec<(usize, usize)>>> {
    if m_units > MAX_ENUMERATION_UNITS {
        return Err(Error::TooLarge {
            units: m_units,
            max: MAX_ENUMERATION_UNITS,
        });
    }
    if m_units == 0 || levels == 0 {
        return Err(Error::InvalidParameter(
            "enumeration needs at least one unit and one level".into(),
        ));
    }
    let phis: Vec<usize> = (0..levels).map(|k| 1usize << k).collect();
    let mut out = Vec::new();
    let mut current = Vec::new();
    fn extend(
        covered: usize,
        m_units: usize,
        phis: &[usize],
        current: &mut Vec<(usize, usize)>,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        if covered == m_units {
            out.push(current.clone());
            return;
        }
        for &phi in phis {
            if covered + phi > m_units {
                continue;
            }
            current.push((covered + 1, phi));
            extend(covered + phi, m_units, phis, current, out);
            current.pop();
        }
    }
    extend(0, m_units, &phis, &mut current, &mut out);
    Ok(out)
}
