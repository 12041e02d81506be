//! Admissible per-window mean ranges for the four query types, the DTW query
//! envelope, and the PAA lower bound on banded DTW.
//!
//! For a qualifying subsequence `S`, the mean of its `i`-th disjoint window is
//! guaranteed to fall inside the `i`-th range produced here; anything outside
//! can be filtered without a false dismissal.

use crate::error::{Error, Result};
use crate::series::{window_means, MatchKind, QuerySpec};

/// Pointwise lower and upper hull of a query over a `±rho` neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Envelope {
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }
}

/// Builds the query envelope: `l_i = min q_{i+r}`, `u_i = max q_{i+r}` over
/// `r in [-rho, rho]`, with the neighborhood clamped at the series ends.
pub fn envelope(query: &[f64], rho: usize) -> Result<Envelope> {
    let m = query.len();
    if m == 0 {
        return Err(Error::EmptySeries);
    }
    if rho >= m {
        return Err(Error::BandTooWide { rho, len: m });
    }
    let mut lower = Vec::with_capacity(m);
    let mut upper = Vec::with_capacity(m);
    for i in 0..m {
        let lo = i.saturating_sub(rho);
        let hi = (i + rho).min(m - 1);
        let window = &query[lo..=hi];
        lower.push(window.iter().copied().fold(f64::INFINITY, f64::min));
        upper.push(window.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    Ok(Envelope { lower, upper })
}

/// Window means of an envelope, precomputed once per query so candidate
/// lower bounds cost only the per-window comparison.
#[derive(Debug, Clone)]
pub struct PaaBound {
    lower_means: Vec<f64>,
    upper_means: Vec<f64>,
    w: usize,
}

impl PaaBound {
    pub fn new(env: &Envelope, w: usize) -> Self {
        Self {
            lower_means: window_means(&env.lower, w),
            upper_means: window_means(&env.upper, w),
            w,
        }
    }

    /// The bound for a candidate given its disjoint window means.
    pub fn evaluate(&self, candidate_means: &[f64]) -> Result<f64> {
        if candidate_means.len() != self.lower_means.len() {
            return Err(Error::LengthMismatch {
                left: candidate_means.len(),
                right: self.lower_means.len(),
            });
        }
        let w = self.w as f64;
        let mut acc = 0.0;
        for (i, &mu) in candidate_means.iter().enumerate() {
            let up = self.upper_means[i];
            let lo = self.lower_means[i];
            let d = if mu > up {
                mu - up
            } else if mu < lo {
                mu - lo
            } else {
                0.0
            };
            acc += w * d * d;
        }
        Ok(acc.sqrt())
    }

    /// The bound computed straight from candidate values, without
    /// materializing the mean vector.
    pub fn evaluate_series(&self, values: &[f64]) -> f64 {
        let w = self.w as f64;
        let mut acc = 0.0;
        for (i, chunk) in values
            .chunks_exact(self.w)
            .take(self.lower_means.len())
            .enumerate()
        {
            let mu = chunk.iter().sum::<f64>() / w;
            let up = self.upper_means[i];
            let lo = self.lower_means[i];
            let d = if mu > up {
                mu - up
            } else if mu < lo {
                mu - lo
            } else {
                0.0
            };
            acc += w * d * d;
        }
        acc.sqrt()
    }
}

/// PAA lower bound on the banded DTW distance between a candidate (given by
/// its disjoint window means) and the enveloped query.
pub fn lb_paa(candidate_means: &[f64], env: &Envelope, w: usize) -> Result<f64> {
    PaaBound::new(env, w).evaluate(candidate_means)
}

/// Closed admissible range `[lower, upper]` for one window mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanRange {
    pub lower: f64,
    pub upper: f64,
}

/// Admissible mean range for the query window `Q(start, len)`.
///
/// `env` must be the envelope of the full query for the DTW kinds and is
/// ignored otherwise. `len` plays the role of `w` in the `epsilon / sqrt(w)`
/// slack terms, so variable-length windows get their own width.
pub fn window_mean_range(
    spec: &QuerySpec,
    env: Option<&Envelope>,
    start: usize,
    len: usize,
) -> Result<MeanRange> {
    let q = spec.query().values();
    debug_assert!(start >= 1 && start + len - 1 <= q.len());
    let window = &q[start - 1..start - 1 + len];
    let slack = spec.epsilon() / (len as f64).sqrt();
    let mean_of = |values: &[f64]| values.iter().sum::<f64>() / len as f64;

    let range = match spec.kind() {
        MatchKind::RsmEd => {
            let mu = mean_of(window);
            MeanRange {
                lower: mu - slack,
                upper: mu + slack,
            }
        }
        MatchKind::RsmDtw => {
            let env = env.expect("envelope required for DTW ranges");
            let mu_l = mean_of(&env.lower()[start - 1..start - 1 + len]);
            let mu_u = mean_of(&env.upper()[start - 1..start - 1 + len]);
            MeanRange {
                lower: mu_l - slack,
                upper: mu_u + slack,
            }
        }
        MatchKind::CnsmEd => {
            let mu = mean_of(window);
            cnsm_range(spec, mu, mu, len)?
        }
        MatchKind::CnsmDtw => {
            let env = env.expect("envelope required for DTW ranges");
            let mu_l = mean_of(&env.lower()[start - 1..start - 1 + len]);
            let mu_u = mean_of(&env.upper()[start - 1..start - 1 + len]);
            cnsm_range(spec, mu_l, mu_u, len)?
        }
    };
    debug_assert!(range.lower <= range.upper);
    Ok(range)
}

/// Range endpoints for the constrained-normalized kinds.
///
/// With `A = mu_low - mu_Q - eps*sigma_Q/sqrt(w)` and
/// `B = mu_up - mu_Q + eps*sigma_Q/sqrt(w)`, the admissible range is
/// `[min(alpha*A, A/alpha) + mu_Q - beta, max(alpha*B, B/alpha) + mu_Q + beta]`;
/// the two factors cover the corner points of the legal `(a, b)` rectangle.
fn cnsm_range(spec: &QuerySpec, mu_low: f64, mu_up: f64, len: usize) -> Result<MeanRange> {
    let stats = spec.query_stats();
    if stats.stddev == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let alpha = spec.alpha().expect("alpha required for cNSM");
    let beta = spec.beta().expect("beta required for cNSM");
    let slack = spec.epsilon() * stats.stddev / (len as f64).sqrt();
    let a = mu_low - stats.mean - slack;
    let b = mu_up - stats.mean + slack;
    let v_min = (alpha * a).min(a / alpha);
    let v_max = (alpha * b).max(b / alpha);
    Ok(MeanRange {
        lower: v_min + stats.mean - beta,
        upper: v_max + stats.mean + beta,
    })
}

/// The per-window admissible ranges for a uniform segmentation of the query
/// into `floor(|Q|/w)` disjoint length-`w` windows.
pub fn mean_ranges(spec: &QuerySpec, w: usize) -> Result<Vec<MeanRange>> {
    let m = spec.query().len();
    if w == 0 {
        return Err(Error::InvalidParameter("window length must be positive".into()));
    }
    let p = m / w;
    if p == 0 {
        return Err(Error::QueryTooShort { len: m, w });
    }
    let env = match spec.kind() {
        MatchKind::RsmDtw | MatchKind::CnsmDtw => Some(envelope(
            spec.query().values(),
            spec.rho().expect("rho required for DTW"),
        )?),
        _ => None,
    };
    (0..p)
        .map(|i| window_mean_range(spec, env.as_ref(), i * w + 1, w))
        .collect()
}
