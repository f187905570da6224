//! Risk quantification for candidate schedules: the delay risk of squeezing
//! a new event in front of existing ones (R1) and the breakdown risk of
//! loading worn resources (R2), combined as a weighted sum.

use crate::capability::ResourceStatus;
use crate::protocol::CandidateSchedule;
use crate::schedule::{ResourceId, TMax, Tick};
use crate::sim::sample_duration;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RiskError {
    #[error("nominal operation count must be positive")]
    InvalidNominalOps,
}

/// Weighting of the two risks plus the scale lifting the combined value onto
/// the cost axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskWeights {
    pub w1: f64,
    pub w2: f64,
    /// The scale `W` applied when risk enters the objective.
    pub scale: f64,
}

impl RiskWeights {
    pub fn new(w1: f64, w2: f64, scale: f64) -> Self {
        assert!(w1 >= 0.0 && w2 >= 0.0, "risk weights must be nonnegative");
        assert!(
            (w1 + w2 - 1.0).abs() < 1e-9,
            "risk weights must sum to one, got {w1} + {w2}"
        );
        Self { w1, w2, scale }
    }
}

impl Default for RiskWeights {
    fn default() -> Self {
        // The case-study weighting: breakdowns matter most.
        Self::new(0.2, 0.8, 1000.0)
    }
}

/// How the delay-risk expectation is estimated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyModel {
    pub enabled: bool,
    /// Relative sigma of operation durations.
    pub sigma_frac: f64,
    pub n_samples: u32,
}

impl UncertaintyModel {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            sigma_frac: 0.0,
            n_samples: 0,
        }
    }
}

impl Default for UncertaintyModel {
    fn default() -> Self {
        Self {
            enabled: true,
            sigma_frac: 0.05,
            n_samples: 1000,
        }
    }
}

/// Assessment of one candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct RiskReport {
    /// Delay risk: max per-resource Q.
    pub r1: f64,
    /// Breakdown risk: max per-resource P.
    pub r2: f64,
    pub per_resource_q: BTreeMap<ResourceId, f64>,
    pub per_resource_p: BTreeMap<ResourceId, f64>,
    /// `scale * (w1 * r1 + w2 * r2)`.
    pub total: f64,
}

impl RiskReport {
    pub fn zero() -> Self {
        Self {
            r1: 0.0,
            r2: 0.0,
            per_resource_q: BTreeMap::new(),
            per_resource_p: BTreeMap::new(),
            total: 0.0,
        }
    }

    /// Unscaled weighted risk, the value reported in the trial metrics.
    pub fn weighted(&self, weights: &RiskWeights) -> f64 {
        weights.w1 * self.r1 + weights.w2 * self.r2
    }
}

/// Time deviation between an insertion's start and the window's latest
/// feasible start.
pub fn slack(start: Tick, t_max: TMax) -> TMax {
    match t_max {
        TMax::Infinite => TMax::Infinite,
        TMax::Finite(tm) => {
            debug_assert!(start <= tm, "slack called with start {start} > t_max {tm}");
            TMax::Finite(tm.saturating_sub(start))
        }
    }
}

/// Delay risk of one resource from `(slack, t_max)` samples:
/// `Q = 1 - mean(slack / t_max)`. Infinite samples contribute ratio one, so
/// a resource with no posterior events carries zero risk.
pub fn delay_risk_q(samples: &[(TMax, TMax)]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for &(dt, tm) in samples {
        sum += match (dt, tm) {
            (TMax::Infinite, _) | (_, TMax::Infinite) => 1.0,
            (TMax::Finite(dt), TMax::Finite(tm)) => {
                if tm == 0 {
                    0.0
                } else {
                    (dt as f64 / tm as f64).clamp(0.0, 1.0)
                }
            }
        };
    }
    (1.0 - sum / samples.len() as f64).clamp(0.0, 1.0)
}

/// Probability a resource breaks down when loaded with another operation:
/// operations since repair over nominal operations between breakdowns,
/// clamped to one.
pub fn breakdown_probability(status: &ResourceStatus) -> Result<f64, RiskError> {
    if status.nominal_ops == 0 {
        return Err(RiskError::InvalidNominalOps);
    }
    Ok((status.op_count as f64 / status.nominal_ops as f64).min(1.0))
}

/// Assess a candidate against the statuses of risk-bearing resources.
///
/// Resources absent from `statuses` (the mobile robots, assumed reliable)
/// are skipped entirely. With uncertainty enabled, the expectation in Q is
/// estimated by resampling the duration of the posterior event that bounds
/// each insertion's `t_max`; otherwise the plug-in ratio is used.
pub fn assess(
    candidate: &CandidateSchedule,
    statuses: &BTreeMap<ResourceId, ResourceStatus>,
    weights: &RiskWeights,
    uncertainty: &UncertaintyModel,
    rng: &mut impl Rng,
) -> RiskReport {
    let mut per_resource_q: BTreeMap<ResourceId, f64> = BTreeMap::new();
    let mut per_resource_p: BTreeMap<ResourceId, f64> = BTreeMap::new();

    for term in &candidate.slack_terms {
        let Some(_) = statuses.get(&term.resource) else { continue };
        let q = match term.t_max {
            TMax::Infinite => 0.0,
            TMax::Finite(tm) => {
                if uncertainty.enabled && uncertainty.n_samples > 0 {
                    monte_carlo_q(term.start, tm, term.posterior_len, uncertainty, rng)
                } else {
                    delay_risk_q(&[(slack(term.start, term.t_max), term.t_max)])
                }
            }
        };
        per_resource_q
            .entry(term.resource.clone())
            .and_modify(|v| *v = v.max(q))
            .or_insert(q);
    }

    for resource in candidate.resources() {
        let Some(status) = statuses.get(&resource) else { continue };
        let p = breakdown_probability(status).unwrap_or(1.0);
        per_resource_p
            .entry(resource.clone())
            .and_modify(|v| *v = v.max(p))
            .or_insert(p);
        // A risk-bearing resource always carries a Q entry, zero when its
        // insertion has no posterior events.
        per_resource_q.entry(resource).or_insert(0.0);
    }

    let r1 = per_resource_q.values().copied().fold(0.0, f64::max);
    let r2 = per_resource_p.values().copied().fold(0.0, f64::max);
    RiskReport {
        r1,
        r2,
        per_resource_q,
        per_resource_p,
        total: weights.scale * (weights.w1 * r1 + weights.w2 * r2),
    }
}

/// Estimate `1 - E(slack / t_max)` by resampling the posterior event's
/// duration. `t_max` falls one-for-one as the posterior runs long, so each
/// sample evaluates `t_max + (nominal - sampled)`.
fn monte_carlo_q(
    start: Tick,
    t_max_nominal: Tick,
    posterior_len: Option<Tick>,
    uncertainty: &UncertaintyModel,
    rng: &mut impl Rng,
) -> f64 {
    let Some(len) = posterior_len else {
        return delay_risk_q(&[(
            slack(start, TMax::Finite(t_max_nominal)),
            TMax::Finite(t_max_nominal),
        )]);
    };
    let n = uncertainty.n_samples;
    let mut sum = 0.0;
    for _ in 0..n {
        let sampled = sample_duration(len, uncertainty.sigma_frac, rng);
        let t_max = t_max_nominal as i64 + (len as i64 - sampled as i64);
        let ratio = if t_max <= 0 {
            0.0
        } else {
            let dt = t_max - start as i64;
            (dt as f64 / t_max as f64).clamp(0.0, 1.0)
        };
        sum += ratio;
    }
    (1.0 - sum / n as f64).clamp(0.0, 1.0)
}
