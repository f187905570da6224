//! Objective evaluation and candidate selection, the centralized exhaustive
//! baseline, and the no-schedule escalation path.

use crate::protocol::{enumerate_combos, CandidateContext, CandidateSchedule, RepairRequest};
use crate::risk::{assess, RiskReport, RiskWeights, UncertaintyModel};
use crate::capability::ResourceStatus;
use crate::schedule::{EventId, ProductId, ResourceId, Tick};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Cost metrics the objective can weigh. The case study uses the completion
/// tick of the replacement sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CostMetric {
    Completion,
    /// Total busy time of the new legs.
    WorkTime,
}

impl CostMetric {
    fn measure(&self, candidate: &CandidateSchedule) -> f64 {
        match self {
            CostMetric::Completion => candidate.completion() as f64,
            CostMetric::WorkTime => candidate
                .events
                .iter()
                .map(|l| (l.end - l.start) as f64)
                .sum(),
        }
    }
}

/// The multi-objective J: weighted costs plus soft-requirement penalties
/// plus (optionally) the scaled risk term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub alpha: Vec<f64>,
    pub metrics: Vec<CostMetric>,
    /// Weight on accumulated soft-requirement penalties.
    pub beta: f64,
    pub weights: RiskWeights,
    pub risk_enabled: bool,
}

impl Objective {
    pub fn completion_time(risk_enabled: bool, weights: RiskWeights) -> Self {
        Self {
            alpha: vec![1.0],
            metrics: vec![CostMetric::Completion],
            beta: 1.0,
            weights,
            risk_enabled,
        }
    }
}

impl Default for Objective {
    fn default() -> Self {
        Self::completion_time(false, RiskWeights::default())
    }
}

/// J for one candidate. The risk report is required only when the objective
/// includes risk.
pub fn evaluate(candidate: &CandidateSchedule, objective: &Objective, risk: Option<&RiskReport>) -> f64 {
    assert_eq!(
        objective.alpha.len(),
        objective.metrics.len(),
        "objective weight/metric arity mismatch"
    );
    let cost: f64 = objective
        .alpha
        .iter()
        .zip(&objective.metrics)
        .map(|(a, m)| a * m.measure(candidate))
        .sum();
    let penalty = objective.beta * candidate.penalty;
    let risk_term = if objective.risk_enabled {
        let report = risk.expect("risk-enabled objective needs a risk report");
        objective.weights.scale * (objective.weights.w1 * report.r1 + objective.weights.w2 * report.r2)
    } else {
        0.0
    };
    cost + penalty + risk_term
}

/// Selection outcome. `escalated` is set exactly when no candidate exists.
#[derive(Clone, Debug, Default)]
pub struct Decision {
    pub chosen: Option<CandidateSchedule>,
    pub chosen_risk: Option<RiskReport>,
    pub j_value: Option<f64>,
    pub all_evaluated: Vec<f64>,
    pub escalated: bool,
}

impl Decision {
    pub fn escalated() -> Self {
        Self {
            escalated: true,
            ..Self::default()
        }
    }
}

/// Argmin of J with deterministic tie-breaking: earlier completion, fewer
/// events, lexicographically smallest resource tuple.
pub fn select(pairs: &[(CandidateSchedule, RiskReport)], objective: &Objective) -> Decision {
    if pairs.is_empty() {
        return Decision::escalated();
    }
    let mut all = Vec::with_capacity(pairs.len());
    let mut best: Option<usize> = None;
    for (i, (candidate, risk)) in pairs.iter().enumerate() {
        let j = evaluate(candidate, objective, Some(risk));
        all.push(j);
        best = match best {
            None => Some(i),
            Some(b) => {
                let jb = all[b];
                if j < jb
                    || (j == jb && candidate.tie_break_key() < pairs[b].0.tie_break_key())
                {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    let b = best.unwrap();
    Decision {
        chosen: Some(pairs[b].0.clone()),
        chosen_risk: Some(pairs[b].1.clone()),
        j_value: Some(all[b]),
        all_evaluated: all,
        escalated: false,
    }
}

/// Why the distributed path produced nothing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EscalationReason {
    /// No other resource shares the affected event.
    EmptyCluster,
    /// Cluster members exist but none could form a feasible candidate.
    NoCapacity,
    /// The centralized fallback found nothing either; the operations wait
    /// for the broken resource's repair.
    CentralizedEmpty,
}

impl EscalationReason {
    pub fn label(&self) -> &'static str {
        match self {
            EscalationReason::EmptyCluster => "empty-cluster",
            EscalationReason::NoCapacity => "no-capacity",
            EscalationReason::CentralizedEmpty => "centralized-empty",
        }
    }
}

/// Record handed to the central controller (and the trial log) when the
/// distributed path yields no schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct EscalationRecord {
    pub tick: Tick,
    pub resource: ResourceId,
    pub product: ProductId,
    pub event: EventId,
    pub reason: EscalationReason,
}

pub fn escalate(
    tick: Tick,
    resource: &ResourceId,
    product: &ProductId,
    event: &EventId,
    reason: EscalationReason,
) -> EscalationRecord {
    EscalationRecord {
        tick,
        resource: resource.clone(),
        product: product.clone(),
        event: event.clone(),
        reason,
    }
}

/// Result of the centralized sweep for one affected event.
#[derive(Clone, Debug)]
pub struct CentralizedRun {
    pub decision: Decision,
    pub candidates_examined: usize,
    /// Exactly `r * span_len`: the information sweep over every resource for
    /// every slot of the replaced span.
    pub messages: u64,
}

/// Centralized baseline for one affected event: enumerate every resource
/// combination over the span's slots, evaluate with the same objective and
/// risk model the distributed path uses, and pick the J-optimum.
#[allow(clippy::too_many_arguments)]
pub fn centralized_reschedule_event(
    req: &RepairRequest,
    ctx: &CandidateContext,
    objective: &Objective,
    statuses: &BTreeMap<ResourceId, ResourceStatus>,
    uncertainty: &UncertaintyModel,
    span_len: usize,
    resource_count: usize,
    rng: &mut impl Rng,
) -> CentralizedRun {
    let candidates = enumerate_combos(req, ctx);
    let candidates_examined = candidates.len();
    let pairs: Vec<(CandidateSchedule, RiskReport)> = candidates
        .into_iter()
        .map(|c| {
            let report = assess(&c, statuses, &objective.weights, uncertainty, rng);
            (c, report)
        })
        .collect();
    let decision = select(&pairs, objective);
    CentralizedRun {
        decision,
        candidates_examined,
        messages: (resource_count * span_len) as u64,
    }
}
