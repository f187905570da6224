//! Distributed repair protocol: disruption intake, affected-event priority
//! ordering, minimal replacement-span extraction, bid broadcast, candidate
//! generation and sequential-removal notices.

mod bus;
mod candidate;
mod commit;

pub use bus::{Message, MessageBus, MessageKind};
pub use candidate::{
    enumerate_combos, generate_candidate, transport_event_id, transport_paths, CandidateContext,
};
pub use commit::{commit_candidate, CommitOutcome};

use crate::capability::Requirements;
use crate::schedule::{
    EventSpec, LocationId, ProductId, ProductSchedule, ProductState, ResourceId, ScheduledEvent,
    Tick,
};
use crate::schedule::{EntryId, TMax};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("event not found in the product schedule")]
    EventNotFound,
    #[error("no capable resources share the affected event")]
    EmptyCluster,
}

/// Wire record asking cluster members to bid on one affected event.
#[derive(Clone, Debug, PartialEq)]
pub struct RepairRequest {
    pub affected_event: crate::schedule::EventId,
    pub requirements: Requirements,
    pub x_prior: ProductState,
    pub x_post: ProductState,
    pub product: ProductId,
    /// When the product is ready to leave `x_prior`.
    pub requested_time: Tick,
}

/// One leg of a candidate replacement sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateLeg {
    pub event: EventSpec,
    pub resource: ResourceId,
    pub start: Tick,
    pub end: Tick,
}

/// A pre-existing entry the candidate pushes right.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShiftedEntry {
    pub entry: EntryId,
    pub new_start: Tick,
}

/// Insertion slack of one leg: how much later it could have started without
/// moving a second entry. Feeds the delay-risk estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct SlackTerm {
    pub resource: ResourceId,
    pub start: Tick,
    pub t_max: TMax,
    /// Nominal length of the busy span bounding `t_max`, when one exists;
    /// duration uncertainty of that span is what the Monte-Carlo risk
    /// estimate resamples.
    pub posterior_len: Option<Tick>,
}

/// A timed replacement sequence offered by a bidder.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSchedule {
    pub events: Vec<CandidateLeg>,
    /// Accumulated soft-requirement penalty of the hosting resources.
    pub penalty: f64,
    pub shifts: Vec<ShiftedEntry>,
    pub slack_terms: Vec<SlackTerm>,
}

impl CandidateSchedule {
    /// Completion tick of the last leg.
    pub fn completion(&self) -> Tick {
        self.events.last().map(|l| l.end).unwrap_or(0)
    }

    pub fn resources(&self) -> Vec<ResourceId> {
        let mut v: Vec<ResourceId> = self.events.iter().map(|l| l.resource.clone()).collect();
        v.dedup();
        v
    }

    /// Deterministic tie-break key: completion, then event count, then the
    /// resource-id tuple.
    pub fn tie_break_key(&self) -> (Tick, usize, Vec<ResourceId>) {
        (
            self.completion(),
            self.events.len(),
            self.events.iter().map(|l| l.resource.clone()).collect(),
        )
    }
}

/// Priority weights of the affected-event ordering.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PriorityWeights {
    pub w_s: f64,
    pub w_d: f64,
}

impl Default for PriorityWeights {
    fn default() -> Self {
        Self { w_s: 1.0, w_d: 1.0 }
    }
}

/// Disruption intake: the broken resource, the tick, and its affected
/// entries in repair order.
#[derive(Clone, Debug, PartialEq)]
pub struct DisruptionReport {
    pub resource: ResourceId,
    pub at: Tick,
    pub affected: Vec<ScheduledEvent>,
}

/// Collect and priority-order the entries a broken resource can no longer
/// perform: everything still ending after `now`, sorted by descending
/// `G(e) = w_s/(start+1) + w_d/(due+1)`, ties by (start, product id).
pub fn affected_events(
    rs: &crate::schedule::ResourceSchedule,
    now: Tick,
    weights: PriorityWeights,
    due: &BTreeMap<ProductId, Tick>,
) -> DisruptionReport {
    let mut affected: Vec<ScheduledEvent> = rs
        .entries
        .iter()
        .filter(|e| e.end > now)
        .cloned()
        .collect();
    let g = |e: &ScheduledEvent| -> f64 {
        let due = due.get(&e.product).copied().unwrap_or(Tick::MAX);
        weights.w_s / (e.start as f64 + 1.0) + weights.w_d / (due as f64 + 1.0)
    };
    affected.sort_by(|a, b| {
        g(b).partial_cmp(&g(a))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| (a.start, &a.product).cmp(&(b.start, &b.product)))
    });
    DisruptionReport {
        resource: rs.resource.clone(),
        at: now,
        affected,
    }
}

/// Minimal replacement span around an affected entry.
#[derive(Clone, Debug, PartialEq)]
pub struct SpanExtraction {
    /// Index range of the span within the product schedule's entries.
    pub range: std::ops::Range<usize>,
    pub events: Vec<EventSpec>,
    pub x_prior: ProductState,
    pub x_post: ProductState,
}

impl SpanExtraction {
    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }
}

/// Shortest contiguous run around `e_q` that must be replaced: backwards
/// over entries whose post-state location is the disrupted location (the
/// transport that delivered the part) and forwards over entries whose
/// pre-state location is the disrupted location (the transport that picks it
/// up). Pure transports are replaced alone.
pub fn replacement_span(
    e_q: &ScheduledEvent,
    ps: &ProductSchedule,
    disrupted_loc: &LocationId,
) -> Result<SpanExtraction, ProtocolError> {
    let q = ps
        .entries
        .iter()
        .position(|e| e == e_q)
        .ok_or(ProtocolError::EventNotFound)?;
    if ps.states.len() != ps.entries.len() + 1 {
        return Err(ProtocolError::EventNotFound);
    }

    let (mut lo, mut hi) = (q, q + 1);
    if !e_q.event.effect.is_transport() {
        while lo > 0 && ps.entries[lo - 1].event.effect.post_location() == disrupted_loc {
            lo -= 1;
        }
        while hi < ps.entries.len() && ps.entries[hi].event.effect.pre_location() == disrupted_loc {
            hi += 1;
        }
    }

    Ok(SpanExtraction {
        range: lo..hi,
        events: ps.entries[lo..hi].iter().map(|e| e.event.clone()).collect(),
        x_prior: ps.states[lo].clone(),
        x_post: ps.states[hi].clone(),
    })
}

/// Broadcast the bid request to every cluster member; errors when the
/// cluster is empty, which routes straight to escalation.
pub fn broadcast_request(
    req: &RepairRequest,
    cluster: &std::collections::BTreeSet<ResourceId>,
    from: &ResourceId,
    tick: Tick,
    bus: &mut MessageBus,
) -> Result<usize, ProtocolError> {
    if cluster.is_empty() {
        return Err(ProtocolError::EmptyCluster);
    }
    for member in cluster {
        bus.send_parts(
            tick,
            from,
            member,
            MessageKind::Request,
            format!("bid({}, {})", req.affected_event, req.product),
        );
    }
    Ok(cluster.len())
}

/// Notify the resources owning the non-affected entries of the span that
/// those entries are withdrawn; one notice per entry.
pub fn notify_sequential_removals(
    e_q: &ScheduledEvent,
    ps: &ProductSchedule,
    span: &SpanExtraction,
    from: &ResourceId,
    tick: Tick,
    bus: &mut MessageBus,
) -> usize {
    let mut notices = 0;
    for idx in span.range.clone() {
        let entry = &ps.entries[idx];
        if entry == e_q {
            continue;
        }
        bus.send_parts(
            tick,
            from,
            &entry.resource,
            MessageKind::RemovalNotice,
            format!("remove({}, {})", entry.event.id, entry.product),
        );
        notices += 1;
    }
    notices
}
