//! Schedule data model: product states, events, scheduled entries and the
//! interval arithmetic used by the insertion heuristic.
//!
//! Everything here is plain value types and deterministic functions; no agent
//! or simulation state leaks in.

mod insertion;
mod plan;
mod validate;

pub use insertion::{earliest_start, Insertion, Shift, TMax};
pub use plan::{EntryId, PlanEntry, PlanState, ProductPlan};
pub use validate::{validate_production_schedule, ValidationReport, Violation};

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Discrete simulation time unit.
pub type Tick = u64;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl Default for $name {
            fn default() -> Self {
                Self(String::new())
            }
        }
    };
}

id_type!(
    /// Symbolic location (a machine station or a buffer).
    LocationId
);
id_type!(
    /// Ordered stage label in a product type's composition chain.
    CompositionId
);
id_type!(
    /// Capability label of an operation ("P3", "move(a,b)", ...).
    EventId
);
id_type!(
    /// Resource agent id (machine or robot).
    ResourceId
);
id_type!(
    /// Product agent id.
    ProductId
);

/// Pair (location, composition) describing where a product is and what has
/// been done to it.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProductState {
    pub location: LocationId,
    pub composition: CompositionId,
}

impl ProductState {
    pub fn new(location: impl Into<LocationId>, composition: impl Into<CompositionId>) -> Self {
        Self {
            location: location.into(),
            composition: composition.into(),
        }
    }
}

impl fmt::Debug for ProductState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.location, self.composition)
    }
}

/// What an event does to a product state.
///
/// A transport changes location and never composition; a transform changes
/// composition at a fixed location.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventEffect {
    Transport {
        from: LocationId,
        to: LocationId,
    },
    Transform {
        at: LocationId,
        pre: CompositionId,
        post: CompositionId,
    },
}

impl EventEffect {
    pub fn is_transport(&self) -> bool {
        matches!(self, EventEffect::Transport { .. })
    }

    /// Location the product occupies before the event fires.
    pub fn pre_location(&self) -> &LocationId {
        match self {
            EventEffect::Transport { from, .. } => from,
            EventEffect::Transform { at, .. } => at,
        }
    }

    /// Location the product occupies once the event completes.
    pub fn post_location(&self) -> &LocationId {
        match self {
            EventEffect::Transport { to, .. } => to,
            EventEffect::Transform { at, .. } => at,
        }
    }
}

/// Concrete event instance: capability label plus the state change it drives.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventSpec {
    pub id: EventId,
    pub effect: EventEffect,
}

impl EventSpec {
    pub fn transport(
        id: impl Into<EventId>,
        from: impl Into<LocationId>,
        to: impl Into<LocationId>,
    ) -> Self {
        Self {
            id: id.into(),
            effect: EventEffect::Transport {
                from: from.into(),
                to: to.into(),
            },
        }
    }

    pub fn transform(
        id: impl Into<EventId>,
        at: impl Into<LocationId>,
        pre: impl Into<CompositionId>,
        post: impl Into<CompositionId>,
    ) -> Self {
        Self {
            id: id.into(),
            effect: EventEffect::Transform {
                at: at.into(),
                pre: pre.into(),
                post: post.into(),
            },
        }
    }
}

/// One operation binding: this event, on this product, by this resource, at
/// these times.
///
/// `end - start` is the performing resource's duration for the event.
/// `release` is when the product actually leaves the resource; it equals
/// `end` unless the resource holds the part while the next resource in the
/// product's chain is not yet available. A held part waits at the resource
/// without blocking further work on it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledEvent {
    pub event: EventSpec,
    pub product: ProductId,
    pub resource: ResourceId,
    pub start: Tick,
    pub end: Tick,
    pub release: Tick,
}

impl ScheduledEvent {
    pub fn new(
        event: EventSpec,
        product: impl Into<ProductId>,
        resource: impl Into<ResourceId>,
        start: Tick,
        end: Tick,
    ) -> Self {
        Self {
            event,
            product: product.into(),
            resource: resource.into(),
            start,
            end,
            release: end,
        }
    }

    /// Work span of the entry; holds extend `release`, not this.
    pub fn work_span(&self) -> Span {
        Span::new(self.start, self.end)
    }
}

/// Half-open tick interval `[lo, hi)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub lo: Tick,
    pub hi: Tick,
}

/// Idle window on one resource; same shape as a busy span.
pub type IdleInterval = Span;

impl Span {
    pub fn new(lo: Tick, hi: Tick) -> Self {
        debug_assert!(lo <= hi, "span bounds out of order: [{lo}, {hi})");
        Self { lo, hi }
    }

    pub fn len(&self) -> Tick {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.lo >= self.hi
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.lo < other.hi && other.lo < self.hi
    }
}

/// Time-ordered schedule of one resource.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ResourceSchedule {
    pub resource: ResourceId,
    pub entries: Vec<ScheduledEvent>,
}

impl ResourceSchedule {
    pub fn new(resource: impl Into<ResourceId>) -> Self {
        Self {
            resource: resource.into(),
            entries: Vec::new(),
        }
    }

    /// Work spans clipped to `[from, horizon)`, merged where adjacent.
    /// Holds past `end` do not occupy the resource.
    pub fn busy_spans(&self, from: Tick, horizon: Tick) -> Vec<Span> {
        let mut spans: Vec<Span> = self
            .entries
            .iter()
            .filter(|e| e.end > from && e.start < horizon)
            .map(|e| Span::new(e.start.max(from), e.end.min(horizon)))
            .filter(|s| !s.is_empty())
            .collect();
        spans.sort();
        merge_spans(&mut spans);
        spans
    }
}

/// Time-ordered schedule of one product together with the state sequence the
/// entries induce: `states[k]` holds before entry `k`, and the last element
/// is the final state.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ProductSchedule {
    pub product: ProductId,
    pub entries: Vec<ScheduledEvent>,
    pub states: Vec<ProductState>,
}

impl ProductSchedule {
    /// Build a product schedule, deriving the state sequence from `initial`.
    pub fn with_states(
        product: impl Into<ProductId>,
        initial: ProductState,
        entries: Vec<ScheduledEvent>,
    ) -> Result<Self, ScheduleError> {
        let mut states = Vec::with_capacity(entries.len() + 1);
        states.push(initial.clone());
        let mut cur = initial;
        for (index, e) in entries.iter().enumerate() {
            cur = apply_transition(&cur, &e.event).map_err(|_| ScheduleError::InapplicableEvent {
                index,
                event: e.event.id.clone(),
            })?;
            states.push(cur.clone());
        }
        Ok(Self {
            product: product.into(),
            entries,
            states,
        })
    }
}

fn merge_spans(spans: &mut Vec<Span>) {
    let mut merged: Vec<Span> = Vec::with_capacity(spans.len());
    for s in spans.drain(..) {
        match merged.last_mut() {
            Some(last) if s.lo <= last.hi => last.hi = last.hi.max(s.hi),
            _ => merged.push(s),
        }
    }
    *spans = merged;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScheduleError {
    /// The event's precondition does not hold in the given state; `index` is
    /// the position in the sequence being folded (0 for a single transition).
    #[error("event {event} not applicable at sequence index {index}")]
    InapplicableEvent { index: usize, event: EventId },
    /// No idle window admits the insertion under the one-shift rule.
    #[error("no feasible slot for a {dur}-tick event at or after tick {requested}")]
    NoFeasibleSlot { requested: Tick, dur: Tick },
}

/// Apply one event to a product state.
///
/// Transports require the product at the `from` location and keep the
/// composition; transforms require location and pre-composition to match and
/// keep the location.
pub fn apply_transition(
    state: &ProductState,
    event: &EventSpec,
) -> Result<ProductState, ScheduleError> {
    let fail = || ScheduleError::InapplicableEvent {
        index: 0,
        event: event.id.clone(),
    };
    match &event.effect {
        EventEffect::Transport { from, to } => {
            if &state.location != from {
                return Err(fail());
            }
            Ok(ProductState {
                location: to.clone(),
                composition: state.composition.clone(),
            })
        }
        EventEffect::Transform { at, pre, post } => {
            if &state.location != at || &state.composition != pre {
                return Err(fail());
            }
            Ok(ProductState {
                location: state.location.clone(),
                composition: post.clone(),
            })
        }
    }
}

/// Left fold of [`apply_transition`] over a sequence; the error carries the
/// index of the first inapplicable event.
pub fn apply_sequence<'a, I>(state: &ProductState, seq: I) -> Result<ProductState, ScheduleError>
where
    I: IntoIterator<Item = &'a EventSpec>,
{
    let mut cur = state.clone();
    for (index, event) in seq.into_iter().enumerate() {
        cur = apply_transition(&cur, event).map_err(|_| ScheduleError::InapplicableEvent {
            index,
            event: event.id.clone(),
        })?;
    }
    Ok(cur)
}

/// Complement of the busy spans within `[from, horizon)`, sorted, with
/// adjacent busy spans merged first.
pub fn idle_intervals(rs: &ResourceSchedule, horizon: Tick, from: Tick) -> Vec<IdleInterval> {
    assert!(from <= horizon, "idle_intervals: from {from} > horizon {horizon}");
    complement_spans(&rs.busy_spans(from, horizon), from, horizon)
}

/// Complement of already-merged, sorted busy spans within `[from, horizon)`.
pub fn complement_spans(busy: &[Span], from: Tick, horizon: Tick) -> Vec<IdleInterval> {
    let mut idle = Vec::new();
    let mut cursor = from;
    for b in busy {
        if b.lo > cursor {
            idle.push(Span::new(cursor, b.lo));
        }
        cursor = cursor.max(b.hi);
    }
    if cursor < horizon {
        idle.push(Span::new(cursor, horizon));
    }
    idle
}
