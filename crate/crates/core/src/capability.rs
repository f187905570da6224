//! Resource capability models, the shared capability directory, and the
//! environment-model maps (clustering, sequential, collaborative resources)
//! plus requirement match-making with soft-constraint relaxation.

use crate::schedule::{
    EventId, EventSpec, LocationId, ProductSchedule, ResourceId, ScheduledEvent, Tick,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Resource class: transforms change product composition, transports change
/// product location.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResourceClass {
    Transformation,
    Transportation,
}

/// Attribute value: symbols compare by equality, numbers by the polarity the
/// requirement asks for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum AttrValue {
    Symbol(String),
    Number(f64),
}

impl AttrValue {
    pub fn symbol(s: impl Into<String>) -> Self {
        AttrValue::Symbol(s.into())
    }
}

/// One named attribute of a resource for an event, e.g. `workspace=large`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub value: AttrValue,
}

impl Attribute {
    pub fn new(name: impl Into<String>, value: AttrValue) -> Self {
        Self {
            name: name.into(),
            value,
        }
    }

    pub fn sym(name: impl Into<String>, value: impl Into<String>) -> Self {
        Self::new(name, AttrValue::symbol(value))
    }

    pub fn num(name: impl Into<String>, value: f64) -> Self {
        Self::new(name, AttrValue::Number(value))
    }
}

/// Comparison direction for numeric requirements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarity {
    /// The resource's value must not exceed the required one (e.g. energy).
    AtMost,
    /// The resource's value must reach the required one (e.g. payload).
    AtLeast,
}

/// A single hard requirement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardRequirement {
    pub attribute: Attribute,
    pub polarity: Polarity,
}

/// A soft requirement: may be violated within `tolerance`, paying
/// `penalty_per_unit` for each unit of violation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftRequirement {
    pub attribute: Attribute,
    pub polarity: Polarity,
    pub tolerance: f64,
    pub penalty_per_unit: f64,
}

/// Production requirements for one scheduled event, split into hard and soft.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Requirements {
    pub hard: Vec<HardRequirement>,
    pub soft: Vec<SoftRequirement>,
}

impl Requirements {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn hard_symbol(name: &str, value: &str) -> Self {
        Self {
            hard: vec![HardRequirement {
                attribute: Attribute::sym(name, value),
                polarity: Polarity::AtLeast,
            }],
            soft: Vec::new(),
        }
    }
}

/// What a resource can do for one capability label.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EventCapability {
    /// Nominal cost in ticks.
    pub nominal_cost: Tick,
    pub attributes: Vec<Attribute>,
}

/// Per-resource capability model: class, reachable location states, events
/// with nominal costs and attributes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CapabilityModel {
    pub resource: ResourceId,
    pub class: ResourceClass,
    /// Location states this resource can put a product into or take it from.
    pub states: BTreeSet<LocationId>,
    pub events: BTreeMap<EventId, EventCapability>,
}

impl CapabilityModel {
    pub fn new(resource: impl Into<ResourceId>, class: ResourceClass) -> Self {
        Self {
            resource: resource.into(),
            class,
            states: BTreeSet::new(),
            events: BTreeMap::new(),
        }
    }

    pub fn has_event(&self, event: &EventId) -> bool {
        self.events.contains_key(event)
    }

    pub fn cost_of(&self, event: &EventId) -> Option<Tick> {
        self.events.get(event).map(|c| c.nominal_cost)
    }

    pub fn attributes_of(&self, event: &EventId) -> &[Attribute] {
        self.events
            .get(event)
            .map(|c| c.attributes.as_slice())
            .unwrap_or(&[])
    }
}

/// Finite-state status of a resource plus its wear counters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResourceState {
    Idle,
    Up,
    Down,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResourceStatus {
    pub state: ResourceState,
    /// Set exactly when the state is `Down`.
    pub down_until: Option<Tick>,
    /// Operations performed since the last repair.
    pub op_count: u32,
    /// Nominal operations between breakdowns.
    pub nominal_ops: u32,
}

impl ResourceStatus {
    pub fn idle(nominal_ops: u32) -> Self {
        Self {
            state: ResourceState::Idle,
            down_until: None,
            op_count: 0,
            nominal_ops,
        }
    }

    pub fn is_down(&self) -> bool {
        self.state == ResourceState::Down
    }
}

/// Read-only capability directory shared by all agents (the central
/// knowledge base). Agents query it; during rescheduling each query is
/// charged as two communications by the caller.
#[derive(Clone, Debug, Default)]
pub struct Registry {
    models: BTreeMap<ResourceId, CapabilityModel>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, model: CapabilityModel) {
        self.models.insert(model.resource.clone(), model);
    }

    pub fn get(&self, resource: &ResourceId) -> Option<&CapabilityModel> {
        self.models.get(resource)
    }

    pub fn get_mut(&mut self, resource: &ResourceId) -> Option<&mut CapabilityModel> {
        self.models.get_mut(resource)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CapabilityModel> {
        self.models.values()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnvironmentError {
    #[error("event not found in the given product schedule")]
    EventNotFound,
}

/// Resources other than `this` that hold `event` in their capability model.
pub fn clustering_ras(event: &EventId, this: &ResourceId, registry: &Registry) -> BTreeSet<ResourceId> {
    registry
        .iter()
        .filter(|m| &m.resource != this && m.has_event(event))
        .map(|m| m.resource.clone())
        .collect()
}

/// Resources performing the entries directly before and after `entry` in its
/// product schedule; one element at either end of the chain.
pub fn sequential_ras(
    entry: &ScheduledEvent,
    product_schedule: &ProductSchedule,
) -> Result<BTreeSet<ResourceId>, EnvironmentError> {
    let q = product_schedule
        .entries
        .iter()
        .position(|e| e == entry)
        .ok_or(EnvironmentError::EventNotFound)?;
    let mut out = BTreeSet::new();
    if q > 0 {
        out.insert(product_schedule.entries[q - 1].resource.clone());
    }
    if q + 1 < product_schedule.entries.len() {
        out.insert(product_schedule.entries[q + 1].resource.clone());
    }
    Ok(out)
}

/// Resources other than `this` whose capability model contains `location`.
/// A transformation resource only ever collects transportation partners here,
/// because no two transformation resources share a location state.
pub fn collaborative_ras(
    location: &LocationId,
    this: &ResourceId,
    registry: &Registry,
) -> BTreeSet<ResourceId> {
    registry
        .iter()
        .filter(|m| &m.resource != this && m.states.contains(location))
        .map(|m| m.resource.clone())
        .collect()
}

/// Outcome of the match-making step.
#[derive(Clone, Debug, PartialEq)]
pub enum MatchOutcome {
    Reject,
    /// The candidate can host the event; `penalty` accumulates relaxed soft
    /// requirements (zero when everything is met outright).
    Accept { penalty: f64 },
}

fn attr_of<'a>(attrs: &'a [Attribute], name: &str) -> Option<&'a AttrValue> {
    attrs.iter().find(|a| a.name == name).map(|a| &a.value)
}

fn hard_met(req: &HardRequirement, attrs: &[Attribute]) -> bool {
    match (attr_of(attrs, &req.attribute.name), &req.attribute.value) {
        (Some(AttrValue::Symbol(have)), AttrValue::Symbol(want)) => have == want,
        (Some(AttrValue::Number(have)), AttrValue::Number(want)) => match req.polarity {
            Polarity::AtMost => have <= want,
            Polarity::AtLeast => have >= want,
        },
        _ => false,
    }
}

/// Violation magnitude of a numeric soft requirement; `None` when the
/// attribute is missing or of the wrong kind (treated as unmet beyond
/// tolerance), `Some(0.0)` when satisfied outright.
fn soft_violation(req: &SoftRequirement, attrs: &[Attribute]) -> Option<f64> {
    match (attr_of(attrs, &req.attribute.name), &req.attribute.value) {
        (Some(AttrValue::Symbol(have)), AttrValue::Symbol(want)) => {
            if have == want {
                Some(0.0)
            } else {
                None
            }
        }
        (Some(AttrValue::Number(have)), AttrValue::Number(want)) => {
            let excess = match req.polarity {
                Polarity::AtMost => have - want,
                Polarity::AtLeast => want - have,
            };
            Some(excess.max(0.0))
        }
        _ => None,
    }
}

/// Match-making for one event against one candidate model.
///
/// Rejects when the candidate lacks the event or misses a hard requirement.
/// Soft requirements accept within tolerance at a linear penalty and reject
/// beyond it.
pub fn match_requirements(
    event: &EventId,
    req: &Requirements,
    candidate: &CapabilityModel,
) -> MatchOutcome {
    if !candidate.has_event(event) {
        return MatchOutcome::Reject;
    }
    let attrs = candidate.attributes_of(event);
    for hard in &req.hard {
        if !hard_met(hard, attrs) {
            return MatchOutcome::Reject;
        }
    }
    let mut penalty = 0.0;
    for soft in &req.soft {
        match soft_violation(soft, attrs) {
            Some(v) if v <= soft.tolerance + 1e-12 => penalty += v * soft.penalty_per_unit,
            _ => return MatchOutcome::Reject,
        }
    }
    MatchOutcome::Accept { penalty }
}

/// Convenience: the effect a transform capability realizes for a request is
/// built at the bidder's location; transports carry their own endpoints.
pub fn transform_event_at(
    event: &EventId,
    at: &LocationId,
    pre: &crate::schedule::CompositionId,
    post: &crate::schedule::CompositionId,
) -> EventSpec {
    EventSpec::transform(event.clone(), at.clone(), pre.clone(), post.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{EventSpec, ProductSchedule, ProductState, ScheduledEvent};

    fn machine(id: &str, events: &[&str]) -> CapabilityModel {
        let mut m = CapabilityModel::new(id, ResourceClass::Transformation);
        m.states.insert(LocationId::from(id));
        for e in events {
            m.events.insert(
                EventId::from(*e),
                EventCapability {
                    nominal_cost: 100,
                    attributes: vec![Attribute::sym("workspace", "small")],
                },
            );
        }
        m
    }

    fn robot(id: &str, reach: &[&str]) -> CapabilityModel {
        let mut m = CapabilityModel::new(id, ResourceClass::Transportation);
        for l in reach {
            m.states.insert(LocationId::from(*l));
        }
        m
    }

    fn registry() -> Registry {
        let mut r = Registry::new();
        r.insert(machine("M1", &["P1"]));
        r.insert(machine("M2", &["P1", "P2"]));
        r.insert(machine("M3", &["P3"]));
        r
    }

    #[test]
    fn clustering_excludes_self() {
        let r = registry();
        let c = clustering_ras(&EventId::from("P1"), &ResourceId::from("M1"), &r);
        assert_eq!(c, BTreeSet::from([ResourceId::from("M2")]));
    }

    #[test]
    fn clustering_may_be_empty() {
        let r = registry();
        let c = clustering_ras(&EventId::from("P3"), &ResourceId::from("M3"), &r);
        assert!(c.is_empty());
    }

    #[test]
    fn clustering_is_symmetric_for_shared_events() {
        let r = registry();
        let m1 = ResourceId::from("M1");
        let m2 = ResourceId::from("M2");
        let p1 = EventId::from("P1");
        assert!(clustering_ras(&p1, &m1, &r).contains(&m2));
        assert!(clustering_ras(&p1, &m2, &r).contains(&m1));
    }

    fn three_step_schedule() -> ProductSchedule {
        let entries = vec![
            ScheduledEvent::new(EventSpec::transport("move(Entry,M1)", "Entry", "M1"), "a", "R1", 0, 20),
            ScheduledEvent::new(EventSpec::transform("P1", "M1", "raw", "p1"), "a", "M1", 20, 120),
            ScheduledEvent::new(EventSpec::transport("move(M1,Exit)", "M1", "Exit"), "a", "R2", 120, 140),
        ];
        let mut entries = entries;
        entries[0].release = 20;
        entries[1].release = 120;
        ProductSchedule::with_states("a", ProductState::new("Entry", "raw"), entries).unwrap()
    }

    #[test]
    fn sequential_of_middle_entry_is_both_neighbours() {
        let ps = three_step_schedule();
        let s = sequential_ras(&ps.entries[1], &ps).unwrap();
        assert_eq!(s, BTreeSet::from([ResourceId::from("R1"), ResourceId::from("R2")]));
    }

    #[test]
    fn sequential_of_chain_ends_is_single() {
        let ps = three_step_schedule();
        assert_eq!(
            sequential_ras(&ps.entries[0], &ps).unwrap(),
            BTreeSet::from([ResourceId::from("M1")])
        );
        assert_eq!(
            sequential_ras(&ps.entries[2], &ps).unwrap(),
            BTreeSet::from([ResourceId::from("M1")])
        );
    }

    #[test]
    fn sequential_unknown_entry_errors() {
        let ps = three_step_schedule();
        let stray = ScheduledEvent::new(
            EventSpec::transform("P9", "M9", "raw", "p9"),
            "a",
            "M9",
            0,
            10,
        );
        assert_eq!(sequential_ras(&stray, &ps), Err(EnvironmentError::EventNotFound));
    }

    #[test]
    fn collaborative_by_shared_location() {
        let mut r = registry();
        r.insert(robot("R1", &["M1", "M2"]));
        r.insert(robot("R2", &["M3"]));
        let c = collaborative_ras(&LocationId::from("M1"), &ResourceId::from("M1"), &r);
        assert_eq!(c, BTreeSet::from([ResourceId::from("R1")]));
    }

    #[test]
    fn robot_collaborators_include_machines_and_robots() {
        let mut r = registry();
        r.insert(robot("R1", &["M1"]));
        r.insert(robot("R2", &["M1"]));
        let c = collaborative_ras(&LocationId::from("M1"), &ResourceId::from("R1"), &r);
        assert_eq!(c, BTreeSet::from([ResourceId::from("M1"), ResourceId::from("R2")]));
    }

    #[test]
    fn transformation_collaborators_are_never_transformations() {
        let mut r = registry();
        r.insert(robot("R1", &["M1", "M2"]));
        for m in ["M1", "M2", "M3"] {
            let c = collaborative_ras(&LocationId::from(m), &ResourceId::from(m), &r);
            for id in &c {
                assert_eq!(r.get(id).unwrap().class, ResourceClass::Transportation);
            }
        }
    }

    #[test]
    fn hard_requirement_mismatch_rejects() {
        let small = machine("M1", &["P1"]);
        let req = Requirements::hard_symbol("workspace", "large");
        assert_eq!(match_requirements(&EventId::from("P1"), &req, &small), MatchOutcome::Reject);
    }

    #[test]
    fn hard_requirement_match_accepts_free() {
        let mut large = machine("M1", &["P1"]);
        large.events.get_mut(&EventId::from("P1")).unwrap().attributes =
            vec![Attribute::sym("workspace", "large")];
        let req = Requirements::hard_symbol("workspace", "large");
        assert_eq!(
            match_requirements(&EventId::from("P1"), &req, &large),
            MatchOutcome::Accept { penalty: 0.0 }
        );
    }

    #[test]
    fn soft_requirement_within_tolerance_pays_linear_penalty() {
        let mut m = machine("M1", &["P1"]);
        m.events.get_mut(&EventId::from("P1")).unwrap().attributes = vec![Attribute::num("energy", 11.0)];
        let req = Requirements {
            hard: Vec::new(),
            soft: vec![SoftRequirement {
                attribute: Attribute::num("energy", 10.0),
                polarity: Polarity::AtMost,
                tolerance: 2.0,
                penalty_per_unit: 5.0,
            }],
        };
        match match_requirements(&EventId::from("P1"), &req, &m) {
            MatchOutcome::Accept { penalty } => assert!((penalty - 5.0).abs() < 1e-9),
            other => panic!("expected accept, got {other:?}"),
        }
    }

    #[test]
    fn soft_requirement_beyond_tolerance_rejects() {
        let mut m = machine("M1", &["P1"]);
        m.events.get_mut(&EventId::from("P1")).unwrap().attributes = vec![Attribute::num("energy", 13.0)];
        let req = Requirements {
            hard: Vec::new(),
            soft: vec![SoftRequirement {
                attribute: Attribute::num("energy", 10.0),
                polarity: Polarity::AtMost,
                tolerance: 2.0,
                penalty_per_unit: 5.0,
            }],
        };
        assert_eq!(match_requirements(&EventId::from("P1"), &req, &m), MatchOutcome::Reject);
    }

    #[test]
    fn missing_event_rejects() {
        let m = machine("M1", &["P1"]);
        assert_eq!(
            match_requirements(&EventId::from("P2"), &Requirements::none(), &m),
            MatchOutcome::Reject
        );
    }
}
