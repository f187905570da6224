//! Candidate replacement-schedule construction.
//!
//! A transform bidder rebuilds the state transition as
//! `[transports x_prior.loc -> bidder, affected event @ bidder, transports
//! bidder -> x_post.loc]`; a transport bidder replaces the broken move with
//! its own. Leg timings chain through the earliest-start insertion, each leg
//! requested at the previous leg's completion. Between legs the part stays
//! with the resource that just finished, so that hold must fit into the
//! holder's schedule or the combination is rejected.

use super::{CandidateLeg, CandidateSchedule, RepairRequest, ShiftedEntry, SlackTerm};
use crate::capability::{CapabilityModel, Registry, ResourceClass};
use crate::schedule::{
    complement_spans, earliest_start, EntryId, EventId, EventSpec, LocationId, PlanState,
    ResourceId, Span, Tick,
};
use std::collections::{BTreeMap, BTreeSet};

/// Hard bounds keeping the enumeration finite on pathological layouts.
const MAX_CHAINS_PER_LEG: usize = 64;
const MAX_COMBOS_PER_HOST: usize = 128;

/// Everything a bidder needs to look at to time a candidate.
pub struct CandidateContext<'a> {
    pub plan: &'a PlanState,
    pub registry: &'a Registry,
    /// Gap machines keep between consecutive operations.
    pub delta: Tick,
    /// Transport propagation depth limit.
    pub max_hops: usize,
    pub now: Tick,
    pub horizon: Tick,
    /// Entries being replaced; invisible to insertion scans.
    pub excluded: &'a BTreeSet<EntryId>,
    /// Chain entry holding the part before the replaced span, if any; its
    /// hold must stretch to the first leg's start.
    pub holder_before: Option<EntryId>,
    /// Resources that cannot host anything right now: the disrupted machine
    /// and anything else currently down.
    pub unavailable: &'a BTreeSet<ResourceId>,
}

/// One transport option for a leg: the robots and move events that realize
/// it, in travel order.
pub type TransportChain = Vec<(ResourceId, EventSpec, Tick)>;

/// Conventional capability label of a move between two locations.
pub fn transport_event_id(from: &LocationId, to: &LocationId) -> EventId {
    EventId::from(format!("move({from},{to})"))
}

/// All minimum-hop transport chains from `from` to `to` using robots drawn
/// from `scope`, bounded by `max_hops`. Direct moves come first; multi-hop
/// paths are only used when no robot spans the leg directly (the minimum hop
/// count rises). Deterministic: locations and robots iterate in sorted order.
pub fn transport_paths(
    from: &LocationId,
    to: &LocationId,
    scope: &BTreeSet<ResourceId>,
    registry: &Registry,
    max_hops: usize,
) -> Vec<TransportChain> {
    if from == to {
        return vec![Vec::new()];
    }
    if max_hops == 0 {
        return Vec::new();
    }

    // Location adjacency over the scoped robots.
    let mut adjacency: BTreeMap<LocationId, BTreeSet<LocationId>> = BTreeMap::new();
    let mut edge_robots: BTreeMap<(LocationId, LocationId), Vec<ResourceId>> = BTreeMap::new();
    for rid in scope {
        let Some(model) = registry.get(rid) else { continue };
        if model.class != ResourceClass::Transportation {
            continue;
        }
        for a in &model.states {
            for b in &model.states {
                if a == b {
                    continue;
                }
                if model.has_event(&transport_event_id(a, b)) {
                    adjacency.entry(a.clone()).or_default().insert(b.clone());
                    edge_robots
                        .entry((a.clone(), b.clone()))
                        .or_default()
                        .push(rid.clone());
                }
            }
        }
    }

    // Breadth-first distance from `from`.
    let mut dist: BTreeMap<LocationId, usize> = BTreeMap::new();
    dist.insert(from.clone(), 0);
    let mut frontier = vec![from.clone()];
    let mut depth = 0;
    while !frontier.is_empty() && depth < max_hops {
        depth += 1;
        let mut next = Vec::new();
        for loc in &frontier {
            if let Some(neighbors) = adjacency.get(loc) {
                for n in neighbors {
                    if !dist.contains_key(n) {
                        dist.insert(n.clone(), depth);
                        next.push(n.clone());
                    }
                }
            }
        }
        frontier = next;
    }
    let Some(&target_dist) = dist.get(to) else {
        return Vec::new();
    };

    // Enumerate every location path of exactly the minimum length, then every
    // robot assignment along it.
    let mut chains: Vec<TransportChain> = Vec::new();
    let mut path = vec![from.clone()];
    collect_paths(
        &adjacency,
        &edge_robots,
        &dist,
        to,
        target_dist,
        &mut path,
        &mut chains,
    );
    chains.truncate(MAX_CHAINS_PER_LEG);
    chains
}

fn collect_paths(
    adjacency: &BTreeMap<LocationId, BTreeSet<LocationId>>,
    edge_robots: &BTreeMap<(LocationId, LocationId), Vec<ResourceId>>,
    dist: &BTreeMap<LocationId, usize>,
    to: &LocationId,
    target_dist: usize,
    path: &mut Vec<LocationId>,
    chains: &mut Vec<TransportChain>,
) {
    if chains.len() >= MAX_CHAINS_PER_LEG {
        return;
    }
    let here = path.last().unwrap().clone();
    let steps_taken = path.len() - 1;
    if &here == to {
        if steps_taken == target_dist {
            expand_robot_assignments(edge_robots, path, chains);
        }
        return;
    }
    if steps_taken >= target_dist {
        return;
    }
    let Some(neighbors) = adjacency.get(&here) else { return };
    for n in neighbors {
        // Only descend along shortest-path edges.
        match dist.get(n) {
            Some(&d) if d == steps_taken + 1 => {}
            _ => continue,
        }
        path.push(n.clone());
        collect_paths(adjacency, edge_robots, dist, to, target_dist, path, chains);
        path.pop();
    }
}

fn expand_robot_assignments(
    edge_robots: &BTreeMap<(LocationId, LocationId), Vec<ResourceId>>,
    path: &[LocationId],
    chains: &mut Vec<TransportChain>,
) {
    let mut partial: Vec<TransportChain> = vec![Vec::new()];
    for w in path.windows(2) {
        let key = (w[0].clone(), w[1].clone());
        let robots = match edge_robots.get(&key) {
            Some(r) => r,
            None => return,
        };
        let mut grown = Vec::new();
        for chain in &partial {
            for robot in robots {
                if grown.len() + chains.len() >= MAX_CHAINS_PER_LEG {
                    break;
                }
                let mut c = chain.clone();
                c.push((robot.clone(), EventSpec::default_move(&w[0], &w[1]), 0));
                grown.push(c);
            }
        }
        partial = grown;
    }
    chains.extend(partial);
}

impl EventSpec {
    /// Move event between two locations with the conventional label; the
    /// duration is filled in from the robot's capability when timing.
    fn default_move(from: &LocationId, to: &LocationId) -> EventSpec {
        EventSpec {
            id: transport_event_id(from, to),
            effect: crate::schedule::EventEffect::Transport {
                from: from.clone(),
                to: to.clone(),
            },
        }
    }
}

/// Overlay of staged insertions and shifts on top of the live plan, so
/// chained legs see each other.
struct Scratch<'a, 'b> {
    ctx: &'a CandidateContext<'b>,
    staged: BTreeMap<ResourceId, Vec<Span>>,
    shifts: BTreeMap<EntryId, Tick>,
}

enum SpanOrigin {
    Plan(EntryId),
    Staged,
}

impl<'a, 'b> Scratch<'a, 'b> {
    fn new(ctx: &'a CandidateContext<'b>) -> Self {
        Self {
            ctx,
            staged: BTreeMap::new(),
            shifts: BTreeMap::new(),
        }
    }

    /// Per-entry occupied spans of `resource` with exclusions, staged legs
    /// and staged shifts applied.
    fn spans(&self, resource: &ResourceId) -> Vec<(SpanOrigin, Span)> {
        let mut out: Vec<(SpanOrigin, Span)> = Vec::new();
        for (id, span) in self
            .ctx
            .plan
            .entry_spans(resource, self.ctx.now, self.ctx.horizon)
        {
            if self.ctx.excluded.contains(&id) {
                continue;
            }
            let span = match self.shifts.get(&id) {
                Some(&new_lo) => Span::new(new_lo, new_lo + span.len()),
                None => span,
            };
            out.push((SpanOrigin::Plan(id), span));
        }
        if let Some(staged) = self.staged.get(resource) {
            for s in staged {
                out.push((SpanOrigin::Staged, *s));
            }
        }
        out.sort_by_key(|(_, s)| (s.lo, s.hi));
        out
    }

    /// Insert a leg of `dur` ticks on `resource` at the earliest start at or
    /// after `t_req`.
    fn insert(
        &mut self,
        resource: &ResourceId,
        dur: Tick,
        t_req: Tick,
        delta_r: Tick,
    ) -> Option<(Tick, SlackTerm, Option<ShiftedEntry>)> {
        let tagged = self.spans(resource);
        let busy: Vec<Span> = tagged.iter().map(|(_, s)| *s).collect();
        let mut merged = busy.clone();
        merged.sort();
        merge_in_place(&mut merged);
        let horizon = self.ctx.horizon.max(t_req + dur + delta_r + 1);
        let idle = complement_spans(&merged, self.ctx.now, horizon);

        let insertion = earliest_start(&idle, &busy, t_req, delta_r, dur).ok()?;

        let shift = match insertion.shifted {
            Some(shift) => match &tagged[shift.busy_index].0 {
                SpanOrigin::Plan(id) => {
                    // Work that already ran (or is running) cannot move.
                    if self.ctx.plan.entry(*id).is_some_and(|e| e.pinned) {
                        return None;
                    }
                    self.shifts.insert(*id, shift.new_lo);
                    Some(ShiftedEntry {
                        entry: *id,
                        new_start: shift.new_lo,
                    })
                }
                // Shifting a leg staged earlier in this same candidate would
                // break the chain; drop the combination.
                SpanOrigin::Staged => return None,
            },
            None => None,
        };

        let posterior_len = insertion
            .posterior
            .map(|idx| tagged[idx].1.len());

        self.staged
            .entry(resource.clone())
            .or_default()
            .push(Span::new(insertion.start, insertion.start + dur));

        let term = SlackTerm {
            resource: resource.clone(),
            start: insertion.start,
            t_max: insertion.t_max,
            posterior_len,
        };
        Some((insertion.start, term, shift))
    }

    /// Would extending an occupied span to `until` collide with anything
    /// else on the resource (respecting its gap)?
    fn extension_fits(&self, resource: &ResourceId, own: Span, until: Tick, delta_r: Tick) -> bool {
        if until <= own.hi {
            return true;
        }
        let extended = Span::new(own.lo, until);
        for (_, other) in self.spans(resource) {
            if other == own {
                continue;
            }
            if other.overlaps(&extended) {
                return false;
            }
            // Gap after the extended span.
            if other.lo >= extended.hi && other.lo < extended.hi.saturating_add(delta_r) {
                return false;
            }
        }
        true
    }
}

fn merge_in_place(spans: &mut Vec<Span>) {
    let mut merged: Vec<Span> = Vec::with_capacity(spans.len());
    for s in spans.drain(..) {
        match merged.last_mut() {
            Some(last) if s.lo <= last.hi => last.hi = last.hi.max(s.hi),
            _ => merged.push(s),
        }
    }
    *spans = merged;
}

fn delta_for(ctx: &CandidateContext, resource: &ResourceId) -> Tick {
    match ctx.registry.get(resource).map(|m| m.class) {
        Some(ResourceClass::Transformation) => ctx.delta,
        _ => 0,
    }
}

/// Time a fully specified leg sequence.
///
/// The transform leg is placed first; inbound transports are then requested
/// just in time to arrive at its start, so the part waits upstream (with the
/// previous holder or in a buffer) rather than on a robot. When the inbound
/// legs cannot make the host's start, the host is re-placed later and the
/// pass repeats. Returns `None` when any leg finds no slot, a leg would
/// shift a staged sibling, or an inter-leg hold does not fit its holder's
/// schedule.
pub(crate) fn build_timed(
    ctx: &CandidateContext,
    req: &RepairRequest,
    legs_spec: &[(ResourceId, EventSpec, Tick)],
    penalty: f64,
) -> Option<CandidateSchedule> {
    if legs_spec.is_empty() {
        return None;
    }
    let host_idx = legs_spec.iter().position(|(_, ev, _)| !ev.effect.is_transport());

    let inbound_total: Tick = match host_idx {
        Some(h) => legs_spec[..h].iter().map(|(_, _, d)| *d).sum(),
        None => 0,
    };
    let mut arrival_guess = req.requested_time + inbound_total;

    for _round in 0..8 {
        let mut scratch = Scratch::new(ctx);
        let mut placed: Vec<(usize, CandidateLeg, SlackTerm, Option<ShiftedEntry>)> = Vec::new();
        let mut ok = true;

        let mut retry_later: Option<Tick> = None;
        match host_idx {
            Some(h) => {
                let (host_res, host_ev, host_dur) = &legs_spec[h];
                let (host_start, host_term, host_shift) =
                    scratch.insert(host_res, *host_dur, arrival_guess, delta_for(ctx, host_res))?;
                placed.push((
                    h,
                    CandidateLeg {
                        event: host_ev.clone(),
                        resource: host_res.clone(),
                        start: host_start,
                        end: host_start + host_dur,
                    },
                    host_term,
                    host_shift,
                ));

                // Inbound transports, just in time for the host start.
                let mut t = req.requested_time;
                for (j, (res, ev, dur)) in legs_spec[..h].iter().enumerate() {
                    let remaining: Tick = legs_spec[j..h].iter().map(|(_, _, d)| *d).sum();
                    let target = host_start.saturating_sub(remaining).max(t);
                    let Some((start, term, shift)) = scratch.insert(res, *dur, target, delta_for(ctx, res)) else {
                        ok = false;
                        break;
                    };
                    placed.push((
                        j,
                        CandidateLeg {
                            event: ev.clone(),
                            resource: res.clone(),
                            start,
                            end: start + dur,
                        },
                        term,
                        shift,
                    ));
                    t = start + dur;
                }
                if !ok {
                    return None;
                }
                if t > host_start {
                    // The part cannot reach the host in time; place the host
                    // later and try again.
                    retry_later = Some(t);
                } else {
                    // Outbound transports, earliest after the host finishes.
                    let mut t2 = host_start + host_dur;
                    for (j, (res, ev, dur)) in legs_spec[h + 1..].iter().enumerate() {
                        let Some((start, term, shift)) = scratch.insert(res, *dur, t2, delta_for(ctx, res))
                        else {
                            ok = false;
                            break;
                        };
                        placed.push((
                            h + 1 + j,
                            CandidateLeg {
                                event: ev.clone(),
                                resource: res.clone(),
                                start,
                                end: start + dur,
                            },
                            term,
                            shift,
                        ));
                        t2 = start + dur;
                    }
                    if !ok {
                        return None;
                    }
                }
            }
            None => {
                // Pure transport chain: earliest forward placement.
                let mut t = req.requested_time;
                for (j, (res, ev, dur)) in legs_spec.iter().enumerate() {
                    let (start, term, shift) = scratch.insert(res, *dur, t, delta_for(ctx, res))?;
                    placed.push((
                        j,
                        CandidateLeg {
                            event: ev.clone(),
                            resource: res.clone(),
                            start,
                            end: start + dur,
                        },
                        term,
                        shift,
                    ));
                    t = start + dur;
                }
            }
        }

        if let Some(later) = retry_later {
            debug_assert!(later > arrival_guess);
            arrival_guess = later;
            continue;
        }

        placed.sort_by_key(|(j, _, _, _)| *j);
        let legs: Vec<CandidateLeg> = placed.iter().map(|(_, l, _, _)| l.clone()).collect();
        let slack_terms: Vec<SlackTerm> = placed.iter().map(|(_, _, t, _)| t.clone()).collect();
        let shifts: Vec<ShiftedEntry> = placed.iter().filter_map(|(_, _, _, s)| *s).collect();

        // Precedence along the chain.
        for w in legs.windows(2) {
            if w[0].end > w[1].start {
                return None;
            }
        }

        // Inter-leg holds: the part stays with the finished leg's resource
        // until the next leg starts.
        for w in legs.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if b.start > a.end {
                let own = Span::new(a.start, a.end);
                if !scratch.extension_fits(&a.resource, own, b.start, delta_for(ctx, &a.resource)) {
                    return None;
                }
            }
        }

        // Pre-boundary hold: whatever held the part before the replaced span
        // keeps holding it until the first leg starts.
        if let Some(holder) = ctx.holder_before {
            if let Some(entry) = ctx.plan.entry(holder) {
                let first_start = legs[0].start;
                if first_start > entry.release
                    && !scratch.extension_fits(
                        &entry.resource,
                        Span::new(entry.start, entry.end),
                        first_start,
                        delta_for(ctx, &entry.resource),
                    )
                {
                    return None;
                }
            }
        }

        // The sequence must rebuild the requested transition.
        let folded = crate::schedule::apply_sequence(
            &req.x_prior,
            legs.iter().map(|l| &l.event).collect::<Vec<_>>(),
        )
        .ok()?;
        if folded != req.x_post {
            return None;
        }

        return Some(CandidateSchedule {
            events: legs,
            penalty,
            shifts,
            slack_terms,
        });
    }
    None
}

/// Location a transformation resource works at.
pub(crate) fn host_location(model: &CapabilityModel) -> Option<&LocationId> {
    model.states.iter().next()
}

/// Enumerate the candidate schedules one transform host can offer, over all
/// inbound/outbound transport combinations.
pub(crate) fn host_combos(
    ctx: &CandidateContext,
    req: &RepairRequest,
    host: &CapabilityModel,
    penalty: f64,
    robot_scope: &BTreeSet<ResourceId>,
) -> Vec<CandidateSchedule> {
    let Some(loc) = host_location(host) else {
        return Vec::new();
    };
    let Some(dur) = host.cost_of(&req.affected_event) else {
        return Vec::new();
    };
    let transform = EventSpec::transform(
        req.affected_event.clone(),
        loc.clone(),
        req.x_prior.composition.clone(),
        req.x_post.composition.clone(),
    );

    let inbound = transport_paths(&req.x_prior.location, loc, robot_scope, ctx.registry, ctx.max_hops);
    let outbound = transport_paths(loc, &req.x_post.location, robot_scope, ctx.registry, ctx.max_hops);

    let mut out = Vec::new();
    'combos: for chain_in in &inbound {
        for chain_out in &outbound {
            if out.len() >= MAX_COMBOS_PER_HOST {
                break 'combos;
            }
            let mut legs_spec: Vec<(ResourceId, EventSpec, Tick)> = Vec::new();
            let mut ok = true;
            for (robot, ev, _) in chain_in {
                match robot_move_cost(ctx.registry, robot, &ev.id) {
                    Some(cost) => legs_spec.push((robot.clone(), ev.clone(), cost)),
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                continue;
            }
            legs_spec.push((host.resource.clone(), transform.clone(), dur));
            for (robot, ev, _) in chain_out {
                match robot_move_cost(ctx.registry, robot, &ev.id) {
                    Some(cost) => legs_spec.push((robot.clone(), ev.clone(), cost)),
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                continue;
            }
            if let Some(c) = build_timed(ctx, req, &legs_spec, penalty) {
                out.push(c);
            }
        }
    }
    out
}

fn robot_move_cost(registry: &Registry, robot: &ResourceId, event: &EventId) -> Option<Tick> {
    registry.get(robot)?.cost_of(event)
}

/// Robots a transform bidder talks to: its transport collaborators plus any
/// robot appearing in a propagated chain. Each contacted robot costs a
/// request and a response on the bus.
fn contacted_robots(
    ctx: &CandidateContext,
    host_loc: &LocationId,
    chains: &[Vec<TransportChain>],
) -> BTreeSet<ResourceId> {
    let mut contacted: BTreeSet<ResourceId> = ctx
        .registry
        .iter()
        .filter(|m| m.class == ResourceClass::Transportation && m.states.contains(host_loc))
        .map(|m| m.resource.clone())
        .collect();
    for leg in chains {
        for chain in leg {
            for (robot, _, _) in chain {
                contacted.insert(robot.clone());
            }
        }
    }
    contacted
}

/// Distributed bid of one cluster member that already passed match-making.
///
/// Transport bidders offer their own single move when it spans the broken
/// leg. Transform bidders assemble transports from their collaborative
/// robots, propagating up to `ctx.max_hops` when no single move covers a
/// leg; every contacted robot is charged as a request/response pair on the
/// bus. An empty return means this bidder cannot form a feasible candidate.
pub fn generate_candidate(
    bidder: &CapabilityModel,
    req: &RepairRequest,
    ctx: &CandidateContext,
    penalty: f64,
    tick: Tick,
    bus: &mut super::MessageBus,
) -> Vec<CandidateSchedule> {
    match bidder.class {
        ResourceClass::Transportation => {
            let ev_id = transport_event_id(&req.x_prior.location, &req.x_post.location);
            let Some(cost) = bidder.cost_of(&ev_id) else {
                return Vec::new();
            };
            let ev = EventSpec::transport(
                ev_id,
                req.x_prior.location.clone(),
                req.x_post.location.clone(),
            );
            build_timed(ctx, req, &[(bidder.resource.clone(), ev, cost)], penalty)
                .into_iter()
                .collect()
        }
        ResourceClass::Transformation => {
            let Some(loc) = host_location(bidder).cloned() else {
                return Vec::new();
            };
            let all_robots: BTreeSet<ResourceId> = ctx
                .registry
                .iter()
                .filter(|m| m.class == ResourceClass::Transportation)
                .map(|m| m.resource.clone())
                .collect();
            let inbound = transport_paths(
                &req.x_prior.location,
                &loc,
                &all_robots,
                ctx.registry,
                ctx.max_hops,
            );
            let outbound = transport_paths(&loc, &req.x_post.location, &all_robots, ctx.registry, ctx.max_hops);
            for robot in contacted_robots(ctx, &loc, &[inbound, outbound]) {
                bus.send_parts(
                    tick,
                    &bidder.resource,
                    &robot,
                    super::MessageKind::Request,
                    format!("transport({}, {})", req.x_prior.location, req.x_post.location),
                );
                bus.send_parts(
                    tick,
                    &robot,
                    &bidder.resource,
                    super::MessageKind::Response,
                    "moves",
                );
            }
            host_combos(ctx, req, bidder, penalty, &all_robots)
        }
    }
}

/// Enumeration used by the centralized sweep: every host that can perform
/// the affected event (meeting the hard requirements) with every transport
/// combination. Distributed bids are built by the same machinery restricted
/// to one host, so their candidates are a subset of this one's by
/// construction.
pub fn enumerate_combos(req: &RepairRequest, ctx: &CandidateContext) -> Vec<CandidateSchedule> {
    let all_robots: BTreeSet<ResourceId> = ctx
        .registry
        .iter()
        .filter(|m| m.class == ResourceClass::Transportation)
        .map(|m| m.resource.clone())
        .collect();

    // A pure-transport span is rebuilt from transport chains alone.
    if req.x_prior.composition == req.x_post.composition {
        let chains = transport_paths(
            &req.x_prior.location,
            &req.x_post.location,
            &all_robots,
            ctx.registry,
            ctx.max_hops,
        );
        let mut out = Vec::new();
        for chain in &chains {
            if chain.is_empty() {
                continue;
            }
            let mut legs = Vec::new();
            let mut ok = true;
            for (robot, ev, _) in chain {
                match robot_move_cost(ctx.registry, robot, &ev.id) {
                    Some(cost) => legs.push((robot.clone(), ev.clone(), cost)),
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                continue;
            }
            if let Some(c) = build_timed(ctx, req, &legs, 0.0) {
                out.push(c);
            }
        }
        return out;
    }

    let mut out = Vec::new();
    for model in ctx.registry.iter() {
        if model.class != ResourceClass::Transformation {
            continue;
        }
        if ctx.unavailable.contains(&model.resource) {
            continue;
        }
        let penalty = match crate::capability::match_requirements(
            &req.affected_event,
            &req.requirements,
            model,
        ) {
            crate::capability::MatchOutcome::Accept { penalty } => penalty,
            crate::capability::MatchOutcome::Reject => continue,
        };
        out.extend(host_combos(ctx, req, model, penalty, &all_robots));
    }
    out
}
