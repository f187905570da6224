//! Shared test oracles, independent of the library's scheduling paths.
//!
//! The tick-scan oracle re-derives earliest feasible insertions by trying
//! every start and re-validating the schedule under the one-shift rule; the
//! enumeration oracle re-derives the centralized candidate set from the
//! scenario description alone, timing legs with the tick scan.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resched_core::capability::{Registry, ResourceClass};
use resched_core::protocol::{CandidateSchedule, RepairRequest};
use resched_core::schedule::{
    apply_sequence, EventSpec, LocationId, PlanState, ResourceId, Span, Tick,
};
use resched_core::sim::{
    ArrivalSpec, MachineSpec, PrioritySpec, ProcessCap, ProductTypeSpec, RiskSpec, RobotSpec,
    Scenario, StochasticSpec, Workspace, SCENARIO_SCHEMA_VERSION,
};
use std::collections::{BTreeMap, BTreeSet};

// ── Tick-scan insertion oracle ───────────────────────────────────────────

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleInsertion {
    pub start: Tick,
    /// At most one `(busy index, new lo)`.
    pub shifts: Vec<(usize, Tick)>,
    /// `None` means unbounded (no posterior spans).
    pub t_max: Option<Tick>,
}

/// Validity of inserting `[s, s+dur)` among `busy` spans within
/// `[from, horizon)`: at most one existing span may move (right), every kept
/// or moved span keeps the `delta` gap, moved spans must still end `delta`
/// before the horizon, and the new event starts at least `delta` after the
/// window edge before it.
fn scan_valid(
    busy: &[Span],
    from: Tick,
    horizon: Tick,
    s: Tick,
    delta: Tick,
    dur: Tick,
) -> Option<(Vec<(usize, Tick)>, usize)> {
    if s < from + delta {
        return None;
    }
    let mut frontier = s + dur;
    let mut shifts = Vec::new();
    let mut left = 0usize;
    for (i, b) in busy.iter().enumerate() {
        if b.hi + delta <= s {
            left += 1;
            continue;
        }
        let need = frontier + delta;
        if b.lo >= need {
            frontier = b.hi;
            continue;
        }
        shifts.push((i, need));
        frontier = need + b.len();
    }
    if shifts.len() > 1 {
        return None;
    }
    for &(i, lo) in &shifts {
        if lo + busy[i].len() + delta > horizon {
            return None;
        }
    }
    Some((shifts, left))
}

/// Earliest feasible insertion by exhaustive start scan.
pub fn tick_scan(
    busy: &[Span],
    from: Tick,
    horizon: Tick,
    t: Tick,
    delta: Tick,
    dur: Tick,
) -> Option<OracleInsertion> {
    let bound = t.max(horizon) + delta + dur + 2;
    let mut found: Option<(Tick, Vec<(usize, Tick)>, usize)> = None;
    for s in t..=bound {
        if let Some((shifts, left)) = scan_valid(busy, from, horizon, s, delta, dur) {
            found = Some((s, shifts, left));
            break;
        }
    }
    let (start, shifts, left) = found?;
    let t_max = if left == busy.len() {
        None
    } else {
        // Latest start at this position: the insertion stays in front of the
        // bounding span, pushing it as far as the following span (or the
        // horizon wall) allows. Scanned mechanically.
        let blue = left;
        let mut last = start;
        let mut s = start;
        loop {
            s += 1;
            if s > bound {
                break;
            }
            if forced_position_valid(busy, horizon, s, delta, dur, blue) {
                last = s;
            } else {
                break;
            }
        }
        Some(last)
    };
    Some(OracleInsertion { start, shifts, t_max })
}

/// Validity of inserting at `s` while *requiring* the insertion to sit in
/// front of span `blue` (which moves right as needed); nothing beyond `blue`
/// may move and a moved `blue` must end `delta` before the next span or the
/// horizon.
fn forced_position_valid(
    busy: &[Span],
    horizon: Tick,
    s: Tick,
    delta: Tick,
    dur: Tick,
    blue: usize,
) -> bool {
    if blue > 0 && busy[blue - 1].hi + delta > s {
        return false;
    }
    let b = busy[blue];
    let new_lo = b.lo.max(s + dur + delta);
    if new_lo == b.lo {
        // Blue stays put; the pre-existing layout is already valid.
        return true;
    }
    let new_hi = new_lo + b.len();
    match busy.get(blue + 1) {
        Some(next) => new_hi + delta <= next.lo,
        None => b.hi < horizon && new_hi + delta <= horizon,
    }
}

// ── Small random scenarios for fuzzing and brute-force comparison ────────

pub fn small_scenario(rng: &mut ChaCha8Rng) -> Scenario {
    let n_machines = rng.gen_range(2..=4usize);
    let processes = ["P1", "P2"];
    let mut machines = Vec::new();
    let mut any_large_per_process: BTreeMap<&str, bool> = BTreeMap::new();
    for i in 0..n_machines {
        let n_proc = rng.gen_range(1..=2usize);
        let mut caps = Vec::new();
        let mut offered: Vec<&str> = processes.to_vec();
        for _ in 0..n_proc {
            let k = rng.gen_range(0..offered.len());
            let p = offered.remove(k);
            caps.push(ProcessCap {
                process: p.into(),
                time: rng.gen_range(20..=60),
            });
        }
        let workspace = if rng.gen_bool(0.5) {
            Workspace::Large
        } else {
            Workspace::Small
        };
        if workspace == Workspace::Large {
            for c in &caps {
                any_large_per_process.insert(
                    if c.process.as_str() == "P1" { "P1" } else { "P2" },
                    true,
                );
            }
        }
        machines.push(MachineSpec {
            id: format!("M{}", i + 1).as_str().into(),
            processes: caps,
            workspace,
            base_hazard: 0.05,
            nominal_ops: rng.gen_range(5..=10),
            initial_ops: rng.gen_range(0..=5),
        });
    }
    // Make sure both processes exist somewhere.
    for p in processes {
        if !machines.iter().any(|m| m.performs(&p.into())) {
            machines[0].processes.push(ProcessCap {
                process: p.into(),
                time: rng.gen_range(20..=60),
            });
        }
    }

    let all_locations: Vec<LocationId> = std::iter::once(LocationId::from("Entry"))
        .chain(machines.iter().map(|m| m.location()))
        .chain(std::iter::once(LocationId::from("Exit")))
        .collect();
    let mut robots = vec![RobotSpec {
        id: "R1".into(),
        reach: all_locations.clone(),
        move_time: rng.gen_range(3..=8),
    }];
    if rng.gen_bool(0.5) {
        // A second robot with partial reach.
        let mut reach = all_locations.clone();
        if reach.len() > 3 {
            let drop = rng.gen_range(1..reach.len() - 1);
            reach.remove(drop);
        }
        robots.push(RobotSpec {
            id: "R2".into(),
            reach,
            move_time: rng.gen_range(3..=8),
        });
    }

    // One or two product types; a large-requiring type only when every step
    // has a large host.
    let mut product_types = vec![ProductTypeSpec {
        label: "S".into(),
        route: vec!["P1".into()],
        stages: vec!["raw".into(), "s1".into()],
        workspace_required: None,
    }];
    if rng.gen_bool(0.6) {
        product_types[0].route.push("P2".into());
        product_types[0].stages.push("s2".into());
    }
    if any_large_per_process.get("P1").copied().unwrap_or(false) && rng.gen_bool(0.4) {
        product_types.push(ProductTypeSpec {
            label: "L".into(),
            route: vec!["P1".into()],
            stages: vec!["raw".into(), "l1".into()],
            workspace_required: Some(Workspace::Large),
        });
    }

    Scenario {
        schema_version: SCENARIO_SCHEMA_VERSION,
        name: "small".into(),
        entry: "Entry".into(),
        exit: "Exit".into(),
        machines,
        robots,
        product_types,
        arrivals: ArrivalSpec {
            count: rng.gen_range(2..=3),
            spacing: rng.gen_range(10..=40),
            start: rng.gen_range(0..=10),
        },
        stochastic: StochasticSpec {
            hazard_min: 0.033,
            hazard_max: 0.10,
            mttr_min: 40,
            mttr_max: 80,
            sigma_frac: 0.0,
            nominal_ops_min: 5,
            nominal_ops_max: 10,
        },
        delta: [0, 1, 5][rng.gen_range(0..3)],
        max_hops: 2,
        horizon: 2000,
        seed: 0,
        risk: RiskSpec {
            w1: 0.2,
            w2: 0.8,
            scale: 100.0,
            n_samples: 0,
        },
        priority: PrioritySpec {
            w_s: 1.0,
            w_d: 1.0,
            due_offset: 500,
        },
    }
}

// ── Independent enumeration oracle for the rescheduling search space ─────

/// A candidate as the oracle sees it: just the timed legs and the penalty.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleCandidate {
    pub legs: Vec<(ResourceId, EventSpec, Tick, Tick)>,
    pub penalty: f64,
}

impl OracleCandidate {
    pub fn completion(&self) -> Tick {
        self.legs.last().map(|l| l.3).unwrap_or(0)
    }

    pub fn j(&self) -> f64 {
        self.completion() as f64 + self.penalty
    }

    pub fn tie_key(&self) -> (Tick, usize, Vec<ResourceId>) {
        (
            self.completion(),
            self.legs.len(),
            self.legs.iter().map(|l| l.0.clone()).collect(),
        )
    }
}

pub struct OracleWorld<'a> {
    pub scenario: &'a Scenario,
    pub plan: &'a PlanState,
    pub registry: &'a Registry,
    pub now: Tick,
    pub excluded: BTreeSet<resched_core::schedule::EntryId>,
    pub holder_before: Option<resched_core::schedule::EntryId>,
    pub unavailable: BTreeSet<ResourceId>,
}

fn oracle_spans(w: &OracleWorld, extra: &BTreeMap<ResourceId, Vec<Span>>, resource: &ResourceId) -> Vec<Span> {
    let mut spans: Vec<Span> = w
        .plan
        .entry_spans(resource, w.now, w.scenario.horizon)
        .into_iter()
        .filter(|(id, _)| !w.excluded.contains(id))
        .map(|(_, s)| s)
        .collect();
    if let Some(e) = extra.get(resource) {
        spans.extend(e.iter().copied());
    }
    spans.sort();
    spans
}

fn oracle_delta(w: &OracleWorld, resource: &ResourceId) -> Tick {
    if w.scenario.machines.iter().any(|m| &m.id == resource) {
        w.scenario.delta
    } else {
        0
    }
}

/// One oracle transport leg: robot, endpoints, duration.
pub type OracleLeg = (ResourceId, LocationId, LocationId, Tick);

/// All robot chains between two locations along minimum-hop location paths,
/// derived straight from the robot reach lists.
fn oracle_chains(w: &OracleWorld, from: &LocationId, to: &LocationId) -> Vec<Vec<OracleLeg>> {
    if from == to {
        return vec![Vec::new()];
    }
    // Breadth-first levels over locations.
    let robots: Vec<&RobotSpec> = w.scenario.robots.iter().collect();
    let mut dist: BTreeMap<LocationId, usize> = BTreeMap::new();
    dist.insert(from.clone(), 0);
    let mut frontier = vec![from.clone()];
    let mut level = 0;
    while !frontier.is_empty() && level < w.scenario.max_hops {
        level += 1;
        let mut next = Vec::new();
        for loc in &frontier {
            for r in &robots {
                if !r.reach.contains(loc) {
                    continue;
                }
                for other in &r.reach {
                    if other != loc && !dist.contains_key(other) {
                        dist.insert(other.clone(), level);
                        next.push(other.clone());
                    }
                }
            }
        }
        frontier = next;
    }
    let Some(&target) = dist.get(to) else { return Vec::new() };

    // Depth-first expansion of every shortest path with every robot choice.
    let mut out: Vec<Vec<OracleLeg>> = Vec::new();
    let mut stack: Vec<(LocationId, Vec<OracleLeg>)> = vec![(from.clone(), Vec::new())];
    while let Some((here, chain)) = stack.pop() {
        if &here == to {
            if chain.len() == target {
                out.push(chain);
            }
            continue;
        }
        if chain.len() >= target {
            continue;
        }
        for r in &robots {
            if !r.reach.contains(&here) {
                continue;
            }
            for next_loc in &r.reach {
                if next_loc == &here {
                    continue;
                }
                match dist.get(next_loc) {
                    Some(&d) if d == chain.len() + 1 => {}
                    _ => continue,
                }
                let mut chain2 = chain.clone();
                chain2.push((r.id.clone(), here.clone(), next_loc.clone(), r.move_time));
                stack.push((next_loc.clone(), chain2));
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Time one leg sequence with the tick-scan oracle, mirroring the published
/// placement policy: transform first, inbound transports just in time,
/// outbound transports earliest.
fn oracle_time_legs(
    w: &OracleWorld,
    req: &RepairRequest,
    legs: &[(ResourceId, EventSpec, Tick)],
) -> Option<OracleCandidate> {
    let host_idx = legs.iter().position(|(_, ev, _)| !ev.effect.is_transport());
    let horizon = w.scenario.horizon;

    let inbound_total: Tick = match host_idx {
        Some(h) => legs[..h].iter().map(|(_, _, d)| *d).sum(),
        None => 0,
    };
    let mut arrival_guess = req.requested_time + inbound_total;

    'rounds: for _ in 0..8 {
        let mut extra: BTreeMap<ResourceId, Vec<Span>> = BTreeMap::new();
        let mut placed: Vec<(usize, ResourceId, EventSpec, Tick, Tick)> = Vec::new();

        let mut place = |extra: &mut BTreeMap<ResourceId, Vec<Span>>,
                         resource: &ResourceId,
                         dur: Tick,
                         t_req: Tick|
         -> Option<Tick> {
            let spans = oracle_spans(w, extra, resource);
            let delta = oracle_delta(w, resource);
            let ins = tick_scan(&spans, w.now, horizon.max(t_req + dur + delta + 1), t_req, delta, dur)?;
            let mut new_spans = spans.clone();
            for (i, lo) in &ins.shifts {
                new_spans[*i] = Span::new(*lo, *lo + spans[*i].len());
            }
            new_spans.push(Span::new(ins.start, ins.start + dur));
            new_spans.sort();
            extra.insert(
                resource.clone(),
                // Replace the view wholesale: simplest is to keep the deltas
                // from the plan separate, so store everything extra.
                {
                    let plan_spans: BTreeSet<Span> = w
                        .plan
                        .entry_spans(resource, w.now, horizon)
                        .into_iter()
                        .filter(|(id, _)| !w.excluded.contains(id))
                        .map(|(_, s)| s)
                        .collect();
                    new_spans
                        .iter()
                        .copied()
                        .filter(|s| !plan_spans.contains(s))
                        .collect()
                },
            );
            Some(ins.start)
        };

        match host_idx {
            Some(h) => {
                let (host_res, host_ev, host_dur) = &legs[h];
                let host_start = place(&mut extra, host_res, *host_dur, arrival_guess)?;
                placed.push((h, host_res.clone(), host_ev.clone(), host_start, host_start + host_dur));

                let mut t = req.requested_time;
                for (j, (res, ev, dur)) in legs[..h].iter().enumerate() {
                    let remaining: Tick = legs[j..h].iter().map(|(_, _, d)| *d).sum();
                    let target = host_start.saturating_sub(remaining).max(t);
                    let start = place(&mut extra, res, *dur, target)?;
                    placed.push((j, res.clone(), ev.clone(), start, start + dur));
                    t = start + dur;
                }
                if t > host_start {
                    arrival_guess = t;
                    continue 'rounds;
                }
                let mut t2 = host_start + host_dur;
                for (j, (res, ev, dur)) in legs[h + 1..].iter().enumerate() {
                    let start = place(&mut extra, res, *dur, t2)?;
                    placed.push((h + 1 + j, res.clone(), ev.clone(), start, start + dur));
                    t2 = start + dur;
                }
            }
            None => {
                let mut t = req.requested_time;
                for (j, (res, ev, dur)) in legs.iter().enumerate() {
                    let start = place(&mut extra, res, *dur, t)?;
                    placed.push((j, res.clone(), ev.clone(), start, start + dur));
                    t = start + dur;
                }
            }
        }

        placed.sort_by_key(|(j, _, _, _, _)| *j);
        let timed: Vec<(ResourceId, EventSpec, Tick, Tick)> = placed
            .into_iter()
            .map(|(_, r, e, s, f)| (r, e, s, f))
            .collect();

        for wpair in timed.windows(2) {
            if wpair[0].3 > wpair[1].2 {
                return None;
            }
        }

        // Inter-leg holds must not collide with the holder's other work.
        for wpair in timed.windows(2) {
            let (a, b) = (&wpair[0], &wpair[1]);
            if b.2 > a.3 {
                let delta = oracle_delta(w, &a.0);
                let spans = oracle_spans(w, &extra, &a.0);
                let extended = Span::new(a.2, b.2);
                for s in &spans {
                    if *s == Span::new(a.2, a.3) {
                        continue;
                    }
                    if s.overlaps(&extended)
                        || (s.lo >= extended.hi && s.lo < extended.hi + delta)
                    {
                        return None;
                    }
                }
            }
        }
        if let Some(holder) = w.holder_before {
            if let Some(entry) = w.plan.entry(holder) {
                let first = timed[0].2;
                if first > entry.release {
                    let delta = oracle_delta(w, &entry.resource);
                    let spans = oracle_spans(w, &extra, &entry.resource);
                    let extended = Span::new(entry.start, first);
                    for s in &spans {
                        if *s == Span::new(entry.start, entry.end) {
                            continue;
                        }
                        if s.overlaps(&extended)
                            || (s.lo >= extended.hi && s.lo < extended.hi + delta)
                        {
                            return None;
                        }
                    }
                }
            }
        }

        let events: Vec<&EventSpec> = timed.iter().map(|(_, e, _, _)| e).collect();
        let folded = apply_sequence(&req.x_prior, events).ok()?;
        if folded != req.x_post {
            return None;
        }
        return Some(OracleCandidate {
            legs: timed,
            penalty: 0.0,
        });
    }
    None
}

/// The full feasible candidate set for one repair request, enumerated from
/// the scenario description.
pub fn oracle_feasible_set(w: &OracleWorld, req: &RepairRequest) -> Vec<OracleCandidate> {
    let mut out = Vec::new();

    if req.x_prior.composition == req.x_post.composition {
        for chain in oracle_chains(w, &req.x_prior.location, &req.x_post.location) {
            if chain.is_empty() {
                continue;
            }
            let legs = chain_to_legs(&chain);
            if let Some(c) = oracle_time_legs(w, req, &legs) {
                out.push(c);
            }
        }
        dedup_by_legs(&mut out);
        return out;
    }

    for machine in &w.scenario.machines {
        if w.unavailable.contains(&machine.id) {
            continue;
        }
        let Some(dur) = machine.time_of(&req.affected_event) else { continue };
        // Hard workspace requirement, re-derived from the scenario.
        let needs_large = req
            .requirements
            .hard
            .iter()
            .any(|h| h.attribute.name == "workspace");
        if needs_large && machine.workspace != Workspace::Large {
            continue;
        }
        let host_loc = machine.location();
        let transform = EventSpec::transform(
            req.affected_event.clone(),
            host_loc.clone(),
            req.x_prior.composition.clone(),
            req.x_post.composition.clone(),
        );
        for chain_in in oracle_chains(w, &req.x_prior.location, &host_loc) {
            for chain_out in oracle_chains(w, &host_loc, &req.x_post.location) {
                let mut legs = chain_to_legs(&chain_in);
                legs.push((machine.id.clone(), transform.clone(), dur));
                legs.extend(chain_to_legs(&chain_out));
                if let Some(c) = oracle_time_legs(w, req, &legs) {
                    out.push(c);
                }
            }
        }
    }
    dedup_by_legs(&mut out);
    out
}

fn chain_to_legs(chain: &[OracleLeg]) -> Vec<(ResourceId, EventSpec, Tick)> {
    chain
        .iter()
        .map(|(robot, from, to, dur)| {
            let ev = EventSpec::transport(format!("move({from},{to})"), from.clone(), to.clone());
            (robot.clone(), ev, *dur)
        })
        .collect()
}

fn dedup_by_legs(cands: &mut Vec<OracleCandidate>) {
    cands.sort_by_key(|c| {
        (
            c.legs
                .iter()
                .map(|(r, e, s, f)| (r.clone(), e.id.clone(), *s, *f))
                .collect::<Vec<_>>(),
        )
    });
    cands.dedup_by(|a, b| a.legs == b.legs);
}

/// Oracle argmin with the implementation's tie-break.
pub fn oracle_best(cands: &[OracleCandidate]) -> Option<&OracleCandidate> {
    cands.iter().min_by(|a, b| {
        a.j()
            .partial_cmp(&b.j())
            .unwrap()
            .then_with(|| a.tie_key().cmp(&b.tie_key()))
    })
}

/// Compare an implementation candidate with an oracle candidate leg by leg.
pub fn legs_match(imp: &CandidateSchedule, orc: &OracleCandidate) -> bool {
    imp.events.len() == orc.legs.len()
        && imp.events.iter().zip(&orc.legs).all(|(l, (r, e, s, f))| {
            &l.resource == r && l.event.id == e.id && l.start == *s && l.end == *f
        })
}

/// Deterministic rng for a test case.
pub fn case_rng(base: u64, case: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(base ^ case.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Registry lookup shortcut used by tests.
pub fn transform_hosts(registry: &Registry) -> Vec<ResourceId> {
    registry
        .iter()
        .filter(|m| m.class == ResourceClass::Transformation)
        .map(|m| m.resource.clone())
        .collect()
}
