//! Initial production schedule: greedy earliest-launch list scheduling with
//! rigid no-wait chains.
//!
//! Each product's whole route is chained back to back (transport, process,
//! transport, ...) and launched at the earliest tick where every leg lands in
//! a free slot of its assigned resource. Chaining keeps product timelines
//! gap-free by construction; scanning launches forward spreads operations
//! out, which is what gives the schedule its intended slack.

use super::scenario::{Scenario, ScenarioError};
use crate::protocol::transport_event_id;
use crate::schedule::{
    EventSpec, LocationId, PlanState, ProductId, ProductState, ResourceId, Span, Tick,
};
use std::collections::BTreeMap;

/// A fully planned leg before commitment.
struct LegPlan {
    resource: ResourceId,
    event: EventSpec,
    start: Tick,
    dur: Tick,
}

/// Busy spans tracked per resource while building (the plan itself is only
/// written once a whole product chain fits).
#[derive(Default)]
struct Occupancy {
    spans: BTreeMap<ResourceId, Vec<Span>>,
}

impl Occupancy {
    /// Does `[start, start+dur)` fit on `resource` with `gap` clearance on
    /// both sides? On conflict, returns a tick after the blocking span.
    fn fits(&self, resource: &ResourceId, start: Tick, dur: Tick, gap: Tick) -> Result<(), Tick> {
        let (lo, hi) = (start, start + dur);
        if let Some(spans) = self.spans.get(resource) {
            for s in spans {
                let clear_before = hi + gap <= s.lo;
                let clear_after = s.hi + gap <= lo;
                if !clear_before && !clear_after {
                    return Err(s.hi + gap);
                }
            }
        }
        Ok(())
    }

    fn occupy(&mut self, resource: &ResourceId, start: Tick, dur: Tick) {
        self.spans
            .entry(resource.clone())
            .or_default()
            .push(Span::new(start, start + dur));
    }
}

/// Generate the initial schedule for a scenario.
///
/// Returns the populated plan, the per-product due dates, and the achieved
/// machine utilization over the makespan.
pub fn generate_initial_schedule(
    scenario: &Scenario,
) -> Result<(PlanState, BTreeMap<ProductId, Tick>, f64), ScenarioError> {
    scenario.validate()?;

    let mut plan = PlanState::new();
    for m in &scenario.machines {
        plan.add_resource(m.id.clone(), scenario.delta);
    }
    for r in &scenario.robots {
        plan.add_resource(r.id.clone(), 0);
    }

    let mut occupancy = Occupancy::default();
    let mut machine_load: BTreeMap<ResourceId, Tick> = BTreeMap::new();
    let mut robot_usage: BTreeMap<ResourceId, u64> = BTreeMap::new();
    let mut due = BTreeMap::new();

    for (product, arrival, type_idx) in scenario.arrivals_list() {
        let pt = &scenario.product_types[type_idx];
        due.insert(product.clone(), arrival + scenario.priority.due_offset);

        // Fix the machine for every step up front (least accumulated load
        // first, so restricted large-only work spreads and everything else
        // fills in around it); the launch scan then only moves time.
        let mut hosts: Vec<&super::scenario::MachineSpec> = Vec::with_capacity(pt.route.len());
        for step in 0..pt.route.len() {
            let process = &pt.route[step];
            let eligible = scenario.eligible_machines(pt, step);
            if eligible.is_empty() {
                return Err(ScenarioError::NoEligibleMachine {
                    label: pt.label.clone(),
                    step,
                });
            }
            let host = eligible
                .iter()
                .filter(|m| step == 0 || hosts[step - 1].id != m.id || eligible.len() == 1)
                .min_by_key(|m| {
                    (
                        machine_load.get(&m.id).copied().unwrap_or(0),
                        m.id.clone(),
                    )
                })
                .copied()
                .expect("nonempty eligible set");
            let dur = host.time_of(process).expect("eligible host performs the process");
            *machine_load.entry(host.id.clone()).or_insert(0) += dur;
            hosts.push(host);
        }

        let mut launch = arrival;
        let legs = loop {
            match try_chain(scenario, &occupancy, &robot_usage, pt, &hosts, launch) {
                Ok(legs) => break legs,
                Err(next) => {
                    debug_assert!(next > launch, "launch scan must advance");
                    launch = next.max(launch + 1);
                    if launch > scenario.horizon {
                        return Err(ScenarioError::NoEligibleMachine {
                            label: pt.label.clone(),
                            step: 0,
                        });
                    }
                }
            }
        };

        plan.add_product(
            product.clone(),
            ProductState::new(scenario.entry.clone(), pt.stages[0].clone()),
            arrival,
        );
        for leg in &legs {
            occupancy.occupy(&leg.resource, leg.start, leg.dur);
            if leg.event.effect.is_transport() {
                *robot_usage.entry(leg.resource.clone()).or_insert(0) += 1;
            }
            plan.append_entry(&product, leg.event.clone(), &leg.resource, leg.start, leg.dur);
        }
        plan.normalize();
    }

    let utilization = machine_utilization(scenario, &plan);
    Ok((plan, due, utilization))
}

/// Attempt one rigid chain starting at `launch`; on conflict returns a hint
/// for the next launch to try.
fn try_chain(
    scenario: &Scenario,
    occupancy: &Occupancy,
    robot_usage: &BTreeMap<ResourceId, u64>,
    pt: &super::scenario::ProductTypeSpec,
    hosts: &[&super::scenario::MachineSpec],
    launch: Tick,
) -> Result<Vec<LegPlan>, Tick> {
    let mut legs: Vec<LegPlan> = Vec::with_capacity(hosts.len() * 2 + 1);
    let mut t = launch;
    let mut loc = scenario.entry.clone();

    for (step, host) in hosts.iter().enumerate() {
        let dest = host.location();
        let process = &pt.route[step];
        let dur = host.time_of(process).expect("eligible host performs the process");
        if loc != dest {
            let (robot, move_time) =
                pick_robot(scenario, occupancy, robot_usage, &loc, &dest, t).map_err(offset_err(launch, t))?;
            legs.push(LegPlan {
                resource: robot,
                event: EventSpec::transport(transport_event_id(&loc, &dest), loc.clone(), dest.clone()),
                start: t,
                dur: move_time,
            });
            t += move_time;
        }

        occupancy
            .fits(&host.id, t, dur, scenario.delta)
            .map_err(offset_err(launch, t))?;
        legs.push(LegPlan {
            resource: host.id.clone(),
            event: EventSpec::transform(
                process.clone(),
                dest.clone(),
                pt.stages[step].clone(),
                pt.stages[step + 1].clone(),
            ),
            start: t,
            dur,
        });
        t += dur;
        loc = dest;
    }

    let (robot, move_time) =
        pick_robot(scenario, occupancy, robot_usage, &loc, &scenario.exit, t).map_err(offset_err(launch, t))?;
    legs.push(LegPlan {
        resource: robot,
        event: EventSpec::transport(
            transport_event_id(&loc, &scenario.exit),
            loc.clone(),
            scenario.exit.clone(),
        ),
        start: t,
        dur: move_time,
    });

    // Double-booking within the chain itself (same machine or robot twice)
    // is possible in exotic layouts; re-check pairwise.
    for i in 0..legs.len() {
        for j in i + 1..legs.len() {
            if legs[i].resource == legs[j].resource {
                let a = Span::new(legs[i].start, legs[i].start + legs[i].dur);
                let b = Span::new(legs[j].start, legs[j].start + legs[j].dur);
                if a.overlaps(&b) {
                    return Err(launch + 1);
                }
            }
        }
    }

    Ok(legs)
}

/// Translate a resource-level conflict hint (earliest free tick for the leg)
/// into a launch hint by subtracting the chain offset.
fn offset_err(launch: Tick, leg_start: Tick) -> impl Fn(Tick) -> Tick {
    move |free_at: Tick| {
        let offset = leg_start - launch;
        free_at.saturating_sub(offset).max(launch + 1)
    }
}

/// Least-used robot that can make the move and is free for it.
fn pick_robot(
    scenario: &Scenario,
    occupancy: &Occupancy,
    robot_usage: &BTreeMap<ResourceId, u64>,
    from: &LocationId,
    to: &LocationId,
    start: Tick,
) -> Result<(ResourceId, Tick), Tick> {
    let mut capable: Vec<&super::scenario::RobotSpec> = scenario
        .robots
        .iter()
        .filter(|r| r.reach.contains(from) && r.reach.contains(to))
        .collect();
    if capable.is_empty() {
        // No robot spans this leg at any time; equivalent to "try much later"
        // never succeeding, so surface as unreachable via the scan bound.
        return Err(Tick::MAX / 2);
    }
    capable.sort_by_key(|r| (robot_usage.get(&r.id).copied().unwrap_or(0), r.id.clone()));

    let mut earliest_free = Tick::MAX;
    for r in capable {
        match occupancy.fits(&r.id, start, r.move_time, 0) {
            Ok(()) => return Ok((r.id.clone(), r.move_time)),
            Err(free) => earliest_free = earliest_free.min(free),
        }
    }
    Err(earliest_free)
}

/// Mean machine busy fraction over the schedule makespan.
pub fn machine_utilization(scenario: &Scenario, plan: &PlanState) -> f64 {
    let mut total_busy = 0.0;
    let mut makespan: Tick = 0;
    let mut per_machine: BTreeMap<&ResourceId, Tick> = BTreeMap::new();
    for m in &scenario.machines {
        per_machine.insert(&m.id, 0);
    }
    for rs in plan.all_resource_schedules() {
        for e in &rs.entries {
            makespan = makespan.max(e.end);
            if let Some(busy) = per_machine.get_mut(&rs.resource) {
                *busy += e.end - e.start;
            }
        }
    }
    if makespan == 0 {
        return 0.0;
    }
    for (_, busy) in per_machine {
        total_busy += busy as f64 / makespan as f64;
    }
    total_busy / scenario.machines.len().max(1) as f64
}
