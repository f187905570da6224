//! The tick loop: execute the plan with sampled durations, break machines,
//! and run the configured rescheduling strategy inside the breakdown tick.
//!
//! Execution never starts an operation before its planned start. Late
//! completions pin actual times into the plan and the normalizer pushes the
//! downstream chain, so the stored plan is a consistent forward schedule at
//! every tick boundary.

use super::generator::{generate_initial_schedule, machine_utilization};
use super::metrics::{RescheduleEventRow, TrialMetrics};
use super::sampling::sample_duration;
use super::scenario::{Scenario, ScenarioError};
use crate::capability::{
    clustering_ras, match_requirements, MatchOutcome, Registry, ResourceState, ResourceStatus,
};
use crate::decide::{
    escalate, select, EscalationReason, EscalationRecord, Objective,
};
use crate::protocol::{
    affected_events, broadcast_request, commit_candidate, enumerate_combos, generate_candidate,
    notify_sequential_removals, replacement_span, CandidateContext, CandidateSchedule, MessageBus,
    MessageKind, PriorityWeights, RepairRequest, SpanExtraction,
};
use crate::risk::{assess, RiskReport, RiskWeights, UncertaintyModel};
use crate::schedule::{
    validate_production_schedule, EntryId, ProductId, ResourceId, ScheduledEvent, Tick,
};
use crate::schedule::PlanState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Centralized,
    Distributed,
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Centralized => "centralized",
            Mode::Distributed => "distributed",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "centralized" => Ok(Mode::Centralized),
            "distributed" => Ok(Mode::Distributed),
            other => Err(format!("unknown mode '{other}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct EngineOptions {
    /// In distributed mode, also run the centralized sweep on every
    /// disruption state (before committing) and record both optima.
    pub probe_centralized: bool,
    /// Keep the full message trace.
    pub trace_messages: bool,
    /// Validate the whole plan after every commit (tests).
    pub validate_each_commit: bool,
}

/// Wear and breakdown state of one machine.
#[derive(Clone, Debug)]
pub struct MachineRuntime {
    pub status: ResourceStatus,
    pub base_hazard: f64,
}

#[derive(Clone, Debug)]
struct ProductRuntime {
    arrival: Tick,
    type_idx: usize,
    /// Progress pointer into the product chain.
    next_idx: usize,
    damaged: bool,
    exited: Option<Tick>,
}

#[derive(Clone, Debug, Default)]
struct ResourceRuntime {
    /// Earliest tick the next operation may start (actual, includes gap).
    free_at: Tick,
    running: Option<(EntryId, Tick)>,
}

/// What happened during one tick.
#[derive(Clone, Debug, PartialEq)]
pub enum SimEvent {
    Started { resource: ResourceId, product: ProductId, tick: Tick },
    Finished { resource: ResourceId, product: ProductId, tick: Tick },
    Exited { product: ProductId, tick: Tick },
    Breakdown { resource: ResourceId, tick: Tick, damaged: Option<ProductId> },
    Repaired { resource: ResourceId, tick: Tick },
}

pub struct World {
    pub scenario: Scenario,
    pub registry: Registry,
    pub plan: PlanState,
    pub clock: Tick,
    pub mode: Mode,
    pub risk_enabled: bool,
    pub bus: MessageBus,
    pub machines: BTreeMap<ResourceId, MachineRuntime>,
    resources: BTreeMap<ResourceId, ResourceRuntime>,
    products: BTreeMap<ProductId, ProductRuntime>,
    product_order: Vec<ProductId>,
    due: BTreeMap<ProductId, Tick>,
    rng: ChaCha8Rng,
    risk_rng: ChaCha8Rng,
    options: EngineOptions,
    seed: u64,
    objective: Objective,
    uncertainty: UncertaintyModel,
    // Trial counters.
    broken_machines: u32,
    damaged_products: u32,
    rescheduled_processes: u32,
    escalations: u32,
    candidates_examined: u64,
    chosen_risks: Vec<f64>,
    chosen_components: Vec<(f64, f64)>,
    wall_ms: f64,
    rows: Vec<RescheduleEventRow>,
    probe_pairs: Vec<(f64, f64)>,
    probe_counter: u64,
    pub escalation_log: Vec<EscalationRecord>,
}

impl World {
    pub fn new(
        scenario: &Scenario,
        mode: Mode,
        risk_enabled: bool,
        seed: u64,
        options: EngineOptions,
    ) -> Result<Self, ScenarioError> {
        let (plan, due, _initial_util) = generate_initial_schedule(scenario)?;
        let registry = scenario.registry();

        let mut machines = BTreeMap::new();
        for m in &scenario.machines {
            let mut status = ResourceStatus::idle(m.nominal_ops);
            status.op_count = m.initial_ops;
            machines.insert(
                m.id.clone(),
                MachineRuntime {
                    status,
                    base_hazard: m.base_hazard,
                },
            );
        }

        let mut resources = BTreeMap::new();
        for id in plan.resource_ids() {
            resources.insert(id.clone(), ResourceRuntime::default());
        }

        let mut products = BTreeMap::new();
        let mut product_order = Vec::new();
        for (pid, arrival, type_idx) in scenario.arrivals_list() {
            product_order.push(pid.clone());
            products.insert(
                pid,
                ProductRuntime {
                    arrival,
                    type_idx,
                    next_idx: 0,
                    damaged: false,
                    exited: None,
                },
            );
        }

        let weights = RiskWeights::new(scenario.risk.w1, scenario.risk.w2, scenario.risk.scale);
        let uncertainty = UncertaintyModel {
            enabled: scenario.stochastic.sigma_frac > 0.0 && scenario.risk.n_samples > 0,
            sigma_frac: scenario.stochastic.sigma_frac,
            n_samples: scenario.risk.n_samples,
        };

        Ok(Self {
            scenario: scenario.clone(),
            registry,
            plan,
            clock: 0,
            mode,
            risk_enabled,
            bus: if options.trace_messages {
                MessageBus::with_trace()
            } else {
                MessageBus::new()
            },
            machines,
            resources,
            products,
            product_order,
            due,
            rng: ChaCha8Rng::seed_from_u64(seed),
            risk_rng: ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15),
            options,
            seed,
            objective: Objective::completion_time(risk_enabled, weights),
            uncertainty,
            broken_machines: 0,
            damaged_products: 0,
            rescheduled_processes: 0,
            escalations: 0,
            candidates_examined: 0,
            chosen_risks: Vec::new(),
            chosen_components: Vec::new(),
            wall_ms: 0.0,
            rows: Vec::new(),
            probe_pairs: Vec::new(),
            probe_counter: 0,
            escalation_log: Vec::new(),
        })
    }

    pub fn done(&self) -> bool {
        self.products.values().all(|p| p.damaged || p.exited.is_some())
    }

    /// Advance one tick; returns the events fired.
    pub fn step(&mut self) -> Vec<SimEvent> {
        let t = self.clock;
        let mut events = Vec::new();

        // Repairs.
        let repair_ids: Vec<ResourceId> = self
            .machines
            .iter()
            .filter(|(_, m)| m.status.down_until == Some(t))
            .map(|(id, _)| id.clone())
            .collect();
        for id in repair_ids {
            let m = self.machines.get_mut(&id).unwrap();
            m.status.state = ResourceState::Idle;
            m.status.down_until = None;
            m.status.op_count = 0;
            events.push(SimEvent::Repaired { resource: id, tick: t });
        }

        // Completions.
        let finish_ids: Vec<(ResourceId, EntryId)> = self
            .resources
            .iter()
            .filter_map(|(rid, r)| match r.running {
                Some((eid, end)) if end == t => Some((rid.clone(), eid)),
                _ => None,
            })
            .collect();
        for (rid, eid) in finish_ids {
            let product = match self.plan.entry(eid) {
                Some(e) => e.product.clone(),
                None => continue,
            };
            {
                let r = self.resources.get_mut(&rid).unwrap();
                r.running = None;
                r.free_at = t + self.plan.delta_of(&rid);
            }
            if let Some(m) = self.machines.get_mut(&rid) {
                m.status.state = ResourceState::Idle;
                m.status.op_count += 1;
            }
            let p = self.products.get_mut(&product).unwrap();
            p.next_idx += 1;
            let chain_len = self.plan.product(&product).map(|pp| pp.chain.len()).unwrap_or(0);
            events.push(SimEvent::Finished {
                resource: rid,
                product: product.clone(),
                tick: t,
            });
            if p.next_idx >= chain_len {
                p.exited = Some(t);
                events.push(SimEvent::Exited { product, tick: t });
            }
        }

        // Idle breakdown checkpoints.
        if t > 0 && t.is_multiple_of(100) {
            let idle_ids: Vec<ResourceId> = self
                .machines
                .iter()
                .filter(|(id, m)| {
                    m.status.state != ResourceState::Down
                        && self.resources[*id].running.is_none()
                })
                .map(|(id, _)| id.clone())
                .collect();
            for id in idle_ids {
                let p = self.hazard_of(&id) / 20.0;
                if p > 0.0 && self.rng.gen::<f64>() < p {
                    events.push(self.handle_breakdown(&id, None));
                }
            }
        }

        // Starts, in arrival order.
        let order = self.product_order.clone();
        for pid in order {
            let (next_idx, damaged, exited) = {
                let p = &self.products[&pid];
                (p.next_idx, p.damaged, p.exited.is_some())
            };
            if damaged || exited {
                continue;
            }
            let Some(chain) = self.plan.product(&pid).map(|pp| pp.chain.clone()) else {
                continue;
            };
            if next_idx >= chain.len() {
                continue;
            }
            let eid = chain[next_idx];
            let Some(entry) = self.plan.entry(eid) else { continue };
            if t < entry.start {
                continue;
            }
            let rid = entry.resource.clone();
            let nominal = entry.dur();
            let is_machine = self.machines.contains_key(&rid);

            let free = {
                let r = &self.resources[&rid];
                r.running.is_none() && r.free_at <= t
            };
            if !free {
                continue;
            }
            if is_machine {
                let m = &self.machines[&rid];
                if m.status.state == ResourceState::Down {
                    continue;
                }
                // Wear-driven breakdown draw at operation start.
                let p = self.hazard_of(&rid);
                if p > 0.0 && self.rng.gen::<f64>() < p {
                    events.push(self.handle_breakdown(&rid, Some(pid.clone())));
                    continue;
                }
            }

            let dur = if is_machine {
                sample_duration(nominal, self.scenario.stochastic.sigma_frac, &mut self.rng)
            } else {
                nominal
            };
            self.plan.pin_times(eid, t, t + dur);
            self.plan.normalize();
            let r = self.resources.get_mut(&rid).unwrap();
            r.running = Some((eid, t + dur));
            if let Some(m) = self.machines.get_mut(&rid) {
                m.status.state = ResourceState::Up;
            }
            events.push(SimEvent::Started {
                resource: rid,
                product: pid,
                tick: t,
            });
        }

        self.clock += 1;
        events
    }

    fn hazard_of(&self, machine: &ResourceId) -> f64 {
        let m = &self.machines[machine];
        if m.status.nominal_ops == 0 {
            return 0.0;
        }
        let wear = m.status.op_count as f64 / m.status.nominal_ops as f64;
        (m.base_hazard * wear).min(0.5)
    }

    /// Mark a machine down, damage the in-process product if any, and run the
    /// configured rescheduling strategy within this tick.
    fn handle_breakdown(&mut self, machine: &ResourceId, starting: Option<ProductId>) -> SimEvent {
        let t = self.clock;
        let mttr = self
            .rng
            .gen_range(self.scenario.stochastic.mttr_min..=self.scenario.stochastic.mttr_max);
        {
            let m = self.machines.get_mut(machine).unwrap();
            m.status.state = ResourceState::Down;
            m.status.down_until = Some(t + mttr);
        }
        self.broken_machines += 1;

        let mut damaged = None;
        if let Some(pid) = starting {
            self.damaged_products += 1;
            damaged = Some(pid.clone());
            let p = self.products.get_mut(&pid).unwrap();
            p.damaged = true;
            let from = p.next_idx;
            let chain = self.plan.product(&pid).map(|pp| pp.chain.clone()).unwrap_or_default();
            for &eid in chain.iter().skip(from) {
                self.plan.remove_entry(eid);
            }
            self.plan.normalize();
        }

        self.reschedule(machine);

        // Whatever stays on the broken machine (deferred repairs) cannot run
        // before the repair completes; move it past the down time so the
        // plan keeps describing the future.
        let down_until = t + mttr;
        let ids: Vec<EntryId> = self.plan.resource_entry_ids(machine).to_vec();
        for id in ids {
            if let Some(e) = self.plan.entry(id) {
                if !e.pinned && e.end > t && e.start < down_until {
                    self.plan.push_entry_to(id, down_until);
                }
            }
        }
        self.plan.normalize();

        SimEvent::Breakdown {
            resource: machine.clone(),
            tick: t,
            damaged,
        }
    }

    /// Statuses of the risk-bearing resources (machines; robots are assumed
    /// reliable and excluded).
    fn machine_statuses(&self) -> BTreeMap<ResourceId, ResourceStatus> {
        self.machines
            .iter()
            .map(|(id, m)| (id.clone(), m.status.clone()))
            .collect()
    }

    fn find_entry(&self, resource: &ResourceId, sched: &ScheduledEvent) -> Option<EntryId> {
        self.plan
            .resource_entry_ids(resource)
            .iter()
            .copied()
            .find(|&id| {
                self.plan.entry(id).is_some_and(|e| {
                    e.product == sched.product && e.start == sched.start && e.event.id == sched.event.id
                })
            })
    }

    /// The repair driver for one broken machine.
    fn reschedule(&mut self, machine: &ResourceId) {
        let t = self.clock;
        let wall = Instant::now();

        let weights = PriorityWeights {
            w_s: self.scenario.priority.w_s,
            w_d: self.scenario.priority.w_d,
        };
        let rs = self.plan.resource_schedule(machine);
        let report = affected_events(&rs, t, weights, &self.due);
        let affected_n = report.affected.len();
        let affected_ids: Vec<(EntryId, ScheduledEvent)> = report
            .affected
            .iter()
            .filter_map(|s| self.find_entry(machine, s).map(|id| (id, s.clone())))
            .collect();
        let machine_loc = crate::schedule::LocationId::from(machine.as_str());
        let resource_count = self.registry.len();

        for (eid, _stale) in affected_ids {
            let event_wall = Instant::now();
            let Some(entry) = self.plan.entry(eid) else { continue };
            let pid = entry.product.clone();
            let event_id = entry.event.id.clone();
            let Some(ps) = self.plan.product_schedule(&pid) else { continue };
            let chain = self.plan.product(&pid).map(|pp| pp.chain.clone()).unwrap_or_default();
            let Some(pos) = chain.iter().position(|&x| x == eid) else { continue };
            let e_q = ps.entries[pos].clone();

            let span = match replacement_span(&e_q, &ps, &machine_loc) {
                Ok(s) => s,
                Err(_) => continue,
            };
            // Legs already executed (or running) stay; the repair picks the
            // part up from wherever those legs left it.
            let mut range = span.range.clone();
            while range.start < pos
                && self
                    .plan
                    .entry(chain[range.start])
                    .is_some_and(|e| e.pinned)
            {
                range.start += 1;
            }
            let trimmed = SpanExtraction {
                range: range.clone(),
                events: ps.entries[range.clone()].iter().map(|e| e.event.clone()).collect(),
                x_prior: ps.states[range.start].clone(),
                x_post: ps.states[range.end].clone(),
            };

            let type_idx = self.products[&pid].type_idx;
            let requirements = self
                .scenario
                .requirements_for(&self.scenario.product_types[type_idx]);
            let ready = if range.start == 0 {
                self.products[&pid].arrival
            } else {
                ps.entries[range.start - 1].end
            };
            let req = RepairRequest {
                affected_event: event_id.clone(),
                requirements,
                x_prior: trimmed.x_prior.clone(),
                x_post: trimmed.x_post.clone(),
                product: pid.clone(),
                requested_time: ready.max(t),
            };
            let excluded: BTreeSet<EntryId> = chain[range.clone()].iter().copied().collect();
            let holder_before = if range.start > 0 {
                Some(chain[range.start - 1])
            } else {
                None
            };
            let unavailable: BTreeSet<ResourceId> = self
                .machines
                .iter()
                .filter(|(_, m)| m.status.is_down())
                .map(|(id, _)| id.clone())
                .collect();

            let bus_before = self.bus.count();
            let span_len = trimmed.range.len();
            let mut examined = 0usize;
            let mut fallback_reason: Option<EscalationReason> = None;
            let mut fallback_ran = false;

            let mut pairs: Vec<(CandidateSchedule, RiskReport)> = Vec::new();
            match self.mode {
                Mode::Distributed => {
                    self.bus
                        .directory_round_trip(t, machine, format!("cluster({event_id})"));
                    let cluster = clustering_ras(&event_id, machine, &self.registry);
                    if cluster.is_empty() {
                        fallback_reason = Some(EscalationReason::EmptyCluster);
                    } else {
                        let ctx = CandidateContext {
                            plan: &self.plan,
                            registry: &self.registry,
                            delta: self.scenario.delta,
                            max_hops: self.scenario.max_hops,
                            now: t,
                            horizon: self.scenario.horizon,
                            excluded: &excluded,
                            holder_before,
                            unavailable: &unavailable,
                        };
                        broadcast_request(&req, &cluster, machine, t, &mut self.bus)
                            .expect("cluster checked nonempty");
                        let mut candidates = Vec::new();
                        for member in &cluster {
                            let Some(model) = self.registry.get(member) else { continue };
                            let down = self
                                .machines
                                .get(member)
                                .map(|m| m.status.is_down())
                                .unwrap_or(false);
                            let verdict = if down {
                                MatchOutcome::Reject
                            } else {
                                match_requirements(&event_id, &req.requirements, model)
                            };
                            let reply = match &verdict {
                                MatchOutcome::Accept { .. } => "bid",
                                MatchOutcome::Reject => "decline",
                            };
                            self.bus
                                .send_parts(t, member, machine, MessageKind::Response, reply);
                            if let MatchOutcome::Accept { penalty } = verdict {
                                candidates.extend(generate_candidate(
                                    model, &req, &ctx, penalty, t, &mut self.bus,
                                ));
                            }
                        }
                        examined += candidates.len();
                        if candidates.is_empty() {
                            fallback_reason = Some(EscalationReason::NoCapacity);
                        }
                        let statuses = self.machine_statuses();
                        for c in candidates {
                            let report = assess(
                                &c,
                                &statuses,
                                &self.objective.weights,
                                &self.uncertainty,
                                &mut self.risk_rng,
                            );
                            pairs.push((c, report));
                        }
                    }
                }
                Mode::Centralized => {
                    // The information sweep over every resource for every
                    // span slot, charged analytically.
                    self.bus.charge((resource_count * span_len) as u64);
                    let ctx = CandidateContext {
                        plan: &self.plan,
                        registry: &self.registry,
                        delta: self.scenario.delta,
                        max_hops: self.scenario.max_hops,
                        now: t,
                        horizon: self.scenario.horizon,
                        excluded: &excluded,
                        holder_before,
                        unavailable: &unavailable,
                    };
                    let candidates = enumerate_combos(&req, &ctx);
                    examined += candidates.len();
                    let statuses = self.machine_statuses();
                    for c in candidates {
                        let report = assess(
                            &c,
                            &statuses,
                            &self.objective.weights,
                            &self.uncertainty,
                            &mut self.risk_rng,
                        );
                        pairs.push((c, report));
                    }
                }
            }

            let mut decision = select(&pairs, &self.objective);

            // Probe: evaluate the centralized optimum on the same state, with
            // an independent random stream so the trial itself is unaffected.
            if self.options.probe_centralized
                && self.mode == Mode::Distributed
                && !decision.escalated
            {
                let ctx = CandidateContext {
                    plan: &self.plan,
                    registry: &self.registry,
                    delta: self.scenario.delta,
                    max_hops: self.scenario.max_hops,
                    now: t,
                    horizon: self.scenario.horizon,
                    excluded: &excluded,
                    holder_before,
                    unavailable: &unavailable,
                };
                let mut probe_rng = ChaCha8Rng::seed_from_u64(
                    self.seed
                        ^ 0x70b3_d721_9c4e_a2f1
                        ^ self.probe_counter.wrapping_mul(0x9e37_79b9_7f4a_7c15),
                );
                self.probe_counter += 1;
                let candidates = enumerate_combos(&req, &ctx);
                let statuses = self.machine_statuses();
                let probe_pairs: Vec<(CandidateSchedule, RiskReport)> = candidates
                    .into_iter()
                    .map(|c| {
                        let r = assess(
                            &c,
                            &statuses,
                            &self.objective.weights,
                            &self.uncertainty,
                            &mut probe_rng,
                        );
                        (c, r)
                    })
                    .collect();
                let central = select(&probe_pairs, &self.objective);
                if let (Some(jd), Some(jc)) = (decision.j_value, central.j_value) {
                    self.probe_pairs.push((jd, jc));
                }
            }

            // Distributed dead ends fall back to the central controller.
            if decision.escalated {
                if let Some(reason) = fallback_reason {
                    self.escalations += 1;
                    self.escalation_log
                        .push(escalate(t, machine, &pid, &event_id, reason));
                    if self.mode == Mode::Distributed {
                        fallback_ran = true;
                        self.bus.charge((resource_count * span_len) as u64);
                        let ctx = CandidateContext {
                            plan: &self.plan,
                            registry: &self.registry,
                            delta: self.scenario.delta,
                            max_hops: self.scenario.max_hops,
                            now: t,
                            horizon: self.scenario.horizon,
                            excluded: &excluded,
                            holder_before,
                            unavailable: &unavailable,
                        };
                        let candidates = enumerate_combos(&req, &ctx);
                        examined += candidates.len();
                        let statuses = self.machine_statuses();
                        let retry: Vec<(CandidateSchedule, RiskReport)> = candidates
                            .into_iter()
                            .map(|c| {
                                let r = assess(
                                    &c,
                                    &statuses,
                                    &self.objective.weights,
                                    &self.uncertainty,
                                    &mut self.risk_rng,
                                );
                                (c, r)
                            })
                            .collect();
                        decision = select(&retry, &self.objective);
                    }
                }
            }

            let outcome;
            if let (Some(candidate), Some(report)) =
                (decision.chosen.clone(), decision.chosen_risk.clone())
            {
                // Withdrawal notices for the replaced non-affected entries,
                // then informs to the resources receiving new legs. The
                // centralized sweep's analytic count already covers its
                // notifications, so only the distributed path sends them.
                if self.mode == Mode::Distributed {
                    notify_sequential_removals(&e_q, &ps, &trimmed, machine, t, &mut self.bus);
                    for leg in &candidate.events {
                        self.bus.send_parts(
                            t,
                            machine,
                            &leg.resource,
                            MessageKind::Inform,
                            format!("assign({})", leg.event.id),
                        );
                    }
                }
                if self.options.validate_each_commit {
                    // The committed sequence must rebuild the transition and
                    // respect precedence before it ever touches the plan.
                    let folded = crate::schedule::apply_sequence(
                        &req.x_prior,
                        candidate.events.iter().map(|l| &l.event).collect::<Vec<_>>(),
                    )
                    .expect("chosen candidate must fold");
                    assert_eq!(folded, req.x_post, "chosen candidate breaks the transition");
                    for w in candidate.events.windows(2) {
                        assert!(w[0].end <= w[1].start, "chosen candidate breaks precedence");
                    }
                }
                commit_candidate(&mut self.plan, &pid, range.clone(), &candidate);
                if self.options.validate_each_commit {
                    let report = validate_production_schedule(
                        &self.plan.all_resource_schedules(),
                        &self.plan.all_product_schedules(),
                        self.plan.deltas(),
                    );
                    assert!(report.is_valid(), "commit broke the plan: {report}");
                }
                self.rescheduled_processes += 1;
                self.chosen_risks.push(report.weighted(&self.objective.weights));
                self.chosen_components.push((report.r1, report.r2));
                outcome = "committed";
            } else {
                // Nothing anywhere: the operations wait for the repair.
                self.escalations += 1;
                self.escalation_log.push(escalate(
                    t,
                    machine,
                    &pid,
                    &event_id,
                    EscalationReason::CentralizedEmpty,
                ));
                outcome = "deferred";
            }

            self.candidates_examined += examined as u64;
            self.rows.push(RescheduleEventRow {
                tick: t,
                mode: self.mode.label(),
                resource: machine.to_string(),
                product: pid.to_string(),
                event: event_id.to_string(),
                affected: affected_n,
                span_len,
                candidates: examined,
                messages: self.bus.count() - bus_before,
                fallback: fallback_ran,
                chosen_j: decision.j_value,
                chosen_risk: decision
                    .chosen_risk
                    .as_ref()
                    .map(|r| r.weighted(&self.objective.weights)),
                outcome,
                wall_ms: event_wall.elapsed().as_secs_f64() * 1e3,
            });
        }

        self.wall_ms += wall.elapsed().as_secs_f64() * 1e3;
    }

    /// Run to completion (or the horizon) and collect the trial metrics.
    pub fn run(&mut self) -> TrialMetrics {
        while !self.done() && self.clock < self.scenario.horizon {
            self.step();
        }
        let horizon_exceeded = !self.done();

        let mut cycle_times = Vec::new();
        for pid in &self.product_order {
            let p = &self.products[pid];
            if let Some(exit) = p.exited {
                cycle_times.push((pid.clone(), exit - p.arrival));
            }
        }
        let completed = cycle_times.len() as u32;
        let mean_cycle = if cycle_times.is_empty() {
            0.0
        } else {
            cycle_times.iter().map(|(_, c)| *c as f64).sum::<f64>() / cycle_times.len() as f64
        };
        let peak_risk = self.chosen_risks.iter().copied().fold(0.0, f64::max);
        let avg_risk = if self.chosen_risks.is_empty() {
            0.0
        } else {
            self.chosen_risks.iter().sum::<f64>() / self.chosen_risks.len() as f64
        };
        let (avg_r1, avg_r2) = if self.chosen_components.is_empty() {
            (0.0, 0.0)
        } else {
            let n = self.chosen_components.len() as f64;
            (
                self.chosen_components.iter().map(|c| c.0).sum::<f64>() / n,
                self.chosen_components.iter().map(|c| c.1).sum::<f64>() / n,
            )
        };

        TrialMetrics {
            trial: 0,
            seed: self.seed,
            mode: self.mode.label().to_string(),
            risk_enabled: self.risk_enabled,
            products_completed: completed,
            products_damaged: self.damaged_products,
            broken_machines: self.broken_machines,
            rescheduled_processes: self.rescheduled_processes,
            escalations: self.escalations,
            communications: self.bus.count(),
            mean_cycle_time: mean_cycle,
            peak_risk,
            avg_risk,
            avg_r1,
            avg_r2,
            utilization: machine_utilization(&self.scenario, &self.plan),
            candidates_examined: self.candidates_examined,
            horizon_exceeded,
            reschedule_wall_ms: self.wall_ms,
            cycle_times,
            reschedule_events: std::mem::take(&mut self.rows),
            probe_pairs: std::mem::take(&mut self.probe_pairs),
        }
    }

    /// Products damaged so far.
    pub fn damaged_count(&self) -> u32 {
        self.damaged_products
    }

    /// Formatted message-trace lines (tick, from, to, kind, payload size),
    /// available when the trace option is on.
    pub fn message_trace_lines(&self) -> Vec<String> {
        self.bus
            .trace()
            .unwrap_or(&[])
            .iter()
            .map(|m| {
                format!(
                    "{} {} {} {} {}",
                    m.tick,
                    m.from,
                    m.to,
                    m.kind.label(),
                    m.payload.len()
                )
            })
            .collect()
    }

    /// Break a machine now (test and scenario scripting hook). Damages the
    /// product the machine is currently processing, if any, and runs the
    /// configured rescheduling strategy synchronously.
    pub fn force_breakdown(&mut self, machine: &ResourceId) -> SimEvent {
        let starting = self
            .resources
            .get(machine)
            .and_then(|r| r.running)
            .and_then(|(eid, _)| self.plan.entry(eid).map(|e| e.product.clone()));
        if let Some(r) = self.resources.get_mut(machine) {
            r.running = None;
        }
        self.handle_breakdown(machine, starting)
    }

    /// Conservation invariant: entered products are either done, damaged or
    /// still in flight.
    pub fn conservation_holds(&self) -> bool {
        let entered = self.products.len();
        let exited = self.products.values().filter(|p| p.exited.is_some()).count();
        let damaged = self.products.values().filter(|p| p.damaged).count();
        let in_flight = self
            .products
            .values()
            .filter(|p| p.exited.is_none() && !p.damaged)
            .count();
        entered == exited + damaged + in_flight
    }
}

/// Run one trial: a pure function of (scenario, mode, risk flag, seed).
pub fn run_trial(
    scenario: &Scenario,
    mode: Mode,
    risk_enabled: bool,
    seed: u64,
) -> Result<TrialMetrics, ScenarioError> {
    run_trial_with(scenario, mode, risk_enabled, seed, EngineOptions::default())
}

pub fn run_trial_with(
    scenario: &Scenario,
    mode: Mode,
    risk_enabled: bool,
    seed: u64,
    options: EngineOptions,
) -> Result<TrialMetrics, ScenarioError> {
    let mut world = World::new(scenario, mode, risk_enabled, seed, options)?;
    Ok(world.run())
}
