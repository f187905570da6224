//! End-to-end repair flow on a hand-built two-machine, one-robot factory:
//! span extraction, bidding, candidate generation, selection and commit.

mod common;

use resched_core::capability::{clustering_ras, match_requirements, MatchOutcome, Requirements};
use resched_core::decide::{select, Objective};
use resched_core::protocol::{
    commit_candidate, generate_candidate, replacement_span, CandidateContext, MessageBus,
    RepairRequest,
};
use resched_core::risk::RiskReport;
use resched_core::schedule::{
    validate_production_schedule, EntryId, EventSpec, LocationId, PlanState, ProductId,
    ProductState, ResourceId,
};
use resched_core::sim::{
    generate_initial_schedule, ArrivalSpec, MachineSpec, PrioritySpec, ProcessCap,
    ProductTypeSpec, RiskSpec, RobotSpec, Scenario, StochasticSpec, Workspace,
    SCENARIO_SCHEMA_VERSION,
};
use std::collections::BTreeSet;

/// Two machines able to perform P1, one robot reaching everything.
fn two_machine_scenario(with_robot: bool) -> Scenario {
    let machine = |id: &str| MachineSpec {
        id: id.into(),
        processes: vec![ProcessCap {
            process: "P1".into(),
            time: 100,
        }],
        workspace: Workspace::Large,
        base_hazard: 0.05,
        nominal_ops: 10,
        initial_ops: 0,
    };
    let mut robots = Vec::new();
    if with_robot {
        robots.push(RobotSpec {
            id: "R1".into(),
            reach: ["Entry", "M1", "M2", "Exit"].iter().map(|s| LocationId::from(*s)).collect(),
            move_time: 10,
        });
    }
    Scenario {
        schema_version: SCENARIO_SCHEMA_VERSION,
        name: "two-machine".into(),
        entry: "Entry".into(),
        exit: "Exit".into(),
        machines: vec![machine("M1"), machine("M2")],
        robots,
        product_types: vec![ProductTypeSpec {
            label: "S".into(),
            route: vec!["P1".into()],
            stages: vec!["raw".into(), "s1".into()],
            workspace_required: None,
        }],
        arrivals: ArrivalSpec {
            count: 1,
            spacing: 30,
            start: 0,
        },
        stochastic: StochasticSpec {
            hazard_min: 0.0,
            hazard_max: 0.0,
            mttr_min: 100,
            mttr_max: 100,
            sigma_frac: 0.0,
            nominal_ops_min: 10,
            nominal_ops_max: 10,
        },
        delta: 10,
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

struct Repair {
    plan: PlanState,
    req: RepairRequest,
    range: std::ops::Range<usize>,
    excluded: BTreeSet<EntryId>,
    holder_before: Option<EntryId>,
    unavailable: BTreeSet<ResourceId>,
}

/// Break M1 before anything runs and extract the repair request for its
/// single scheduled process.
fn setup(scenario: &Scenario) -> Repair {
    let (plan, _, _) = generate_initial_schedule(scenario).expect("schedulable");
    let product = ProductId::from("S001");
    let ps = plan.product_schedule(&product).unwrap();
    let e_q = ps
        .entries
        .iter()
        .find(|e| !e.event.effect.is_transport())
        .cloned()
        .expect("one transform");
    let broken = e_q.resource.clone();
    let span = replacement_span(&e_q, &ps, &LocationId::from(broken.as_str())).unwrap();
    let chain = plan.product(&product).unwrap().chain.clone();
    let excluded: BTreeSet<EntryId> = chain[span.range.clone()].iter().copied().collect();
    let holder_before = (span.range.start > 0).then(|| chain[span.range.start - 1]);
    let req = RepairRequest {
        affected_event: e_q.event.id.clone(),
        requirements: Requirements::none(),
        x_prior: span.x_prior.clone(),
        x_post: span.x_post.clone(),
        product,
        requested_time: 0,
    };
    Repair {
        plan,
        req,
        range: span.range,
        excluded,
        holder_before,
        unavailable: BTreeSet::from([broken]),
    }
}

#[test]
fn transform_bid_builds_three_leg_candidate() {
    let scenario = two_machine_scenario(true);
    let registry = scenario.registry();
    let repair = setup(&scenario);
    assert_eq!(repair.req.x_prior, ProductState::new("Entry", "raw"));
    assert_eq!(repair.req.x_post, ProductState::new("Exit", "s1"));

    let cluster = clustering_ras(&"P1".into(), &"M1".into(), &registry);
    assert_eq!(cluster, BTreeSet::from([ResourceId::from("M2")]));

    let bidder = registry.get(&"M2".into()).unwrap();
    assert!(matches!(
        match_requirements(&"P1".into(), &repair.req.requirements, bidder),
        MatchOutcome::Accept { .. }
    ));

    let ctx = CandidateContext {
        plan: &repair.plan,
        registry: &registry,
        delta: scenario.delta,
        max_hops: scenario.max_hops,
        now: 0,
        horizon: scenario.horizon,
        excluded: &repair.excluded,
        holder_before: repair.holder_before,
        unavailable: &repair.unavailable,
    };
    let mut bus = MessageBus::new();
    let candidates = generate_candidate(bidder, &repair.req, &ctx, 0.0, 0, &mut bus);
    assert_eq!(candidates.len(), 1, "one robot, one combination");
    let c = &candidates[0];
    assert_eq!(c.events.len(), 3, "move in, transform, move out");
    assert!(c.events[0].event.effect.is_transport());
    assert!(!c.events[1].event.effect.is_transport());
    assert_eq!(c.events[1].resource, ResourceId::from("M2"));
    assert!(c.events[2].event.effect.is_transport());
    // Composition chain raw -> s1 preserved.
    let folded = resched_core::schedule::apply_sequence(
        &repair.req.x_prior,
        c.events.iter().map(|l| &l.event).collect::<Vec<_>>(),
    )
    .unwrap();
    assert_eq!(folded, repair.req.x_post);
    // The robot was asked and answered.
    assert!(bus.count() >= 2);
}

#[test]
fn no_reachable_robot_means_no_candidate() {
    let mut scenario = two_machine_scenario(true);
    // The only useful robot cannot reach M2; a stranded one parks there so
    // the scenario still validates, but no transport can serve the host.
    scenario.robots[0].reach.retain(|l| l.as_str() != "M2");
    scenario.robots.push(RobotSpec {
        id: "R2".into(),
        reach: vec![LocationId::from("M2")],
        move_time: 10,
    });
    let registry = scenario.registry();
    let repair = setup(&scenario);
    let bidder = registry.get(&"M2".into()).unwrap();
    let ctx = CandidateContext {
        plan: &repair.plan,
        registry: &registry,
        delta: scenario.delta,
        max_hops: scenario.max_hops,
        now: 0,
        horizon: scenario.horizon,
        excluded: &repair.excluded,
        holder_before: repair.holder_before,
        unavailable: &repair.unavailable,
    };
    let mut bus = MessageBus::new();
    let candidates = generate_candidate(bidder, &repair.req, &ctx, 0.0, 0, &mut bus);
    assert!(candidates.is_empty());
}

#[test]
fn committed_repair_leaves_a_valid_plan() {
    let scenario = two_machine_scenario(true);
    let registry = scenario.registry();
    let mut repair = setup(&scenario);
    let ctx = CandidateContext {
        plan: &repair.plan,
        registry: &registry,
        delta: scenario.delta,
        max_hops: scenario.max_hops,
        now: 0,
        horizon: scenario.horizon,
        excluded: &repair.excluded,
        holder_before: repair.holder_before,
        unavailable: &repair.unavailable,
    };
    let mut bus = MessageBus::new();
    let bidder = registry.get(&"M2".into()).unwrap();
    let candidates = generate_candidate(bidder, &repair.req, &ctx, 0.0, 0, &mut bus);
    let pairs: Vec<_> = candidates
        .into_iter()
        .map(|c| (c, RiskReport::zero()))
        .collect();
    let decision = select(&pairs, &Objective::default());
    let chosen = decision.chosen.expect("a candidate was selected");

    let product = repair.req.product.clone();
    commit_candidate(&mut repair.plan, &product, repair.range.clone(), &chosen);
    let report = validate_production_schedule(
        &repair.plan.all_resource_schedules(),
        &repair.plan.all_product_schedules(),
        repair.plan.deltas(),
    );
    assert!(report.is_valid(), "{report}");

    // The product's chain now runs through M2 and still folds to its goal.
    let ps = repair.plan.product_schedule(&product).unwrap();
    assert!(ps.entries.iter().any(|e| e.resource == ResourceId::from("M2")));
    assert_eq!(ps.states.last().unwrap(), &ProductState::new("Exit", "s1"));
}

#[test]
fn centralized_sweep_equals_single_bid_when_one_option_exists() {
    let scenario = two_machine_scenario(true);
    let registry = scenario.registry();
    let repair = setup(&scenario);
    let ctx = CandidateContext {
        plan: &repair.plan,
        registry: &registry,
        delta: scenario.delta,
        max_hops: scenario.max_hops,
        now: 0,
        horizon: scenario.horizon,
        excluded: &repair.excluded,
        holder_before: repair.holder_before,
        unavailable: &repair.unavailable,
    };
    let mut bus = MessageBus::new();
    let bidder = registry.get(&"M2".into()).unwrap();
    let distributed = generate_candidate(bidder, &repair.req, &ctx, 0.0, 0, &mut bus);
    let centralized = resched_core::protocol::enumerate_combos(&repair.req, &ctx);
    assert_eq!(distributed.len(), 1);
    assert_eq!(centralized.len(), 1);
    assert_eq!(distributed[0].events, centralized[0].events);
}
