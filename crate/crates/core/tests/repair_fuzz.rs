//! Fuzzed disruption scenarios on small random factories: every forced
//! breakdown must leave a valid plan, and every committed repair must
//! rebuild its transition (asserted inside the engine when validation is
//! switched on).

mod common;

use common::{case_rng, small_scenario};
use rand::Rng;
use resched_core::schedule::validate_production_schedule;
use resched_core::sim::{EngineOptions, Mode, World};

fn fuzz_round(base: u64, cases: u64, mode: Mode) -> (u64, u64) {
    let mut disruptions = 0;
    let mut commits = 0;
    for case in 0..cases {
        let mut rng = case_rng(base, case);
        let scenario = small_scenario(&mut rng);
        if scenario.validate().is_err() {
            continue;
        }
        let options = EngineOptions {
            validate_each_commit: true,
            ..Default::default()
        };
        let mut world = match World::new(&scenario, mode, rng.gen_bool(0.5), case, options) {
            Ok(w) => w,
            Err(_) => continue,
        };

        let n_breaks = rng.gen_range(1..=2u32);
        for _ in 0..n_breaks {
            let until = rng.gen_range(0..=120u64);
            while world.clock < until && !world.done() {
                world.step();
            }
            if world.done() {
                break;
            }
            let machines: Vec<_> = world.machines.keys().cloned().collect();
            let target = machines[rng.gen_range(0..machines.len())].clone();
            if world.machines[&target].status.is_down() {
                continue;
            }
            world.force_breakdown(&target);
            disruptions += 1;

            let report = validate_production_schedule(
                &world.plan.all_resource_schedules(),
                &world.plan.all_product_schedules(),
                world.plan.deltas(),
            );
            assert!(
                report.is_valid(),
                "case {case}: plan invalid after breakdown of {target}: {report}"
            );
        }

        // Run to completion; execution pinning must keep the plan consistent.
        let metrics = world.run();
        commits += metrics.rescheduled_processes as u64;
        assert!(world.conservation_holds(), "case {case}: products leaked");
    }
    (disruptions, commits)
}

#[test]
fn fuzzed_disruptions_keep_plans_valid_distributed() {
    let (disruptions, _) = fuzz_round(0xd15c0, 120, Mode::Distributed);
    assert!(disruptions >= 80, "only {disruptions} disruptions exercised");
}

#[test]
fn fuzzed_disruptions_keep_plans_valid_centralized() {
    let (disruptions, _) = fuzz_round(0xca1c, 120, Mode::Centralized);
    assert!(disruptions >= 80, "only {disruptions} disruptions exercised");
}
