//! Deterministic tick-based simulation of the factory scenario.

mod engine;
mod generator;
mod metrics;
mod sampling;
mod scenario;

pub use engine::{run_trial, run_trial_with, EngineOptions, MachineRuntime, Mode, SimEvent, World};
pub use generator::{generate_initial_schedule, machine_utilization};
pub use metrics::{RescheduleEventRow, TrialMetrics};
pub use sampling::sample_duration;
pub use scenario::{
    build_minifab, ArrivalSpec, MachineSpec, PrioritySpec, ProcessCap, ProductTypeSpec, RiskSpec,
    RobotSpec, Scenario, ScenarioError, StochasticSpec, Workspace, SCENARIO_SCHEMA_VERSION,
};
