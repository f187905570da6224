//! Multi-agent job-shop rescheduling: a deterministic factory simulator in
//! which resource agents repair the production schedule after machine
//! breakdowns.
//!
//! The crate is organized around the repair pipeline:
//!
//! - [`schedule`] — the schedule data model, state-transition semantics,
//!   idle-interval arithmetic, the one-shift earliest-insertion rule, the
//!   live plan with its normalizer, and whole-schedule validation;
//! - [`capability`] — per-resource capability models, the shared directory,
//!   the environment maps (clustering, sequential, collaborative resources)
//!   and requirement match-making;
//! - [`protocol`] — disruption intake, replacement-span extraction, bid
//!   broadcast, candidate construction and commit;
//! - [`risk`] — delay and breakdown risk of a candidate schedule;
//! - [`decide`] — objective evaluation, selection, the exhaustive
//!   centralized baseline and escalation;
//! - [`sim`] — the scenario builder, the initial-schedule generator, and the
//!   tick loop that executes plans, breaks machines and collects metrics.

pub mod capability;
pub mod decide;
pub mod protocol;
pub mod risk;
pub mod schedule;
pub mod sim;
