//! Per-trial counters and the per-rescheduling-event log rows.

use crate::schedule::{ProductId, Tick};

/// One row of the rescheduling event log.
#[derive(Clone, Debug)]
pub struct RescheduleEventRow {
    pub tick: Tick,
    pub mode: &'static str,
    pub resource: String,
    pub product: String,
    pub event: String,
    /// Size of the disruption's affected-event list.
    pub affected: usize,
    /// Length of the replaced span for this event.
    pub span_len: usize,
    pub candidates: usize,
    pub messages: u64,
    /// Whether the centralized fallback ran for this event (its analytic
    /// message charge is included in `messages`).
    pub fallback: bool,
    pub chosen_j: Option<f64>,
    /// Unscaled weighted risk of the chosen schedule.
    pub chosen_risk: Option<f64>,
    pub outcome: &'static str,
    pub wall_ms: f64,
}

/// Everything one trial produced.
#[derive(Clone, Debug, Default)]
pub struct TrialMetrics {
    pub trial: u32,
    pub seed: u64,
    pub mode: String,
    pub risk_enabled: bool,
    pub products_completed: u32,
    pub products_damaged: u32,
    pub broken_machines: u32,
    pub rescheduled_processes: u32,
    pub escalations: u32,
    pub communications: u64,
    pub mean_cycle_time: f64,
    pub peak_risk: f64,
    pub avg_risk: f64,
    /// Mean delay-risk component of chosen schedules.
    pub avg_r1: f64,
    /// Mean breakdown-risk component of chosen schedules.
    pub avg_r2: f64,
    /// Realized machine busy fraction over the executed span.
    pub utilization: f64,
    pub candidates_examined: u64,
    pub horizon_exceeded: bool,
    /// Wall-clock spent inside rescheduling decisions. Reported in the
    /// summary, never in metrics.csv, which must be byte-stable.
    pub reschedule_wall_ms: f64,
    /// Cycle time per completed product, in arrival order.
    pub cycle_times: Vec<(ProductId, Tick)>,
    pub reschedule_events: Vec<RescheduleEventRow>,
    /// (distributed J*, centralized J*) pairs collected when probing both
    /// decision paths on the same disruption state.
    pub probe_pairs: Vec<(f64, f64)>,
}

impl TrialMetrics {
    /// Mean cycle time per consecutive cohort of `size` products (by arrival
    /// order over all products; damaged ones are skipped in their cohort).
    pub fn cohort_means(&self, arrivals: &[ProductId], size: usize) -> Vec<(usize, f64, usize)> {
        let mut out = Vec::new();
        if size == 0 {
            return out;
        }
        for (c, chunk) in arrivals.chunks(size).enumerate() {
            let cycles: Vec<f64> = chunk
                .iter()
                .filter_map(|p| {
                    self.cycle_times
                        .iter()
                        .find(|(q, _)| q == p)
                        .map(|(_, t)| *t as f64)
                })
                .collect();
            let mean = if cycles.is_empty() {
                f64::NAN
            } else {
                cycles.iter().sum::<f64>() / cycles.len() as f64
            };
            out.push((c + 1, mean, cycles.len()));
        }
        out
    }
}
