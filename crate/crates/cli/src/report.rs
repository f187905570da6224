//! Output artifacts: metrics.csv, events.log, summary.txt, comparison.txt.
//!
//! metrics.csv is byte-stable for a given (config, seed): integers plain,
//! reals with four decimals, newline-terminated rows. Wall-clock figures go
//! to events.log and summary.txt only.

use resched_core::schedule::ProductId;
use resched_core::sim::{Scenario, TrialMetrics};
use std::fmt::Write as _;

pub const CSV_HEADER: &str = "trial,seed,mode,risk,completed,damaged,broken_machines,\
rescheduled,escalations,communications,mean_cycle_time,peak_risk,avg_risk,avg_r1,avg_r2,\
utilization,candidates,horizon_exceeded";

fn f4(v: f64) -> String {
    format!("{v:.4}")
}

pub fn metrics_csv(rows: &[TrialMetrics]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for m in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            m.trial,
            m.seed,
            m.mode,
            if m.risk_enabled { "on" } else { "off" },
            m.products_completed,
            m.products_damaged,
            m.broken_machines,
            m.rescheduled_processes,
            m.escalations,
            m.communications,
            f4(m.mean_cycle_time),
            f4(m.peak_risk),
            f4(m.avg_risk),
            f4(m.avg_r1),
            f4(m.avg_r2),
            f4(m.utilization),
            m.candidates_examined,
            u8::from(m.horizon_exceeded),
        );
    }
    out
}

pub fn events_log(rows: &[TrialMetrics]) -> String {
    let mut out = String::new();
    out.push_str("trial tick mode resource product event affected candidates messages chosen_j chosen_risk outcome wall_ms\n");
    for m in rows {
        for e in &m.reschedule_events {
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {} {} {} {} {} {} {:.3}",
                m.trial,
                e.tick,
                e.mode,
                e.resource,
                e.product,
                e.event,
                e.affected,
                e.candidates,
                e.messages,
                e.chosen_j.map_or("-".to_string(), f4),
                e.chosen_risk.map_or("-".to_string(), f4),
                e.outcome,
                e.wall_ms,
            );
        }
    }
    out
}

struct Stat {
    name: &'static str,
    values: Vec<f64>,
}

impl Stat {
    fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    fn std(&self) -> f64 {
        let n = self.values.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.mean();
        let var = self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        var.sqrt()
    }
}

fn stats_of(rows: &[TrialMetrics]) -> Vec<Stat> {
    let col = |name: &'static str, f: &dyn Fn(&TrialMetrics) -> f64| Stat {
        name,
        values: rows.iter().map(f).collect(),
    };
    vec![
        col("completed", &|m| m.products_completed as f64),
        col("damaged", &|m| m.products_damaged as f64),
        col("broken_machines", &|m| m.broken_machines as f64),
        col("rescheduled", &|m| m.rescheduled_processes as f64),
        col("escalations", &|m| m.escalations as f64),
        col("communications", &|m| m.communications as f64),
        col("mean_cycle_time", &|m| m.mean_cycle_time),
        col("peak_risk", &|m| m.peak_risk),
        col("avg_risk", &|m| m.avg_risk),
        col("utilization", &|m| m.utilization),
        col("candidates", &|m| m.candidates_examined as f64),
    ]
}

/// Means and standard deviations per metric, then mean cycle time per
/// cohort of ten products in arrival order.
pub fn summary(scenario: &Scenario, rows: &[TrialMetrics]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario: {}  trials: {}", scenario.name, rows.len());
    if let Some(first) = rows.first() {
        let _ = writeln!(
            out,
            "mode: {}  risk: {}  seeds: {}..{}",
            first.mode,
            if first.risk_enabled { "on" } else { "off" },
            first.seed,
            rows.last().map(|m| m.seed).unwrap_or(first.seed),
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<18} {:>12} {:>12}", "metric", "mean", "std");
    for s in stats_of(rows) {
        let _ = writeln!(out, "{:<18} {:>12} {:>12}", s.name, f4(s.mean()), f4(s.std()));
    }

    let arrivals: Vec<ProductId> = scenario.arrivals_list().into_iter().map(|(p, _, _)| p).collect();
    let _ = writeln!(out);
    let _ = writeln!(out, "cycle-time means per cohort of 10 products (columns: per-trial, then mean):");
    let cohorts = arrivals.len().div_ceil(10);
    for c in 0..cohorts {
        let mut per_trial = Vec::new();
        for m in rows {
            let means = m.cohort_means(&arrivals, 10);
            per_trial.push(means.get(c).map(|(_, mean, _)| *mean).unwrap_or(f64::NAN));
        }
        let shown: Vec<String> = per_trial
            .iter()
            .map(|v| if v.is_nan() { "-".to_string() } else { f4(*v) })
            .collect();
        let finite: Vec<f64> = per_trial.iter().copied().filter(|v| v.is_finite()).collect();
        let mean = if finite.is_empty() {
            "-".to_string()
        } else {
            f4(finite.iter().sum::<f64>() / finite.len() as f64)
        };
        let _ = writeln!(
            out,
            "cohort {:>2} ({:03}-{:03}): {}  | mean {}",
            c + 1,
            c * 10 + 1,
            ((c + 1) * 10).min(arrivals.len()),
            shown.join(" "),
            mean
        );
    }

    let total_wall: f64 = rows.iter().map(|m| m.reschedule_wall_ms).sum();
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "total rescheduling wall time: {total_wall:.1} ms (not part of metrics.csv)"
    );
    out
}

/// Paired per-seed table and per-metric mean deltas, one block per metric.
pub fn comparison(label_a: &str, rows_a: &[TrialMetrics], label_b: &str, rows_b: &[TrialMetrics]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "comparison: A = {label_a}   B = {label_b}");
    let _ = writeln!(out, "seeds: {:?}", rows_a.iter().map(|m| m.seed).collect::<Vec<_>>());
    let _ = writeln!(out);

    let stats_a = stats_of(rows_a);
    let stats_b = stats_of(rows_b);
    for (sa, sb) in stats_a.iter().zip(&stats_b) {
        let _ = writeln!(out, "{}", sa.name);
        let values = |s: &Stat| {
            s.values
                .iter()
                .map(|v| f4(*v))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(out, "  A: {}  | avg {}", values(sa), f4(sa.mean()));
        let _ = writeln!(out, "  B: {}  | avg {}", values(sb), f4(sb.mean()));
        let _ = writeln!(out, "  mean delta (B - A): {}", f4(sb.mean() - sa.mean()));
        let _ = writeln!(out);
    }
    out
}
