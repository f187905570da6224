//! Experiment runner for the factory rescheduling simulator.
//!
//! `resched run` executes seeded trials of one configuration and writes
//! metrics.csv, events.log and summary.txt; `resched compare` runs two
//! configurations over the same scenario and seeds and writes comparison.txt
//! alongside per-arm artifacts.

mod config;
mod report;

use config::{
    apply_overrides, load_scenario, out_dir_fallback, parse_scenario_ref, ConfigError, RunConfig,
    ScenarioRef,
};
use resched_core::sim::{Mode, Scenario, TrialMetrics};
use std::path::PathBuf;
use std::process::ExitCode;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match dispatch(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("resched: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(args: &[String]) -> Result<(), ConfigError> {
    match args.first().map(String::as_str) {
        Some("run") => cmd_run(&args[1..]),
        Some("compare") => cmd_compare(&args[1..]),
        Some("help") | Some("--help") | Some("-h") | None => {
            print!("{}", usage());
            Ok(())
        }
        Some(other) => Err(ConfigError::Usage(format!(
            "unknown command '{other}'\n{}",
            usage()
        ))),
    }
}

fn usage() -> String {
    "\
usage:
  resched run     --scenario <path|minifab|minifab:SEED> --mode <centralized|distributed>
                  --risk <on|off> --trials N --seed N --out DIR
                  [--trace on] [--set key=value]...
  resched compare --scenario <...> --trials N --seed N --out DIR
                  --a-mode <m> --a-risk <on|off> --b-mode <m> --b-risk <on|off> [--set key=value]...

The RESCHED_OUT environment variable is used when --out is omitted.
Override keys: delta, sigma_frac, max_hops, n_samples, w1, w2, scale, w_s, w_d,
due_offset, horizon, move_time.

Outputs: metrics.csv (one row per trial, byte-stable), events.log (one line
per rescheduling event), summary.txt (means, deviations, cohort cycle times),
comparison.txt (compare only).
"
    .to_string()
}

struct Parsed {
    named: std::collections::BTreeMap<String, String>,
    sets: Vec<(String, String)>,
}

fn parse_flags(args: &[String]) -> Result<Parsed, ConfigError> {
    let mut named = std::collections::BTreeMap::new();
    let mut sets = Vec::new();
    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let Some(name) = flag.strip_prefix("--") else {
            return Err(ConfigError::Usage(format!("unexpected argument '{flag}'")));
        };
        let value = it
            .next()
            .ok_or_else(|| ConfigError::Usage(format!("--{name} needs a value")))?;
        if name == "set" {
            let (k, v) = value.split_once('=').ok_or_else(|| {
                ConfigError::Usage(format!("--set expects key=value, got '{value}'"))
            })?;
            sets.push((k.to_string(), v.to_string()));
        } else {
            named.insert(name.to_string(), value.clone());
        }
    }
    Ok(Parsed { named, sets })
}

fn required<'a>(p: &'a Parsed, key: &str) -> Result<&'a str, ConfigError> {
    p.named
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| ConfigError::Usage(format!("missing --{key}")))
}

fn parse_mode(s: &str) -> Result<Mode, ConfigError> {
    s.parse().map_err(ConfigError::Usage)
}

fn parse_risk(s: &str) -> Result<bool, ConfigError> {
    match s {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(ConfigError::Usage(format!(
            "--risk must be on or off, got '{other}'"
        ))),
    }
}

fn parse_common(p: &Parsed) -> Result<(ScenarioRef, u32, u64, PathBuf), ConfigError> {
    let scenario = parse_scenario_ref(required(p, "scenario")?)?;
    let trials: u32 = required(p, "trials")?
        .parse()
        .map_err(|_| ConfigError::Usage("--trials must be a number".to_string()))?;
    if trials == 0 {
        return Err(ConfigError::Usage("--trials must be at least 1".to_string()));
    }
    let seed: u64 = required(p, "seed")?
        .parse()
        .map_err(|_| ConfigError::Usage("--seed must be a number".to_string()))?;
    let out = out_dir_fallback(p.named.get("out").map(PathBuf::from))?;
    Ok((scenario, trials, seed, out))
}

fn run_batch(
    scenario: &Scenario,
    mode: Mode,
    risk: bool,
    trials: u32,
    base_seed: u64,
    trace: bool,
) -> Result<(Vec<TrialMetrics>, Vec<String>), ConfigError> {
    let mut rows = Vec::with_capacity(trials as usize);
    let mut trace_lines = Vec::new();
    for t in 0..trials {
        let seed = base_seed + t as u64;
        let options = resched_core::sim::EngineOptions {
            trace_messages: trace,
            ..Default::default()
        };
        let mut world = resched_core::sim::World::new(scenario, mode, risk, seed, options)
            .map_err(|e| ConfigError::Infeasible(format!("trial {t}: {e}")))?;
        let mut m = world.run();
        m.trial = t;
        if trace {
            for line in world.message_trace_lines() {
                trace_lines.push(format!("{t} {line}"));
            }
        }
        rows.push(m);
    }
    Ok((rows, trace_lines))
}

fn write(out: &PathBuf, name: &str, text: &str) -> Result<(), ConfigError> {
    std::fs::create_dir_all(out)
        .map_err(|e| ConfigError::Usage(format!("cannot create {}: {e}", out.display())))?;
    let path = out.join(name);
    std::fs::write(&path, text)
        .map_err(|e| ConfigError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn cmd_run(args: &[String]) -> Result<(), ConfigError> {
    let p = parse_flags(args)?;
    let (scenario_ref, trials, seed, out) = parse_common(&p)?;
    let config = RunConfig {
        scenario: scenario_ref,
        mode: parse_mode(required(&p, "mode")?)?,
        risk_enabled: parse_risk(required(&p, "risk")?)?,
        trials,
        seed,
        out,
        overrides: p.sets.clone(),
    };

    let trace = matches!(p.named.get("trace").map(String::as_str), Some("on"));
    let mut scenario = load_scenario(&config.scenario)?;
    apply_overrides(&mut scenario, &config.overrides)?;
    let (rows, trace_lines) = run_batch(
        &scenario,
        config.mode,
        config.risk_enabled,
        config.trials,
        config.seed,
        trace,
    )?;

    if trace {
        let mut text = String::from("trial tick from to kind payload_bytes\n");
        for line in &trace_lines {
            text.push_str(line);
            text.push('\n');
        }
        write(&config.out, "messages.log", &text)?;
    }
    write(&config.out, "metrics.csv", &report::metrics_csv(&rows))?;
    write(&config.out, "events.log", &report::events_log(&rows))?;
    write(&config.out, "summary.txt", &report::summary(&scenario, &rows))?;
    println!(
        "wrote {} trials to {} ({:.1} of {} products completed per trial on average)",
        rows.len(),
        config.out.display(),
        rows.iter().map(|m| m.products_completed).sum::<u32>() as f64 / rows.len() as f64,
        scenario.arrivals.count,
    );
    Ok(())
}

fn cmd_compare(args: &[String]) -> Result<(), ConfigError> {
    let p = parse_flags(args)?;
    let (scenario_ref, trials, seed, out) = parse_common(&p)?;
    let a_mode = parse_mode(required(&p, "a-mode")?)?;
    let a_risk = parse_risk(required(&p, "a-risk")?)?;
    let b_mode = parse_mode(required(&p, "b-mode")?)?;
    let b_risk = parse_risk(required(&p, "b-risk")?)?;

    let mut scenario = load_scenario(&scenario_ref)?;
    apply_overrides(&mut scenario, &p.sets)?;

    let (rows_a, _) = run_batch(&scenario, a_mode, a_risk, trials, seed, false)?;
    let (rows_b, _) = run_batch(&scenario, b_mode, b_risk, trials, seed, false)?;

    let label = |mode: Mode, risk: bool| {
        format!("{} risk-{}", mode.label(), if risk { "on" } else { "off" })
    };
    let label_a = label(a_mode, a_risk);
    let label_b = label(b_mode, b_risk);

    write(&out, "metrics_a.csv", &report::metrics_csv(&rows_a))?;
    write(&out, "metrics_b.csv", &report::metrics_csv(&rows_b))?;
    write(&out, "events_a.log", &report::events_log(&rows_a))?;
    write(&out, "events_b.log", &report::events_log(&rows_b))?;
    write(
        &out,
        "comparison.txt",
        &report::comparison(&label_a, &rows_a, &label_b, &rows_b),
    )?;
    println!(
        "wrote paired comparison ({label_a} vs {label_b}) to {}",
        out.display()
    );
    Ok(())
}
