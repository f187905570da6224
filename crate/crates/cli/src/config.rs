//! Run configuration: flags, overrides and scenario loading.

use resched_core::sim::{build_minifab, Mode, Scenario};
use std::path::PathBuf;

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub scenario: ScenarioRef,
    pub mode: Mode,
    pub risk_enabled: bool,
    pub trials: u32,
    pub seed: u64,
    pub out: PathBuf,
    pub overrides: Vec<(String, String)>,
}

#[derive(Clone, Debug)]
pub enum ScenarioRef {
    /// Built-in factory, with an optional scenario sampling seed
    /// (`minifab` or `minifab:<seed>`).
    Builtin(u64),
    Path(PathBuf),
}

#[derive(Debug)]
pub enum ConfigError {
    Usage(String),
    Infeasible(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Usage(m) => write!(f, "{m}"),
            ConfigError::Infeasible(m) => write!(f, "{m}"),
        }
    }
}

impl ConfigError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ConfigError::Usage(_) => 2,
            ConfigError::Infeasible(_) => 3,
        }
    }
}

pub fn parse_scenario_ref(s: &str) -> Result<ScenarioRef, ConfigError> {
    if s == "minifab" {
        return Ok(ScenarioRef::Builtin(0));
    }
    if let Some(seed) = s.strip_prefix("minifab:") {
        let seed = seed
            .parse()
            .map_err(|_| ConfigError::Usage(format!("bad scenario seed in '{s}'")))?;
        return Ok(ScenarioRef::Builtin(seed));
    }
    Ok(ScenarioRef::Path(PathBuf::from(s)))
}

pub fn load_scenario(r: &ScenarioRef) -> Result<Scenario, ConfigError> {
    let scenario = match r {
        ScenarioRef::Builtin(seed) => build_minifab(*seed),
        ScenarioRef::Path(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError::Usage(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| ConfigError::Usage(format!("cannot parse {}: {e}", path.display())))?
        }
    };
    scenario
        .validate()
        .map_err(|e| ConfigError::Infeasible(format!("scenario invalid: {e}")))?;
    Ok(scenario)
}

/// Apply `--set key=value` overrides. Unknown keys and out-of-range values
/// are usage errors.
pub fn apply_overrides(scenario: &mut Scenario, overrides: &[(String, String)]) -> Result<(), ConfigError> {
    for (key, value) in overrides {
        let bad = |what: &str| ConfigError::Usage(format!("--set {key}={value}: {what}"));
        macro_rules! num {
            ($t:ty) => {
                value.parse::<$t>().map_err(|_| bad("not a number"))?
            };
        }
        match key.as_str() {
            "delta" => scenario.delta = num!(u64),
            "sigma_frac" => {
                let v = num!(f64);
                if !(0.0..=0.33).contains(&v) {
                    return Err(bad("sigma_frac must be in [0, 0.33]"));
                }
                scenario.stochastic.sigma_frac = v;
            }
            "max_hops" => {
                let v = num!(usize);
                if !(1..=4).contains(&v) {
                    return Err(bad("max_hops must be in [1, 4]"));
                }
                scenario.max_hops = v;
            }
            "n_samples" => scenario.risk.n_samples = num!(u32),
            "w1" => scenario.risk.w1 = num!(f64),
            "w2" => scenario.risk.w2 = num!(f64),
            "scale" | "W" => scenario.risk.scale = num!(f64),
            "w_s" => scenario.priority.w_s = num!(f64),
            "w_d" => scenario.priority.w_d = num!(f64),
            "due_offset" => scenario.priority.due_offset = num!(u64),
            "horizon" => scenario.horizon = num!(u64),
            "move_time" => {
                let v = num!(u64);
                if v == 0 {
                    return Err(bad("move_time must be positive"));
                }
                for r in &mut scenario.robots {
                    r.move_time = v;
                }
            }
            _ => return Err(bad("unknown override key")),
        }
    }
    if scenario.risk.w1 < 0.0
        || scenario.risk.w2 < 0.0
        || (scenario.risk.w1 + scenario.risk.w2 - 1.0).abs() > 1e-9
    {
        return Err(ConfigError::Usage(
            "risk weights w1 + w2 must be nonnegative and sum to 1".to_string(),
        ));
    }
    Ok(())
}

pub fn out_dir_fallback(explicit: Option<PathBuf>) -> Result<PathBuf, ConfigError> {
    if let Some(p) = explicit {
        return Ok(p);
    }
    if let Ok(env) = std::env::var("RESCHED_OUT") {
        if !env.is_empty() {
            return Ok(PathBuf::from(env));
        }
    }
    Err(ConfigError::Usage(
        "no output directory: pass --out DIR or set RESCHED_OUT".to_string(),
    ))
}
