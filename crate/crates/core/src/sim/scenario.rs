//! Scenario description and the Mini-Fab style factory builder.

use crate::capability::{
    Attribute, CapabilityModel, EventCapability, Registry, Requirements, ResourceClass,
};
use crate::protocol::transport_event_id;
use crate::schedule::{CompositionId, EventId, LocationId, ProductId, ResourceId, Tick};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Workspace {
    Small,
    Large,
}

impl Workspace {
    pub fn label(&self) -> &'static str {
        match self {
            Workspace::Small => "small",
            Workspace::Large => "large",
        }
    }
}

/// One process a machine offers, with its nominal time on that machine.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProcessCap {
    pub process: EventId,
    pub time: Tick,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MachineSpec {
    pub id: ResourceId,
    /// Processes this machine performs.
    pub processes: Vec<ProcessCap>,
    pub workspace: Workspace,
    /// Starting breakdown hazard at full wear.
    pub base_hazard: f64,
    /// Nominal operations between breakdowns.
    pub nominal_ops: u32,
    /// Operations already on the counter when the trial starts: the fleet
    /// arrives aged, so breakdown probabilities are nonzero from tick 0.
    pub initial_ops: u32,
}

impl MachineSpec {
    pub fn location(&self) -> LocationId {
        LocationId::from(self.id.as_str())
    }

    pub fn performs(&self, process: &EventId) -> bool {
        self.processes.iter().any(|p| &p.process == process)
    }

    pub fn time_of(&self, process: &EventId) -> Option<Tick> {
        self.processes
            .iter()
            .find(|p| &p.process == process)
            .map(|p| p.time)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RobotSpec {
    pub id: ResourceId,
    pub reach: Vec<LocationId>,
    pub move_time: Tick,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProductTypeSpec {
    pub label: String,
    /// Process sequence.
    pub route: Vec<EventId>,
    /// Composition stage labels; `stages[0]` is the raw state and
    /// `stages[k+1]` is reached by `route[k]`.
    pub stages: Vec<CompositionId>,
    /// Hard workspace requirement on every transform, when present.
    pub workspace_required: Option<Workspace>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ArrivalSpec {
    /// Total products; types alternate in label order.
    pub count: u32,
    pub spacing: Tick,
    pub start: Tick,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StochasticSpec {
    pub hazard_min: f64,
    pub hazard_max: f64,
    pub mttr_min: Tick,
    pub mttr_max: Tick,
    /// Relative sigma of machine operation durations.
    pub sigma_frac: f64,
    pub nominal_ops_min: u32,
    pub nominal_ops_max: u32,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RiskSpec {
    pub w1: f64,
    pub w2: f64,
    pub scale: f64,
    pub n_samples: u32,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PrioritySpec {
    pub w_s: f64,
    pub w_d: f64,
    /// Due date = arrival + offset.
    pub due_offset: Tick,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub entry: LocationId,
    pub exit: LocationId,
    pub machines: Vec<MachineSpec>,
    pub robots: Vec<RobotSpec>,
    pub product_types: Vec<ProductTypeSpec>,
    pub arrivals: ArrivalSpec,
    pub stochastic: StochasticSpec,
    /// Gap between consecutive operations on a machine schedule.
    pub delta: Tick,
    pub max_hops: usize,
    pub horizon: Tick,
    /// Seed the scenario itself was sampled with (machine times, hazards).
    pub seed: u64,
    pub risk: RiskSpec,
    pub priority: PrioritySpec,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("route step {step} of product type {label} has no eligible machine")]
    NoEligibleMachine { label: String, step: usize },
    #[error("machine {0} is not reachable by any robot")]
    UnreachableMachine(ResourceId),
    #[error("scenario schema version {0} unsupported (expected {SCENARIO_SCHEMA_VERSION})")]
    SchemaVersion(u32),
    #[error("scenario has no product types")]
    NoProductTypes,
}

impl Scenario {
    /// Machines eligible for one route step of one product type. A large
    /// workspace serves everything; a small one only products that do not
    /// require large.
    pub fn eligible_machines(&self, pt: &ProductTypeSpec, step: usize) -> Vec<&MachineSpec> {
        let process = &pt.route[step];
        self.machines
            .iter()
            .filter(|m| m.performs(process))
            .filter(|m| match pt.workspace_required {
                Some(Workspace::Large) => m.workspace == Workspace::Large,
                Some(Workspace::Small) | None => true,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(ScenarioError::SchemaVersion(self.schema_version));
        }
        if self.product_types.is_empty() {
            return Err(ScenarioError::NoProductTypes);
        }
        for pt in &self.product_types {
            for step in 0..pt.route.len() {
                if self.eligible_machines(pt, step).is_empty() {
                    return Err(ScenarioError::NoEligibleMachine {
                        label: pt.label.clone(),
                        step,
                    });
                }
            }
        }
        for m in &self.machines {
            let loc = m.location();
            if !self.robots.iter().any(|r| r.reach.contains(&loc)) {
                return Err(ScenarioError::UnreachableMachine(m.id.clone()));
            }
        }
        Ok(())
    }

    /// Build the shared capability directory.
    pub fn registry(&self) -> Registry {
        let mut registry = Registry::new();
        for m in &self.machines {
            let mut model = CapabilityModel::new(m.id.clone(), ResourceClass::Transformation);
            model.states.insert(m.location());
            for cap in &m.processes {
                model.events.insert(
                    cap.process.clone(),
                    EventCapability {
                        nominal_cost: cap.time,
                        attributes: vec![Attribute::sym("workspace", m.workspace.label())],
                    },
                );
            }
            registry.insert(model);
        }
        for r in &self.robots {
            let mut model = CapabilityModel::new(r.id.clone(), ResourceClass::Transportation);
            for loc in &r.reach {
                model.states.insert(loc.clone());
            }
            for a in &r.reach {
                for b in &r.reach {
                    if a == b {
                        continue;
                    }
                    model.events.insert(
                        transport_event_id(a, b),
                        EventCapability {
                            nominal_cost: r.move_time,
                            attributes: Vec::new(),
                        },
                    );
                }
            }
            registry.insert(model);
        }
        registry
    }

    /// Production requirements of one product type for its transforms.
    pub fn requirements_for(&self, pt: &ProductTypeSpec) -> Requirements {
        match pt.workspace_required {
            Some(ws) => Requirements::hard_symbol("workspace", ws.label()),
            None => Requirements::none(),
        }
    }

    /// Product ids with arrival ticks and type indices, in arrival order.
    pub fn arrivals_list(&self) -> Vec<(ProductId, Tick, usize)> {
        let mut out = Vec::with_capacity(self.arrivals.count as usize);
        let types = self.product_types.len().max(1);
        for k in 0..self.arrivals.count {
            let type_idx = (k as usize) % types;
            let label = &self.product_types[type_idx].label;
            let id = ProductId::from(format!("{label}{:03}", k / types as u32 + 1));
            let arrival = self.arrivals.start + self.arrivals.spacing * k as Tick;
            out.push((id, arrival, type_idx));
        }
        out
    }

    pub fn machine(&self, id: &ResourceId) -> Option<&MachineSpec> {
        self.machines.iter().find(|m| &m.id == id)
    }

    pub fn total_processes(&self) -> usize {
        self.arrivals_list()
            .iter()
            .map(|(_, _, ti)| self.product_types[*ti].route.len())
            .sum()
    }
}

/// Build the Mini-Fab style scenario: 20 machines over six processes in six
/// cells, 6 robots with overlapping cell coverage, two product types with
/// alternating arrivals every 30 ticks from tick 10.
pub fn build_minifab(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Machine groups by process pair, laid out cell by cell. Two processes
    // per machine give every repair a real choice of hosts, and splitting
    // each route's steps across the groups spreads the large-only load.
    type CellGroup<'a> = (&'a [&'a str], &'a [(&'a str, Workspace)]);
    let layout: &[CellGroup] = &[
        (&["P1", "P4"], &[("M01", Workspace::Large), ("M02", Workspace::Large), ("M03", Workspace::Large), ("M04", Workspace::Small)]),
        (&["P1", "P4"], &[("M05", Workspace::Large), ("M06", Workspace::Large), ("M07", Workspace::Small)]),
        (&["P2", "P3"], &[("M08", Workspace::Large), ("M09", Workspace::Large), ("M10", Workspace::Small), ("M11", Workspace::Small)]),
        (&["P2", "P3"], &[("M12", Workspace::Large), ("M13", Workspace::Small), ("M14", Workspace::Small)]),
        (&["P5", "P6"], &[("M15", Workspace::Large), ("M16", Workspace::Large), ("M17", Workspace::Small)]),
        (&["P5", "P6"], &[("M18", Workspace::Small), ("M19", Workspace::Small), ("M20", Workspace::Large)]),
    ];

    let stochastic = StochasticSpec {
        hazard_min: 0.033,
        hazard_max: 0.10,
        mttr_min: 1000,
        mttr_max: 1500,
        sigma_frac: 0.05,
        nominal_ops_min: 20,
        nominal_ops_max: 40,
    };

    let mut machines = Vec::new();
    for (processes, cells) in layout {
        for (id, ws) in *cells {
            let caps: Vec<ProcessCap> = processes
                .iter()
                .map(|p| ProcessCap {
                    process: EventId::from(*p),
                    time: rng.gen_range(110..=200),
                })
                .collect();
            let base_hazard = rng.gen_range(stochastic.hazard_min..=stochastic.hazard_max);
            let nominal_ops = rng.gen_range(stochastic.nominal_ops_min..=stochastic.nominal_ops_max);
            // A worn minority and a fresh majority: the fleet arrives aged
            // unevenly, so host choices genuinely differ in breakdown risk.
            let initial_ops = if rng.gen_bool(1.0 / 3.0) {
                rng.gen_range(nominal_ops / 2..=nominal_ops)
            } else {
                rng.gen_range(0..=nominal_ops / 4)
            };
            machines.push(MachineSpec {
                id: ResourceId::from(*id),
                processes: caps,
                workspace: *ws,
                base_hazard,
                nominal_ops,
                initial_ops,
            });
        }
    }

    let cell = |range: std::ops::RangeInclusive<u32>| -> Vec<LocationId> {
        range.map(|i| LocationId::from(format!("M{i:02}"))).collect()
    };
    let reach = |cells: &[Vec<LocationId>], extra: &[&str]| -> Vec<LocationId> {
        let mut v: Vec<LocationId> = extra.iter().map(|s| LocationId::from(*s)).collect();
        for c in cells {
            v.extend(c.iter().cloned());
        }
        v
    };
    let c1 = cell(1..=4);
    let c2 = cell(5..=7);
    let c3 = cell(8..=11);
    let c4 = cell(12..=14);
    let c5 = cell(15..=17);
    let c6 = cell(18..=20);

    let robots = vec![
        RobotSpec { id: ResourceId::from("R1"), reach: reach(&[c1.clone(), c2.clone()], &["Entry"]), move_time: 20 },
        RobotSpec { id: ResourceId::from("R2"), reach: reach(&[c1.clone(), c2.clone(), c3.clone()], &[]), move_time: 20 },
        RobotSpec { id: ResourceId::from("R3"), reach: reach(&[c2.clone(), c3.clone(), c4.clone(), c6.clone()], &["Exit"]), move_time: 20 },
        RobotSpec { id: ResourceId::from("R4"), reach: reach(&[c1.clone(), c3.clone(), c4.clone()], &[]), move_time: 20 },
        RobotSpec { id: ResourceId::from("R5"), reach: reach(&[c2.clone(), c4.clone(), c5.clone()], &["Exit"]), move_time: 20 },
        RobotSpec { id: ResourceId::from("R6"), reach: reach(&[c1.clone(), c3.clone(), c5.clone(), c6.clone()], &["Exit"]), move_time: 20 },
    ];

    let product_types = vec![
        ProductTypeSpec {
            label: "S".to_string(),
            route: ["P1", "P2", "P3", "P6"].iter().map(|s| EventId::from(*s)).collect(),
            stages: ["raw", "s1", "s2", "s3", "s4"].iter().map(|s| CompositionId::from(*s)).collect(),
            workspace_required: None,
        },
        ProductTypeSpec {
            label: "L".to_string(),
            route: ["P1", "P3", "P4", "P5"].iter().map(|s| EventId::from(*s)).collect(),
            stages: ["raw", "l1", "l2", "l3", "l4"].iter().map(|s| CompositionId::from(*s)).collect(),
            workspace_required: Some(Workspace::Large),
        },
    ];

    Scenario {
        schema_version: SCENARIO_SCHEMA_VERSION,
        name: "minifab".to_string(),
        entry: LocationId::from("Entry"),
        exit: LocationId::from("Exit"),
        machines,
        robots,
        product_types,
        arrivals: ArrivalSpec {
            count: 100,
            spacing: 30,
            start: 10,
        },
        stochastic,
        delta: 10,
        max_hops: 2,
        horizon: 40_000,
        seed,
        risk: RiskSpec {
            w1: 0.2,
            w2: 0.8,
            scale: 1500.0,
            n_samples: 1000,
        },
        priority: PrioritySpec {
            w_s: 1.0,
            w_d: 1.0,
            due_offset: 2000,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minifab_shape() {
        let s = build_minifab(0);
        assert_eq!(s.machines.len(), 20);
        assert_eq!(s.robots.len(), 6);
        assert_eq!(s.arrivals.count, 100);
        assert_eq!(s.total_processes(), 400);
        s.validate().expect("minifab must validate");
    }

    #[test]
    fn minifab_arrival_ticks() {
        let s = build_minifab(0);
        let arrivals = s.arrivals_list();
        assert_eq!(arrivals.len(), 100);
        assert_eq!(arrivals[0].1, 10);
        assert_eq!(arrivals[1].1, 40);
        assert_eq!(arrivals[2].1, 70);
        assert_eq!(arrivals[99].1, 10 + 99 * 30);
    }

    #[test]
    fn minifab_process_times_in_range() {
        let s = build_minifab(7);
        for m in &s.machines {
            for cap in &m.processes {
                assert!((110..=200).contains(&cap.time), "{} {}: {}", m.id, cap.process, cap.time);
            }
            assert!(m.base_hazard >= 0.033 && m.base_hazard <= 0.10);
            assert!((20..=40).contains(&m.nominal_ops));
        }
    }

    #[test]
    fn large_products_only_fit_large_machines() {
        let s = build_minifab(0);
        let l_type = &s.product_types[1];
        for step in 0..l_type.route.len() {
            for m in s.eligible_machines(l_type, step) {
                assert_eq!(m.workspace, Workspace::Large);
            }
        }
        // Small products may use everything capable of the process.
        let s_type = &s.product_types[0];
        let p1_all: Vec<_> = s.eligible_machines(s_type, 0);
        assert_eq!(p1_all.len(), 7);
    }

    #[test]
    fn registry_clusters_match_layout() {
        let s = build_minifab(0);
        let registry = s.registry();
        let cluster = crate::capability::clustering_ras(
            &EventId::from("P1"),
            &ResourceId::from("M01"),
            &registry,
        );
        assert_eq!(cluster.len(), 6, "other P1 machines: {cluster:?}");

        // Machines are reachable by the robots that cover their cell.
        let collab = crate::capability::collaborative_ras(
            &LocationId::from("M01"),
            &ResourceId::from("M01"),
            &registry,
        );
        assert!(collab.contains(&ResourceId::from("R1")));
        assert!(collab.contains(&ResourceId::from("R2")));
        assert!(collab.contains(&ResourceId::from("R4")));
    }

    #[test]
    fn scenario_round_trips_through_json() {
        let s = build_minifab(3);
        let text = serde_json::to_string_pretty(&s).unwrap();
        let back: Scenario = serde_json::from_str(&text).unwrap();
        assert_eq!(back.machines.len(), 20);
        assert_eq!(back.seed, 3);
    }
}
