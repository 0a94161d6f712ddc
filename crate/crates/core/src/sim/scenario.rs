use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use super::kernel::{AgentFault, KernelError};
use crate::exact::{Exact, Q};
use crate::farm::{CarriageId, CellAddress, FarmError, FarmSpec, Limits};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulesMode {
    /// Every module has its own mover and elevator; the run lasts as long as
    /// the slowest module.
    #[default]
    Parallel,
    /// Modules are worked one after another.
    Serial,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Goal {
    /// Bring every carriage to its module's station.
    UnloadAll,
    /// Carry every carriage from the station to its listed cell.
    LoadAll,
    /// Move one carriage to another cell of the same module.
    MoveOne { carriage: CarriageId, to: CellAddress },
}

/// Per-operation times. Unset entries fall back to the module kinematics
/// (`t_h`, `t_v`), the arm latch default of 2 s (`t_engage`) or zero
/// (`t_release`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioTiming {
    /// Seconds per grow unit of mover travel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_h: Option<Exact>,
    /// Seconds per shelf of elevator travel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_v: Option<Exact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_engage: Option<Exact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_release: Option<Exact>,
}

/// A carriage and the cell it starts in (or, when loading, is bound for).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub id: CarriageId,
    #[serde(default)]
    pub tray_mass: f64,
    pub cell: CellAddress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub modules: ModulesMode,
    /// Put a carriage in every cell not covered by `carriages`.
    #[serde(default)]
    pub fill_all: bool,
    /// Tray mass for carriages created by `fill_all`, kg.
    #[serde(default)]
    pub fill_tray_mass: f64,
    pub goal: Goal,
    #[serde(default)]
    pub timing: ScenarioTiming,
    pub farm: FarmSpec,
    #[serde(default)]
    pub carriages: Vec<Placement>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario file: {0}")]
    Parse(String),
    #[error(transparent)]
    Farm(#[from] FarmError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("goal unreachable: blocked by carriage {carriage} ({reason})")]
    Blocked { carriage: CarriageId, reason: String },
    #[error("device fault: {0}")]
    Fault(AgentFault),
    #[error(transparent)]
    Kernel(KernelError),
    #[error("run ended without reaching the goal: {0}")]
    GoalNotReached(String),
}

impl Scenario {
    /// Default timings, parallel modules, no carriages.
    pub fn new(farm: FarmSpec, goal: Goal) -> Self {
        Scenario {
            name: None,
            modules: ModulesMode::Parallel,
            fill_all: false,
            fill_tray_mass: 0.0,
            goal,
            timing: ScenarioTiming::default(),
            farm,
            carriages: Vec::new(),
        }
    }

    /// A full farm to be unloaded.
    pub fn unload_full(farm: FarmSpec) -> Self {
        Scenario { fill_all: true, ..Scenario::new(farm, Goal::UnloadAll) }
    }

    pub fn with_timing(mut self, t_h: Option<Q>, t_v: Option<Q>, t_engage: Option<Q>) -> Self {
        self.timing.t_h = t_h.map(Exact);
        self.timing.t_v = t_v.map(Exact);
        self.timing.t_engage = t_engage.map(Exact);
        self
    }

    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Listed carriages plus those created by `fill_all`, ordered by id.
    pub fn placements(&self) -> Vec<Placement> {
        let mut out = self.carriages.clone();
        if self.fill_all {
            let taken: BTreeSet<CellAddress> = out.iter().map(|p| p.cell).collect();
            for (m, spec) in self.farm.modules.iter().enumerate() {
                for col in 0..spec.n_h {
                    for row in 0..spec.n_v {
                        let cell = CellAddress::new(m, col, row);
                        if !taken.contains(&cell) {
                            out.push(Placement {
                                id: format!("m{m:02}-c{col:02}-r{row:02}"),
                                tray_mass: self.fill_tray_mass,
                                cell,
                            });
                        }
                    }
                }
            }
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.validate_with(&Limits::default())
    }

    pub fn validate_with(&self, limits: &Limits) -> Result<(), ScenarioError> {
        self.farm.validate(limits).map_err(|v| ScenarioError::Farm(FarmError::Invalid(v)))?;
        let invalid = |msg: String| Err(ScenarioError::Invalid(msg));
        let placements = self.placements();
        let mut ids = BTreeSet::new();
        let mut cells = BTreeMap::new();
        for p in &placements {
            let spec = self.farm.module(p.cell.module)?;
            if !spec.contains(p.cell.col, p.cell.row) {
                return Err(FarmError::Address { addr: p.cell, n_h: spec.n_h, n_v: spec.n_v }.into());
            }
            if !ids.insert(p.id.clone()) {
                return invalid(format!("carriage id {} is used twice", p.id));
            }
            if let Some(other) = cells.insert(p.cell, p.id.clone()) {
                return invalid(format!("carriages {other} and {} share cell {}", p.id, p.cell));
            }
            if !(p.tray_mass >= 0.0 && p.tray_mass <= spec.payload_max) {
                return invalid(format!(
                    "carriage {} tray mass {} kg outside 0..={} kg",
                    p.id, p.tray_mass, spec.payload_max
                ));
            }
        }
        if let Goal::MoveOne { carriage, to } = &self.goal {
            let Some(p) = placements.iter().find(|p| &p.id == carriage) else {
                return invalid(format!("goal names unknown carriage {carriage}"));
            };
            let spec = self.farm.module(to.module)?;
            if !spec.contains(to.col, to.row) {
                return Err(FarmError::Address { addr: *to, n_h: spec.n_h, n_v: spec.n_v }.into());
            }
            if to.module != p.cell.module {
                return invalid(format!("carriage {carriage} cannot leave module {}", p.cell.module));
            }
        }
        for (name, value) in [("t_h", &self.timing.t_h), ("t_v", &self.timing.t_v)] {
            if let Some(v) = value {
                if !v.0.is_positive() {
                    return invalid(format!("{name} must be positive, got {v}"));
                }
            }
        }
        for (name, value) in [("t_engage", &self.timing.t_engage), ("t_release", &self.timing.t_release)] {
            if let Some(v) = value {
                if v.0 < Q::zero() {
                    return invalid(format!("{name} must not be negative, got {v}"));
                }
            }
        }
        Ok(())
    }
}
