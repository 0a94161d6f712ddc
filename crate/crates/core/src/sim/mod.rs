//! Discrete-event simulation of one or more modules.
//!
//! [`kernel`] owns simulated time and a set of agents; [`scenario`] describes
//! a farm, its carriages and a goal; [`policy`] turns a goal into device
//! commands and runs them. The result of a run is a [`Trace`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::devices::EventKind;
use crate::exact::{as_text, format_q, q_to_f64, Q};
use crate::farm::{CarriageId, Location};

pub mod kernel;
pub mod policy;
pub mod scenario;

pub use kernel::{AgentFault, FaultCause, Kernel, KernelError, SimAgent, StepMode};
pub use policy::{plan_module, run_scenario, Action, ModuleAgent};
pub use scenario::{Goal, ModulesMode, Placement, Scenario, ScenarioError, ScenarioTiming};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimEvent {
    #[serde(with = "as_text")]
    pub time: Q,
    /// Device or carriage id.
    pub entity: String,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub detail: BTreeMap<String, String>,
}

impl SimEvent {
    pub fn new(time: Q, entity: impl Into<String>, kind: EventKind) -> Self {
        SimEvent { time, entity: entity.into(), kind, detail: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: impl std::fmt::Display) -> Self {
        self.detail.insert(key.to_string(), value.to_string());
        self
    }

    pub fn carriage(&self) -> Option<&str> {
        self.detail.get("carriage").map(String::as_str)
    }
}

/// Ordered record of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub farm_digest: String,
    pub modules: ModulesMode,
    pub events: Vec<SimEvent>,
    pub total_time: Q,
    /// Time each carriage reached its destination.
    pub completions: BTreeMap<CarriageId, Q>,
    pub final_locations: BTreeMap<CarriageId, Location>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Event {
        #[serde(flatten)]
        event: SimEvent,
        time_s: f64,
    },
    Summary {
        farm_digest: String,
        modules: ModulesMode,
        #[serde(with = "as_text")]
        total_time: Q,
        total_time_s: f64,
        completions: BTreeMap<CarriageId, String>,
        final_locations: BTreeMap<CarriageId, Location>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("trace line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("trace has no summary line")]
    MissingSummary,
}

impl Trace {
    pub fn total_time_s(&self) -> f64 {
        q_to_f64(&self.total_time)
    }

    /// One JSON object per line: every event, then a summary record.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            let line = Line::Event { event: e.clone(), time_s: q_to_f64(&e.time) };
            out.push_str(&serde_json::to_string(&line).expect("trace line serialises"));
            out.push('\n');
        }
        let summary = Line::Summary {
            farm_digest: self.farm_digest.clone(),
            modules: self.modules,
            total_time: self.total_time,
            total_time_s: self.total_time_s(),
            completions: self.completions.iter().map(|(k, v)| (k.clone(), format_q(v))).collect(),
            final_locations: self.final_locations.clone(),
        };
        out.push_str(&serde_json::to_string(&summary).expect("trace line serialises"));
        out.push('\n');
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Trace, TraceError> {
        let mut events = Vec::new();
        let mut summary = None;
        for (i, raw) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let line: Line =
                serde_json::from_str(raw).map_err(|e| TraceError::Parse { line: i + 1, reason: e.to_string() })?;
            match line {
                Line::Event { event, .. } => events.push(event),
                Line::Summary { farm_digest, modules, total_time, completions, final_locations, .. } => {
                    let mut parsed = BTreeMap::new();
                    for (k, v) in completions {
                        let q = crate::exact::parse_q(&v)
                            .map_err(|e| TraceError::Parse { line: i + 1, reason: e.to_string() })?;
                        parsed.insert(k, q);
                    }
                    summary = Some((farm_digest, modules, total_time, parsed, final_locations));
                }
            }
        }
        let (farm_digest, modules, total_time, completions, final_locations) =
            summary.ok_or(TraceError::MissingSummary)?;
        Ok(Trace { farm_digest, modules, events, total_time, completions, final_locations })
    }

    /// SHA-256 of the JSONL form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }
}
