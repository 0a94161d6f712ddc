//! Simulated mover and elevator firmware.
//!
//! Both devices are pure step functions over exact state: `step(state, dt,
//! command, env)` returns the successor state, the events emitted during the
//! step and how much of `dt` the command consumed. A step that finishes its
//! command early reports the exact completion offset, which is what lets the
//! simulator place arrivals at analytic times.
//!
//! Frames: mover positions are measured along the shelf with cell `c` at
//! `c * pitch_h`; the elevator platform (dock) sits one pitch before cell 0.
//! Elevator heights put row `r` at `r * pitch_v`; the load/unload station is
//! one pitch below row 0.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::exact::Q;
use crate::farm::CarriageId;

pub mod commands;
pub mod elevator;
pub mod ir;
pub mod mover;
pub mod safety;
pub mod world;

pub use elevator::{
    elevator_step, ElevatorCommand, ElevatorMode, ElevatorParams, ElevatorState, ElevatorStep, Occupant, Stop,
};
pub use ir::{calibrate_ir, IrCalibration, IrError};
pub use mover::{mover_step, MoverCommand, MoverEnv, MoverMode, MoverParams, MoverState, MoverStep};
pub use world::ModuleWorld;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Arrive,
    Engage,
    Release,
    Lock,
    Unlock,
    PhaseChange,
    Error,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Arrive => "arrive",
            EventKind::Engage => "engage",
            EventKind::Release => "release",
            EventKind::Lock => "lock",
            EventKind::Unlock => "unlock",
            EventKind::PhaseChange => "phase_change",
            EventKind::Error => "error",
        }
    }
}

/// Something a device did, `offset` seconds after the start of its step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceEvent {
    pub offset: Q,
    pub kind: EventKind,
    pub detail: BTreeMap<String, String>,
}

impl DeviceEvent {
    pub fn new(offset: Q, kind: EventKind) -> Self {
        DeviceEvent { offset, kind, detail: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: impl fmt::Display) -> Self {
        self.detail.insert(key.to_string(), value.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DeviceError {
    #[error("target {target} is beyond the end stop (limit {limit})")]
    Bounds { target: String, limit: String },
    #[error("no carriage")]
    NoCarriage,
    #[error("cell col {col} row {row} is occupied by {carriage}")]
    Occupied { col: u32, row: u32, carriage: CarriageId },
    #[error("path blocked by carriage {carriage}")]
    Blocked { carriage: CarriageId },
    #[error("elevator is not aligned with row {row}")]
    Misaligned { row: u32 },
    #[error("interlock: {0}")]
    Interlock(String),
    #[error("command not allowed while {0}")]
    InvalidState(String),
    #[error("step length must be positive")]
    NonPositiveStep,
}
