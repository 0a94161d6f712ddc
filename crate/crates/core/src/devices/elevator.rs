use std::fmt;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use super::{DeviceError, DeviceEvent, EventKind};
use crate::exact::{format_q, q_from_f64, q_int, Q};
use crate::farm::{CarriageId, ModuleSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElevatorMode {
    AtRow,
    Moving,
    Aligning,
}

/// Where the platform can stop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stop {
    /// Load/unload station below the bottom shelf.
    Exit,
    Row(u32),
}

impl fmt::Display for Stop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stop::Exit => f.write_str("exit"),
            Stop::Row(r) => write!(f, "row {r}"),
        }
    }
}

impl Serialize for Stop {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Stop::Exit => s.serialize_str("exit"),
            Stop::Row(r) => s.serialize_u32(*r),
        }
    }
}

impl<'de> Deserialize<'de> for Stop {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::String(s) if s == "exit" => Ok(Stop::Exit),
            serde_json::Value::Number(n) => n
                .as_u64()
                .and_then(|n| u32::try_from(n).ok())
                .map(Stop::Row)
                .ok_or_else(|| serde::de::Error::custom("row must be a non-negative integer")),
            other => Err(serde::de::Error::custom(format!("expected row number or \"exit\", got {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ElevatorParams {
    pub pitch_v: Q,
    /// mm/s
    pub speed: Q,
    pub n_v: u32,
    /// Half-width of the IR detection band around a stop, mm.
    pub ir_band: Q,
}

impl ElevatorParams {
    pub fn from_module(spec: &ModuleSpec) -> Self {
        ElevatorParams {
            pitch_v: q_from_f64(spec.pitch_v),
            speed: q_from_f64(spec.lift_speed),
            n_v: spec.n_v,
            ir_band: q_int(3),
        }
    }

    pub fn with_unit_time(mut self, t_v: Q) -> Self {
        self.speed = self.pitch_v / t_v;
        self
    }

    pub fn height_of(&self, stop: Stop) -> Q {
        match stop {
            Stop::Exit => -self.pitch_v,
            Stop::Row(r) => q_int(r as i64) * self.pitch_v,
        }
    }

    pub fn min_height(&self) -> Q {
        self.height_of(Stop::Exit)
    }

    pub fn max_height(&self) -> Q {
        self.height_of(Stop::Row(self.n_v.saturating_sub(1)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Occupant {
    pub mover: String,
    pub carriage: Option<CarriageId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ElevatorState {
    pub mode: ElevatorMode,
    pub height: Q,
    /// Current stop when at a row, destination otherwise.
    pub target: Stop,
    pub lock_engaged: bool,
    pub ir_triggered: bool,
    pub occupant: Option<Occupant>,
}

impl ElevatorState {
    pub fn at(params: &ElevatorParams, stop: Stop) -> Self {
        ElevatorState {
            mode: ElevatorMode::AtRow,
            height: params.height_of(stop),
            target: stop,
            lock_engaged: false,
            ir_triggered: true,
            occupant: None,
        }
    }

    pub fn is_idle(&self) -> bool {
        self.mode == ElevatorMode::AtRow
    }

    pub fn is_moving(&self) -> bool {
        self.mode != ElevatorMode::AtRow
    }

    pub fn carries_load(&self) -> bool {
        self.occupant.as_ref().is_some_and(|o| o.carriage.is_some())
    }

    /// The stop the platform is resting at, if any.
    pub fn resting_at(&self) -> Option<Stop> {
        self.is_idle().then_some(self.target)
    }

    pub fn height_mm(&self) -> f64 {
        crate::exact::q_to_f64(&self.height)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ElevatorCommand {
    GotoRow { stop: Stop },
    Lock,
    Unlock,
    Board { mover: String, carriage: Option<CarriageId> },
    Alight,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElevatorStep {
    pub state: ElevatorState,
    pub events: Vec<DeviceEvent>,
    pub used: Q,
    pub done: bool,
}

pub fn elevator_validate(
    params: &ElevatorParams,
    state: &ElevatorState,
    command: &ElevatorCommand,
) -> Result<(), DeviceError> {
    let at_row = || {
        if state.mode == ElevatorMode::AtRow {
            Ok(())
        } else {
            Err(DeviceError::InvalidState("the platform is moving".into()))
        }
    };
    match command {
        ElevatorCommand::GotoRow { stop } => {
            if let Stop::Row(r) = stop {
                if *r >= params.n_v {
                    return Err(DeviceError::Bounds {
                        target: format!("row {r}"),
                        limit: format!("row {}", params.n_v as i64 - 1),
                    });
                }
            }
            if state.carries_load() && !state.lock_engaged {
                return Err(DeviceError::Interlock("loaded occupant with the lock disengaged".into()));
            }
            Ok(())
        }
        ElevatorCommand::Lock => {
            at_row()?;
            if state.occupant.is_none() {
                return Err(DeviceError::InvalidState("no mover on the platform to lock".into()));
            }
            Ok(())
        }
        ElevatorCommand::Unlock => at_row(),
        ElevatorCommand::Board { .. } => {
            at_row()?;
            if state.occupant.is_some() {
                return Err(DeviceError::InvalidState("the platform is occupied".into()));
            }
            Ok(())
        }
        ElevatorCommand::Alight => {
            at_row()?;
            if state.lock_engaged {
                return Err(DeviceError::Interlock("occupant is locked on".into()));
            }
            Ok(())
        }
    }
}

/// Advances the elevator by up to `dt` seconds on `command`.
pub fn elevator_step(
    params: &ElevatorParams,
    state: &ElevatorState,
    dt: Q,
    command: &ElevatorCommand,
) -> Result<ElevatorStep, DeviceError> {
    if !dt.is_positive() {
        return Err(DeviceError::NonPositiveStep);
    }
    let mut s = state.clone();
    let mut events = Vec::new();
    let starting = s.mode == ElevatorMode::AtRow;
    if starting || !matches!(command, ElevatorCommand::GotoRow { .. }) {
        elevator_validate(params, &s, command)?;
    }
    let (used, done) = match command {
        ElevatorCommand::GotoRow { stop } => {
            if starting {
                s.target = *stop;
            }
            let goal = params.height_of(s.target);
            let remaining = (goal - s.height).abs();
            let reach = params.speed * dt;
            let (used, done) = if reach >= remaining {
                s.height = goal;
                (remaining / params.speed, true)
            } else {
                if goal > s.height {
                    s.height += reach;
                } else {
                    s.height -= reach;
                }
                (dt, false)
            };
            s.ir_triggered = (goal - s.height).abs() <= params.ir_band;
            if done {
                s.mode = ElevatorMode::AtRow;
                events.push(
                    DeviceEvent::new(used, EventKind::Arrive)
                        .with("at", s.target)
                        .with("height_mm", format_q(&s.height)),
                );
            } else {
                s.mode = if s.ir_triggered { ElevatorMode::Aligning } else { ElevatorMode::Moving };
            }
            (used, done)
        }
        ElevatorCommand::Lock => {
            s.lock_engaged = true;
            events.push(DeviceEvent::new(Q::zero(), EventKind::Lock));
            (Q::zero(), true)
        }
        ElevatorCommand::Unlock => {
            s.lock_engaged = false;
            events.push(DeviceEvent::new(Q::zero(), EventKind::Unlock));
            (Q::zero(), true)
        }
        ElevatorCommand::Board { mover, carriage } => {
            s.occupant = Some(Occupant { mover: mover.clone(), carriage: carriage.clone() });
            (Q::zero(), true)
        }
        ElevatorCommand::Alight => {
            s.occupant = None;
            (Q::zero(), true)
        }
    };
    Ok(ElevatorStep { state: s, events, used, done })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ElevatorParams {
        ElevatorParams::from_module(&ModuleSpec::with_size(1, 2))
    }

    #[test]
    fn one_row_takes_five_thousand_over_333_seconds() {
        let p = params();
        let s = ElevatorState::at(&p, Stop::Row(0));
        let out = elevator_step(&p, &s, q_int(100), &ElevatorCommand::GotoRow { stop: Stop::Row(1) }).unwrap();
        assert!(out.done);
        assert_eq!(out.used, Q::new(5000, 333));
        assert_eq!(out.state.height, q_int(500));
        assert!(out.state.ir_triggered);
        assert_eq!(out.state.mode, ElevatorMode::AtRow);
    }

    #[test]
    fn loaded_occupant_without_lock_does_not_move() {
        let p = params();
        let mut s = ElevatorState::at(&p, Stop::Row(0));
        s.occupant = Some(Occupant { mover: "m".into(), carriage: Some("c".into()) });
        let err = elevator_step(&p, &s, q_int(1), &ElevatorCommand::GotoRow { stop: Stop::Row(1) }).unwrap_err();
        assert!(matches!(err, DeviceError::Interlock(_)));
        s.lock_engaged = true;
        let out = elevator_step(&p, &s, q_int(1), &ElevatorCommand::GotoRow { stop: Stop::Row(1) }).unwrap();
        assert!(!out.done);
        assert_eq!(out.state.mode, ElevatorMode::Moving);
    }

    #[test]
    fn same_row_completes_immediately() {
        let p = params();
        let s = ElevatorState::at(&p, Stop::Row(1));
        let out = elevator_step(&p, &s, q_int(1), &ElevatorCommand::GotoRow { stop: Stop::Row(1) }).unwrap();
        assert!(out.done);
        assert_eq!(out.used, Q::zero());
    }

    #[test]
    fn entering_the_ir_band_switches_to_aligning() {
        let p = params();
        let s = ElevatorState::at(&p, Stop::Row(0));
        // 497 mm in: 3 mm short of the target.
        let dt = Q::from_integer(497) / p.speed;
        let out = elevator_step(&p, &s, dt, &ElevatorCommand::GotoRow { stop: Stop::Row(1) }).unwrap();
        assert_eq!(out.state.mode, ElevatorMode::Aligning);
        assert!(out.state.ir_triggered);
        let dt = Q::from_integer(490) / p.speed;
        let out = elevator_step(&p, &s, dt, &ElevatorCommand::GotoRow { stop: Stop::Row(1) }).unwrap();
        assert_eq!(out.state.mode, ElevatorMode::Moving);
        assert!(!out.state.ir_triggered);
    }

    #[test]
    fn lock_only_at_rest_with_occupant() {
        let p = params();
        let s = ElevatorState::at(&p, Stop::Row(0));
        assert!(elevator_step(&p, &s, q_int(1), &ElevatorCommand::Lock).is_err());
        let mut moving = s.clone();
        moving.occupant = Some(Occupant { mover: "m".into(), carriage: None });
        moving.mode = ElevatorMode::Moving;
        moving.target = Stop::Row(1);
        moving.lock_engaged = true;
        assert!(matches!(
            elevator_step(&p, &moving, q_int(1), &ElevatorCommand::Unlock),
            Err(DeviceError::InvalidState(_))
        ));
    }

    #[test]
    fn bounds_and_station() {
        let p = params();
        let s = ElevatorState::at(&p, Stop::Row(0));
        assert!(matches!(
            elevator_step(&p, &s, q_int(1), &ElevatorCommand::GotoRow { stop: Stop::Row(2) }),
            Err(DeviceError::Bounds { .. })
        ));
        let out = elevator_step(&p, &s, q_int(100), &ElevatorCommand::GotoRow { stop: Stop::Exit }).unwrap();
        assert_eq!(out.state.height, q_int(-500));
    }

    #[test]
    fn stop_serde() {
        assert_eq!(serde_json::to_string(&Stop::Exit).unwrap(), "\"exit\"");
        assert_eq!(serde_json::from_str::<Stop>("3").unwrap(), Stop::Row(3));
        assert!(serde_json::from_str::<Stop>("\"top\"").is_err());
    }
}
