use num_integer::Integer;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use super::{DeviceError, DeviceEvent, EventKind};
use crate::exact::{format_q, q_from_f64, q_int, Q};
use crate::farm::{CarriageId, ModuleSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoverMode {
    Parked,
    Transit,
    UnderCarriage,
    Engaged,
    OnElevator,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MoverParams {
    pub pitch_h: Q,
    /// mm/s
    pub speed: Q,
    pub n_h: u32,
    /// Arm latch time, s.
    pub engage_time: Q,
    pub release_time: Q,
}

impl MoverParams {
    pub fn from_module(spec: &ModuleSpec) -> Self {
        MoverParams {
            pitch_h: q_from_f64(spec.pitch_h),
            speed: q_from_f64(spec.mover_speed),
            n_h: spec.n_h,
            engage_time: q_int(2),
            release_time: q_int(2),
        }
    }

    /// Rescales the speed so one pitch takes exactly `t_h` seconds.
    pub fn with_unit_time(mut self, t_h: Q) -> Self {
        self.speed = self.pitch_h / t_h;
        self
    }

    pub fn cell_x(&self, col: u32) -> Q {
        q_int(col as i64) * self.pitch_h
    }

    pub fn dock_x(&self) -> Q {
        -self.pitch_h
    }

    pub fn max_x(&self) -> Q {
        self.cell_x(self.n_h.saturating_sub(1))
    }

    /// Column whose centre is exactly at `x`, if any.
    pub fn col_at(&self, x: &Q) -> Option<u32> {
        let k = x / self.pitch_h;
        (k.is_integer() && !k.is_negative() && k.to_integer() < self.n_h as i128).then(|| k.to_integer() as u32)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MoverState {
    pub mode: MoverMode,
    /// mm along the shelf; the dock is at `-pitch_h`.
    pub position: Q,
    pub row: u32,
    pub carrying: Option<CarriageId>,
    /// Line-follow marker ticks, one per cell centre; the dock reads -1.
    pub marker_count: i64,
    pub busy: bool,
    pub target: Option<Q>,
    pub latch_elapsed: Q,
    pub latching: Option<CarriageId>,
}

impl MoverState {
    pub fn docked(params: &MoverParams, row: u32) -> Self {
        MoverState {
            mode: MoverMode::OnElevator,
            position: params.dock_x(),
            row,
            carrying: None,
            marker_count: -1,
            busy: false,
            target: None,
            latch_elapsed: Q::zero(),
            latching: None,
        }
    }

    pub fn parked_at(params: &MoverParams, col: u32, row: u32) -> Self {
        MoverState {
            mode: MoverMode::Parked,
            position: params.cell_x(col),
            marker_count: col as i64,
            ..Self::docked(params, row)
        }
    }

    pub fn is_docked(&self) -> bool {
        self.mode == MoverMode::OnElevator
    }

    pub fn is_idle(&self) -> bool {
        !self.busy
    }

    pub fn position_mm(&self) -> f64 {
        crate::exact::q_to_f64(&self.position)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum MoverCommand {
    MoveTo { col: u32 },
    Dock,
    Engage,
    Release,
}

/// What the mover can sense about its surroundings.
pub trait MoverEnv {
    fn carriage_at(&self, row: u32, col: u32) -> Option<CarriageId>;
    /// Shelf row the elevator platform is aligned with, if any.
    fn dock_row(&self) -> Option<u32>;
    /// The platform is at the load/unload station.
    fn at_station(&self) -> bool;
    /// Carriage waiting at the station for pick-up.
    fn station_carriage(&self) -> Option<CarriageId>;
    /// The elevator lock holds the mover arm.
    fn arm_locked(&self) -> bool;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MoverStep {
    pub state: MoverState,
    pub events: Vec<DeviceEvent>,
    /// Portion of `dt` the command consumed.
    pub used: Q,
    pub done: bool,
}

fn floor_div(x: &Q, pitch: &Q) -> i64 {
    let k = x / pitch;
    k.numer().div_floor(k.denom()) as i64
}

fn first_carriage_between(env: &dyn MoverEnv, row: u32, cols: impl Iterator<Item = u32>) -> Option<CarriageId> {
    cols.filter_map(|c| env.carriage_at(row, c)).next()
}

/// Checks that `command` may start from `state`.
pub fn mover_validate(
    params: &MoverParams,
    state: &MoverState,
    command: &MoverCommand,
    env: &dyn MoverEnv,
) -> Result<(), DeviceError> {
    let here = params.col_at(&state.position);
    match command {
        MoverCommand::MoveTo { col } => {
            if *col >= params.n_h {
                return Err(DeviceError::Bounds {
                    target: format!("col {col}"),
                    limit: format!("col {}", params.n_h as i64 - 1),
                });
            }
            let row = if state.is_docked() {
                if env.arm_locked() {
                    return Err(DeviceError::Interlock("arm is locked to the elevator".into()));
                }
                env.dock_row().ok_or(DeviceError::Misaligned { row: state.row })?
            } else {
                state.row
            };
            if state.carrying.is_some() {
                if let Some(c) = env.carriage_at(row, *col) {
                    if here != Some(*col) || state.is_docked() {
                        return Err(DeviceError::Occupied { col: *col, row, carriage: c });
                    }
                }
                let from = if state.is_docked() { None } else { here };
                let between: Box<dyn Iterator<Item = u32>> = match from {
                    None => Box::new(0..*col),
                    Some(h) if h < *col => Box::new(h + 1..*col),
                    Some(h) => Box::new(*col + 1..h),
                };
                if let Some(c) = first_carriage_between(env, row, between) {
                    return Err(DeviceError::Blocked { carriage: c });
                }
            }
            Ok(())
        }
        MoverCommand::Dock => {
            if state.is_docked() {
                return Ok(());
            }
            if env.dock_row() != Some(state.row) {
                return Err(DeviceError::Misaligned { row: state.row });
            }
            if state.carrying.is_some() {
                let upto = here.unwrap_or(0);
                if let Some(c) = first_carriage_between(env, state.row, 0..upto) {
                    return Err(DeviceError::Blocked { carriage: c });
                }
            }
            Ok(())
        }
        MoverCommand::Engage => {
            if state.carrying.is_some() {
                return Err(DeviceError::InvalidState("already carrying".into()));
            }
            let found = if state.is_docked() {
                if env.at_station() {
                    env.station_carriage()
                } else {
                    None
                }
            } else {
                here.and_then(|c| env.carriage_at(state.row, c))
            };
            found.map(|_| ()).ok_or(DeviceError::NoCarriage)
        }
        MoverCommand::Release => {
            if state.carrying.is_none() {
                return Err(DeviceError::InvalidState("not carrying".into()));
            }
            if state.is_docked() {
                if !env.at_station() {
                    return Err(DeviceError::InvalidState("on the elevator away from the station".into()));
                }
                if env.arm_locked() {
                    return Err(DeviceError::Interlock("arm is locked to the elevator".into()));
                }
                return Ok(());
            }
            let col = here.ok_or_else(|| DeviceError::InvalidState("between cells".into()))?;
            match env.carriage_at(state.row, col) {
                Some(c) => Err(DeviceError::Occupied { col, row: state.row, carriage: c }),
                None => Ok(()),
            }
        }
    }
}

/// Advances the mover by up to `dt` seconds on `command`.
///
/// An idle mover validates and starts the command; a busy one continues it.
/// Validation failures leave the state untouched.
pub fn mover_step(
    params: &MoverParams,
    state: &MoverState,
    dt: Q,
    command: &MoverCommand,
    env: &dyn MoverEnv,
) -> Result<MoverStep, DeviceError> {
    if !dt.is_positive() {
        return Err(DeviceError::NonPositiveStep);
    }
    let mut s = state.clone();
    if !s.busy {
        mover_validate(params, &s, command, env)?;
        s.busy = true;
        match command {
            MoverCommand::MoveTo { col } => {
                if s.is_docked() {
                    s.row = env.dock_row().expect("validated");
                }
                s.target = Some(params.cell_x(*col));
            }
            MoverCommand::Dock => s.target = Some(params.dock_x()),
            MoverCommand::Engage => {
                s.latching = if s.is_docked() {
                    env.station_carriage()
                } else {
                    params.col_at(&s.position).and_then(|c| env.carriage_at(s.row, c))
                };
                s.latch_elapsed = Q::zero();
            }
            MoverCommand::Release => s.latch_elapsed = Q::zero(),
        }
    }
    let mut events = Vec::new();
    let (used, done) = match command {
        MoverCommand::MoveTo { .. } | MoverCommand::Dock => {
            let target = s.target.expect("motion has a target");
            let remaining = (target - s.position).abs();
            let reach = params.speed * dt;
            let old = s.position;
            let (used, done) = if reach >= remaining {
                s.position = target;
                (remaining / params.speed, true)
            } else {
                if target > s.position {
                    s.position += reach;
                } else {
                    s.position -= reach;
                }
                (dt, false)
            };
            s.marker_count += floor_div(&s.position, &params.pitch_h) - floor_div(&old, &params.pitch_h);
            if done {
                s.target = None;
                s.busy = false;
                s.mode = if s.position == params.dock_x() {
                    MoverMode::OnElevator
                } else if s.carrying.is_some() {
                    MoverMode::Engaged
                } else if params.col_at(&s.position).and_then(|c| env.carriage_at(s.row, c)).is_some() {
                    MoverMode::UnderCarriage
                } else {
                    MoverMode::Parked
                };
                let at = match params.col_at(&s.position) {
                    Some(c) => format!("col {c}"),
                    None => "dock".to_string(),
                };
                events.push(
                    DeviceEvent::new(used, EventKind::Arrive)
                        .with("at", at)
                        .with("row", s.row)
                        .with("position_mm", format_q(&s.position)),
                );
            } else {
                s.mode = if s.carrying.is_some() { MoverMode::Engaged } else { MoverMode::Transit };
            }
            (used, done)
        }
        MoverCommand::Engage | MoverCommand::Release => {
            let total = if matches!(command, MoverCommand::Engage) { params.engage_time } else { params.release_time };
            let remaining = total - s.latch_elapsed;
            if dt >= remaining {
                s.latch_elapsed = Q::zero();
                s.busy = false;
                if matches!(command, MoverCommand::Engage) {
                    let id = s.latching.take().expect("engage has a carriage");
                    events.push(DeviceEvent::new(remaining, EventKind::Engage).with("carriage", &id));
                    s.carrying = Some(id);
                    if !s.is_docked() {
                        s.mode = MoverMode::Engaged;
                    }
                } else {
                    let id = s.carrying.take().expect("release has a carriage");
                    let place = if s.is_docked() { "station".to_string() } else { "cell".to_string() };
                    events.push(
                        DeviceEvent::new(remaining, EventKind::Release).with("carriage", &id).with("into", place),
                    );
                    if !s.is_docked() {
                        s.mode = MoverMode::UnderCarriage;
                    }
                }
                (remaining, true)
            } else {
                s.latch_elapsed += dt;
                (dt, false)
            }
        }
    };
    Ok(MoverStep { state: s, events, used, done })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[derive(Default)]
    struct Env {
        cells: BTreeMap<(u32, u32), CarriageId>,
        dock_row: Option<u32>,
        station: Option<CarriageId>,
        at_station: bool,
        locked: bool,
    }

    impl MoverEnv for Env {
        fn carriage_at(&self, row: u32, col: u32) -> Option<CarriageId> {
            self.cells.get(&(row, col)).cloned()
        }
        fn dock_row(&self) -> Option<u32> {
            self.dock_row
        }
        fn at_station(&self) -> bool {
            self.at_station
        }
        fn station_carriage(&self) -> Option<CarriageId> {
            self.station.clone()
        }
        fn arm_locked(&self) -> bool {
            self.locked
        }
    }

    fn params(n_h: u32) -> MoverParams {
        MoverParams::from_module(&ModuleSpec::with_size(n_h, 2))
    }

    #[test]
    fn one_cell_takes_twelve_and_a_half_seconds() {
        let p = params(4);
        let s = MoverState::parked_at(&p, 0, 0);
        let out = mover_step(&p, &s, Q::new(25, 2), &MoverCommand::MoveTo { col: 1 }, &Env::default()).unwrap();
        assert!(out.done);
        assert_eq!(out.used, Q::new(25, 2));
        assert_eq!(out.state.position, q_int(1250));
        assert_eq!(out.state.marker_count, 1);
        assert_eq!(out.state.mode, MoverMode::Parked);
        assert_eq!(out.events.len(), 1);
        assert_eq!(out.events[0].offset, Q::new(25, 2));
    }

    #[test]
    fn partial_step_keeps_moving() {
        let p = params(4);
        let s = MoverState::parked_at(&p, 0, 0);
        let cmd = MoverCommand::MoveTo { col: 2 };
        let a = mover_step(&p, &s, q_int(10), &cmd, &Env::default()).unwrap();
        assert!(!a.done);
        assert_eq!(a.state.position, q_int(1000));
        assert_eq!(a.state.mode, MoverMode::Transit);
        assert_eq!(a.state.marker_count, 0);
        let b = mover_step(&p, &a.state, q_int(100), &cmd, &Env::default()).unwrap();
        assert!(b.done);
        assert_eq!(b.used, q_int(15));
        assert_eq!(b.state.marker_count, 2);
    }

    #[test]
    fn engage_without_carriage_fails() {
        let p = params(2);
        let s = MoverState::parked_at(&p, 1, 0);
        let err = mover_step(&p, &s, q_int(1), &MoverCommand::Engage, &Env::default()).unwrap_err();
        assert_eq!(err, DeviceError::NoCarriage);
        assert_eq!(err.to_string(), "no carriage");
    }

    #[test]
    fn beyond_last_cell_hits_end_stop() {
        let p = params(3);
        let s = MoverState::parked_at(&p, 0, 0);
        let err = mover_step(&p, &s, q_int(1), &MoverCommand::MoveTo { col: 3 }, &Env::default()).unwrap_err();
        assert!(matches!(err, DeviceError::Bounds { .. }));
    }

    #[test]
    fn leaving_a_misaligned_elevator_is_refused() {
        let p = params(2);
        let s = MoverState::docked(&p, 0);
        let err = mover_step(&p, &s, q_int(1), &MoverCommand::MoveTo { col: 0 }, &Env::default()).unwrap_err();
        assert_eq!(err, DeviceError::Misaligned { row: 0 });
        let env = Env { dock_row: Some(1), ..Default::default() };
        let out = mover_step(&p, &s, q_int(100), &MoverCommand::MoveTo { col: 1 }, &env).unwrap();
        assert_eq!(out.used, q_int(25));
        assert_eq!(out.state.row, 1);
    }

    #[test]
    fn engage_then_release_cycle() {
        let p = params(2);
        let mut env = Env::default();
        env.cells.insert((0, 1), "c1".into());
        let s = MoverState::parked_at(&p, 1, 0);
        let e = mover_step(&p, &s, q_int(5), &MoverCommand::Engage, &env).unwrap();
        assert!(e.done);
        assert_eq!(e.used, q_int(2));
        assert_eq!(e.state.mode, MoverMode::Engaged);
        assert_eq!(e.state.carrying.as_deref(), Some("c1"));
        env.cells.clear();
        let r = mover_step(&p, &e.state, q_int(1), &MoverCommand::Release, &env).unwrap();
        assert!(!r.done);
        let r = mover_step(&p, &r.state, q_int(1), &MoverCommand::Release, &env).unwrap();
        assert!(r.done);
        assert_eq!(r.state.carrying, None);
        assert_eq!(r.state.mode, MoverMode::UnderCarriage);
    }

    #[test]
    fn loaded_mover_cannot_pass_a_carriage() {
        let p = params(3);
        let mut env = Env { dock_row: Some(0), ..Default::default() };
        env.cells.insert((0, 0), "front".into());
        let mut s = MoverState::parked_at(&p, 2, 0);
        s.carrying = Some("back".into());
        s.mode = MoverMode::Engaged;
        let err = mover_step(&p, &s, q_int(1), &MoverCommand::Dock, &env).unwrap_err();
        assert_eq!(err, DeviceError::Blocked { carriage: "front".into() });
        // Unloaded it drives underneath.
        let s = MoverState::parked_at(&p, 2, 0);
        assert!(mover_step(&p, &s, q_int(1), &MoverCommand::Dock, &env).is_ok());
    }

    #[test]
    fn release_on_platform_needs_station_and_unlocked_arm() {
        let p = params(1);
        let mut s = MoverState::docked(&p, 0);
        s.carrying = Some("c".into());
        let away = Env::default();
        assert!(matches!(
            mover_step(&p, &s, q_int(1), &MoverCommand::Release, &away),
            Err(DeviceError::InvalidState(_))
        ));
        let locked = Env { at_station: true, locked: true, ..Default::default() };
        assert!(matches!(
            mover_step(&p, &s, q_int(1), &MoverCommand::Release, &locked),
            Err(DeviceError::Interlock(_))
        ));
        let ok = Env { at_station: true, ..Default::default() };
        let out = mover_step(&p, &s, q_int(5), &MoverCommand::Release, &ok).unwrap();
        assert!(out.done && out.state.carrying.is_none() && out.state.is_docked());
    }

    #[test]
    fn zero_step_rejected() {
        let p = params(1);
        let s = MoverState::docked(&p, 0);
        assert_eq!(
            mover_step(&p, &s, Q::zero(), &MoverCommand::Dock, &Env::default()),
            Err(DeviceError::NonPositiveStep)
        );
    }
}
