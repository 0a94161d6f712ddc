//! One module's physical state: a mover, an elevator and the carriages.
//!
//! The world is where the two state machines meet. It senses the elevator
//! for the mover, keeps the platform occupant in sync with the mover, and
//! moves carriages between cells, the mover and the station as engage and
//! release events complete.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Signed;

use super::elevator::{elevator_step, ElevatorCommand, ElevatorParams, ElevatorState, Occupant, Stop};
use super::mover::{mover_step, MoverCommand, MoverEnv, MoverMode, MoverParams, MoverState};
use super::{DeviceError, DeviceEvent, EventKind};
use crate::exact::{q_int, Q};
use crate::farm::{CarriageId, CellAddress, Location};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModuleWorld {
    pub module: usize,
    pub mover_id: String,
    pub elevator_id: String,
    pub mover_params: MoverParams,
    pub elevator_params: ElevatorParams,
    pub mover: MoverState,
    pub elevator: ElevatorState,
    /// Keyed by `(row, col)`.
    pub cells: BTreeMap<(u32, u32), CarriageId>,
    /// Carriages waiting at the station, front first.
    pub station: Vec<CarriageId>,
    fleet: BTreeSet<CarriageId>,
}

struct Sensed<'a> {
    cells: &'a BTreeMap<(u32, u32), CarriageId>,
    station: &'a [CarriageId],
    elevator: &'a ElevatorState,
}

impl MoverEnv for Sensed<'_> {
    fn carriage_at(&self, row: u32, col: u32) -> Option<CarriageId> {
        self.cells.get(&(row, col)).cloned()
    }

    fn dock_row(&self) -> Option<u32> {
        match self.elevator.resting_at() {
            Some(Stop::Row(r)) => Some(r),
            _ => None,
        }
    }

    fn at_station(&self) -> bool {
        self.elevator.resting_at() == Some(Stop::Exit)
    }

    fn station_carriage(&self) -> Option<CarriageId> {
        self.station.first().cloned()
    }

    fn arm_locked(&self) -> bool {
        self.elevator.lock_engaged
    }
}

/// Result of advancing one device inside the world.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldStep {
    pub used: Q,
    pub done: bool,
    pub events: Vec<DeviceEvent>,
}

impl ModuleWorld {
    /// Mover docked on the platform, platform at the station, no carriages.
    pub fn new(module: usize, mover_params: MoverParams, elevator_params: ElevatorParams) -> Self {
        let mover_id = format!("m{module:02}/mover");
        let elevator_id = format!("m{module:02}/elevator");
        let mover = MoverState::docked(&mover_params, 0);
        let mut elevator = ElevatorState::at(&elevator_params, Stop::Exit);
        elevator.occupant = Some(Occupant { mover: mover_id.clone(), carriage: None });
        ModuleWorld {
            module,
            mover_id,
            elevator_id,
            mover_params,
            elevator_params,
            mover,
            elevator,
            cells: BTreeMap::new(),
            station: Vec::new(),
            fleet: BTreeSet::new(),
        }
    }

    pub fn place(&mut self, row: u32, col: u32, id: impl Into<CarriageId>) -> Result<(), DeviceError> {
        let id = id.into();
        if col >= self.mover_params.n_h || row >= self.elevator_params.n_v {
            return Err(DeviceError::Bounds {
                target: format!("col {col} row {row}"),
                limit: format!("{}x{}", self.mover_params.n_h, self.elevator_params.n_v),
            });
        }
        if let Some(c) = self.cells.get(&(row, col)) {
            return Err(DeviceError::Occupied { col, row, carriage: c.clone() });
        }
        self.fleet.insert(id.clone());
        self.cells.insert((row, col), id);
        Ok(())
    }

    pub fn queue_at_station(&mut self, id: impl Into<CarriageId>) {
        let id = id.into();
        self.fleet.insert(id.clone());
        self.station.push(id);
    }

    pub fn carriage_count(&self) -> usize {
        self.fleet.len()
    }

    pub fn is_idle(&self) -> bool {
        self.mover.is_idle() && self.elevator.is_idle()
    }

    fn sensed(&self) -> Sensed<'_> {
        Sensed { cells: &self.cells, station: &self.station, elevator: &self.elevator }
    }

    pub fn step_mover(&mut self, dt: Q, command: &MoverCommand) -> Result<WorldStep, DeviceError> {
        let out = mover_step(&self.mover_params, &self.mover, dt, command, &self.sensed())?;
        for e in &out.events {
            let Some(id) = e.detail.get("carriage") else {
                continue;
            };
            match e.kind {
                EventKind::Engage => {
                    if self.mover.is_docked() {
                        self.station.retain(|c| c != id);
                    } else {
                        self.cells.retain(|_, c| c != id);
                    }
                }
                EventKind::Release => {
                    if out.state.is_docked() {
                        self.station.push(id.clone());
                    } else {
                        let col = self.mover_params.col_at(&out.state.position).expect("released at a cell");
                        self.cells.insert((out.state.row, col), id.clone());
                    }
                }
                _ => {}
            }
        }
        self.mover = out.state;
        self.elevator.occupant = self
            .mover
            .is_docked()
            .then(|| Occupant { mover: self.mover_id.clone(), carriage: self.mover.carrying.clone() });
        Ok(WorldStep { used: out.used, done: out.done, events: out.events })
    }

    pub fn step_elevator(&mut self, dt: Q, command: &ElevatorCommand) -> Result<WorldStep, DeviceError> {
        match command {
            ElevatorCommand::Board { .. } | ElevatorCommand::Alight => {
                return Err(DeviceError::InvalidState("platform occupancy is sensed, not commanded".into()))
            }
            ElevatorCommand::GotoRow { .. } if self.elevator.is_idle() && self.mover.busy => {
                let crossing = self.mover.is_docked()
                    || self.mover.target == Some(self.mover_params.dock_x())
                    || self.mover.position.is_negative();
                if crossing {
                    return Err(DeviceError::InvalidState("the mover is using the platform".into()));
                }
            }
            _ => {}
        }
        let out = elevator_step(&self.elevator_params, &self.elevator, dt, command)?;
        self.elevator = out.state;
        Ok(WorldStep { used: out.used, done: out.done, events: out.events })
    }

    pub fn locations(&self) -> BTreeMap<CarriageId, Location> {
        let mut out = BTreeMap::new();
        for ((row, col), id) in &self.cells {
            out.insert(id.clone(), Location::Cell(CellAddress::new(self.module, *col, *row)));
        }
        for id in &self.station {
            out.insert(id.clone(), Location::Station { module: self.module });
        }
        if let Some(id) = &self.mover.carrying {
            out.insert(id.clone(), Location::OnMover { mover: self.mover_id.clone() });
        }
        out
    }

    /// Every physical and safety invariant of the module; the first broken
    /// one is returned.
    pub fn check_invariants(&self) -> Result<(), String> {
        let e = &self.elevator;
        let m = &self.mover;
        if e.is_moving() && e.carries_load() && !e.lock_engaged {
            return Err("elevator moving with a loaded occupant and the lock disengaged".into());
        }
        if e.height < self.elevator_params.min_height() || e.height > self.elevator_params.max_height() {
            return Err(format!("elevator height {} outside its travel", e.height));
        }
        let band = (self.elevator_params.height_of(e.target) - e.height).abs() <= self.elevator_params.ir_band;
        if band != e.ir_triggered {
            return Err("IR reading disagrees with platform height".into());
        }
        if m.position < self.mover_params.dock_x() || m.position > self.mover_params.max_x() {
            return Err(format!("mover position {} outside the rail", m.position));
        }
        let loaded_mode = m.mode == MoverMode::Engaged || (m.mode == MoverMode::OnElevator && m.carrying.is_some());
        if m.carrying.is_some() != loaded_mode {
            return Err(format!("mover carrying {:?} in mode {:?}", m.carrying, m.mode));
        }
        if m.is_docked() {
            let expected = Occupant { mover: self.mover_id.clone(), carriage: m.carrying.clone() };
            if e.occupant.as_ref() != Some(&expected) {
                return Err("docked mover not registered as platform occupant".into());
            }
        } else if e.occupant.is_some() {
            return Err("platform occupant while the mover is on a shelf".into());
        }
        if m.is_idle() && !m.is_docked() && q_int(m.marker_count) * self.mover_params.pitch_h != m.position {
            return Err(format!("marker count {} disagrees with position {}", m.marker_count, m.position));
        }
        let mut seen = BTreeSet::new();
        let all = self.cells.values().chain(self.station.iter()).chain(m.carrying.iter());
        for id in all {
            if !seen.insert(id.clone()) {
                return Err(format!("carriage {id} is in two places"));
            }
        }
        if seen != self.fleet {
            return Err(format!("carriage count changed: {} of {}", seen.len(), self.fleet.len()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::farm::ModuleSpec;

    fn world() -> ModuleWorld {
        let spec = ModuleSpec::with_size(2, 2);
        ModuleWorld::new(0, MoverParams::from_module(&spec), ElevatorParams::from_module(&spec))
    }

    fn finish_mover(w: &mut ModuleWorld, cmd: MoverCommand) -> Q {
        let out = w.step_mover(q_int(1_000_000), &cmd).unwrap();
        assert!(out.done);
        w.check_invariants().unwrap();
        out.used
    }

    fn finish_elevator(w: &mut ModuleWorld, cmd: ElevatorCommand) -> Result<Q, DeviceError> {
        let out = w.step_elevator(q_int(1_000_000), &cmd)?;
        assert!(out.done);
        w.check_invariants().unwrap();
        Ok(out.used)
    }

    #[test]
    fn fetch_and_unload_one_carriage() {
        let mut w = world();
        w.place(1, 1, "c").unwrap();
        w.check_invariants().unwrap();
        finish_elevator(&mut w, ElevatorCommand::GotoRow { stop: Stop::Row(1) }).unwrap();
        assert_eq!(finish_mover(&mut w, MoverCommand::MoveTo { col: 1 }), q_int(25));
        assert_eq!(w.mover.mode, MoverMode::UnderCarriage);
        finish_mover(&mut w, MoverCommand::Engage);
        finish_mover(&mut w, MoverCommand::Dock);
        let err = finish_elevator(&mut w, ElevatorCommand::GotoRow { stop: Stop::Exit }).unwrap_err();
        assert!(matches!(err, DeviceError::Interlock(_)));
        finish_elevator(&mut w, ElevatorCommand::Lock).unwrap();
        finish_elevator(&mut w, ElevatorCommand::GotoRow { stop: Stop::Exit }).unwrap();
        assert!(matches!(w.step_mover(q_int(1), &MoverCommand::Release), Err(DeviceError::Interlock(_))));
        finish_elevator(&mut w, ElevatorCommand::Unlock).unwrap();
        finish_mover(&mut w, MoverCommand::Release);
        assert_eq!(w.station, vec!["c".to_string()]);
        assert_eq!(w.locations()["c"], Location::Station { module: 0 });
    }

    #[test]
    fn elevator_waits_for_mover_to_clear_platform() {
        let mut w = world();
        finish_elevator(&mut w, ElevatorCommand::GotoRow { stop: Stop::Row(0) }).unwrap();
        let half = w.step_mover(q_int(5), &MoverCommand::MoveTo { col: 0 }).unwrap();
        assert!(!half.done);
        assert!(w.step_elevator(q_int(1), &ElevatorCommand::GotoRow { stop: Stop::Row(1) }).is_err());
    }

    #[test]
    fn commanded_boarding_is_rejected() {
        let mut w = world();
        let cmd = ElevatorCommand::Board { mover: "x".into(), carriage: None };
        assert!(w.step_elevator(q_int(1), &cmd).is_err());
    }
}
