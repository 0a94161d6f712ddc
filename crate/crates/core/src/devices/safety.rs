//! Exhaustive exploration of the mover × elevator product machine.
//!
//! Time is discretised into fixed ticks. From every reachable configuration
//! the explorer tries each command on each idle device and one tick of
//! simulated time, and checks the module invariants on every state it
//! reaches. Commands a device rejects are simply not taken.

use std::collections::{HashSet, VecDeque};

use super::elevator::{elevator_validate, ElevatorCommand, ElevatorParams, Stop};
use super::mover::{MoverCommand, MoverParams};
use super::world::ModuleWorld;
use crate::exact::Q;
use crate::farm::ModuleSpec;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Node {
    world: ModuleWorld,
    mover_cmd: Option<MoverCommand>,
    elevator_cmd: Option<ElevatorCommand>,
}

#[derive(Debug, Clone, Default)]
pub struct ExplorationReport {
    pub states: usize,
    pub transitions: usize,
    /// States where the elevator moves a loaded occupant without the lock.
    pub interlock_violations: usize,
    /// Any invariant failure, with the state that exhibited it.
    pub violations: Vec<String>,
    /// Reached states in which a carriage was engaged on the platform while
    /// the elevator moved; shows the loaded-motion path was exercised.
    pub loaded_motion_states: usize,
}

impl ExplorationReport {
    pub fn is_safe(&self) -> bool {
        self.interlock_violations == 0 && self.violations.is_empty()
    }
}

fn mover_commands(n_h: u32) -> Vec<MoverCommand> {
    let mut v: Vec<_> = (0..n_h).map(|col| MoverCommand::MoveTo { col }).collect();
    v.extend([MoverCommand::Dock, MoverCommand::Engage, MoverCommand::Release]);
    v
}

fn elevator_commands(n_v: u32) -> Vec<ElevatorCommand> {
    let mut v = vec![ElevatorCommand::GotoRow { stop: Stop::Exit }];
    v.extend((0..n_v).map(|r| ElevatorCommand::GotoRow { stop: Stop::Row(r) }));
    v.extend([ElevatorCommand::Lock, ElevatorCommand::Unlock]);
    v
}

/// Every placement of up to `max_carriages` carriages over the module's cells
/// and its station, with the mover docked at the station.
pub fn initial_worlds(spec: &ModuleSpec, max_carriages: usize) -> Vec<ModuleWorld> {
    let base = ModuleWorld::new(0, MoverParams::from_module(spec), ElevatorParams::from_module(spec));
    let mut spots: Vec<Option<(u32, u32)>> = vec![None];
    for row in 0..spec.n_v {
        for col in 0..spec.n_h {
            spots.push(Some((row, col)));
        }
    }
    let mut out = vec![base.clone()];
    let mut frontier = vec![(base, 0usize)];
    for k in 0..max_carriages {
        let mut next = Vec::new();
        for (w, min_spot) in &frontier {
            for (i, spot) in spots.iter().enumerate().skip(*min_spot) {
                let mut w2 = w.clone();
                let id = format!("c{k}");
                let ok = match spot {
                    None => {
                        w2.queue_at_station(id);
                        true
                    }
                    Some((row, col)) => w2.place(*row, *col, id).is_ok(),
                };
                if ok {
                    out.push(w2.clone());
                    next.push((w2, i));
                }
            }
        }
        frontier = next;
    }
    out
}

/// Breadth-first search over all states reachable from `initial` with time
/// advancing in steps of `tick` seconds.
pub fn explore(initial: Vec<ModuleWorld>, tick: Q, state_limit: usize) -> ExplorationReport {
    let mut report = ExplorationReport::default();
    let mut seen: HashSet<Node> = HashSet::new();
    let mut queue = VecDeque::new();
    for world in initial {
        let node = Node { world, mover_cmd: None, elevator_cmd: None };
        if seen.insert(node.clone()) {
            queue.push_back(node);
        }
    }
    while let Some(node) = queue.pop_front() {
        report.states += 1;
        if let Err(v) = node.world.check_invariants() {
            report.violations.push(format!("{v}: {:?}", node.world));
        }
        let e = &node.world.elevator;
        if e.is_moving() && e.carries_load() {
            report.loaded_motion_states += 1;
            if !e.lock_engaged {
                report.interlock_violations += 1;
            }
        }
        if report.states >= state_limit {
            report.violations.push(format!("state limit {state_limit} reached"));
            break;
        }
        for succ in successors(&node, &tick) {
            report.transitions += 1;
            if seen.insert(succ.clone()) {
                queue.push_back(succ);
            }
        }
    }
    report
}

fn successors(node: &Node, tick: &Q) -> Vec<Node> {
    let mut out = Vec::new();
    let w = &node.world;
    if node.mover_cmd.is_none() && w.mover.is_idle() {
        for cmd in mover_commands(w.mover_params.n_h) {
            let mut probe = w.clone();
            // A rejected command leaves the world untouched.
            if probe.step_mover(*tick, &cmd).is_ok() {
                out.push(Node { mover_cmd: Some(cmd), ..node.clone() });
            }
        }
    }
    if node.elevator_cmd.is_none() && w.elevator.is_idle() {
        for cmd in elevator_commands(w.elevator_params.n_v) {
            if elevator_validate(&w.elevator_params, &w.elevator, &cmd).is_ok() {
                let mut probe = w.clone();
                if probe.step_elevator(*tick, &cmd).is_ok() {
                    out.push(Node { elevator_cmd: Some(cmd), ..node.clone() });
                }
            }
        }
    }
    if node.mover_cmd.is_some() || node.elevator_cmd.is_some() {
        let mut next = node.clone();
        if let Some(cmd) = &node.mover_cmd {
            match next.world.step_mover(*tick, cmd) {
                Ok(s) if !s.done => {}
                _ => next.mover_cmd = None,
            }
        }
        if let Some(cmd) = &node.elevator_cmd {
            match next.world.step_elevator(*tick, cmd) {
                Ok(s) if !s.done => {}
                _ => next.elevator_cmd = None,
            }
        }
        out.push(next);
    }
    out
}

/// Explores a module from every placement of up to two carriages, ticking at
/// half the time the mover needs for one cell.
pub fn explore_interlock(spec: &ModuleSpec) -> ExplorationReport {
    let tick = MoverParams::from_module(spec).pitch_h / MoverParams::from_module(spec).speed / Q::from_integer(2);
    explore(initial_worlds(spec, 2), tick, 5_000_000)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_placements_for_two_by_one() {
        let spec = ModuleSpec::default();
        let worlds = initial_worlds(&spec, 2);
        // none; one carriage in 3 spots; two carriages: {st,st},{st,a},{st,b},{a,b}
        assert_eq!(worlds.len(), 1 + 3 + 4);
        for w in &worlds {
            w.check_invariants().unwrap();
        }
    }

    #[test]
    fn one_by_one_module_is_safe() {
        let spec = ModuleSpec::with_size(1, 1);
        let report = explore_interlock(&spec);
        assert!(report.is_safe(), "{:?}", report.violations.first());
        assert!(report.loaded_motion_states > 0);
    }

    #[test]
    fn an_unlocked_loaded_lift_is_flagged() {
        let spec = ModuleSpec::with_size(1, 1);
        let mut w = initial_worlds(&spec, 0).remove(0);
        w.mover.carrying = Some("c".into());
        w.queue_at_station("c");
        w.station.clear();
        w.elevator.occupant.as_mut().unwrap().carriage = Some("c".into());
        w.elevator.mode = super::super::ElevatorMode::Moving;
        w.elevator.ir_triggered = false;
        w.elevator.target = Stop::Row(0);
        let err = w.check_invariants().unwrap_err();
        assert!(err.contains("lock disengaged"), "{err}");
    }
}
