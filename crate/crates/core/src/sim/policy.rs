//! Sequential policies and the agent that executes them.
//!
//! Unloading works column by column starting with the column nearest the
//! elevator, bottom row first; loading fills in the reverse order. A loaded
//! mover therefore never has to pass under an occupied cell.

use std::cell::RefCell;
use std::collections::{BTreeMap, VecDeque};
use std::rc::Rc;

use num_traits::Zero;

use super::kernel::{AgentFault, FaultCause, Kernel, KernelError, SimAgent, StepMode};
use super::scenario::{Goal, ModulesMode, Placement, Scenario, ScenarioError};
use super::{SimEvent, Trace};
use crate::devices::{
    DeviceError, ElevatorCommand, ElevatorParams, EventKind, ModuleWorld, MoverCommand, MoverParams, Stop,
};
use crate::exact::{q_int, Q};
use crate::farm::{CarriageId, CellAddress, Location};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Mover(MoverCommand),
    Elevator(ElevatorCommand),
}

use Action::{Elevator as E, Mover as M};

fn goto(stop: Stop) -> Action {
    E(ElevatorCommand::GotoRow { stop })
}

fn unload_one(col: u32, row: u32) -> [Action; 8] {
    [
        goto(Stop::Row(row)),
        M(MoverCommand::MoveTo { col }),
        M(MoverCommand::Engage),
        M(MoverCommand::Dock),
        E(ElevatorCommand::Lock),
        goto(Stop::Exit),
        E(ElevatorCommand::Unlock),
        M(MoverCommand::Release),
    ]
}

fn load_one(col: u32, row: u32) -> [Action; 8] {
    [
        M(MoverCommand::Engage),
        E(ElevatorCommand::Lock),
        goto(Stop::Row(row)),
        E(ElevatorCommand::Unlock),
        M(MoverCommand::MoveTo { col }),
        M(MoverCommand::Release),
        M(MoverCommand::Dock),
        goto(Stop::Exit),
    ]
}

/// Commands that reach `goal` for one module, starting with the mover docked
/// at the station. `cells` are the module's carriages as `(col, row)`, keyed
/// by id.
pub fn plan_module(goal: &Goal, cells: &BTreeMap<CarriageId, (u32, u32)>) -> Vec<Action> {
    let mut order: Vec<(u32, u32)> = cells.values().copied().collect();
    order.sort();
    match goal {
        Goal::UnloadAll => order.into_iter().flat_map(|(c, r)| unload_one(c, r)).collect(),
        Goal::LoadAll => order.into_iter().rev().flat_map(|(c, r)| load_one(c, r)).collect(),
        Goal::MoveOne { carriage, to } => {
            let Some(&(col, row)) = cells.get(carriage) else {
                return Vec::new();
            };
            let mut plan = vec![goto(Stop::Row(row)), M(MoverCommand::MoveTo { col }), M(MoverCommand::Engage)];
            if row != to.row {
                plan.extend([
                    M(MoverCommand::Dock),
                    E(ElevatorCommand::Lock),
                    goto(Stop::Row(to.row)),
                    E(ElevatorCommand::Unlock),
                ]);
            }
            plan.extend([
                M(MoverCommand::MoveTo { col: to.col }),
                M(MoverCommand::Release),
                M(MoverCommand::Dock),
                goto(Stop::Exit),
            ]);
            plan
        }
    }
}

/// Far enough ahead that any single command completes.
fn horizon() -> Q {
    q_int(1_000_000_000_000)
}

/// Runs a fixed command list against one module, one command at a time.
pub struct ModuleAgent {
    id: String,
    world: ModuleWorld,
    plan: VecDeque<Action>,
    /// Command in progress and the time it still needs.
    current: Option<(Action, Q)>,
}

impl ModuleAgent {
    pub fn new(world: ModuleWorld, plan: Vec<Action>) -> Self {
        ModuleAgent { id: format!("m{:02}", world.module), world, plan: plan.into(), current: None }
    }

    pub fn world(&self) -> &ModuleWorld {
        &self.world
    }

    fn apply(&mut self, action: &Action, dt: Q) -> Result<(String, crate::devices::world::WorldStep), DeviceError> {
        match action {
            Action::Mover(cmd) => Ok((self.world.mover_id.clone(), self.world.step_mover(dt, cmd)?)),
            Action::Elevator(cmd) => Ok((self.world.elevator_id.clone(), self.world.step_elevator(dt, cmd)?)),
        }
    }

    fn fault(&self, entity: &str, time: Q, cause: FaultCause) -> AgentFault {
        AgentFault { entity: entity.to_string(), time, cause, fatal: true }
    }

    fn entity_of(&self, action: &Action) -> String {
        match action {
            Action::Mover(_) => self.world.mover_id.clone(),
            Action::Elevator(_) => self.world.elevator_id.clone(),
        }
    }

    fn stamp(out: &mut Vec<SimEvent>, entity: &str, at: Q, step: &crate::devices::world::WorldStep) {
        for e in &step.events {
            out.push(SimEvent {
                time: at + e.offset,
                entity: entity.to_string(),
                kind: e.kind,
                detail: e.detail.clone(),
            });
        }
    }

    fn check(&self, time: Q) -> Result<(), AgentFault> {
        self.world.check_invariants().map_err(|v| self.fault(&self.id, time, FaultCause::Invariant(v)))
    }

    /// Starts the next commands at `now`, completing those that take no time.
    fn begin(&mut self, now: Q, out: &mut Vec<SimEvent>) -> Result<(), AgentFault> {
        while self.current.is_none() {
            let Some(action) = self.plan.pop_front() else {
                return Ok(());
            };
            let saved = self.world.clone();
            let (entity, step) = match self.apply(&action, horizon()) {
                Ok(s) => s,
                Err(e) => return Err(self.fault(&self.entity_of(&action), now, e.into())),
            };
            if step.used.is_zero() {
                Self::stamp(out, &entity, now, &step);
                self.check(now)?;
            } else {
                self.world = saved;
                self.current = Some((action, step.used));
            }
        }
        Ok(())
    }
}

impl SimAgent for ModuleAgent {
    fn id(&self) -> &str {
        &self.id
    }

    fn settle(&mut self, now: &Q) -> Result<Vec<SimEvent>, AgentFault> {
        let mut out = Vec::new();
        self.begin(*now, &mut out)?;
        Ok(out)
    }

    fn step(&mut self, now: &Q, dt: &Q) -> Result<Vec<SimEvent>, AgentFault> {
        let mut out = Vec::new();
        let mut t = *now;
        let mut left = *dt;
        self.begin(t, &mut out)?;
        while let Some((action, remaining)) = self.current.take() {
            let slice = if left >= remaining { remaining } else { left };
            if slice.is_zero() {
                self.current = Some((action, remaining));
                break;
            }
            let (entity, step) =
                self.apply(&action, slice).map_err(|e| self.fault(&self.entity_of(&action), t, e.into()))?;
            Self::stamp(&mut out, &entity, t, &step);
            t += slice;
            left -= slice;
            self.check(t)?;
            if slice == remaining {
                debug_assert!(step.done);
                self.begin(t, &mut out)?;
            } else {
                self.current = Some((action, remaining - slice));
                break;
            }
        }
        Ok(out)
    }

    fn next_event_in(&self) -> Option<Q> {
        self.current.as_ref().map(|(_, r)| *r)
    }
}

fn build_world(scenario: &Scenario, module: usize) -> Result<ModuleWorld, ScenarioError> {
    let spec = scenario.farm.module(module)?;
    let t = &scenario.timing;
    let mut mp = MoverParams::from_module(spec);
    if let Some(th) = &t.t_h {
        mp = mp.with_unit_time(th.0);
    }
    if let Some(te) = &t.t_engage {
        mp.engage_time = te.0;
    }
    mp.release_time = t.t_release.map(|e| e.0).unwrap_or_else(Q::zero);
    let mut ep = ElevatorParams::from_module(spec);
    if let Some(tv) = &t.t_v {
        ep = ep.with_unit_time(tv.0);
    }
    Ok(ModuleWorld::new(module, mp, ep))
}

fn module_agent(scenario: &Scenario, module: usize, placements: &[Placement]) -> Result<ModuleAgent, ScenarioError> {
    let mut world = build_world(scenario, module)?;
    let cells: BTreeMap<CarriageId, (u32, u32)> = placements
        .iter()
        .filter(|p| p.cell.module == module)
        .map(|p| (p.id.clone(), (p.cell.col, p.cell.row)))
        .collect();
    let plan = plan_module(&scenario.goal, &cells);
    match scenario.goal {
        Goal::LoadAll => {
            // Station queue in the order the plan picks carriages up.
            let mut queue: Vec<_> = cells.iter().map(|(id, cr)| (*cr, id.clone())).collect();
            queue.sort();
            for (_, id) in queue.into_iter().rev() {
                world.queue_at_station(id);
            }
        }
        _ => {
            for (id, (col, row)) in &cells {
                world.place(*row, *col, id.clone()).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            }
        }
    }
    Ok(ModuleAgent::new(world, plan))
}

fn scenario_error(err: KernelError) -> ScenarioError {
    match err {
        KernelError::Halted(fault) => match &fault.cause {
            FaultCause::Device(DeviceError::Blocked { carriage })
            | FaultCause::Device(DeviceError::Occupied { carriage, .. }) => {
                ScenarioError::Blocked { carriage: carriage.clone(), reason: fault.to_string() }
            }
            _ => ScenarioError::Fault(fault),
        },
        other => ScenarioError::Kernel(other),
    }
}

/// Upper bound on kernel steps: every command finishes within one step.
fn step_budget(agents: &[ModuleAgent]) -> usize {
    agents.iter().map(|a| a.plan.len()).sum::<usize>() * 2 + 16
}

/// Runs `scenario` to completion in event-driven mode.
pub fn run_scenario(scenario: &Scenario) -> Result<Trace, ScenarioError> {
    scenario.validate()?;
    let placements = scenario.placements();
    let mut agents = Vec::new();
    for m in 0..scenario.farm.n() {
        agents.push(module_agent(scenario, m, &placements)?);
    }
    let mut events = Vec::new();
    let mut locations = BTreeMap::new();
    let mut total = Q::zero();
    let run = |kernel: &mut Kernel, budget: usize| kernel.run_until_idle(budget).map_err(scenario_error);
    let finals: Vec<ModuleWorld> = match scenario.modules {
        ModulesMode::Parallel => {
            let budget = step_budget(&agents);
            let shared: Vec<_> = agents.into_iter().map(|a| Rc::new(RefCell::new(a))).collect();
            let mut kernel = Kernel::new(StepMode::EventDriven);
            for a in &shared {
                kernel.add_agent(Shared::new(a)).map_err(ScenarioError::Kernel)?;
            }
            run(&mut kernel, budget)?;
            total = kernel.now();
            events.extend(kernel.into_log());
            shared.iter().map(|a| a.borrow().world.clone()).collect()
        }
        ModulesMode::Serial => {
            let mut worlds = Vec::new();
            for agent in agents {
                let budget = step_budget(std::slice::from_ref(&agent));
                let cell = Rc::new(RefCell::new(agent));
                let mut kernel = Kernel::starting_at(StepMode::EventDriven, total);
                kernel.add_agent(Shared::new(&cell)).map_err(ScenarioError::Kernel)?;
                run(&mut kernel, budget)?;
                total = kernel.now();
                events.extend(kernel.into_log());
                worlds.push(cell.borrow().world.clone());
            }
            worlds
        }
    };
    for w in &finals {
        locations.extend(w.locations());
    }
    check_goal(scenario, &placements, &locations)?;
    let mut completions = BTreeMap::new();
    for e in &events {
        if e.kind == EventKind::Release {
            if let Some(c) = e.carriage() {
                completions.insert(c.to_string(), e.time);
            }
        }
    }
    Ok(Trace {
        farm_digest: scenario.farm.digest(),
        modules: scenario.modules,
        events,
        total_time: total,
        completions,
        final_locations: locations,
    })
}

/// Lets the kernel drive an agent the caller still needs to inspect.
struct Shared(String, Rc<RefCell<ModuleAgent>>);

impl Shared {
    fn new(agent: &Rc<RefCell<ModuleAgent>>) -> Box<Self> {
        Box::new(Shared(agent.borrow().id.clone(), agent.clone()))
    }
}

impl SimAgent for Shared {
    fn id(&self) -> &str {
        &self.0
    }

    fn settle(&mut self, now: &Q) -> Result<Vec<SimEvent>, AgentFault> {
        self.1.borrow_mut().settle(now)
    }

    fn step(&mut self, now: &Q, dt: &Q) -> Result<Vec<SimEvent>, AgentFault> {
        self.1.borrow_mut().step(now, dt)
    }

    fn next_event_in(&self) -> Option<Q> {
        self.1.borrow().next_event_in()
    }
}

fn check_goal(
    scenario: &Scenario,
    placements: &[Placement],
    locations: &BTreeMap<CarriageId, Location>,
) -> Result<(), ScenarioError> {
    let miss = |id: &str, want: String| {
        Err(ScenarioError::GoalNotReached(format!("carriage {id} is at {:?}, expected {want}", locations.get(id))))
    };
    match &scenario.goal {
        Goal::UnloadAll => {
            for p in placements {
                if locations.get(&p.id) != Some(&Location::Station { module: p.cell.module }) {
                    return miss(&p.id, "the station".into());
                }
            }
        }
        Goal::LoadAll => {
            for p in placements {
                if locations.get(&p.id) != Some(&Location::Cell(p.cell)) {
                    return miss(&p.id, p.cell.to_string());
                }
            }
        }
        Goal::MoveOne { carriage, to } => {
            let to: CellAddress = *to;
            if locations.get(carriage) != Some(&Location::Cell(to)) {
                return miss(carriage, to.to_string());
            }
        }
    }
    Ok(())
}
