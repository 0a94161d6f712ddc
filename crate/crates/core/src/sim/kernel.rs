use num_traits::{Signed, Zero};

use super::SimEvent;
use crate::devices::{DeviceError, EventKind};
use crate::exact::Q;

/// How event times inside a step are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMode {
    /// Events carry the exact instant they happened.
    EventDriven,
    /// Events are stamped with the end of the tick they fell in.
    FixedStep,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FaultCause {
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error("invariant broken: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{entity} at t={time}: {cause}")]
pub struct AgentFault {
    pub entity: String,
    pub time: Q,
    pub cause: FaultCause,
    /// A fatal fault stops the simulation.
    pub fatal: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KernelError {
    #[error("simulation halted: {0}")]
    Halted(AgentFault),
    #[error("step length must be positive")]
    NonPositiveStep,
    #[error("duplicate agent id {0}")]
    DuplicateAgent(String),
    #[error("gave up after {0} steps")]
    StepLimit(usize),
}

pub trait SimAgent {
    fn id(&self) -> &str;

    /// Runs whatever takes no time at `now`. Called once, before the first
    /// step.
    fn settle(&mut self, _now: &Q) -> Result<Vec<SimEvent>, AgentFault> {
        Ok(Vec::new())
    }

    /// Advances from `now` by `dt`. Returned events carry absolute times in
    /// `[now, now + dt]`.
    fn step(&mut self, now: &Q, dt: &Q) -> Result<Vec<SimEvent>, AgentFault>;

    /// Time until this agent's next event; `None` once it has nothing to do.
    fn next_event_in(&self) -> Option<Q>;
}

/// Owns simulated time. Agents are stepped in id order and simultaneous
/// events are ordered by entity id.
pub struct Kernel {
    now: Q,
    mode: StepMode,
    agents: Vec<Box<dyn SimAgent>>,
    settled: bool,
    log: Vec<SimEvent>,
}

impl Kernel {
    pub fn new(mode: StepMode) -> Self {
        Kernel { now: Q::zero(), mode, agents: Vec::new(), settled: false, log: Vec::new() }
    }

    pub fn starting_at(mode: StepMode, now: Q) -> Self {
        Kernel { now, ..Kernel::new(mode) }
    }

    pub fn add_agent(&mut self, agent: Box<dyn SimAgent>) -> Result<(), KernelError> {
        let pos = match self.agents.binary_search_by(|a| a.id().cmp(agent.id())) {
            Ok(_) => return Err(KernelError::DuplicateAgent(agent.id().to_string())),
            Err(pos) => pos,
        };
        self.agents.insert(pos, agent);
        Ok(())
    }

    pub fn now(&self) -> Q {
        self.now
    }

    pub fn mode(&self) -> StepMode {
        self.mode
    }

    /// Every event emitted so far, in order.
    pub fn log(&self) -> &[SimEvent] {
        &self.log
    }

    pub fn into_log(self) -> Vec<SimEvent> {
        self.log
    }

    pub fn is_idle(&self) -> bool {
        self.settled && self.agents.iter().all(|a| a.next_event_in().is_none())
    }

    fn record(&mut self, mut batch: Vec<SimEvent>) -> Vec<SimEvent> {
        batch.sort_by(|a, b| a.time.cmp(&b.time).then_with(|| a.entity.cmp(&b.entity)));
        self.log.extend(batch.iter().cloned());
        batch
    }

    fn fault(&mut self, fault: AgentFault, batch: &mut Vec<SimEvent>) -> Result<(), KernelError> {
        batch.push(SimEvent::new(fault.time, fault.entity.clone(), EventKind::Error).with("reason", &fault.cause));
        if fault.fatal {
            let pending = std::mem::take(batch);
            self.record(pending);
            return Err(KernelError::Halted(fault));
        }
        Ok(())
    }

    fn settle(&mut self) -> Result<(), KernelError> {
        if self.settled {
            return Ok(());
        }
        self.settled = true;
        let now = self.now;
        let mut batch = Vec::new();
        for i in 0..self.agents.len() {
            match self.agents[i].settle(&now) {
                Ok(events) => batch.extend(events),
                Err(f) => self.fault(f, &mut batch)?,
            }
        }
        self.record(batch);
        Ok(())
    }

    /// Advances every agent by `dt` and returns the events of this step.
    pub fn advance(&mut self, dt: Q) -> Result<Vec<SimEvent>, KernelError> {
        if !dt.is_positive() {
            return Err(KernelError::NonPositiveStep);
        }
        let before = self.log.len();
        self.settle()?;
        let now = self.now;
        let end = now + dt;
        let mut batch = Vec::new();
        for i in 0..self.agents.len() {
            match self.agents[i].step(&now, &dt) {
                Ok(events) => batch.extend(events),
                Err(f) => self.fault(f, &mut batch)?,
            }
        }
        if self.mode == StepMode::FixedStep {
            for e in &mut batch {
                e.time = end;
            }
        }
        self.now = end;
        self.record(batch);
        Ok(self.log[before..].to_vec())
    }

    /// Jumps from event to event until no agent has work left.
    pub fn run_until_idle(&mut self, max_steps: usize) -> Result<(), KernelError> {
        self.settle()?;
        for _ in 0..max_steps {
            let next = self.agents.iter().filter_map(|a| a.next_event_in()).min();
            match next {
                None => return Ok(()),
                Some(dt) => {
                    self.advance(dt)?;
                }
            }
        }
        Err(KernelError::StepLimit(max_steps))
    }

    /// Advances in ticks of `tick` until no agent has work left.
    pub fn run_fixed(&mut self, tick: Q, max_steps: usize) -> Result<(), KernelError> {
        self.settle()?;
        for _ in 0..max_steps {
            if self.is_idle() {
                return Ok(());
            }
            self.advance(tick)?;
        }
        Err(KernelError::StepLimit(max_steps))
    }
}
