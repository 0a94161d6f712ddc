use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use macarons_core::devices::commands::{elevator_command, mover_command};
use macarons_core::devices::world::WorldStep;
use macarons_core::devices::{DeviceError, ElevatorParams, ModuleWorld, MoverParams};
use macarons_core::exact::{q_int, q_to_f64};
use macarons_core::farm::{Location, ModuleSpec};
use macarons_core::protocol::{
    Command, CommandResult, DeviceCyclePhase, DeviceKind, FarmLayout, Reading, RegistrationRequest, UpdateBundle,
};
use semver::Version;
use serde::Serialize;
use serde_json::json;

use crate::clock::Clock;
use crate::link::{DeviceApi, LinkError};

/// The module a mover and an elevator share.
pub type Plant = Arc<Mutex<ModuleWorld>>;

/// A plant for `module` with carriages where `layout` says they are.
pub fn plant_from_layout(layout: &FarmLayout, module: usize) -> Result<Plant, DeviceError> {
    let spec = layout.farm.module(module).cloned().unwrap_or_default();
    let mut world = empty_world(&spec, module);
    for (id, loc) in &layout.carriages {
        match loc {
            Location::Cell(c) if c.module == module => world.place(c.row, c.col, id.clone())?,
            Location::Station { module: m } if *m == module => world.queue_at_station(id.clone()),
            _ => {}
        }
    }
    Ok(Arc::new(Mutex::new(world)))
}

fn empty_world(spec: &ModuleSpec, module: usize) -> ModuleWorld {
    ModuleWorld::new(module, MoverParams::from_module(spec), ElevatorParams::from_module(spec))
}

#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub kind: DeviceKind,
    pub hardware_id: String,
    pub firmware_version: Version,
    /// Sleep used until the server provides `sleep_seconds`.
    pub default_sleep_seconds: f64,
    /// How long one command poll may be held open by the server.
    pub command_hold: Duration,
    /// Upper bound on commands executed in one run_main phase.
    pub max_commands_per_cycle: usize,
}

impl AgentConfig {
    pub fn new(kind: DeviceKind, hardware_id: impl Into<String>) -> Self {
        AgentConfig {
            kind,
            hardware_id: hardware_id.into(),
            firmware_version: Version::new(1, 0, 0),
            default_sleep_seconds: 60.0,
            command_hold: Duration::from_secs(2),
            max_commands_per_cycle: 64,
        }
    }

    /// Hardware id used by `seed_demo` style farms: `sim-m00-mover`.
    pub fn simulated(kind: DeviceKind, module: usize) -> Self {
        let hw = format!("sim-m{module:02}-{kind}");
        Self::new(kind, hw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseMark {
    pub phase: DeviceCyclePhase,
    pub at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExecutedCommand {
    pub command_id: String,
    pub name: String,
    pub ok: bool,
    pub error: Option<String>,
    pub duration_s: f64,
}

/// What happened during one wake-to-sleep cycle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleReport {
    pub device_id: Option<String>,
    pub phases: Vec<PhaseMark>,
    /// Versions installed, with the phase that installed them.
    pub installs: Vec<(DeviceCyclePhase, Version)>,
    pub version_at_run_main: Version,
    pub commands: Vec<ExecutedCommand>,
    /// Server problems the cycle rode through.
    pub link_errors: Vec<String>,
    pub slept_s: f64,
}

impl CycleReport {
    pub fn phase_names(&self) -> Vec<DeviceCyclePhase> {
        self.phases.iter().map(|p| p.phase).collect()
    }

    pub fn installed_in(&self, phase: DeviceCyclePhase) -> Option<&Version> {
        self.installs.iter().find(|(p, _)| *p == phase).map(|(_, v)| v)
    }
}

pub struct DeviceAgent {
    config: AgentConfig,
    api: Arc<dyn DeviceApi>,
    clock: Arc<dyn Clock>,
    plant: Plant,
    device_id: Option<String>,
    version: Version,
    /// Files of the installed bundle.
    files: BTreeMap<String, Vec<u8>>,
    sleep_seconds: f64,
}

impl DeviceAgent {
    pub fn new(config: AgentConfig, api: Arc<dyn DeviceApi>, clock: Arc<dyn Clock>, plant: Plant) -> Self {
        let version = config.firmware_version.clone();
        let sleep_seconds = config.default_sleep_seconds;
        DeviceAgent { config, api, clock, plant, device_id: None, version, files: BTreeMap::new(), sleep_seconds }
    }

    pub fn device_id(&self) -> Option<&str> {
        self.device_id.as_deref()
    }

    pub fn version(&self) -> &Version {
        &self.version
    }

    pub fn files(&self) -> &BTreeMap<String, Vec<u8>> {
        &self.files
    }

    pub fn plant(&self) -> &Plant {
        &self.plant
    }

    /// Registers if not yet registered. Safe to call repeatedly.
    pub fn register(&mut self) -> Result<&str, LinkError> {
        if self.device_id.is_none() {
            let req = RegistrationRequest {
                kind: self.config.kind.clone(),
                hardware_id: self.config.hardware_id.clone(),
                firmware_version: self.version.clone(),
            };
            let rec = self.api.register(&req)?;
            self.version = self.version.clone().max(rec.installed_version);
            self.device_id = Some(rec.device_id);
        }
        Ok(self.device_id.as_deref().unwrap_or_default())
    }

    fn mark(&self, report: &mut CycleReport, phase: DeviceCyclePhase) {
        report.phases.push(PhaseMark { phase, at: self.clock.now() });
    }

    /// One full wake, pre_update, run_main, post_update, deep_sleep cycle.
    pub fn run_cycle(&mut self) -> CycleReport {
        let mut report = CycleReport {
            device_id: None,
            phases: Vec::with_capacity(5),
            installs: Vec::new(),
            version_at_run_main: self.version.clone(),
            commands: Vec::new(),
            link_errors: Vec::new(),
            slept_s: 0.0,
        };

        self.mark(&mut report, DeviceCyclePhase::Wake);
        if let Err(e) = self.register() {
            report.link_errors.push(format!("wake: {e}"));
        }
        report.device_id = self.device_id.clone();

        self.mark(&mut report, DeviceCyclePhase::PreUpdate);
        self.check_update(DeviceCyclePhase::PreUpdate, &mut report);

        self.mark(&mut report, DeviceCyclePhase::RunMain);
        report.version_at_run_main = self.version.clone();
        self.run_main(&mut report);

        self.mark(&mut report, DeviceCyclePhase::PostUpdate);
        self.check_update(DeviceCyclePhase::PostUpdate, &mut report);

        self.mark(&mut report, DeviceCyclePhase::DeepSleep);
        report.slept_s = self.sleep_seconds;
        self.clock.sleep(self.sleep_seconds);
        report
    }

    fn check_update(&mut self, phase: DeviceCyclePhase, report: &mut CycleReport) {
        let Some(id) = self.device_id.clone() else {
            return;
        };
        let bundle = match self.api.poll_update(&id, phase) {
            Ok(Some(b)) => b,
            Ok(None) => return,
            Err(e) => {
                report.link_errors.push(format!("{phase}: {e}"));
                return;
            }
        };
        if let Err(e) = self.install(&bundle) {
            report.link_errors.push(format!("{phase}: bundle {} refused: {e}", bundle.version));
            return;
        }
        report.installs.push((phase, bundle.version.clone()));
        if let Err(e) = self.api.ack_update(&id, &bundle.version) {
            report.link_errors.push(format!("{phase}: ack: {e}"));
        }
    }

    fn install(&mut self, bundle: &UpdateBundle) -> Result<(), String> {
        bundle.verify().map_err(|e| e.to_string())?;
        if bundle.version <= self.version {
            return Err(format!("already at {}", self.version));
        }
        self.files = bundle.files.iter().map(|f| (f.path.clone(), f.bytes.clone())).collect();
        self.version = bundle.version.clone();
        Ok(())
    }

    fn run_main(&mut self, report: &mut CycleReport) {
        let Some(id) = self.device_id.clone() else {
            return;
        };
        match self.api.config(&id) {
            Ok(cfg) => {
                if let Some(s) = cfg.get("sleep_seconds").and_then(|v| v.as_f64()).filter(|s| *s > 0.0) {
                    self.sleep_seconds = s;
                }
            }
            Err(e) => {
                report.link_errors.push(format!("run_main config: {e}"));
                return;
            }
        }
        while report.commands.len() < self.config.max_commands_per_cycle {
            let cmd = match self.api.poll_command(&id, self.config.command_hold) {
                Ok(Some(c)) => c,
                Ok(None) => break,
                Err(e) => {
                    report.link_errors.push(format!("run_main poll: {e}"));
                    break;
                }
            };
            let (result, executed) = self.execute(&cmd);
            report.commands.push(executed);
            if let Err(e) = self.api.post_result(&result) {
                report.link_errors.push(format!("run_main result: {e}"));
            }
            let reading = self.position_reading(&id);
            if let Err(e) = self.api.push_readings(&id, &[reading]) {
                report.link_errors.push(format!("run_main readings: {e}"));
            }
        }
    }

    fn step_plant(&self, cmd: &Command) -> Result<WorldStep, String> {
        // Long enough for any single command to finish.
        let horizon = q_int(1_000_000_000);
        let mut world = self.plant.lock().unwrap_or_else(|p| p.into_inner());
        match self.config.kind {
            DeviceKind::Mover => {
                let c = mover_command(cmd).map_err(|e| e.to_string())?;
                world.step_mover(horizon, &c).map_err(|e| e.to_string())
            }
            DeviceKind::Elevator => {
                let c = elevator_command(cmd).map_err(|e| e.to_string())?;
                world.step_elevator(horizon, &c).map_err(|e| e.to_string())
            }
            DeviceKind::Other(ref k) => Err(format!("{k} devices have no actuators")),
        }
    }

    fn execute(&self, cmd: &Command) -> (CommandResult, ExecutedCommand) {
        let outcome = self.step_plant(cmd);
        let duration_s = outcome.as_ref().map(|s| q_to_f64(&s.used)).unwrap_or(0.0);
        self.clock.sleep(duration_s);
        let mut detail = BTreeMap::new();
        detail.insert("duration_s".into(), json!(duration_s));
        let locations = self.plant.lock().unwrap_or_else(|p| p.into_inner()).locations();
        detail.insert("locations".into(), json!(locations));
        let error = outcome.err();
        let result =
            CommandResult { command_id: cmd.command_id.clone(), ok: error.is_none(), error: error.clone(), detail };
        let executed = ExecutedCommand {
            command_id: cmd.command_id.clone(),
            name: cmd.name.clone(),
            ok: error.is_none(),
            error,
            duration_s,
        };
        (result, executed)
    }

    fn position_reading(&self, id: &str) -> Reading {
        let world = self.plant.lock().unwrap_or_else(|p| p.into_inner());
        let (key, mm) = match self.config.kind {
            DeviceKind::Elevator => ("height_mm", world.elevator.height_mm()),
            _ => ("position_mm", world.mover.position_mm()),
        };
        Reading { device_id: id.to_string(), timestamp: self.clock.now(), key: key.into(), value: mm.into() }
    }
}
