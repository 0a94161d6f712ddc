//! The control server's operations, independent of HTTP.
//!
//! All state lives in the [`Store`]; each operation is one short transaction
//! under a mutex. Waiting (command long-polls and the script coordinator)
//! happens outside the lock on a change counter that every mutation bumps.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use semver::Version;
use serde_json::Value;
use tokio::sync::watch;
use tokio::time::Instant;

use macarons_core::devices::commands::action_parts;
use macarons_core::farm::{CellAddress, Location};
use macarons_core::protocol::{
    Command, CommandResult, ConfigMap, DeviceCyclePhase, DeviceKind, DeviceRecord, ErrorCode, FarmLayout, JobRecord,
    JobStatus, ModuleDevices, MoveRequest, Reading, RegistrationRequest, Script, ScriptRecord, ScriptStep, StepOutcome,
    StepStatus, UpdateBundle, WaitFor,
};
use macarons_core::sim::{plan_module, run_scenario, Action, Goal, Placement, Scenario, ScenarioError};

use crate::error::{Result, ServerError};
use crate::store::{CommandState, Store};

/// Seconds since the Unix epoch.
pub type Clock = Arc<dyn Fn() -> f64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0))
}

/// Config key holding a device's deep-sleep period in seconds.
pub const SLEEP_SECONDS: &str = "sleep_seconds";

#[derive(Debug, Clone)]
pub struct ServerOptions {
    /// How long a command poll is held open when nothing is queued.
    pub long_poll_hold: Duration,
    /// Sleep period assumed for devices without a `sleep_seconds` config.
    pub default_sleep_seconds: f64,
    /// Fixed per-step timeout; by default twice the device's sleep period.
    pub step_timeout: Option<Duration>,
}

impl Default for ServerOptions {
    fn default() -> Self {
        ServerOptions { long_poll_hold: Duration::from_secs(25), default_sleep_seconds: 60.0, step_timeout: None }
    }
}

const FARM_KEY: &str = "farm_layout";

pub struct ControlServer {
    store: Mutex<Store>,
    changes: watch::Sender<u64>,
    options: ServerOptions,
    clock: Clock,
    /// Devices owned by a running job.
    busy: Mutex<BTreeSet<String>>,
}

impl ControlServer {
    pub fn open(path: impl AsRef<Path>, options: ServerOptions) -> Result<Arc<Self>> {
        Self::with_store(Store::open(path)?, options, system_clock())
    }

    pub fn in_memory(options: ServerOptions) -> Result<Arc<Self>> {
        Self::with_store(Store::open_in_memory()?, options, system_clock())
    }

    /// Wraps `store`, aborting any job a previous process left unfinished.
    pub fn with_store(mut store: Store, options: ServerOptions, clock: Clock) -> Result<Arc<Self>> {
        let now = clock();
        store.transaction(|s| {
            for mut job in s.jobs()? {
                if !job.status.is_terminal() {
                    job.status = JobStatus::Aborted;
                    job.finished_at = Some(now);
                    job.reason = Some("server restarted while the job was active".into());
                    for step in &mut job.steps {
                        if step.status == StepStatus::Pending {
                            step.status = StepStatus::Skipped;
                        }
                    }
                    s.put_job(&job)?;
                }
            }
            s.cancel_open_commands()?;
            Ok(())
        })?;
        let (changes, _) = watch::channel(0);
        Ok(Arc::new(ControlServer {
            store: Mutex::new(store),
            changes,
            options,
            clock,
            busy: Mutex::new(BTreeSet::new()),
        }))
    }

    pub fn options(&self) -> &ServerOptions {
        &self.options
    }

    fn now(&self) -> f64 {
        (self.clock)()
    }

    fn db(&self) -> MutexGuard<'_, Store> {
        self.store.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn write<T>(&self, f: impl FnOnce(&Store) -> Result<T>) -> Result<T> {
        let out = self.db().transaction(f)?;
        self.changes.send_modify(|n| *n += 1);
        Ok(out)
    }

    fn device_in(store: &Store, device_id: &str) -> Result<DeviceRecord> {
        store.device(device_id)?.ok_or_else(|| ServerError::not_found(format!("device {device_id}")))
    }

    pub fn register_device(&self, req: &RegistrationRequest) -> Result<DeviceRecord> {
        if req.hardware_id.trim().is_empty() {
            return Err(ServerError::validation("hardware_id must not be empty"));
        }
        let now = self.now();
        self.write(|s| {
            if let Some(existing) = s.device_by_hardware(&req.hardware_id)? {
                return Ok(existing);
            }
            let n = s.next_id("device")?;
            let record = DeviceRecord {
                device_id: format!("{}-{n:04}", req.kind),
                kind: req.kind.clone(),
                hardware_id: req.hardware_id.clone(),
                registered_at: now,
                config: ConfigMap::new(),
                staged_update: None,
                installed_version: req.firmware_version.clone(),
                last_seen: now,
                last_phase: None,
                supported_by_ui: req.kind.supported_by_ui(),
            };
            s.put_device(&record)?;
            Ok(record)
        })
    }

    pub fn devices(&self) -> Result<Vec<DeviceRecord>> {
        self.db().devices()
    }

    pub fn device(&self, device_id: &str) -> Result<DeviceRecord> {
        Self::device_in(&self.db(), device_id)
    }

    pub fn config(&self, device_id: &str) -> Result<ConfigMap> {
        Ok(self.device(device_id)?.config)
    }

    pub fn config_value(&self, device_id: &str, key: &str) -> Result<Option<Value>> {
        Ok(self.config(device_id)?.get(key).cloned())
    }

    /// Merges `values` into the device config; a null value removes its key.
    pub fn set_config(&self, device_id: &str, values: &ConfigMap) -> Result<ConfigMap> {
        if let Some(v) = values.get(SLEEP_SECONDS) {
            if !v.is_null() && !v.as_f64().is_some_and(|x| x > 0.0) {
                return Err(ServerError::validation("sleep_seconds must be a positive number"));
            }
        }
        self.write(|s| {
            let mut d = Self::device_in(s, device_id)?;
            for (k, v) in values {
                if v.is_null() {
                    d.config.remove(k);
                } else {
                    d.config.insert(k.clone(), v.clone());
                }
            }
            s.put_device(&d)?;
            Ok(d.config)
        })
    }

    pub fn stage_update(&self, device_id: &str, bundle: &UpdateBundle) -> Result<()> {
        bundle.verify().map_err(|e| ServerError::new(ErrorCode::Integrity, e.to_string()))?;
        self.write(|s| {
            let mut d = Self::device_in(s, device_id)?;
            if bundle.version <= d.installed_version {
                return Err(ServerError::new(
                    ErrorCode::VersionRegression,
                    format!("bundle {} does not supersede installed {}", bundle.version, d.installed_version),
                ));
            }
            d.staged_update = Some(bundle.clone());
            s.put_device(&d)
        })
    }

    fn touch(d: &mut DeviceRecord, now: f64, phase: DeviceCyclePhase) {
        d.last_seen = d.last_seen.max(now);
        d.last_phase = Some(phase);
    }

    pub fn poll_update(&self, device_id: &str, phase: DeviceCyclePhase) -> Result<Option<UpdateBundle>> {
        if !phase.is_update_check() {
            return Err(ServerError::new(
                ErrorCode::Protocol,
                format!("update polls happen in pre_update or post_update, not {phase}"),
            ));
        }
        let now = self.now();
        self.write(|s| {
            let mut d = Self::device_in(s, device_id)?;
            Self::touch(&mut d, now, phase);
            s.put_device(&d)?;
            Ok(d.staged_update)
        })
    }

    /// Records that the device installed `version`.
    pub fn ack_update(&self, device_id: &str, version: &Version) -> Result<DeviceRecord> {
        self.write(|s| {
            let mut d = Self::device_in(s, device_id)?;
            match &d.staged_update {
                Some(b) if &b.version == version => {
                    d.installed_version = version.clone();
                    d.staged_update = None;
                }
                _ if &d.installed_version == version => {}
                _ => {
                    return Err(ServerError::new(
                        ErrorCode::Conflict,
                        format!("version {version} is neither staged nor installed"),
                    ))
                }
            }
            s.put_device(&d)?;
            Ok(d)
        })
    }

    pub fn push_readings(&self, device_id: &str, readings: &[Reading]) -> Result<()> {
        if let Some(r) = readings.iter().find(|r| r.device_id != device_id) {
            return Err(ServerError::validation(format!("reading from {} posted for {device_id}", r.device_id)));
        }
        if readings.iter().any(|r| !r.timestamp.is_finite()) {
            return Err(ServerError::validation("reading timestamps must be finite"));
        }
        self.write(|s| {
            Self::device_in(s, device_id)?;
            for r in readings {
                s.insert_reading(r)?;
            }
            Ok(())
        })
    }

    pub fn readings(&self, device_id: &str, from: Option<f64>, to: Option<f64>) -> Result<Vec<Reading>> {
        let db = self.db();
        Self::device_in(&db, device_id)?;
        db.readings(device_id, from.unwrap_or(f64::NEG_INFINITY), to.unwrap_or(f64::INFINITY))
    }

    pub fn upload_script(&self, script: &Script) -> Result<ScriptRecord> {
        if script.name.trim().is_empty() {
            return Err(ServerError::validation("script name must not be empty"));
        }
        if script.steps.is_empty() {
            return Err(ServerError::validation("script has no steps"));
        }
        if let Some(i) = script.steps.iter().position(|s| s.command.is_empty() || s.device_id.is_empty()) {
            return Err(ServerError::validation(format!("step {i} needs a device and a command")));
        }
        let now = self.now();
        self.write(|s| {
            let n = s.next_id("script")?;
            let record = ScriptRecord {
                script_id: format!("script-{n:04}"),
                name: script.name.clone(),
                steps: script.steps.clone(),
                uploaded_at: now,
            };
            s.put_script(&record)?;
            Ok(record)
        })
    }

    pub fn scripts(&self) -> Result<Vec<ScriptRecord>> {
        self.db().scripts()
    }

    pub fn script(&self, script_id: &str) -> Result<ScriptRecord> {
        self.db().script(script_id)?.ok_or_else(|| ServerError::not_found(format!("script {script_id}")))
    }

    pub fn job(&self, job_id: &str) -> Result<JobRecord> {
        self.db().job(job_id)?.ok_or_else(|| ServerError::not_found(format!("job {job_id}")))
    }

    pub fn jobs(&self) -> Result<Vec<JobRecord>> {
        self.db().jobs()
    }

    /// Validates and starts a script; the returned record is pending and the
    /// coordinator runs in the background.
    pub fn run_script(self: &Arc<Self>, script_id: &str) -> Result<JobRecord> {
        let script = self.script(script_id)?;
        let mut devices = BTreeSet::new();
        {
            let db = self.db();
            for (i, step) in script.steps.iter().enumerate() {
                let d = db.device(&step.device_id)?.ok_or_else(|| {
                    ServerError::validation(format!("step {i}: device {} is not registered", step.device_id))
                })?;
                if !d.kind.accepts(&step.command) {
                    return Err(ServerError::validation(format!(
                        "step {i}: {} devices do not understand `{}`",
                        d.kind, step.command
                    )));
                }
                devices.insert(step.device_id.clone());
            }
        }
        {
            let mut busy = self.busy.lock().unwrap_or_else(|p| p.into_inner());
            if let Some(d) = devices.iter().find(|d| busy.contains(*d)) {
                return Err(ServerError::new(ErrorCode::Conflict, format!("device {d} is running another job")));
            }
            busy.extend(devices.iter().cloned());
        }
        let job = self.write(|s| {
            let n = s.next_id("job")?;
            let job = JobRecord {
                job_id: format!("job-{n:04}"),
                script_id: script.script_id.clone(),
                status: JobStatus::Pending,
                steps: script
                    .steps
                    .iter()
                    .map(|st| StepOutcome {
                        device_id: st.device_id.clone(),
                        command: st.command.clone(),
                        command_id: None,
                        status: StepStatus::Pending,
                        detail: None,
                    })
                    .collect(),
                started_at: None,
                finished_at: None,
                reason: None,
            };
            s.put_job(&job)?;
            Ok(job)
        });
        let job = match job {
            Ok(j) => j,
            Err(e) => {
                self.release(&devices);
                return Err(e);
            }
        };
        let server = Arc::clone(self);
        let job_id = job.job_id.clone();
        tokio::spawn(async move {
            if let Err(e) = server.coordinate(&job_id, &script).await {
                tracing::error!(job = %job_id, error = %e, "coordinator stopped");
            }
            server.release(&devices);
        });
        Ok(job)
    }

    fn release(&self, devices: &BTreeSet<String>) {
        let mut busy = self.busy.lock().unwrap_or_else(|p| p.into_inner());
        for d in devices {
            busy.remove(d);
        }
    }

    /// Step timeout for a device: the fixed option, or twice its sleep period.
    pub fn step_timeout(&self, device_id: &str) -> Duration {
        if let Some(t) = self.options.step_timeout {
            return t;
        }
        let sleep = self
            .config_value(device_id, SLEEP_SECONDS)
            .ok()
            .flatten()
            .and_then(|v| v.as_f64())
            .unwrap_or(self.options.default_sleep_seconds);
        Duration::from_secs_f64(2.0 * sleep)
    }

    fn update_job(&self, job_id: &str, f: impl FnOnce(&mut JobRecord)) -> Result<JobRecord> {
        self.write(|s| {
            let mut job = s.job(job_id)?.ok_or_else(|| ServerError::not_found(format!("job {job_id}")))?;
            f(&mut job);
            s.put_job(&job)?;
            Ok(job)
        })
    }

    async fn coordinate(&self, job_id: &str, script: &ScriptRecord) -> Result<()> {
        let now = self.now();
        self.update_job(job_id, |j| {
            j.status = JobStatus::Running;
            j.started_at = Some(now);
        })?;
        for (i, step) in script.steps.iter().enumerate() {
            let command_id = format!("{job_id}.{i}");
            let (status, detail) = self.run_step(job_id, &command_id, step).await?;
            let failed = status != StepStatus::Succeeded;
            self.update_job(job_id, |j| {
                j.steps[i].command_id = Some(command_id.clone());
                j.steps[i].status = status;
                j.steps[i].detail = detail.clone();
            })?;
            if failed {
                let now = self.now();
                self.update_job(job_id, |j| {
                    for s in &mut j.steps[i + 1..] {
                        s.status = StepStatus::Skipped;
                    }
                    j.status = JobStatus::Failed;
                    j.finished_at = Some(now);
                    j.reason = Some(format!(
                        "step {i} ({} on {}): {}",
                        step.command,
                        step.device_id,
                        detail.unwrap_or_default()
                    ));
                })?;
                return Ok(());
            }
        }
        let now = self.now();
        self.update_job(job_id, |j| {
            j.status = JobStatus::Succeeded;
            j.finished_at = Some(now);
        })?;
        Ok(())
    }

    async fn run_step(
        &self,
        job_id: &str,
        command_id: &str,
        step: &ScriptStep,
    ) -> Result<(StepStatus, Option<String>)> {
        let deadline = Instant::now() + self.step_timeout(&step.device_id);
        let command = Command {
            command_id: command_id.to_string(),
            device_id: step.device_id.clone(),
            name: step.command.clone(),
            args: step.args.clone(),
        };
        let mark = self.write(|s| {
            s.enqueue_command(&command, Some(job_id))?;
            s.last_reading_seq()
        })?;
        let result = self.wait_until(deadline, || Ok(self.db().command(command_id)?.and_then(|c| c.result))).await?;
        let Some(result) = result else {
            self.write(|s| s.set_command_state(command_id, CommandState::Cancelled))?;
            return Ok((StepStatus::Timeout, Some("device did not report within the step timeout".into())));
        };
        if !result.ok {
            return Ok((StepStatus::Failed, result.error));
        }
        if let WaitFor::Reading { key, value } = &step.wait {
            let seen = self
                .wait_until(deadline, || {
                    let hits = self.db().readings_after(&step.device_id, key, mark)?;
                    Ok(hits.iter().any(|r| &r.value == value).then_some(()))
                })
                .await?;
            if seen.is_none() {
                return Ok((StepStatus::Timeout, Some(format!("no reading {key} = {value:?}"))));
            }
        }
        Ok((StepStatus::Succeeded, None))
    }

    /// Re-evaluates `check` after every change until it yields a value or
    /// `deadline` passes.
    async fn wait_until<T>(
        &self,
        deadline: Instant,
        mut check: impl FnMut() -> Result<Option<T>>,
    ) -> Result<Option<T>> {
        let mut rx = self.changes.subscribe();
        loop {
            if let Some(v) = check()? {
                return Ok(Some(v));
            }
            match tokio::time::timeout_at(deadline, rx.changed()).await {
                Ok(Ok(())) => {}
                Ok(Err(_)) | Err(_) => return check(),
            }
        }
    }

    /// Next command for a device in run_main, held open up to `hold`.
    pub async fn poll_command(&self, device_id: &str, hold: Option<Duration>) -> Result<Option<Command>> {
        let now = self.now();
        self.write(|s| {
            let mut d = Self::device_in(s, device_id)?;
            Self::touch(&mut d, now, DeviceCyclePhase::RunMain);
            s.put_device(&d)
        })?;
        let deadline = Instant::now() + hold.unwrap_or(self.options.long_poll_hold);
        self.wait_until(deadline, || {
            let mut db = self.db();
            let taken = db.transaction(|s| s.take_queued_command(device_id))?;
            if taken.is_some() {
                drop(db);
                self.changes.send_modify(|n| *n += 1);
            }
            Ok(taken)
        })
        .await
    }

    /// Stores a device's report on a command. Carriage locations in the
    /// result detail update the farm layout.
    pub fn post_result(&self, result: &CommandResult) -> Result<()> {
        self.write(|s| {
            let stored = s
                .command(&result.command_id)?
                .ok_or_else(|| ServerError::not_found(format!("command {}", result.command_id)))?;
            if stored.state == CommandState::Cancelled {
                return Err(ServerError::new(ErrorCode::Conflict, "command was cancelled"));
            }
            s.set_command_result(result)?;
            if let Some(Value::Object(locs)) = result.detail.get("locations") {
                if let Some(mut layout) = s.meta::<FarmLayout>(FARM_KEY)? {
                    for (id, loc) in locs {
                        if let Ok(loc) = serde_json::from_value::<Location>(loc.clone()) {
                            layout.carriages.insert(id.clone(), loc);
                        }
                    }
                    s.set_meta(FARM_KEY, &layout)?;
                }
            }
            Ok(())
        })
    }

    /// Queues a command outside any script.
    pub fn queue_command(&self, device_id: &str, name: &str, args: macarons_core::protocol::Args) -> Result<Command> {
        self.write(|s| {
            let d = Self::device_in(s, device_id)?;
            if !d.kind.accepts(name) {
                return Err(ServerError::validation(format!("{} devices do not understand `{name}`", d.kind)));
            }
            let n = s.next_id("manual_command")?;
            let cmd =
                Command { command_id: format!("manual-{n:04}"), device_id: device_id.into(), name: name.into(), args };
            s.enqueue_command(&cmd, None)?;
            Ok(cmd)
        })
    }

    pub fn command_state(&self, command_id: &str) -> Result<Option<crate::store::StoredCommand>> {
        self.db().command(command_id)
    }

    pub fn farm_layout(&self) -> Result<FarmLayout> {
        self.db().meta(FARM_KEY)?.ok_or_else(|| ServerError::not_found("farm layout"))
    }

    pub fn set_farm_layout(&self, layout: &FarmLayout) -> Result<()> {
        if layout.devices.len() > layout.farm.n() {
            return Err(ServerError::validation("more device entries than modules"));
        }
        let mut seen = BTreeMap::new();
        for (id, loc) in &layout.carriages {
            if let Location::Cell(c) = loc {
                let spec = layout.farm.module(c.module).map_err(|e| ServerError::validation(e.to_string()))?;
                if !spec.contains(c.col, c.row) {
                    return Err(ServerError::validation(format!("carriage {id} is outside the farm at {c}")));
                }
                if let Some(other) = seen.insert(*c, id) {
                    return Err(ServerError::validation(format!("carriages {other} and {id} share {c}")));
                }
            }
        }
        self.write(|s| s.set_meta(FARM_KEY, layout))
    }

    /// Turns a move request into a script, after checking on a simulated copy
    /// of the module that the path is clear. `None` when the carriage is
    /// already there.
    pub fn move_script(&self, req: &MoveRequest) -> Result<Option<Script>> {
        let layout = self.farm_layout()?;
        let from = match layout.carriages.get(&req.carriage) {
            Some(Location::Cell(c)) => *c,
            Some(other) => {
                return Err(ServerError::validation(format!("carriage {} is not on a shelf ({other:?})", req.carriage)))
            }
            None => return Err(ServerError::not_found(format!("carriage {}", req.carriage))),
        };
        if from == req.to {
            return Ok(None);
        }
        let m = from.module;
        if req.to.module != m {
            return Err(ServerError::validation("carriages cannot change module"));
        }
        let spec = layout.farm.module(m).map_err(|e| ServerError::validation(e.to_string()))?;
        if !spec.contains(req.to.col, req.to.row) {
            return Err(ServerError::validation(format!("{} is outside the module", req.to)));
        }
        let in_module: Vec<(String, CellAddress)> = layout
            .carriages
            .iter()
            .filter_map(|(id, l)| match l {
                Location::Cell(c) if c.module == m => Some((id.clone(), *c)),
                _ => None,
            })
            .collect();
        if let Some((other, _)) = in_module.iter().find(|(_, c)| *c == req.to) {
            return Err(ServerError::new(ErrorCode::Conflict, format!("{} is occupied by {other}", req.to)));
        }
        let devices = layout.devices.get(m).cloned().unwrap_or_default();
        let (Some(mover), Some(elevator)) = (devices.mover, devices.elevator) else {
            return Err(ServerError::validation(format!("module {m} has no mover and elevator assigned")));
        };
        let goal = Goal::MoveOne { carriage: req.carriage.clone(), to: CellAddress { module: 0, ..req.to } };
        let single = macarons_core::farm::FarmSpec::uniform(spec.clone(), 1);
        let mut scenario = Scenario::new(single, goal.clone());
        scenario.carriages = in_module
            .iter()
            .map(|(id, c)| Placement { id: id.clone(), tray_mass: 0.0, cell: CellAddress { module: 0, ..*c } })
            .collect();
        match run_scenario(&scenario) {
            Ok(_) => {}
            Err(ScenarioError::Blocked { carriage, .. }) => {
                return Err(ServerError::new(ErrorCode::Conflict, format!("path blocked by carriage {carriage}")))
            }
            Err(e) => return Err(ServerError::validation(e.to_string())),
        }
        let cells = in_module.iter().map(|(id, c)| (id.clone(), (c.col, c.row))).collect();
        let steps = plan_module(&goal, &cells)
            .iter()
            .map(|a| {
                let (name, args) = action_parts(a);
                let device_id = match a {
                    Action::Mover(_) => mover.clone(),
                    Action::Elevator(_) => elevator.clone(),
                };
                ScriptStep { device_id, command: name.into(), args, wait: WaitFor::Completed }
            })
            .collect();
        Ok(Some(Script { name: format!("move {} to {}", req.carriage, req.to), steps }))
    }

    /// Uploads and runs the script for `req`; `None` for a no-op move.
    pub fn request_move(self: &Arc<Self>, req: &MoveRequest) -> Result<Option<JobRecord>> {
        let Some(script) = self.move_script(req)? else {
            return Ok(None);
        };
        let record = self.upload_script(&script)?;
        self.run_script(&record.script_id).map(Some)
    }

    /// Registers the simulated devices of a farm, one mover and one elevator
    /// per module, and records the layout with carriages in `occupied` cells.
    pub fn seed_farm(
        &self,
        farm: macarons_core::farm::FarmSpec,
        occupied: &[(String, CellAddress)],
        sleep_seconds: f64,
    ) -> Result<FarmLayout> {
        let version = Version::new(1, 0, 0);
        let mut devices = Vec::new();
        for m in 0..farm.n() {
            let mut ids = ModuleDevices::default();
            for kind in [DeviceKind::Mover, DeviceKind::Elevator] {
                let req = RegistrationRequest {
                    kind: kind.clone(),
                    hardware_id: format!("sim-m{m:02}-{kind}"),
                    firmware_version: version.clone(),
                };
                let rec = self.register_device(&req)?;
                let mut cfg = ConfigMap::new();
                cfg.insert(SLEEP_SECONDS.into(), serde_json::json!(sleep_seconds));
                cfg.insert("module".into(), serde_json::json!(m));
                self.set_config(&rec.device_id, &cfg)?;
                match kind {
                    DeviceKind::Mover => ids.mover = Some(rec.device_id),
                    _ => ids.elevator = Some(rec.device_id),
                }
            }
            devices.push(ids);
        }
        let carriages = occupied.iter().map(|(id, c)| (id.clone(), Location::Cell(*c))).collect();
        let layout = FarmLayout { farm, devices, carriages };
        self.set_farm_layout(&layout)?;
        Ok(layout)
    }

    /// The built two-high module with one tray on the bottom shelf, served by
    /// simulated devices `sim-m00-mover` and `sim-m00-elevator`.
    pub fn seed_demo(&self, sleep_seconds: f64) -> Result<FarmLayout> {
        let farm = macarons_core::farm::FarmSpec::uniform(macarons_core::farm::ModuleSpec::default(), 1);
        self.seed_farm(farm, &[("tray-1".to_string(), CellAddress::new(0, 0, 0))], sleep_seconds)
    }

    /// Canonical text of everything that must survive a restart.
    pub fn snapshot(&self) -> Result<String> {
        self.db().snapshot()
    }
}
