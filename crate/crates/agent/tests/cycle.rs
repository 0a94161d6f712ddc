use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use macarons_agent::{
    plant_from_layout, AgentConfig, DeviceAgent, DeviceApi, HttpLink, LinkError, Plant, VirtualClock,
};
use macarons_core::farm::{CellAddress, FarmSpec, Location, ModuleSpec};
use macarons_core::protocol::{
    BundleFile, Command, CommandResult, ConfigMap, DeviceCyclePhase, DeviceKind, DeviceRecord, FarmLayout, JobStatus,
    MoveRequest, Reading, RegistrationRequest, UpdateBundle,
};
use macarons_server::{ControlServer, ServerOptions, ServerThread};
use semver::Version;

use DeviceCyclePhase::*;

fn fast(kind: DeviceKind, hw: &str) -> AgentConfig {
    let mut c = AgentConfig::new(kind, hw);
    c.command_hold = Duration::from_millis(100);
    c
}

fn empty_plant() -> Plant {
    let farm = FarmSpec::uniform(ModuleSpec::default(), 1);
    plant_from_layout(&FarmLayout { farm, devices: vec![], carriages: BTreeMap::new() }, 0).unwrap()
}

fn agent(base: &str, kind: DeviceKind, hw: &str) -> DeviceAgent {
    DeviceAgent::new(
        fast(kind, hw),
        Arc::new(HttpLink::new(base).unwrap()),
        Arc::new(VirtualClock::starting_at(1_000.0)),
        empty_plant(),
    )
}

fn bundle(v: Version) -> UpdateBundle {
    UpdateBundle::new(v, vec![BundleFile { path: "main.py".into(), bytes: b"run()".to_vec() }])
}

#[test]
fn update_staged_during_sleep_installs_at_next_pre_update() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("db");
    let server = ServerThread::start(&db, "127.0.0.1:0", ServerOptions::default()).unwrap();
    let mut a = agent(&server.base_url(), DeviceKind::Mover, "hw-upd");

    let first = a.run_cycle();
    assert_eq!(first.phase_names(), [Wake, PreUpdate, RunMain, PostUpdate, DeepSleep]);
    assert!(first.installs.is_empty());
    assert_eq!(first.version_at_run_main, Version::new(1, 0, 0));
    let id = first.device_id.clone().unwrap();

    // Staged while the agent is in deep sleep.
    let control = ControlServer::open(&db, ServerOptions::default()).unwrap();
    control.stage_update(&id, &bundle(Version::new(1, 1, 0))).unwrap();
    drop(control);

    let second = a.run_cycle();
    assert_eq!(second.installed_in(PreUpdate), Some(&Version::new(1, 1, 0)));
    assert_eq!(second.version_at_run_main, Version::new(1, 1, 0));
    assert!(second.link_errors.is_empty(), "{:?}", second.link_errors);
    assert_eq!(a.files()["main.py"], b"run()");

    let http = HttpLink::new(server.base_url()).unwrap();
    let rec = http.register(&RegistrationRequest {
        kind: DeviceKind::Mover,
        hardware_id: "hw-upd".into(),
        firmware_version: Version::new(1, 0, 0),
    });
    assert_eq!(rec.unwrap().installed_version, Version::new(1, 1, 0));
}

#[test]
fn cycle_completes_after_the_server_is_killed() {
    let dir = tempfile::tempdir().unwrap();
    let server = ServerThread::start(dir.path().join("db"), "127.0.0.1:0", ServerOptions::default()).unwrap();
    let mut a = agent(&server.base_url(), DeviceKind::Elevator, "hw-kill");
    assert!(a.run_cycle().link_errors.is_empty());
    server.kill();
    let report = a.run_cycle();
    assert_eq!(report.phase_names(), [Wake, PreUpdate, RunMain, PostUpdate, DeepSleep]);
    assert!(report.commands.is_empty());
    assert!(!report.link_errors.is_empty());
    assert!(report.slept_s > 0.0);
    let times: Vec<f64> = report.phases.iter().map(|p| p.at).collect();
    assert!(times.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn cycle_completes_when_the_server_was_never_there() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let mut a = agent(&format!("http://{addr}"), DeviceKind::Mover, "hw-none");
    let report = a.run_cycle();
    assert_eq!(report.phases.len(), 5);
    assert_eq!(report.device_id, None);
    assert_eq!(report.slept_s, 60.0);
}

/// Runs cycles until `stop` is set.
fn spawn_agent(mut a: DeviceAgent, stop: Arc<AtomicBool>) -> std::thread::JoinHandle<usize> {
    std::thread::spawn(move || {
        let mut executed = 0;
        while !stop.load(Ordering::Relaxed) {
            executed += a.run_cycle().commands.len();
        }
        executed
    })
}

#[test]
fn tray_move_between_rows_through_the_server() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("db");
    {
        let s = ControlServer::open(&db, ServerOptions::default()).unwrap();
        let farm = FarmSpec::uniform(ModuleSpec::default(), 1);
        s.seed_farm(farm, &[("tray-a".into(), CellAddress::new(0, 0, 0))], 1.0).unwrap();
    }
    let server = ServerThread::start(&db, "127.0.0.1:0", ServerOptions::default()).unwrap();
    let link = Arc::new(HttpLink::new(server.base_url()).unwrap());
    let layout = link.farm_layout().unwrap();
    let plant = plant_from_layout(&layout, 0).unwrap();
    let clock = Arc::new(VirtualClock::default());
    let stop = Arc::new(AtomicBool::new(false));
    let handles: Vec<_> = [DeviceKind::Mover, DeviceKind::Elevator]
        .into_iter()
        .map(|k| {
            let a = DeviceAgent::new(
                AgentConfig { command_hold: Duration::from_millis(100), ..AgentConfig::simulated(k, 0) },
                link.clone(),
                clock.clone(),
                plant.clone(),
            );
            spawn_agent(a, stop.clone())
        })
        .collect();

    let control = reqwest::blocking::Client::new();
    let req = macarons_core::protocol::Message::MoveRequest(MoveRequest {
        carriage: "tray-a".into(),
        to: CellAddress::new(0, 0, 1),
    });
    let body = control
        .post(format!("{}/api/farm/moves", server.base_url()))
        .body(macarons_core::protocol::encode(&req))
        .send()
        .unwrap()
        .bytes()
        .unwrap();
    let macarons_core::protocol::Message::Job(job) = macarons_core::protocol::decode(&body).unwrap() else { panic!() };

    let deadline = Instant::now() + Duration::from_secs(30);
    let mut status = job.status;
    while !status.is_terminal() && Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(50));
        let b = control.get(format!("{}/api/jobs/{}", server.base_url(), job.job_id)).send().unwrap().bytes().unwrap();
        let macarons_core::protocol::Message::Job(j) = macarons_core::protocol::decode(&b).unwrap() else { panic!() };
        status = j.status;
    }
    stop.store(true, Ordering::Relaxed);
    let executed: usize = handles.into_iter().map(|h| h.join().unwrap()).sum();
    assert_eq!(status, JobStatus::Succeeded);
    assert_eq!(executed, job.steps.len());
    assert_eq!(link.farm_layout().unwrap().carriages["tray-a"], Location::Cell(CellAddress::new(0, 0, 1)));
    let world = plant.lock().unwrap();
    assert_eq!(world.cells.get(&(1, 0)).map(String::as_str), Some("tray-a"));
    world.check_invariants().unwrap();
}

/// Offers one tampered bundle and records acknowledgements.
struct Tampered {
    acks: Mutex<Vec<Version>>,
}

impl DeviceApi for Tampered {
    fn register(&self, req: &RegistrationRequest) -> Result<DeviceRecord, LinkError> {
        Ok(DeviceRecord {
            device_id: "mover-0001".into(),
            kind: req.kind.clone(),
            hardware_id: req.hardware_id.clone(),
            registered_at: 0.0,
            config: ConfigMap::new(),
            staged_update: None,
            installed_version: req.firmware_version.clone(),
            last_seen: 0.0,
            last_phase: None,
            supported_by_ui: true,
        })
    }
    fn poll_update(&self, _: &str, _: DeviceCyclePhase) -> Result<Option<UpdateBundle>, LinkError> {
        let mut b = bundle(Version::new(9, 0, 0));
        b.files[0].bytes.push(0);
        Ok(Some(b))
    }
    fn ack_update(&self, _: &str, v: &Version) -> Result<(), LinkError> {
        self.acks.lock().unwrap().push(v.clone());
        Ok(())
    }
    fn config(&self, _: &str) -> Result<ConfigMap, LinkError> {
        Ok(ConfigMap::new())
    }
    fn poll_command(&self, _: &str, _: Duration) -> Result<Option<Command>, LinkError> {
        Ok(None)
    }
    fn post_result(&self, _: &CommandResult) -> Result<(), LinkError> {
        Ok(())
    }
    fn push_readings(&self, _: &str, _: &[Reading]) -> Result<(), LinkError> {
        Ok(())
    }
    fn farm_layout(&self) -> Result<FarmLayout, LinkError> {
        Err(LinkError::Unreachable("none".into()))
    }
}

#[test]
fn corrupt_bundles_are_not_installed_or_acknowledged() {
    let api = Arc::new(Tampered { acks: Mutex::new(vec![]) });
    let mut a =
        DeviceAgent::new(fast(DeviceKind::Mover, "hw"), api.clone(), Arc::new(VirtualClock::default()), empty_plant());
    let report = a.run_cycle();
    assert!(report.installs.is_empty());
    assert_eq!(a.version(), &Version::new(1, 0, 0));
    assert!(api.acks.lock().unwrap().is_empty());
    assert_eq!(report.link_errors.len(), 2);
}

#[test]
fn plant_mirrors_the_layout() {
    let farm = FarmSpec::uniform(ModuleSpec::with_size(2, 2), 2);
    let mut carriages = BTreeMap::new();
    carriages.insert("a".to_string(), Location::Cell(CellAddress::new(1, 1, 0)));
    carriages.insert("b".to_string(), Location::Cell(CellAddress::new(0, 0, 1)));
    carriages.insert("c".to_string(), Location::Station { module: 1 });
    let plant = plant_from_layout(&FarmLayout { farm, devices: vec![], carriages }, 1).unwrap();
    let w = plant.lock().unwrap();
    assert_eq!(w.cells.len(), 1);
    assert_eq!(w.cells[&(0, 1)], "a");
    assert_eq!(w.station, ["c"]);
}
