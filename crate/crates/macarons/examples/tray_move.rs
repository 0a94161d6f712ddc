//! Starts a control server, attaches a simulated mover and elevator, and
//! moves a tray from the bottom row to the top row of the built module.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use macarons::agent::{plant_from_layout, AgentConfig, DeviceAgent, DeviceApi, HttpLink, VirtualClock};
use macarons::farm::{CellAddress, FarmSpec, ModuleSpec};
use macarons::protocol::{decode, encode, DeviceKind, Message, MoveRequest};
use macarons::server::{ControlServer, ServerOptions, ServerThread};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let db = dir.path().join("farm.db");
    ControlServer::open(&db, ServerOptions::default())?.seed_farm(
        FarmSpec::uniform(ModuleSpec::default(), 1),
        &[("tray-1".into(), CellAddress::new(0, 0, 0))],
        1.0,
    )?;
    let server = ServerThread::start(&db, "127.0.0.1:0", ServerOptions::default())?;
    println!("server at {}", server.base_url());

    let link = Arc::new(HttpLink::new(server.base_url())?);
    let plant = plant_from_layout(&link.farm_layout()?, 0)?;
    let clock = Arc::new(VirtualClock::default());
    let stop = Arc::new(AtomicBool::new(false));
    let agents: Vec<_> = [DeviceKind::Mover, DeviceKind::Elevator]
        .into_iter()
        .map(|kind| {
            let config = AgentConfig { command_hold: Duration::from_millis(100), ..AgentConfig::simulated(kind, 0) };
            let mut agent = DeviceAgent::new(config, link.clone(), clock.clone(), plant.clone());
            let stop = stop.clone();
            std::thread::spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    for c in agent.run_cycle().commands {
                        println!("  {c:?}");
                    }
                }
            })
        })
        .collect();

    let client = reqwest::blocking::Client::new();
    let request = Message::MoveRequest(MoveRequest { carriage: "tray-1".into(), to: CellAddress::new(0, 0, 1) });
    let body = client.post(format!("{}/api/farm/moves", server.base_url())).body(encode(&request)).send()?.bytes()?;
    let Message::Job(job) = decode(&body)? else { anyhow::bail!("unexpected reply") };
    println!("{} queued with {} steps", job.job_id, job.steps.len());

    let url = format!("{}/api/jobs/{}", server.base_url(), job.job_id);
    let job = loop {
        std::thread::sleep(Duration::from_millis(100));
        let body = client.get(&url).send()?.bytes()?;
        if let Message::Job(j) = decode(&body)? {
            if j.status.is_terminal() {
                break j;
            }
        }
    };
    stop.store(true, Ordering::Relaxed);
    for a in agents {
        a.join().expect("agent thread");
    }
    println!("{} {:?}; tray-1 now at {:?}", job.job_id, job.status, link.farm_layout()?.carriages["tray-1"]);
    Ok(())
}
