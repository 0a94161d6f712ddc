use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand};

use macarons::agent::{
    plant_from_layout, AgentConfig, Clock, DeviceAgent, DeviceApi, HttpLink, Plant, SystemClock, VirtualClock,
};
use macarons::analytics::{comparison_report, CostModel, ReportFormat, TimingParams};
use macarons::farm::{FarmSpec, ModuleSpec};
use macarons::protocol::{DeviceKind, FarmLayout};
use macarons::server::{ControlServer, ServerOptions};
use macarons::sim::{run_scenario, ModulesMode, Scenario, Trace};

#[derive(Parser)]
#[command(name = "macarons", version, about = "Automated tray handling for modular vertical farms")]
struct Cli {
    #[command(subcommand)]
    command: Top,
}

#[derive(Subcommand)]
enum Top {
    /// Control server.
    #[command(subcommand)]
    Server(ServerCmd),
    /// Simulated device firmware.
    #[command(subcommand)]
    Agent(AgentCmd),
    /// Offline farm simulation.
    #[command(subcommand)]
    Sim(SimCmd),
    /// Closed-form analysis and reports.
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
}

#[derive(Args)]
struct DbArg {
    /// SQLite database file.
    #[arg(long, env = "MACARONS_DB", default_value = "macarons.db")]
    db: PathBuf,
}

#[derive(Subcommand)]
enum ServerCmd {
    /// Serve the HTTP API.
    Serve {
        #[command(flatten)]
        db: DbArg,
        #[arg(long, env = "MACARONS_LISTEN", default_value = "127.0.0.1:8080")]
        listen: String,
        /// Fixed script step timeout in seconds instead of twice the device sleep.
        #[arg(long)]
        step_timeout: Option<f64>,
    },
    /// Register a simulated two-high module with one tray.
    SeedDemo {
        #[command(flatten)]
        db: DbArg,
        /// Deep-sleep period configured on the simulated devices.
        #[arg(long, default_value_t = 5.0)]
        sleep_seconds: f64,
    },
}

#[derive(Subcommand)]
enum AgentCmd {
    /// Run device cycles against a server.
    Run {
        /// mover or elevator; repeat to run both on one shared module.
        #[arg(long = "kind", required = true, action = ArgAction::Append)]
        kinds: Vec<String>,
        #[arg(long, env = "MACARONS_SERVER", default_value = "http://127.0.0.1:8080")]
        server: String,
        #[arg(long, default_value_t = 0)]
        module: usize,
        /// Sleep and move in wall-clock time (the default).
        #[arg(long, conflicts_with = "sim_clock")]
        realtime: bool,
        /// Sleep and move in simulated time; cycles run back to back.
        #[arg(long)]
        sim_clock: bool,
        /// Stop after this many cycles per device.
        #[arg(long)]
        cycles: Option<usize>,
    },
}

#[derive(Subcommand)]
enum SimCmd {
    /// Run a scenario file and write its trace.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        trace_out: PathBuf,
        /// Override the scenario's module mode.
        #[arg(long, value_parser = parse_modules)]
        modules: Option<ModulesMode>,
    },
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    /// Compare closed-form, simulated and manual unload times and costs.
    Report {
        #[arg(long)]
        farm: PathBuf,
        #[arg(long)]
        timings: Option<PathBuf>,
        #[arg(long)]
        costs: Option<PathBuf>,
        /// Trace files from `sim run` on the same farm.
        #[arg(long = "trace", action = ArgAction::Append)]
        traces: Vec<PathBuf>,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "table")]
        format: ReportFormat,
    },
}

fn parse_modules(s: &str) -> Result<ModulesMode, String> {
    match s {
        "parallel" => Ok(ModulesMode::Parallel),
        "serial" => Ok(ModulesMode::Serial),
        other => Err(format!("expected parallel or serial, got {other}")),
    }
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Top::Server(cmd) => server(cmd),
        Top::Agent(AgentCmd::Run { kinds, server, module, realtime: _, sim_clock, cycles }) => {
            agent(&kinds, &server, module, sim_clock, cycles)
        }
        Top::Sim(SimCmd::Run { scenario, trace_out, modules }) => sim(&scenario, &trace_out, modules),
        Top::Analyze(AnalyzeCmd::Report { farm, timings, costs, traces, out, format }) => {
            analyze(&farm, timings, costs, &traces, out, format)
        }
    }
}

fn server(cmd: ServerCmd) -> Result<()> {
    match cmd {
        ServerCmd::Serve { db, listen, step_timeout } => {
            let options =
                ServerOptions { step_timeout: step_timeout.map(Duration::from_secs_f64), ..ServerOptions::default() };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let control = ControlServer::open(&db.db, options)?;
                let listener =
                    tokio::net::TcpListener::bind(&listen).await.with_context(|| format!("binding {listen}"))?;
                eprintln!("serving on http://{} with database {}", listener.local_addr()?, db.db.display());
                tokio::select! {
                    r = macarons::server::serve(control, listener) => r?,
                    _ = tokio::signal::ctrl_c() => eprintln!("shutting down"),
                }
                Ok(())
            })
        }
        ServerCmd::SeedDemo { db, sleep_seconds } => {
            let rt = tokio::runtime::Runtime::new()?;
            let layout =
                rt.block_on(async { ControlServer::open(&db.db, ServerOptions::default())?.seed_demo(sleep_seconds) })?;
            for (m, d) in layout.devices.iter().enumerate() {
                println!(
                    "module {m}: mover {} elevator {}",
                    d.mover.as_deref().unwrap_or("-"),
                    d.elevator.as_deref().unwrap_or("-")
                );
            }
            for (id, loc) in &layout.carriages {
                println!("{id}: {}", serde_json::to_string(loc)?);
            }
            Ok(())
        }
    }
}

fn kind(name: &str) -> Result<DeviceKind> {
    match DeviceKind::from(name) {
        DeviceKind::Other(k) => bail!("unknown device kind `{k}`; expected mover or elevator"),
        k => Ok(k),
    }
}

fn agent(kinds: &[String], server: &str, module: usize, sim_clock: bool, cycles: Option<usize>) -> Result<()> {
    let kinds = kinds.iter().map(|k| kind(k)).collect::<Result<Vec<_>>>()?;
    let link = Arc::new(HttpLink::new(server)?);
    let clock: Arc<dyn Clock> = if sim_clock { Arc::new(VirtualClock::default()) } else { Arc::new(SystemClock) };
    let plant: Plant = match link.farm_layout() {
        Ok(layout) => plant_from_layout(&layout, module)?,
        Err(e) => {
            eprintln!("no farm layout from the server ({e}); starting with an empty module");
            let farm = FarmSpec::uniform(ModuleSpec::default(), module + 1);
            plant_from_layout(&FarmLayout { farm, devices: vec![], carriages: Default::default() }, module)?
        }
    };
    let threads: Vec<_> = kinds
        .into_iter()
        .map(|k| {
            let mut a = DeviceAgent::new(AgentConfig::simulated(k, module), link.clone(), clock.clone(), plant.clone());
            std::thread::spawn(move || {
                let mut n = 0;
                while cycles.is_none_or(|c| n < c) {
                    let report = a.run_cycle();
                    println!("{}", serde_json::to_string(&report).expect("reports serialise"));
                    n += 1;
                }
            })
        })
        .collect();
    for t in threads {
        t.join().map_err(|_| anyhow::anyhow!("agent thread panicked"))?;
    }
    Ok(())
}

fn sim(scenario: &PathBuf, trace_out: &PathBuf, modules: Option<ModulesMode>) -> Result<()> {
    let mut s = Scenario::load(scenario)?;
    if let Some(m) = modules {
        s.modules = m;
    }
    let trace = run_scenario(&s)?;
    std::fs::write(trace_out, trace.to_jsonl()).with_context(|| format!("writing {}", trace_out.display()))?;
    println!(
        "{}: {} events, total {:.4} s ({:.2} h), trace sha256 {}",
        s.name.as_deref().unwrap_or("scenario"),
        trace.events.len(),
        trace.total_time_s(),
        trace.total_time_s() / 3600.0,
        trace.hash()
    );
    Ok(())
}

fn analyze(
    farm: &PathBuf,
    timings: Option<PathBuf>,
    costs: Option<PathBuf>,
    traces: &[PathBuf],
    out: Option<PathBuf>,
    format: ReportFormat,
) -> Result<()> {
    let farm = FarmSpec::load(farm)?;
    let timings = match timings {
        Some(p) => TimingParams::from_toml(&std::fs::read_to_string(p)?)?,
        None => TimingParams::default(),
    };
    let costs = match costs {
        Some(p) => CostModel::from_toml(&std::fs::read_to_string(p)?)?,
        None => CostModel::default(),
    };
    let traces =
        traces.iter().map(|p| Ok(Trace::from_jsonl(&std::fs::read_to_string(p)?)?)).collect::<Result<Vec<_>>>()?;
    let text = comparison_report(&farm, &timings, &costs, &traces)?.render(format);
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}
