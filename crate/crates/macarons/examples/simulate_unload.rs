//! Event simulation of a full unload, compared with the closed form.

use macarons::analytics::closed_form_t_module_exact;
use macarons::exact::{q_int, Q};
use macarons::farm::{FarmSpec, ModuleSpec};
use macarons::sim::{run_scenario, ModulesMode, Scenario};

fn main() {
    let farm = FarmSpec::uniform(ModuleSpec::with_size(3, 4), 2);
    let mut scenario = Scenario::unload_full(farm).with_timing(None, None, Some(q_int(0)));
    for mode in [ModulesMode::Parallel, ModulesMode::Serial] {
        scenario.modules = mode;
        let trace = run_scenario(&scenario).expect("scenario runs");
        println!("{mode:?}: {} events, {} s, trace {}", trace.events.len(), trace.total_time, &trace.hash()[..16]);
    }
    let oracle = closed_form_t_module_exact(3, 4, Q::new(25, 2), Q::new(5000, 333));
    println!("closed form per module: {oracle} s");

    let trace = run_scenario(&scenario).expect("scenario runs");
    for e in trace.events.iter().take(6) {
        println!("  {}", serde_json::to_string(e).expect("events serialise"));
    }
}
