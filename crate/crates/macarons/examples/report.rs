//! Comparison report for ten 10x10 modules with a simulated trace attached.

use macarons::analytics::{comparison_report, CostModel, ReportFormat, TimingParams};
use macarons::farm::{FarmSpec, ModuleSpec};
use macarons::sim::{run_scenario, Scenario};

fn main() {
    let farm = FarmSpec::uniform(ModuleSpec::with_size(10, 10), 10);
    let trace = run_scenario(&Scenario::unload_full(farm.clone())).expect("scenario runs");
    let report = comparison_report(&farm, &TimingParams::default(), &CostModel::default(), &[trace]).expect("report");
    print!("{}", report.render(ReportFormat::Table));
}
