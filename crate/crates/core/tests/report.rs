use macarons_core::analytics::{comparison_report, CostModel, ReportFormat, TimingParams};
use macarons_core::exact::Q;
use macarons_core::farm::{FarmSpec, ModuleSpec};
use macarons_core::sim::{run_scenario, Scenario};

fn big_farm() -> FarmSpec {
    FarmSpec::uniform(ModuleSpec::with_size(10, 10), 10)
}

#[test]
fn ten_module_report_contains_headline_rows() {
    let r = comparison_report(&big_farm(), &TimingParams::default(), &CostModel::default(), &[]).unwrap();
    let h = r.row("t_module_parallel_s").unwrap().hours.clone().unwrap();
    assert!(h == "8.3" || h == "8.4", "{h}");
    assert_eq!(r.row("t_human_s").unwrap().hours.as_deref(), Some("10.6"));
    assert!((r.row("labour_cost_usd").unwrap().value - 48_324.15).abs() < 0.01);
    assert!((r.row("tray_labour_savings_usd").unwrap().value - 4_059.23).abs() < 0.01);
    let table = r.render(ReportFormat::Table);
    assert!(table.contains("labour_cost × tray_labour_fraction × labour_cost_share"));
    assert!(table.contains("by 1.2%"), "{table}");
}

#[test]
fn manual_rows_are_omitted_without_scissor_timings() {
    let timings = TimingParams { t_h_s: None, t_v_s: None, t_m: None, ..TimingParams::default() };
    let farm = FarmSpec::uniform(ModuleSpec::default(), 1);
    let r = comparison_report(&farm, &timings, &CostModel::default(), &[]).unwrap();
    assert!(r.row("t_human_s").is_none());
    assert!(!r.render(ReportFormat::Table).contains("manual"));
}

#[test]
fn rendering_is_byte_stable() {
    let a = comparison_report(&big_farm(), &TimingParams::default(), &CostModel::default(), &[]).unwrap();
    let b = comparison_report(&big_farm(), &TimingParams::default(), &CostModel::default(), &[]).unwrap();
    for f in [ReportFormat::Table, ReportFormat::Records] {
        assert_eq!(a.render(f).as_bytes(), b.render(f).as_bytes());
    }
    for line in a.render(ReportFormat::Records).lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["record"] == "row" || v["record"] == "note");
    }
}

#[test]
fn simulated_rows_show_the_latch_residual() {
    let farm = FarmSpec::uniform(ModuleSpec::with_size(2, 2), 1);
    let trace = run_scenario(&Scenario::unload_full(farm.clone())).unwrap();
    let timings = TimingParams { t_h_m: 12.5, t_v_m: 500.0 / 33.3, ..TimingParams::default() };
    let r = comparison_report(&farm, &timings, &CostModel::default(), &[trace]).unwrap();
    // Four carriages, 2 s latch each.
    assert!((r.row("t_residual_0_s").unwrap().value - 8.0).abs() < 1e-6);
}

#[test]
fn traces_from_another_farm_are_rejected() {
    let farm = FarmSpec::uniform(ModuleSpec::with_size(2, 2), 1);
    let other = FarmSpec::uniform(ModuleSpec::with_size(3, 2), 1);
    let s = Scenario::unload_full(other).with_timing(None, None, Some(Q::from_integer(0)));
    let trace = run_scenario(&s).unwrap();
    let err = comparison_report(&farm, &TimingParams::default(), &CostModel::default(), &[trace]).unwrap_err();
    assert!(err.to_string().contains("does not belong"));
}
