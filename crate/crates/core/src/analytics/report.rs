//! Side-by-side comparison of closed-form, simulated and manual unload times
//! with the labour figures.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    closed_form_t_human, closed_form_t_module, hours_1dp, labour_cost, tray_labour_savings, AnalyticsError, CostModel,
    TimingParams, SAVINGS_FORMULA,
};
use crate::farm::FarmSpec;
use crate::sim::{ModulesMode, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Aligned text for people.
    Table,
    /// One JSON object per line.
    Records,
}

impl FromStr for ReportFormat {
    type Err = AnalyticsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "records" => Ok(ReportFormat::Records),
            other => Err(AnalyticsError::Parse(format!("unknown format {other:?}, expected table or records"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub key: String,
    pub label: String,
    pub value: f64,
    pub unit: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hours: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn row(&self, key: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.key == key)
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Table => self.table(),
            ReportFormat::Records => self.records(),
        }
    }

    fn table(&self) -> String {
        let width = self.rows.iter().map(|r| r.label.chars().count()).max().unwrap_or(0).max(8);
        let mut out = String::new();
        writeln!(out, "{:<width$}  {:>14}  {:<9}  {:>6}", "quantity", "value", "unit", "hours").unwrap();
        for r in &self.rows {
            writeln!(
                out,
                "{:<width$}  {:>14.2}  {:<9}  {:>6}",
                r.label,
                r.value,
                r.unit,
                r.hours.as_deref().unwrap_or("-")
            )
            .unwrap();
        }
        for n in &self.notes {
            writeln!(out, "note: {n}").unwrap();
        }
        out
    }

    fn records(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let mut v = serde_json::to_value(r).expect("row serialises");
            v["record"] = "row".into();
            out.push_str(&v.to_string());
            out.push('\n');
        }
        for n in &self.notes {
            out.push_str(&serde_json::json!({ "record": "note", "text": n }).to_string());
            out.push('\n');
        }
        out
    }
}

fn seconds_row(key: &str, label: &str, seconds: f64) -> ReportRow {
    ReportRow {
        key: key.into(),
        label: label.into(),
        value: seconds,
        unit: "s".into(),
        hours: Some(hours_1dp(seconds)),
    }
}

fn usd_row(key: &str, label: &str, usd: f64) -> ReportRow {
    ReportRow { key: key.into(), label: label.into(), value: usd, unit: "USD/year".into(), hours: None }
}

/// Builds the comparison for `farm`. Traces must come from runs on the same
/// farm; the manual-operation rows appear only when all three scissor-lift
/// timings are given.
pub fn comparison_report(
    farm: &FarmSpec,
    timings: &TimingParams,
    costs: &CostModel,
    traces: &[Trace],
) -> Result<Report, AnalyticsError> {
    timings.validate()?;
    costs.validate()?;
    let digest = farm.digest();
    for (i, t) in traces.iter().enumerate() {
        if t.farm_digest != digest {
            return Err(AnalyticsError::Mismatch(format!(
                "trace {i} was recorded on farm {} but the report is for farm {}",
                short(&t.farm_digest),
                short(&digest)
            )));
        }
    }
    let per_module = farm
        .modules
        .iter()
        .map(|m| closed_form_t_module(m.n_h as u64, m.n_v as u64, timings.t_h_m, timings.t_v_m))
        .collect::<Result<Vec<_>, _>>()?;
    let parallel = per_module.iter().cloned().fold(0.0, f64::max);
    let serial: f64 = per_module.iter().sum();

    let mut rows = vec![
        ReportRow {
            key: "modules".into(),
            label: "modules".into(),
            value: farm.n() as f64,
            unit: "count".into(),
            hours: None,
        },
        seconds_row("t_module_parallel_s", "automated unload, modules in parallel", parallel),
        seconds_row("t_module_serial_s", "automated unload, modules in series", serial),
    ];
    if let Some(human) = timings.human() {
        let mut total = 0.0;
        for m in &farm.modules {
            total += closed_form_t_human(m.n_h as u64, m.n_v as u64, 1, &human)?;
        }
        rows.push(seconds_row("t_human_s", "manual unload, one operator", total));
    }
    for (i, t) in traces.iter().enumerate() {
        let (mode, closed) = match t.modules {
            ModulesMode::Parallel => ("parallel", parallel),
            ModulesMode::Serial => ("serial", serial),
        };
        let sim = t.total_time_s();
        rows.push(seconds_row(&format!("t_simulated_{i}_s"), &format!("simulated unload, trace {i} ({mode})"), sim));
        rows.push(ReportRow {
            key: format!("t_residual_{i}_s"),
            label: format!("simulated minus closed form, trace {i}"),
            value: sim - closed,
            unit: "s".into(),
            hours: None,
        });
    }
    let cost = labour_cost(costs);
    let savings = tray_labour_savings(costs);
    rows.push(usd_row("labour_cost_usd", "labour cost", cost));
    rows.push(usd_row("tray_labour_savings_usd", "tray labour savings", savings));

    let mut notes = vec![format!("savings = {SAVINGS_FORMULA}")];
    if let Some(reference) = costs.reference_savings {
        rows.push(usd_row("reference_savings_usd", "reference savings figure", reference));
        let gap = (reference - savings) / reference * 100.0;
        notes.push(format!(
            "computed savings {savings:.2} USD/year differ from the reference {reference:.2} USD/year by {:.1}%",
            gap.abs()
        ));
    }
    Ok(Report { rows, notes })
}

fn short(digest: &str) -> &str {
    &digest[..digest.len().min(12)]
}

impl TimingParams {
    pub fn from_toml(text: &str) -> Result<Self, AnalyticsError> {
        toml::from_str(text).map_err(|e| AnalyticsError::Parse(format!("timings file: {e}")))
    }
}

impl CostModel {
    pub fn from_toml(text: &str) -> Result<Self, AnalyticsError> {
        toml::from_str(text).map_err(|e| AnalyticsError::Parse(format!("costs file: {e}")))
    }
}
