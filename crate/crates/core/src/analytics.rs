//! Closed-form unload times and labour-cost figures.

use serde::{Deserialize, Serialize};

use crate::exact::{q_int, Q};

pub mod report;

pub use report::{comparison_report, Report, ReportFormat, ReportRow};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalyticsError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("trace does not belong to this farm: {0}")]
    Mismatch(String),
    #[error("{0}")]
    Parse(String),
}

/// Per-unit move times. The mover/elevator pair is required; the scissor-lift
/// and manual-lift times are only needed for the human comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingParams {
    /// Mover, seconds per grow unit.
    pub t_h_m: f64,
    /// Elevator, seconds per shelf.
    pub t_v_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_h_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_v_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_m: Option<f64>,
}

impl Default for TimingParams {
    /// Default pitches at default speeds, plus the scissor-lift baseline.
    fn default() -> Self {
        TimingParams {
            t_h_m: 1250.0 / 100.0,
            t_v_m: 500.0 / 33.3,
            t_h_s: Some(10.0),
            t_v_s: Some(6.0),
            t_m: Some(15.0),
        }
    }
}

impl TimingParams {
    pub fn human(&self) -> Option<HumanTimings> {
        Some(HumanTimings { t_h_s: self.t_h_s?, t_v_s: self.t_v_s?, t_m: self.t_m? })
    }

    pub fn validate(&self) -> Result<(), AnalyticsError> {
        let all = [Some(self.t_h_m), Some(self.t_v_m), self.t_h_s, self.t_v_s, self.t_m];
        if all.iter().flatten().all(|t| *t > 0.0 && t.is_finite()) {
            Ok(())
        } else {
            Err(AnalyticsError::Invalid("all timings must be positive".into()))
        }
    }
}

/// Scissor-lift operator timings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanTimings {
    pub t_h_s: f64,
    pub t_v_s: f64,
    pub t_m: f64,
}

impl Default for HumanTimings {
    fn default() -> Self {
        HumanTimings { t_h_s: 10.0, t_v_s: 6.0, t_m: 15.0 }
    }
}

fn check_counts(counts: &[u64]) -> Result<(), AnalyticsError> {
    if counts.iter().all(|c| *c >= 1) {
        Ok(())
    } else {
        Err(AnalyticsError::Invalid("counts must be at least 1".into()))
    }
}

fn check_times(times: &[f64]) -> Result<(), AnalyticsError> {
    if times.iter().all(|t| *t > 0.0 && t.is_finite()) {
        Ok(())
    } else {
        Err(AnalyticsError::Invalid("times must be positive".into()))
    }
}

/// Sequential unload time of one `n_h` x `n_v` module:
/// `n_h n_v ((n_h + 1) t_h + (n_v + 1) t_v)`.
pub fn closed_form_t_module(n_h: u64, n_v: u64, t_h: f64, t_v: f64) -> Result<f64, AnalyticsError> {
    check_counts(&[n_h, n_v])?;
    check_times(&[t_h, t_v])?;
    let (h, v) = (n_h as f64, n_v as f64);
    Ok(h * v * ((h + 1.0) * t_h + (v + 1.0) * t_v))
}

/// [`closed_form_t_module`] in exact arithmetic.
pub fn closed_form_t_module_exact(n_h: u64, n_v: u64, t_h: Q, t_v: Q) -> Q {
    let (h, v) = (q_int(n_h as i64), q_int(n_v as i64));
    let one = q_int(1);
    h * v * ((h + one) * t_h + (v + one) * t_v)
}

/// Scissor-lift unload time of `n_modules` comparable shelves:
/// `(2 n_v n_h t_v + n_v n_h t_m + n_h (n_h + 1) t_h) N`.
pub fn closed_form_t_human(n_h: u64, n_v: u64, n_modules: u64, human: &HumanTimings) -> Result<f64, AnalyticsError> {
    check_counts(&[n_h, n_v, n_modules])?;
    check_times(&[human.t_h_s, human.t_v_s, human.t_m])?;
    let (h, v, n) = (n_h as f64, n_v as f64, n_modules as f64);
    Ok((2.0 * v * h * human.t_v_s + v * h * human.t_m + h * (h + 1.0) * human.t_h_s) * n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// USD per m² per year.
    pub labour_rate: f64,
    /// Share of labour spent moving trays.
    pub tray_labour_fraction: f64,
    /// Share of operating cost that is labour.
    pub labour_cost_share: f64,
    /// m²
    pub grow_area: f64,
    /// Externally quoted savings figure to compare against, USD/year.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_savings: Option<f64>,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            labour_rate: 222.18,
            tray_labour_fraction: 0.15,
            labour_cost_share: 0.56,
            grow_area: 217.5,
            reference_savings: Some(4110.0),
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<(), AnalyticsError> {
        let frac = |x: f64| x > 0.0 && x <= 1.0;
        if !frac(self.tray_labour_fraction) || !frac(self.labour_cost_share) {
            return Err(AnalyticsError::Invalid("fractions must lie in (0, 1]".into()));
        }
        if !(self.labour_rate > 0.0 && self.grow_area > 0.0) {
            return Err(AnalyticsError::Invalid("rate and area must be positive".into()));
        }
        Ok(())
    }
}

/// Annual labour cost: area times rate.
pub fn labour_cost(model: &CostModel) -> f64 {
    model.grow_area * model.labour_rate
}

/// Formula used by [`tray_labour_savings`], printed next to its result.
pub const SAVINGS_FORMULA: &str = "labour_cost × tray_labour_fraction × labour_cost_share";

/// Annual saving from automating tray movement.
pub fn tray_labour_savings(model: &CostModel) -> f64 {
    labour_cost(model) * model.tray_labour_fraction * model.labour_cost_share
}

pub fn hours(seconds: f64) -> f64 {
    seconds / 3600.0
}

/// Hours rounded to one decimal place, as reported.
pub fn hours_1dp(seconds: f64) -> String {
    format!("{:.1}", hours(seconds))
}
