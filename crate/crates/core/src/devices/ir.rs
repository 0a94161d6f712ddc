//! Elevator IR sensor calibration.
//!
//! The sensor is mounted on an adjustable slide. It is correctly placed when
//! it sits on the verge of triggering with platform and shelf aligned; the
//! search for that point is a bisection over the mount offset.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrCalibration {
    /// Mount offset, mm.
    pub offset: f64,
    /// Acceptable distance between `offset` and the true trigger boundary, mm.
    pub tolerance: f64,
}

impl Default for IrCalibration {
    fn default() -> Self {
        IrCalibration { offset: 0.0, tolerance: 0.1 }
    }
}

impl IrCalibration {
    pub fn is_calibrated(&self, true_boundary: f64) -> bool {
        (self.offset - true_boundary).abs() <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IrError {
    #[error("calibration failed: probe reads {reading} at both ends of [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64, reading: bool },
    #[error("tolerance and bracket must be positive")]
    BadParameters,
}

/// Upper bound on probe calls, whatever the tolerance.
const MAX_PROBES: u32 = 64;

/// Finds the trigger boundary of `probe` inside `initial.offset ± half_width`.
///
/// `probe(offset)` reports whether the sensor triggers with the mount at
/// `offset`. The returned offset is within `initial.tolerance / 2` of the
/// boundary.
pub fn calibrate_ir(
    initial: &IrCalibration,
    half_width: f64,
    mut probe: impl FnMut(f64) -> bool,
) -> Result<IrCalibration, IrError> {
    if !(initial.tolerance > 0.0 && half_width > 0.0) {
        return Err(IrError::BadParameters);
    }
    let (mut lo, mut hi) = (initial.offset - half_width, initial.offset + half_width);
    let at_lo = probe(lo);
    let at_hi = probe(hi);
    if at_lo == at_hi {
        return Err(IrError::NoSignChange { lo, hi, reading: at_lo });
    }
    let mut probes = 2;
    while hi - lo > initial.tolerance && probes < MAX_PROBES {
        let mid = 0.5 * (lo + hi);
        if probe(mid) == at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
        probes += 1;
    }
    Ok(IrCalibration { offset: 0.5 * (lo + hi), tolerance: initial.tolerance })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Linear scan oracle: first 0.01 mm step where the reading flips.
    fn scan_boundary(lo: f64, hi: f64, probe: impl Fn(f64) -> bool) -> f64 {
        let start = probe(lo);
        let steps = ((hi - lo) / 0.01).round() as i64;
        (0..=steps).map(|i| lo + i as f64 * 0.01).find(|x| probe(*x) != start).expect("sign change")
    }

    #[test]
    fn finds_offset_boundary_within_tolerance() {
        let sensor = |x: f64| x >= 3.0;
        let mut calls = 0;
        let cal = calibrate_ir(&IrCalibration::default(), 50.0, |x| {
            calls += 1;
            sensor(x)
        })
        .unwrap();
        assert!((2.9..=3.1).contains(&cal.offset), "{}", cal.offset);
        assert!(calls <= 20, "{calls} probes");
        let oracle = scan_boundary(-50.0, 50.0, sensor);
        assert!((cal.offset - oracle).abs() <= 0.1);
        assert!(cal.is_calibrated(3.0));
    }

    #[test]
    fn symmetric_boundary() {
        let cal = calibrate_ir(&IrCalibration::default(), 50.0, |x| x > 0.0).unwrap();
        assert!(cal.offset.abs() <= 0.1);
    }

    #[test]
    fn inverted_sensor_polarity() {
        let cal = calibrate_ir(&IrCalibration::default(), 50.0, |x| x < -12.34).unwrap();
        assert!((cal.offset + 12.34).abs() <= 0.05);
    }

    #[test]
    fn constant_probe_fails() {
        let err = calibrate_ir(&IrCalibration::default(), 50.0, |_| false).unwrap_err();
        assert!(matches!(err, IrError::NoSignChange { reading: false, .. }));
    }

    #[test]
    fn rejects_degenerate_parameters() {
        let bad = IrCalibration { offset: 0.0, tolerance: 0.0 };
        assert_eq!(calibrate_ir(&bad, 50.0, |x| x > 0.0), Err(IrError::BadParameters));
    }
}
