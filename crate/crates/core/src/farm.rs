//! Static farm model: module geometry, cell addressing, carriages and the
//! limits a module specification is validated against.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::exact::{q_from_f64, Q};

#[derive(Debug, thiserror::Error)]
pub enum FarmError {
    #[error("cell {addr} is outside a {n_h}x{n_v} module")]
    Address { addr: CellAddress, n_h: u32, n_v: u32 },
    #[error("module index {module} is outside a farm of {count} modules")]
    Module { module: usize, count: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("farm spec is invalid: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("farm file: {0}")]
    Io(#[from] std::io::Error),
    #[error("farm file: {0}")]
    Parse(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Geometry, capacity and kinematics of one module. Fields missing from a
/// file take the built module's values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModuleSpec {
    /// Grow units along a shelf.
    pub n_h: u32,
    /// Shelf rows.
    pub n_v: u32,
    /// Centre-to-centre distance of grow units along a shelf, mm.
    pub pitch_h: f64,
    /// Vertical shelf spacing, mm.
    pub pitch_v: f64,
    /// mm/s
    pub mover_speed: f64,
    /// mm/s
    pub lift_speed: f64,
    pub tray_w: f64,
    pub tray_d: f64,
    /// kg
    pub payload_max: f64,
    /// Clearance to the neighbouring module, mm.
    pub aisle_gap: f64,
}

impl Default for ModuleSpec {
    /// The built two-high, one-deep module.
    fn default() -> Self {
        ModuleSpec {
            n_h: 1,
            n_v: 2,
            pitch_h: 1250.0,
            pitch_v: 500.0,
            mover_speed: 100.0,
            lift_speed: 33.3,
            tray_w: 1060.0,
            tray_d: 630.0,
            payload_max: 12.5,
            aisle_gap: 1000.0,
        }
    }
}

impl ModuleSpec {
    pub fn with_size(n_h: u32, n_v: u32) -> Self {
        ModuleSpec { n_h, n_v, ..Default::default() }
    }

    pub fn capacity(&self) -> u64 {
        self.n_h as u64 * self.n_v as u64
    }

    pub fn contains(&self, col: u32, row: u32) -> bool {
        col < self.n_h && row < self.n_v
    }

    /// Seconds for the mover to traverse one grow unit.
    pub fn unit_time_h(&self) -> Q {
        q_from_f64(self.pitch_h) / q_from_f64(self.mover_speed)
    }

    /// Seconds for the elevator to climb one shelf.
    pub fn unit_time_v(&self) -> Q {
        q_from_f64(self.pitch_v) / q_from_f64(self.lift_speed)
    }
}

/// Upper/lower bounds applied by [`validate_module_spec_with`]. Soft limits:
/// a build with different tray dimensions overrides them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub max_tray_w: f64,
    pub max_tray_d: f64,
    pub max_payload: f64,
    pub min_aisle_gap: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_tray_w: 1060.0, max_tray_d: 630.0, max_payload: 12.5, min_aisle_gap: 1000.0 }
    }
}

/// One violated rule of a module specification.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub rule: String,
    pub limit: f64,
    pub value: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (limit {}, got {})", self.rule, self.limit, self.value)
    }
}

/// Checks a module against the default limits. `farm_size` is the number of
/// modules in the containing farm; the aisle rule only applies above one.
pub fn validate_module_spec(spec: &ModuleSpec, farm_size: usize) -> Result<(), Vec<Violation>> {
    validate_module_spec_with(spec, farm_size, &Limits::default())
}

pub fn validate_module_spec_with(spec: &ModuleSpec, farm_size: usize, limits: &Limits) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let mut at_least = |rule: &str, limit: f64, value: f64| {
        if !(value >= limit) {
            out.push(Violation { rule: rule.to_string(), limit, value });
        }
    };
    at_least("n_h ≥ 1", 1.0, spec.n_h as f64);
    at_least("n_v ≥ 1", 1.0, spec.n_v as f64);
    let mut positive = |rule: &str, value: f64| {
        if !(value > 0.0 && value.is_finite()) {
            out.push(Violation { rule: rule.to_string(), limit: 0.0, value });
        }
    };
    positive("pitch_h > 0", spec.pitch_h);
    positive("pitch_v > 0", spec.pitch_v);
    positive("mover_speed > 0", spec.mover_speed);
    positive("lift_speed > 0", spec.lift_speed);
    positive("tray_w > 0", spec.tray_w);
    positive("tray_d > 0", spec.tray_d);
    positive("payload_max > 0", spec.payload_max);
    let mut at_most = |rule: &str, limit: f64, value: f64| {
        if !(value <= limit) {
            out.push(Violation { rule: rule.to_string(), limit, value });
        }
    };
    at_most("tray_w ≤ max_tray_w mm", limits.max_tray_w, spec.tray_w);
    at_most("tray_d ≤ max_tray_d mm", limits.max_tray_d, spec.tray_d);
    at_most("payload_max ≤ max_payload kg", limits.max_payload, spec.payload_max);
    if farm_size > 1 && !(spec.aisle_gap >= limits.min_aisle_gap) {
        out.push(Violation {
            rule: format!("aisle_gap ≥ {} mm", limits.min_aisle_gap),
            limit: limits.min_aisle_gap,
            value: spec.aisle_gap,
        });
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// An ordered set of modules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FarmFile", into = "FarmFile")]
pub struct FarmSpec {
    pub modules: Vec<ModuleSpec>,
}

/// On-disk shape: the module count is written out and checked on load.
#[derive(Clone, Serialize, Deserialize)]
struct FarmFile {
    n: usize,
    modules: Vec<ModuleSpec>,
}

impl From<FarmSpec> for FarmFile {
    fn from(f: FarmSpec) -> Self {
        FarmFile { n: f.modules.len(), modules: f.modules }
    }
}

impl TryFrom<FarmFile> for FarmSpec {
    type Error = String;
    fn try_from(file: FarmFile) -> Result<Self, String> {
        if file.n != file.modules.len() {
            return Err(format!("n = {} but {} modules are listed", file.n, file.modules.len()));
        }
        FarmSpec::new(file.modules).map_err(|e| e.to_string())
    }
}

impl FarmSpec {
    pub fn new(modules: Vec<ModuleSpec>) -> Result<Self, FarmError> {
        if modules.is_empty() {
            return Err(FarmError::Parameter("a farm needs at least one module".into()));
        }
        Ok(FarmSpec { modules })
    }

    /// `count` copies of the same module.
    pub fn uniform(module: ModuleSpec, count: usize) -> Self {
        assert!(count >= 1, "a farm needs at least one module");
        FarmSpec { modules: vec![module; count] }
    }

    pub fn n(&self) -> usize {
        self.modules.len()
    }

    pub fn module(&self, index: usize) -> Result<&ModuleSpec, FarmError> {
        self.modules.get(index).ok_or(FarmError::Module { module: index, count: self.n() })
    }

    pub fn validate(&self, limits: &Limits) -> Result<(), Vec<Violation>> {
        let mut all = Vec::new();
        for m in &self.modules {
            if let Err(v) = validate_module_spec_with(m, self.n(), limits) {
                all.extend(v);
            }
        }
        if all.is_empty() {
            Ok(())
        } else {
            Err(all)
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("farm spec serialises")
    }

    pub fn from_toml(text: &str) -> Result<Self, FarmError> {
        toml::from_str(text).map_err(|e| FarmError::Parse(e.to_string()))
    }

    /// SHA-256 of the canonical TOML form; ties traces to the farm they ran on.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FarmError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FarmError> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }
}

/// A grow unit within a farm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellAddress {
    pub module: usize,
    pub col: u32,
    pub row: u32,
}

impl CellAddress {
    pub fn new(module: usize, col: u32, row: u32) -> Self {
        CellAddress { module, col, row }
    }
}

impl fmt::Display for CellAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}:c{}r{}", self.module, self.col, self.row)
    }
}

/// Position of a cell in its module's shelf frame, `(x, z)` in mm.
pub fn cell_position(spec: &ModuleSpec, addr: CellAddress) -> Result<(f64, f64), FarmError> {
    if !spec.contains(addr.col, addr.row) {
        return Err(FarmError::Address { addr, n_h: spec.n_h, n_v: spec.n_v });
    }
    Ok((addr.col as f64 * spec.pitch_h, addr.row as f64 * spec.pitch_v))
}

/// Seconds to cover `distance` mm at `speed` mm/s.
pub fn travel_time(distance: f64, speed: f64) -> Result<f64, FarmError> {
    if !(speed > 0.0) || !speed.is_finite() {
        return Err(FarmError::Parameter(format!("speed must be positive, got {speed}")));
    }
    if !(distance >= 0.0) {
        return Err(FarmError::Parameter(format!("distance must be non-negative, got {distance}")));
    }
    Ok(distance / speed)
}

/// Named choices for the floor area attributed to one grow unit, m².
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AreaPreset {
    /// Total comparable-farm area spread over ten 10x10 modules.
    FarmTotal,
    /// Construction cost per unit divided by cost per m² of grow area.
    CostRatio,
    /// Footprint of one default tray.
    Tray,
}

impl AreaPreset {
    pub fn area_per_unit(self) -> f64 {
        match self {
            AreaPreset::FarmTotal => 0.2175,
            AreaPreset::CostRatio => 1.125,
            AreaPreset::Tray => 1.060 * 0.630,
        }
    }
}

pub const DEFAULT_AREA_PER_UNIT: f64 = 0.2175;

/// Total grow area of a farm in m².
pub fn grow_area(farm: &FarmSpec, area_per_unit: f64) -> Result<f64, FarmError> {
    if !(area_per_unit > 0.0) {
        return Err(FarmError::Parameter(format!("area per unit must be positive, got {area_per_unit}")));
    }
    let units: u64 = farm.modules.iter().map(ModuleSpec::capacity).sum();
    Ok(units as f64 * area_per_unit)
}

pub type CarriageId = String;

/// Where a carriage is. `Station` is the unload/load bay below a module's
/// bottom shelf, reached only by the elevator.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "at", rename_all = "snake_case")]
pub enum Location {
    Cell(CellAddress),
    OnElevator { module: usize },
    OnMover { mover: String },
    Station { module: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Carriage {
    pub id: CarriageId,
    pub tray_mass: f64,
    pub location: Location,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_module_is_valid() {
        assert_eq!(validate_module_spec(&ModuleSpec::default(), 1), Ok(()));
    }

    #[test]
    fn zero_columns_reported() {
        let spec = ModuleSpec { n_h: 0, ..Default::default() };
        let v = validate_module_spec(&spec, 1).unwrap_err();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "n_h ≥ 1");
        assert_eq!(v[0].value, 0.0);
    }

    #[test]
    fn narrow_aisle_only_matters_with_neighbours() {
        let spec = ModuleSpec { aisle_gap: 900.0, ..Default::default() };
        assert!(validate_module_spec(&spec, 1).is_ok());
        let v = validate_module_spec(&spec, 2).unwrap_err();
        assert_eq!(v[0].rule, "aisle_gap ≥ 1000 mm");
        assert_eq!(v[0].value, 900.0);
    }

    #[test]
    fn every_violation_is_listed() {
        let spec = ModuleSpec { n_v: 0, tray_w: 1200.0, payload_max: 20.0, lift_speed: -1.0, ..Default::default() };
        let rules: Vec<_> = validate_module_spec(&spec, 1).unwrap_err().into_iter().map(|v| v.rule).collect();
        assert_eq!(rules.len(), 4, "{rules:?}");
    }

    #[test]
    fn overridden_limits_accept_larger_trays() {
        let spec = ModuleSpec { tray_w: 1200.0, ..Default::default() };
        assert!(validate_module_spec(&spec, 1).is_err());
        let limits = Limits { max_tray_w: 1500.0, ..Default::default() };
        assert!(validate_module_spec_with(&spec, 1, &limits).is_ok());
    }

    #[test]
    fn cell_positions() {
        let spec = ModuleSpec { n_h: 4, n_v: 3, ..Default::default() };
        assert_eq!(cell_position(&spec, CellAddress::new(0, 0, 0)).unwrap(), (0.0, 0.0));
        assert_eq!(cell_position(&spec, CellAddress::new(0, 3, 2)).unwrap(), (3750.0, 1000.0));
        assert!(matches!(cell_position(&spec, CellAddress::new(0, 4, 0)), Err(FarmError::Address { .. })));
    }

    #[test]
    fn travel_times() {
        assert_eq!(travel_time(1250.0, 100.0).unwrap(), 12.5);
        assert!((travel_time(500.0, 33.3).unwrap() - 15.015).abs() < 1e-3);
        assert_eq!(travel_time(0.0, 100.0).unwrap(), 0.0);
        assert!(travel_time(10.0, 0.0).is_err());
        assert!(travel_time(10.0, -5.0).is_err());
    }

    #[test]
    fn grow_areas() {
        let ten = FarmSpec::uniform(ModuleSpec::with_size(10, 10), 10);
        assert!((grow_area(&ten, 0.2175).unwrap() - 217.5).abs() < 1e-9);
        let small = FarmSpec::uniform(ModuleSpec::with_size(2, 1), 1);
        assert!((grow_area(&small, 0.2175).unwrap() - 0.435).abs() < 1e-12);
        let unit = FarmSpec::uniform(ModuleSpec::with_size(1, 1), 1);
        assert_eq!(grow_area(&unit, 1.0).unwrap(), 1.0);
        assert!(grow_area(&unit, 0.0).is_err());
    }

    #[test]
    fn farm_file_rejects_count_mismatch() {
        let text = FarmSpec::uniform(ModuleSpec::default(), 2).to_toml().replace("n = 2", "n = 3");
        assert!(matches!(FarmSpec::from_toml(&text), Err(FarmError::Parse(_))));
    }

    #[test]
    fn unit_times_are_exact() {
        let m = ModuleSpec::default();
        assert_eq!(m.unit_time_h(), Q::new(25, 2));
        assert_eq!(m.unit_time_v(), Q::new(5000, 333));
    }
}
