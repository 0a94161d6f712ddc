//! Messages exchanged between the control server and devices.
//!
//! Every payload travels inside a versioned envelope:
//!
//! ```json
//! {"v":1,"type":"registration_request","body":{...}}
//! ```
//!
//! Decoders ignore unknown fields so newer senders stay readable.

use std::collections::BTreeMap;
use std::fmt;

use base64::Engine as _;
use semver::Version;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::farm::{CarriageId, CellAddress, FarmSpec, Location};

/// Envelope version written by [`encode`] and accepted by [`decode`].
pub const WIRE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DeviceKind {
    Mover,
    Elevator,
    /// Recorded as given; not driven by the operator UI.
    Other(String),
}

impl DeviceKind {
    pub fn as_str(&self) -> &str {
        match self {
            DeviceKind::Mover => "mover",
            DeviceKind::Elevator => "elevator",
            DeviceKind::Other(s) => s,
        }
    }

    pub fn supported_by_ui(&self) -> bool {
        !matches!(self, DeviceKind::Other(_))
    }

    /// Command names the device understands; `None` means unrestricted.
    pub fn vocabulary(&self) -> Option<&'static [&'static str]> {
        match self {
            DeviceKind::Mover => Some(&["move_to", "dock", "engage", "release"]),
            DeviceKind::Elevator => Some(&["goto_row", "lock", "unlock", "board", "alight"]),
            DeviceKind::Other(_) => None,
        }
    }

    pub fn accepts(&self, command: &str) -> bool {
        self.vocabulary().is_none_or(|v| v.contains(&command))
    }
}

impl From<&str> for DeviceKind {
    fn from(s: &str) -> Self {
        match s {
            "mover" => DeviceKind::Mover,
            "elevator" => DeviceKind::Elevator,
            other => DeviceKind::Other(other.to_string()),
        }
    }
}

impl fmt::Display for DeviceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for DeviceKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for DeviceKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s.is_empty() {
            return Err(serde::de::Error::custom("device kind must not be empty"));
        }
        Ok(DeviceKind::from(s.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrationRequest {
    pub kind: DeviceKind,
    pub hardware_id: String,
    pub firmware_version: Version,
}

/// The five-step device loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceCyclePhase {
    Wake,
    PreUpdate,
    RunMain,
    PostUpdate,
    DeepSleep,
}

impl DeviceCyclePhase {
    pub const ALL: [DeviceCyclePhase; 5] = [
        DeviceCyclePhase::Wake,
        DeviceCyclePhase::PreUpdate,
        DeviceCyclePhase::RunMain,
        DeviceCyclePhase::PostUpdate,
        DeviceCyclePhase::DeepSleep,
    ];

    pub fn next(self) -> Self {
        match self {
            DeviceCyclePhase::Wake => DeviceCyclePhase::PreUpdate,
            DeviceCyclePhase::PreUpdate => DeviceCyclePhase::RunMain,
            DeviceCyclePhase::RunMain => DeviceCyclePhase::PostUpdate,
            DeviceCyclePhase::PostUpdate => DeviceCyclePhase::DeepSleep,
            DeviceCyclePhase::DeepSleep => DeviceCyclePhase::Wake,
        }
    }

    pub fn is_update_check(self) -> bool {
        matches!(self, DeviceCyclePhase::PreUpdate | DeviceCyclePhase::PostUpdate)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DeviceCyclePhase::Wake => "wake",
            DeviceCyclePhase::PreUpdate => "pre_update",
            DeviceCyclePhase::RunMain => "run_main",
            DeviceCyclePhase::PostUpdate => "post_update",
            DeviceCyclePhase::DeepSleep => "deep_sleep",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

pub fn next_phase(phase: DeviceCyclePhase) -> DeviceCyclePhase {
    phase.next()
}

impl fmt::Display for DeviceCyclePhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

mod b64 {
    use base64::Engine as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        base64::engine::general_purpose::STANDARD.decode(text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleFile {
    pub path: String,
    #[serde(with = "b64")]
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BundleError {
    #[error("checksum mismatch: declared {declared}, computed {computed}")]
    Checksum { declared: String, computed: String },
    #[error("file path `{0}` escapes the device root")]
    Path(String),
    #[error("bundle contains no files")]
    Empty,
}

/// A versioned set of files staged for a device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateBundle {
    pub version: Version,
    pub files: Vec<BundleFile>,
    /// Lowercase hex SHA-256, see [`UpdateBundle::compute_checksum`].
    pub checksum: String,
}

impl UpdateBundle {
    pub fn new(version: Version, files: Vec<BundleFile>) -> Self {
        let checksum = Self::compute_checksum(&files);
        UpdateBundle { version, files, checksum }
    }

    /// SHA-256 over, for each file in order: the UTF-8 path, a zero byte,
    /// the content length as little-endian u64, then the content.
    pub fn compute_checksum(files: &[BundleFile]) -> String {
        let mut h = Sha256::new();
        for f in files {
            h.update(f.path.as_bytes());
            h.update([0u8]);
            h.update((f.bytes.len() as u64).to_le_bytes());
            h.update(&f.bytes);
        }
        hex::encode(h.finalize())
    }

    pub fn verify(&self) -> Result<(), BundleError> {
        if self.files.is_empty() {
            return Err(BundleError::Empty);
        }
        for f in &self.files {
            if !is_safe_relative_path(&f.path) {
                return Err(BundleError::Path(f.path.clone()));
            }
        }
        let computed = Self::compute_checksum(&self.files);
        if !computed.eq_ignore_ascii_case(&self.checksum) {
            return Err(BundleError::Checksum { declared: self.checksum.clone(), computed });
        }
        Ok(())
    }

    pub fn total_bytes(&self) -> usize {
        self.files.iter().map(|f| f.bytes.len()).sum()
    }
}

fn is_safe_relative_path(p: &str) -> bool {
    !p.is_empty()
        && !p.starts_with('/')
        && !p.contains('\\')
        && !p.contains('\0')
        && p.split('/').all(|c| !c.is_empty() && c != ".." && c != ".")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReadingValue {
    Number(f64),
    Text(String),
}

impl From<f64> for ReadingValue {
    fn from(x: f64) -> Self {
        ReadingValue::Number(x)
    }
}

impl From<&str> for ReadingValue {
    fn from(s: &str) -> Self {
        ReadingValue::Text(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub device_id: String,
    /// Seconds since the epoch of the device clock.
    pub timestamp: f64,
    pub key: String,
    pub value: ReadingValue,
}

pub type Args = BTreeMap<String, serde_json::Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub command_id: String,
    pub device_id: String,
    pub name: String,
    #[serde(default)]
    pub args: Args,
}

impl Command {
    pub fn arg_u32(&self, key: &str) -> Option<u32> {
        self.args.get(key).and_then(|v| v.as_u64()).and_then(|v| u32::try_from(v).ok())
    }

    pub fn arg_str(&self, key: &str) -> Option<&str> {
        self.args.get(key).and_then(|v| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandResult {
    pub command_id: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub detail: Args,
}

pub type ConfigMap = BTreeMap<String, serde_json::Value>;

/// Server-side shadow of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRecord {
    pub device_id: String,
    pub kind: DeviceKind,
    pub hardware_id: String,
    pub registered_at: f64,
    #[serde(default)]
    pub config: ConfigMap,
    #[serde(default)]
    pub staged_update: Option<UpdateBundle>,
    pub installed_version: Version,
    pub last_seen: f64,
    #[serde(default)]
    pub last_phase: Option<DeviceCyclePhase>,
    /// False for kinds the operator UI cannot drive.
    #[serde(default = "yes")]
    pub supported_by_ui: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateAck {
    pub version: Version,
}

/// Extra condition a script step waits for after its command succeeds.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WaitFor {
    #[default]
    Completed,
    Reading {
        key: String,
        value: ReadingValue,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub device_id: String,
    pub command: String,
    #[serde(default)]
    pub args: Args,
    #[serde(default)]
    pub wait: WaitFor,
}

/// A script as uploaded: a flat list of steps run in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub name: String,
    pub steps: Vec<ScriptStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRecord {
    pub script_id: String,
    pub name: String,
    pub steps: Vec<ScriptStep>,
    pub uploaded_at: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Pending,
    Running,
    Succeeded,
    Failed,
    Aborted,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Succeeded | JobStatus::Failed | JobStatus::Aborted)
    }

    pub fn can_become(self, next: JobStatus) -> bool {
        matches!(
            (self, next),
            (JobStatus::Pending, JobStatus::Running)
                | (JobStatus::Pending, JobStatus::Aborted)
                | (JobStatus::Pending, JobStatus::Failed)
                | (JobStatus::Running, JobStatus::Succeeded)
                | (JobStatus::Running, JobStatus::Failed)
                | (JobStatus::Running, JobStatus::Aborted)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Pending,
    Succeeded,
    Failed,
    Timeout,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub device_id: String,
    pub command: String,
    #[serde(default)]
    pub command_id: Option<String>,
    pub status: StepStatus,
    #[serde(default)]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: String,
    pub script_id: String,
    pub status: JobStatus,
    pub steps: Vec<StepOutcome>,
    #[serde(default)]
    pub started_at: Option<f64>,
    #[serde(default)]
    pub finished_at: Option<f64>,
    #[serde(default)]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    NotFound,
    Validation,
    Integrity,
    VersionRegression,
    Protocol,
    Conflict,
    Storage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: ErrorCode,
    pub message: String,
}

/// Devices serving one module of the farm.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleDevices {
    #[serde(default)]
    pub mover: Option<String>,
    #[serde(default)]
    pub elevator: Option<String>,
}

/// Farm geometry, which device serves which module, and where every
/// carriage is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarmLayout {
    pub farm: FarmSpec,
    #[serde(default)]
    pub devices: Vec<ModuleDevices>,
    #[serde(default)]
    pub carriages: BTreeMap<CarriageId, Location>,
}

/// Request to carry one carriage to another cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveRequest {
    pub carriage: CarriageId,
    pub to: CellAddress,
}

/// Every payload that crosses the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "body", rename_all = "snake_case")]
pub enum Message {
    RegistrationRequest(RegistrationRequest),
    DeviceRecord(Box<DeviceRecord>),
    DeviceList(Vec<DeviceRecord>),
    Config(ConfigMap),
    UpdateBundle(UpdateBundle),
    UpdatePoll(Option<UpdateBundle>),
    UpdateAck(UpdateAck),
    Reading(Reading),
    Readings(Vec<Reading>),
    Command(Command),
    CommandPoll(Option<Command>),
    CommandResult(CommandResult),
    Script(Script),
    ScriptRecord(ScriptRecord),
    ScriptList(Vec<ScriptRecord>),
    Job(JobRecord),
    FarmLayout(Box<FarmLayout>),
    MoveRequest(MoveRequest),
    Ack,
    Error(ErrorBody),
}

impl Message {
    pub fn type_name(&self) -> &'static str {
        match self {
            Message::RegistrationRequest(_) => "registration_request",
            Message::DeviceRecord(_) => "device_record",
            Message::DeviceList(_) => "device_list",
            Message::Config(_) => "config",
            Message::UpdateBundle(_) => "update_bundle",
            Message::UpdatePoll(_) => "update_poll",
            Message::UpdateAck(_) => "update_ack",
            Message::Reading(_) => "reading",
            Message::Readings(_) => "readings",
            Message::Command(_) => "command",
            Message::CommandPoll(_) => "command_poll",
            Message::CommandResult(_) => "command_result",
            Message::Script(_) => "script",
            Message::ScriptRecord(_) => "script_record",
            Message::ScriptList(_) => "script_list",
            Message::Job(_) => "job",
            Message::FarmLayout(_) => "farm_layout",
            Message::MoveRequest(_) => "move_request",
            Message::Ack => "ack",
            Message::Error(_) => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("decode error at byte {offset}: {reason}")]
pub struct DecodeError {
    pub offset: usize,
    pub reason: String,
}

pub fn encode(message: &Message) -> Vec<u8> {
    #[derive(Serialize)]
    struct Envelope<'a> {
        v: u32,
        #[serde(flatten)]
        message: &'a Message,
    }
    serde_json::to_vec(&Envelope { v: WIRE_VERSION, message }).expect("messages serialise")
}

pub fn decode(bytes: &[u8]) -> Result<Message, DecodeError> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| DecodeError {
        offset: if e.is_eof() { bytes.len() } else { byte_offset(bytes, e.line(), e.column()) },
        reason: e.to_string(),
    })?;
    let structural = |reason: String| DecodeError { offset: 0, reason };
    let serde_json::Value::Object(mut obj) = value else {
        return Err(structural("envelope must be an object".into()));
    };
    match obj.remove("v").and_then(|v| v.as_u64()) {
        Some(v) if v == WIRE_VERSION as u64 => {}
        Some(v) => return Err(structural(format!("unsupported envelope version {v}"))),
        None => return Err(structural("missing envelope version".into())),
    }
    let tag = obj.remove("type").ok_or_else(|| structural("missing type tag".into()))?;
    let mut inner = serde_json::Map::new();
    inner.insert("type".into(), tag);
    if let Some(body) = obj.remove("body") {
        inner.insert("body".into(), body);
    }
    serde_json::from_value(serde_json::Value::Object(inner)).map_err(|e| structural(e.to_string()))
}

fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut current = 1;
    let mut start = 0;
    for (i, b) in bytes.iter().enumerate() {
        if current == line {
            break;
        }
        if *b == b'\n' {
            current += 1;
            start = i + 1;
        }
    }
    (start + column.saturating_sub(1)).min(bytes.len())
}

/// Convenience for fixtures: base64 of raw bytes as used in bundle files.
pub fn bundle_bytes_b64(bytes: &[u8]) -> String {
    base64::engine::general_purpose::STANDARD.encode(bytes)
}
