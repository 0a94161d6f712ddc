//! Byte-level wire fixtures. Each file under `tests/fixtures/wire` holds the
//! exact encoding of one message; decoding and re-encoding must reproduce it.
//!
//! Regenerate with `cargo test -p macarons-core --test wire_fixtures -- --ignored`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use macarons_core::farm::{CellAddress, FarmSpec, Location, ModuleSpec};
use macarons_core::protocol::{
    decode, encode, BundleFile, Command, CommandResult, ConfigMap, DeviceCyclePhase, DeviceKind, DeviceRecord,
    ErrorBody, ErrorCode, FarmLayout, JobRecord, JobStatus, Message, ModuleDevices, MoveRequest, Reading, ReadingValue,
    RegistrationRequest, Script, ScriptRecord, ScriptStep, StepOutcome, StepStatus, UpdateAck, UpdateBundle, WaitFor,
};
use semver::Version;
use serde_json::json;

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/wire")
}

fn two_file_bundle() -> UpdateBundle {
    UpdateBundle::new(
        Version::new(1, 1, 0),
        vec![
            BundleFile { path: "main.py".into(), bytes: b"import mover\nmover.run()\n".to_vec() },
            BundleFile { path: "lib/pins.json".into(), bytes: br#"{"step":4,"dir":5}"#.to_vec() },
        ],
    )
}

fn device() -> DeviceRecord {
    let mut config = ConfigMap::new();
    config.insert("sleep_seconds".into(), json!(30));
    DeviceRecord {
        device_id: "mover-0001".into(),
        kind: DeviceKind::Mover,
        hardware_id: "hw-01".into(),
        registered_at: 1_700_000_000.25,
        config,
        staged_update: None,
        installed_version: Version::new(1, 0, 0),
        last_seen: 1_700_000_060.5,
        last_phase: Some(DeviceCyclePhase::PreUpdate),
        supported_by_ui: true,
    }
}

fn samples() -> Vec<(&'static str, Message)> {
    let reading = Reading {
        device_id: "elevator-0002".into(),
        timestamp: 12.5,
        key: "height_mm".into(),
        value: ReadingValue::Number(500.0),
    };
    let mut args = BTreeMap::new();
    args.insert("col".into(), json!(1));
    let step = ScriptStep {
        device_id: "elevator-0002".into(),
        command: "goto_row".into(),
        args: [("row".to_string(), json!(1))].into(),
        wait: WaitFor::Reading { key: "ir".into(), value: ReadingValue::Text("aligned".into()) },
    };
    let mut carriages = BTreeMap::new();
    carriages.insert("tray-a".to_string(), Location::Cell(CellAddress::new(0, 0, 1)));
    carriages.insert("tray-b".to_string(), Location::Station { module: 0 });
    vec![
        (
            "registration_request",
            Message::RegistrationRequest(RegistrationRequest {
                kind: DeviceKind::Mover,
                hardware_id: "hw-01".into(),
                firmware_version: Version::new(1, 0, 0),
            }),
        ),
        ("device_record", Message::DeviceRecord(Box::new(device()))),
        ("update_bundle", Message::UpdateBundle(two_file_bundle())),
        ("update_poll", Message::UpdatePoll(None)),
        ("update_ack", Message::UpdateAck(UpdateAck { version: Version::new(1, 1, 0) })),
        ("reading", Message::Reading(reading.clone())),
        (
            "command",
            Message::Command(Command {
                command_id: "job-0001.1".into(),
                device_id: "mover-0001".into(),
                name: "move_to".into(),
                args,
            }),
        ),
        (
            "command_result",
            Message::CommandResult(CommandResult {
                command_id: "job-0001.1".into(),
                ok: false,
                error: Some("path blocked by carriage tray-b".into()),
                detail: BTreeMap::new(),
            }),
        ),
        ("script", Message::Script(Script { name: "lift".into(), steps: vec![step.clone()] })),
        (
            "script_record",
            Message::ScriptRecord(ScriptRecord {
                script_id: "script-0001".into(),
                name: "lift".into(),
                steps: vec![step],
                uploaded_at: 3.0,
            }),
        ),
        (
            "job",
            Message::Job(JobRecord {
                job_id: "job-0001".into(),
                script_id: "script-0001".into(),
                status: JobStatus::Failed,
                steps: vec![StepOutcome {
                    device_id: "elevator-0002".into(),
                    command: "goto_row".into(),
                    command_id: Some("job-0001.0".into()),
                    status: StepStatus::Timeout,
                    detail: None,
                }],
                started_at: Some(4.0),
                finished_at: Some(124.0),
                reason: Some("step 0 timed out".into()),
            }),
        ),
        (
            "farm_layout",
            Message::FarmLayout(Box::new(FarmLayout {
                farm: FarmSpec::uniform(ModuleSpec::default(), 1),
                devices: vec![ModuleDevices {
                    mover: Some("mover-0001".into()),
                    elevator: Some("elevator-0002".into()),
                }],
                carriages,
            })),
        ),
        (
            "move_request",
            Message::MoveRequest(MoveRequest { carriage: "tray-a".into(), to: CellAddress::new(0, 0, 0) }),
        ),
        ("device_list", Message::DeviceList(vec![device()])),
        ("config", Message::Config(device().config)),
        (
            "readings",
            Message::Readings(vec![
                reading.clone(),
                Reading { timestamp: 13.0, value: ReadingValue::Text("aligned".into()), key: "ir".into(), ..reading },
            ]),
        ),
        ("command_poll", Message::CommandPoll(None)),
        ("script_list", Message::ScriptList(vec![])),
        ("ack", Message::Ack),
        (
            "error",
            Message::Error(ErrorBody {
                code: ErrorCode::VersionRegression,
                message: "bundle 0.9.0 does not supersede installed 1.0.0".into(),
            }),
        ),
    ]
}

#[test]
fn fixtures_decode_and_reencode_byte_for_byte() {
    for (name, message) in samples() {
        let path = dir().join(format!("{name}.json"));
        let bytes = std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let decoded = decode(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(decoded, message, "{name}");
        assert_eq!(encode(&decoded), bytes, "{name}");
        assert_eq!(decoded.type_name(), name);
    }
}

#[test]
fn bundle_fixture_checksum_matches_an_independent_digest() {
    // sha256 over path, NUL, u64 little-endian length, content for each file,
    // computed outside this crate with Python's hashlib.
    const EXPECTED: &str = "d55eb9a4444fe26ad0bdd3fc34edb62d895b47e57b95f11e8e896edbc9b338a5";
    let bytes = std::fs::read(dir().join("update_bundle.json")).unwrap();
    let Message::UpdateBundle(b) = decode(&bytes).unwrap() else { panic!() };
    assert_eq!(b.checksum, EXPECTED);
    b.verify().unwrap();
}

#[test]
#[ignore = "writes fixture files"]
fn regenerate() {
    std::fs::create_dir_all(dir()).unwrap();
    for (name, message) in samples() {
        std::fs::write(dir().join(format!("{name}.json")), encode(&message)).unwrap();
    }
}
