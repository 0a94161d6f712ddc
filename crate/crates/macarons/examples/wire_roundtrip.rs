//! Encodes and decodes wire messages, including a checksummed update bundle.

use macarons::protocol::{decode, encode, BundleFile, DeviceKind, Message, RegistrationRequest, UpdateBundle};
use semver::Version;

fn main() {
    let messages = [
        Message::RegistrationRequest(RegistrationRequest {
            kind: DeviceKind::Elevator,
            hardware_id: "esp32-7c:9e".into(),
            firmware_version: Version::new(1, 0, 0),
        }),
        Message::UpdateBundle(UpdateBundle::new(
            Version::new(1, 1, 0),
            vec![BundleFile { path: "main.py".into(), bytes: b"import elevator\n".to_vec() }],
        )),
    ];
    for m in &messages {
        let bytes = encode(m);
        println!("{}", String::from_utf8_lossy(&bytes));
        assert_eq!(&decode(&bytes).expect("decodes"), m);
    }

    let Message::UpdateBundle(mut bundle) = messages[1].clone() else { unreachable!() };
    bundle.files[0].bytes.push(b'#');
    println!("tampered bundle: {}", bundle.verify().unwrap_err());
    println!("garbage: {}", decode(b"{\"type\":\"nope\"}").unwrap_err());
}
