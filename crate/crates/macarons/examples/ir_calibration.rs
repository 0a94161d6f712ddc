//! Positions the elevator IR sensor by bisecting against a simulated probe.

use macarons::devices::ir::{calibrate_ir, IrCalibration};

fn main() {
    let boundary = 3.37;
    let mut probes = 0;
    let result = calibrate_ir(&IrCalibration::default(), 10.0, |offset| {
        probes += 1;
        offset >= boundary
    })
    .expect("boundary inside the bracket");
    println!("offset {:.4} mm after {probes} probes, calibrated: {}", result.offset, result.is_calibrated(boundary));

    let miss = calibrate_ir(&IrCalibration::default(), 2.0, |offset| offset >= boundary);
    println!("narrow bracket: {}", miss.unwrap_err());
}
