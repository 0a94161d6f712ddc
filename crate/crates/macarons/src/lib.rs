//! MACARONS: automated tray handling for modular vertical farms.
//!
//! This crate gathers the workspace behind one name and hosts the
//! `macarons` command-line tool.
//!
//! | module | contents |
//! |---|---|
//! | [`farm`] | module geometry, cell addressing, travel times |
//! | [`protocol`] | wire messages between devices and the server |
//! | [`devices`] | mover and elevator state machines, IR calibration, interlock search |
//! | [`sim`] | deterministic simulation kernel, scenarios, traces |
//! | [`analytics`] | closed-form unload times, labour costs, reports |
//! | [`server`] | control server: registry, updates, readings, scripts |
//! | [`agent`] | simulated device firmware |

pub use macarons_agent as agent;
pub use macarons_core::{analytics, devices, exact, farm, protocol, sim};
pub use macarons_server as server;
