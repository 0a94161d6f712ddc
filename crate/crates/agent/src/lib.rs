//! Simulated mover and elevator firmware.
//!
//! A [`DeviceAgent`] runs the five-phase device loop against a control
//! server through a [`DeviceApi`], driving its half of a shared module
//! [`Plant`]. It never fails because the server does: every link error is
//! recorded in the [`CycleReport`] and the cycle carries on.

mod agent;
mod clock;
mod link;

pub use agent::{plant_from_layout, AgentConfig, CycleReport, DeviceAgent, ExecutedCommand, PhaseMark, Plant};
pub use clock::{Clock, SystemClock, VirtualClock};
pub use link::{DeviceApi, HttpLink, LinkError};
