//! Control server: device registry, update staging, readings store, script
//! coordination and the HTTP surface the devices and the operator UI use.

pub mod error;
pub mod http;
pub mod service;
pub mod store;

pub use error::{Result, ServerError};
pub use http::{router, serve, ServerThread};
pub use service::{system_clock, Clock, ControlServer, ServerOptions, SLEEP_SECONDS};
pub use store::{CommandState, Store, StoredCommand};
