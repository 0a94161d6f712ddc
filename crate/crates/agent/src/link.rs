//! The agent's view of the control server.

use std::time::Duration;

use macarons_core::protocol::{
    decode, encode, Command, CommandResult, ConfigMap, DeviceCyclePhase, DeviceRecord, ErrorBody, FarmLayout, Message,
    Reading, RegistrationRequest, UpdateAck, UpdateBundle,
};
use semver::Version;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinkError {
    #[error("server unreachable: {0}")]
    Unreachable(String),
    #[error("server rejected the request: {0:?}")]
    Rejected(ErrorBody),
    #[error("unexpected reply: {0}")]
    Protocol(String),
}

/// Calls a device makes. Every method may fail with [`LinkError`]; the
/// agent treats all of them as recoverable.
pub trait DeviceApi: Send + Sync {
    fn register(&self, req: &RegistrationRequest) -> Result<DeviceRecord, LinkError>;
    fn poll_update(&self, device: &str, phase: DeviceCyclePhase) -> Result<Option<UpdateBundle>, LinkError>;
    fn ack_update(&self, device: &str, version: &Version) -> Result<(), LinkError>;
    fn config(&self, device: &str) -> Result<ConfigMap, LinkError>;
    fn poll_command(&self, device: &str, hold: Duration) -> Result<Option<Command>, LinkError>;
    fn post_result(&self, result: &CommandResult) -> Result<(), LinkError>;
    fn push_readings(&self, device: &str, readings: &[Reading]) -> Result<(), LinkError>;
    fn farm_layout(&self) -> Result<FarmLayout, LinkError>;
}

/// [`DeviceApi`] over HTTP with a blocking client.
pub struct HttpLink {
    base: String,
    client: reqwest::blocking::Client,
}

impl HttpLink {
    pub fn new(base_url: impl Into<String>) -> Result<Self, LinkError> {
        let client = reqwest::blocking::Client::builder()
            .connect_timeout(Duration::from_secs(2))
            .timeout(Duration::from_secs(90))
            .build()
            .map_err(|e| LinkError::Unreachable(e.to_string()))?;
        Ok(HttpLink { base: base_url.into().trim_end_matches('/').to_string(), client })
    }

    fn call(&self, method: reqwest::Method, path: &str, body: Option<&Message>) -> Result<Message, LinkError> {
        let mut req = self.client.request(method, format!("{}{path}", self.base));
        if let Some(m) = body {
            req = req.header("content-type", "application/json").body(encode(m));
        }
        let resp = req.send().map_err(|e| LinkError::Unreachable(e.to_string()))?;
        let bytes = resp.bytes().map_err(|e| LinkError::Unreachable(e.to_string()))?;
        match decode(&bytes).map_err(|e| LinkError::Protocol(e.to_string()))? {
            Message::Error(e) => Err(LinkError::Rejected(e)),
            m => Ok(m),
        }
    }

    fn get(&self, path: &str) -> Result<Message, LinkError> {
        self.call(reqwest::Method::GET, path, None)
    }

    fn post(&self, path: &str, body: &Message) -> Result<Message, LinkError> {
        self.call(reqwest::Method::POST, path, Some(body))
    }
}

fn unexpected(m: Message) -> LinkError {
    LinkError::Protocol(format!("unexpected {} reply", m.type_name()))
}

impl DeviceApi for HttpLink {
    fn register(&self, req: &RegistrationRequest) -> Result<DeviceRecord, LinkError> {
        match self.post("/api/devices/register", &Message::RegistrationRequest(req.clone()))? {
            Message::DeviceRecord(d) => Ok(*d),
            m => Err(unexpected(m)),
        }
    }

    fn poll_update(&self, device: &str, phase: DeviceCyclePhase) -> Result<Option<UpdateBundle>, LinkError> {
        match self.get(&format!("/api/devices/{device}/update?phase={phase}"))? {
            Message::UpdatePoll(u) => Ok(u),
            m => Err(unexpected(m)),
        }
    }

    fn ack_update(&self, device: &str, version: &Version) -> Result<(), LinkError> {
        let ack = Message::UpdateAck(UpdateAck { version: version.clone() });
        self.post(&format!("/api/devices/{device}/update/ack"), &ack).map(|_| ())
    }

    fn config(&self, device: &str) -> Result<ConfigMap, LinkError> {
        match self.get(&format!("/api/devices/{device}/config"))? {
            Message::Config(c) => Ok(c),
            m => Err(unexpected(m)),
        }
    }

    fn poll_command(&self, device: &str, hold: Duration) -> Result<Option<Command>, LinkError> {
        match self.get(&format!("/api/devices/{device}/commands?hold={}", hold.as_secs_f64()))? {
            Message::CommandPoll(c) => Ok(c),
            m => Err(unexpected(m)),
        }
    }

    fn post_result(&self, result: &CommandResult) -> Result<(), LinkError> {
        let path = format!("/api/commands/{}/result", result.command_id);
        self.post(&path, &Message::CommandResult(result.clone())).map(|_| ())
    }

    fn push_readings(&self, device: &str, readings: &[Reading]) -> Result<(), LinkError> {
        self.post(&format!("/api/devices/{device}/readings"), &Message::Readings(readings.to_vec())).map(|_| ())
    }

    fn farm_layout(&self) -> Result<FarmLayout, LinkError> {
        match self.get("/api/farm")? {
            Message::FarmLayout(l) => Ok(*l),
            m => Err(unexpected(m)),
        }
    }
}
