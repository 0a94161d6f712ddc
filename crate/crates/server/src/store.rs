//! Single-file SQLite persistence. Records are stored as canonical JSON so a
//! snapshot taken before and after a restart compares byte for byte.

use std::path::Path;

use rusqlite::{params, Connection, OptionalExtension};
use serde::de::DeserializeOwned;
use serde::Serialize;

use macarons_core::protocol::{Command, CommandResult, DeviceRecord, JobRecord, Reading, ScriptRecord};

use crate::error::Result;

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS devices (
    device_id TEXT PRIMARY KEY,
    hardware_id TEXT NOT NULL UNIQUE,
    record TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS readings (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    device_id TEXT NOT NULL,
    timestamp REAL NOT NULL,
    reading TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS readings_by_time ON readings (device_id, timestamp, seq);
CREATE TABLE IF NOT EXISTS scripts (script_id TEXT PRIMARY KEY, record TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS jobs (job_id TEXT PRIMARY KEY, record TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS commands (
    command_id TEXT PRIMARY KEY,
    seq INTEGER NOT NULL,
    device_id TEXT NOT NULL,
    job_id TEXT,
    state TEXT NOT NULL,
    command TEXT NOT NULL,
    result TEXT
);
CREATE INDEX IF NOT EXISTS commands_by_device ON commands (device_id, state, seq);
";

/// Where a queued command is in its life.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandState {
    Queued,
    Delivered,
    Done,
    Cancelled,
}

impl CommandState {
    fn as_str(self) -> &'static str {
        match self {
            CommandState::Queued => "queued",
            CommandState::Delivered => "delivered",
            CommandState::Done => "done",
            CommandState::Cancelled => "cancelled",
        }
    }

    fn parse(s: &str) -> Self {
        match s {
            "queued" => CommandState::Queued,
            "delivered" => CommandState::Delivered,
            "done" => CommandState::Done,
            _ => CommandState::Cancelled,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredCommand {
    pub command: Command,
    pub job_id: Option<String>,
    pub state: CommandState,
    pub result: Option<CommandResult>,
}

pub struct Store {
    conn: Connection,
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string(value)?)
}

fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    Ok(serde_json::from_str(text)?)
}

impl Store {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::init(Connection::open(path)?)
    }

    pub fn open_in_memory() -> Result<Self> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self> {
        conn.execute_batch("PRAGMA journal_mode = WAL; PRAGMA synchronous = NORMAL;")?;
        conn.execute_batch(SCHEMA)?;
        Ok(Store { conn })
    }

    /// Runs `f` inside one transaction.
    pub fn transaction<T>(&mut self, f: impl FnOnce(&Store) -> Result<T>) -> Result<T> {
        self.conn.execute_batch("BEGIN IMMEDIATE")?;
        match f(self) {
            Ok(v) => {
                self.conn.execute_batch("COMMIT")?;
                Ok(v)
            }
            Err(e) => {
                let _ = self.conn.execute_batch("ROLLBACK");
                Err(e)
            }
        }
    }

    pub fn meta<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>> {
        let text: Option<String> =
            self.conn.query_row("SELECT value FROM meta WHERE key = ?1", [key], |r| r.get(0)).optional()?;
        text.map(|t| from_json(&t)).transpose()
    }

    pub fn set_meta<T: Serialize>(&self, key: &str, value: &T) -> Result<()> {
        self.conn.execute(
            "INSERT INTO meta (key, value) VALUES (?1, ?2) ON CONFLICT(key) DO UPDATE SET value = excluded.value",
            params![key, to_json(value)?],
        )?;
        Ok(())
    }

    /// Next value of a named counter, starting at 1.
    pub fn next_id(&self, counter: &str) -> Result<u64> {
        let key = format!("counter.{counter}");
        let n = self.meta::<u64>(&key)?.unwrap_or(0) + 1;
        self.set_meta(&key, &n)?;
        Ok(n)
    }

    pub fn device(&self, device_id: &str) -> Result<Option<DeviceRecord>> {
        let text: Option<String> = self
            .conn
            .query_row("SELECT record FROM devices WHERE device_id = ?1", [device_id], |r| r.get(0))
            .optional()?;
        text.map(|t| from_json(&t)).transpose()
    }

    pub fn device_by_hardware(&self, hardware_id: &str) -> Result<Option<DeviceRecord>> {
        let text: Option<String> = self
            .conn
            .query_row("SELECT record FROM devices WHERE hardware_id = ?1", [hardware_id], |r| r.get(0))
            .optional()?;
        text.map(|t| from_json(&t)).transpose()
    }

    pub fn put_device(&self, record: &DeviceRecord) -> Result<()> {
        self.conn.execute(
            "INSERT INTO devices (device_id, hardware_id, record) VALUES (?1, ?2, ?3)
             ON CONFLICT(device_id) DO UPDATE SET record = excluded.record",
            params![record.device_id, record.hardware_id, to_json(record)?],
        )?;
        Ok(())
    }

    pub fn devices(&self) -> Result<Vec<DeviceRecord>> {
        self.list("SELECT record FROM devices ORDER BY device_id", [])
    }

    fn list<T: DeserializeOwned, P: rusqlite::Params>(&self, sql: &str, p: P) -> Result<Vec<T>> {
        let mut stmt = self.conn.prepare_cached(sql)?;
        let rows = stmt.query_map(p, |r| r.get::<_, String>(0))?;
        let mut out = Vec::new();
        for row in rows {
            out.push(from_json(&row?)?);
        }
        Ok(out)
    }

    pub fn insert_reading(&self, reading: &Reading) -> Result<i64> {
        self.conn.execute(
            "INSERT INTO readings (device_id, timestamp, reading) VALUES (?1, ?2, ?3)",
            params![reading.device_id, reading.timestamp, to_json(reading)?],
        )?;
        Ok(self.conn.last_insert_rowid())
    }

    /// Readings of one device with `from <= timestamp <= to`, oldest first.
    pub fn readings(&self, device_id: &str, from: f64, to: f64) -> Result<Vec<Reading>> {
        self.list(
            "SELECT reading FROM readings WHERE device_id = ?1 AND timestamp >= ?2 AND timestamp <= ?3
             ORDER BY timestamp, seq",
            params![device_id, from, to],
        )
    }

    /// Readings of `key` from `device_id` stored after sequence number `after`.
    pub fn readings_after(&self, device_id: &str, key: &str, after: i64) -> Result<Vec<Reading>> {
        let all: Vec<Reading> = self.list(
            "SELECT reading FROM readings WHERE device_id = ?1 AND seq > ?2 ORDER BY seq",
            params![device_id, after],
        )?;
        Ok(all.into_iter().filter(|r| r.key == key).collect())
    }

    pub fn last_reading_seq(&self) -> Result<i64> {
        Ok(self.conn.query_row("SELECT COALESCE(MAX(seq), 0) FROM readings", [], |r| r.get(0))?)
    }

    pub fn put_script(&self, record: &ScriptRecord) -> Result<()> {
        self.conn.execute(
            "INSERT INTO scripts (script_id, record) VALUES (?1, ?2)
             ON CONFLICT(script_id) DO UPDATE SET record = excluded.record",
            params![record.script_id, to_json(record)?],
        )?;
        Ok(())
    }

    pub fn script(&self, script_id: &str) -> Result<Option<ScriptRecord>> {
        Ok(self.list("SELECT record FROM scripts WHERE script_id = ?1", [script_id])?.pop())
    }

    pub fn scripts(&self) -> Result<Vec<ScriptRecord>> {
        self.list("SELECT record FROM scripts ORDER BY script_id", [])
    }

    pub fn put_job(&self, record: &JobRecord) -> Result<()> {
        self.conn.execute(
            "INSERT INTO jobs (job_id, record) VALUES (?1, ?2) ON CONFLICT(job_id) DO UPDATE SET record = excluded.record",
            params![record.job_id, to_json(record)?],
        )?;
        Ok(())
    }

    pub fn job(&self, job_id: &str) -> Result<Option<JobRecord>> {
        Ok(self.list("SELECT record FROM jobs WHERE job_id = ?1", [job_id])?.pop())
    }

    pub fn jobs(&self) -> Result<Vec<JobRecord>> {
        self.list("SELECT record FROM jobs ORDER BY job_id", [])
    }

    pub fn enqueue_command(&self, command: &Command, job_id: Option<&str>) -> Result<()> {
        let seq = self.next_id("command_seq")?;
        self.conn.execute(
            "INSERT INTO commands (command_id, seq, device_id, job_id, state, command) VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
            params![
                command.command_id,
                seq as i64,
                command.device_id,
                job_id,
                CommandState::Queued.as_str(),
                to_json(command)?
            ],
        )?;
        Ok(())
    }

    /// Oldest queued command for the device, marked delivered.
    pub fn take_queued_command(&self, device_id: &str) -> Result<Option<Command>> {
        let row: Option<(String, String)> = self
            .conn
            .query_row(
                "SELECT command_id, command FROM commands WHERE device_id = ?1 AND state = 'queued' ORDER BY seq LIMIT 1",
                [device_id],
                |r| Ok((r.get(0)?, r.get(1)?)),
            )
            .optional()?;
        let Some((id, text)) = row else {
            return Ok(None);
        };
        self.set_command_state(&id, CommandState::Delivered)?;
        Ok(Some(from_json(&text)?))
    }

    pub fn set_command_state(&self, command_id: &str, state: CommandState) -> Result<()> {
        self.conn
            .execute("UPDATE commands SET state = ?2 WHERE command_id = ?1", params![command_id, state.as_str()])?;
        Ok(())
    }

    pub fn set_command_result(&self, result: &CommandResult) -> Result<()> {
        self.conn.execute(
            "UPDATE commands SET state = 'done', result = ?2 WHERE command_id = ?1",
            params![result.command_id, to_json(result)?],
        )?;
        Ok(())
    }

    pub fn command(&self, command_id: &str) -> Result<Option<StoredCommand>> {
        let row: Option<(String, Option<String>, String, Option<String>)> = self
            .conn
            .query_row("SELECT command, job_id, state, result FROM commands WHERE command_id = ?1", [command_id], |r| {
                Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?))
            })
            .optional()?;
        let Some((cmd, job_id, state, result)) = row else {
            return Ok(None);
        };
        Ok(Some(StoredCommand {
            command: from_json(&cmd)?,
            job_id,
            state: CommandState::parse(&state),
            result: result.map(|r| from_json(&r)).transpose()?,
        }))
    }

    /// Cancels every queued or delivered command that has no result yet.
    pub fn cancel_open_commands(&self) -> Result<usize> {
        Ok(self.conn.execute("UPDATE commands SET state = 'cancelled' WHERE state IN ('queued', 'delivered')", [])?)
    }

    /// Canonical text of the durable state: devices with their configs,
    /// scripts, readings and the meta table.
    pub fn snapshot(&self) -> Result<String> {
        let mut out = String::new();
        let sections: [(&str, &str); 4] = [
            ("devices", "SELECT record FROM devices ORDER BY device_id"),
            ("scripts", "SELECT record FROM scripts ORDER BY script_id"),
            ("readings", "SELECT reading FROM readings ORDER BY seq"),
            ("meta", "SELECT key || '=' || value FROM meta ORDER BY key"),
        ];
        for (name, sql) in sections {
            out.push_str(&format!("[{name}]\n"));
            let mut stmt = self.conn.prepare(sql)?;
            let rows = stmt.query_map([], |r| r.get::<_, String>(0))?;
            for row in rows {
                out.push_str(&row?);
                out.push('\n');
            }
        }
        Ok(out)
    }
}
