//! On-disk layout of one experiment: an append-only event log, a worker
//! registry holding self-identified race text, and an optional snapshot.

use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::state::State;
use super::GatewayError;
use crate::aggregate::HumanVerdict;
use crate::assignment::{Condition, TaskAssignment};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const REGISTRY_FILE: &str = "registry.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Draft,
    Open,
    Closed,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Draft => "draft",
            Status::Open => "open",
            Status::Closed => "closed",
        })
    }
}

/// Settings that must not change across restarts of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub manifest: String,
    pub labels: Vec<String>,
    pub routing_policy: String,
    pub conditions: Vec<Condition>,
    pub quota: usize,
    pub gold_count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    ExperimentCreated {
        fingerprint: Fingerprint,
    },
    /// Carries the coded label only; `null` for unmapped workers.
    WorkerRegistered {
        worker_id: String,
        coded_race: Option<String>,
        prior_experience: bool,
        condition: Condition,
    },
    AssignmentClaimed {
        assignment: TaskAssignment,
    },
    VerdictRecorded {
        verdict: HumanVerdict,
    },
    StatusChanged {
        status: Status,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub sequence_number: u64,
    pub experiment_id: String,
    pub recorded_at: DateTime<Utc>,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub worker_id: String,
    pub self_identified_race: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub state: State,
}

fn io_err(path: &Path, e: std::io::Error) -> GatewayError {
    GatewayError::Storage(format!("{}: {e}", path.display()))
}

fn open_append(path: &Path, private: bool) -> Result<File, GatewayError> {
    let mut options = OpenOptions::new();
    options.create(true).append(true);
    #[cfg(unix)]
    if private {
        use std::os::unix::fs::OpenOptionsExt;
        options.mode(0o600);
    }
    #[cfg(not(unix))]
    let _ = private;
    options.open(path).map_err(|e| io_err(path, e))
}

/// Reads a record-per-line file. A final line without its newline is a
/// write that was cut off before it was acknowledged; it is dropped and
/// the file truncated back to the last complete record.
fn read_complete_lines(path: &Path) -> Result<Vec<(usize, String)>, GatewayError> {
    let mut bytes = Vec::new();
    match File::open(path) {
        Ok(mut f) => f.read_to_end(&mut bytes).map_err(|e| io_err(path, e))?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path, e)),
    };
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    if complete < bytes.len() {
        tracing::warn!(path = %path.display(), dropped = bytes.len() - complete, "truncating torn record");
        let f = OpenOptions::new().write(true).open(path).map_err(|e| io_err(path, e))?;
        f.set_len(complete as u64).map_err(|e| io_err(path, e))?;
        f.sync_all().map_err(|e| io_err(path, e))?;
    }
    let text = std::str::from_utf8(&bytes[..complete])
        .map_err(|e| GatewayError::Corrupt { line: 0, reason: e.to_string() })?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.to_string()))
        .collect())
}

pub struct Store {
    dir: PathBuf,
    events: File,
    registry: File,
    fsync: bool,
}

impl Store {
    pub fn open(dir: &Path, fsync: bool) -> Result<(Store, Vec<LogEntry>, Vec<RegistryEntry>), GatewayError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let events_path = dir.join(EVENTS_FILE);
        let registry_path = dir.join(REGISTRY_FILE);

        let entries = read_complete_lines(&events_path)?
            .into_iter()
            .map(|(line, text)| {
                serde_json::from_str::<LogEntry>(&text)
                    .map_err(|e| GatewayError::Corrupt { line, reason: e.to_string() })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let registry = read_complete_lines(&registry_path)?
            .into_iter()
            .map(|(line, text)| {
                serde_json::from_str::<RegistryEntry>(&text).map_err(|e| GatewayError::Corrupt {
                    line,
                    reason: format!("registry: {e}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;

        let store = Store {
            dir: dir.to_path_buf(),
            events: open_append(&events_path, false)?,
            registry: open_append(&registry_path, true)?,
            fsync,
        };
        Ok((store, entries, registry))
    }

    fn write_line(file: &mut File, path: &Path, line: &str, fsync: bool) -> Result<(), GatewayError> {
        let mut buf = String::with_capacity(line.len() + 1);
        buf.push_str(line);
        buf.push('\n');
        file.write_all(buf.as_bytes()).map_err(|e| io_err(path, e))?;
        if fsync {
            file.sync_data().map_err(|e| io_err(path, e))?;
        }
        Ok(())
    }

    pub fn append(&mut self, entry: &LogEntry) -> Result<(), GatewayError> {
        let line = serde_json::to_string(entry).expect("log entries serialize");
        Store::write_line(&mut self.events, &self.dir.join(EVENTS_FILE), &line, self.fsync)
    }

    pub fn register(&mut self, entry: &RegistryEntry) -> Result<(), GatewayError> {
        let line = serde_json::to_string(entry).expect("registry entries serialize");
        Store::write_line(&mut self.registry, &self.dir.join(REGISTRY_FILE), &line, self.fsync)
    }

    pub fn write_snapshot(&self, state: &State) -> Result<(), GatewayError> {
        let path = self.dir.join(SNAPSHOT_FILE);
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let body = serde_json::to_vec(&Snapshot { state: state.clone() }).expect("state serializes");
        let mut f = File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        f.write_all(&body).map_err(|e| io_err(&tmp, e))?;
        f.sync_all().map_err(|e| io_err(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| io_err(&path, e))
    }

    pub fn read_snapshot(dir: &Path) -> Result<Option<Snapshot>, GatewayError> {
        let path = dir.join(SNAPSHOT_FILE);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| GatewayError::Corrupt { line: 0, reason: format!("snapshot: {e}") }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path, e)),
        }
    }
}
