//! Append-only JSONL event files, one per session.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use mkbo_core::KernelSpec;
use serde::{Deserialize, Serialize};

use super::api::{CloseSummary, CreateRequest, ObservationResponse, SuggestionResponse};
use crate::strategy::KernelProvenance;

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum Event {
    /// Carries the resolved kernel so replay never re-runs pre-training.
    Created {
        id: String,
        created_at_ms: u64,
        request: CreateRequest,
        kernel: KernelSpec,
        scale_grid: Option<Vec<f64>>,
        provenance: KernelProvenance,
    },
    Suggested {
        response: SuggestionResponse,
    },
    Observed {
        x: Vec<f64>,
        y: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        key: Option<String>,
        response: ObservationResponse,
    },
    Closed {
        summary: CloseSummary,
    },
}

/// 22-character URL-safe id from 128 random bits.
pub fn new_id() -> String {
    URL_SAFE_NO_PAD.encode(uuid::Uuid::new_v4().as_bytes())
}

pub fn valid_id(id: &str) -> bool {
    id.len() == 22 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("event log {path} is corrupt at line {line}: {message}")]
    Corrupt { path: String, line: usize, message: String },
}

#[derive(Debug, Clone)]
pub struct EventLog {
    dir: PathBuf,
}

impl EventLog {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.jsonl"))
    }

    fn write_line(file: &mut File, event: &Event) -> io::Result<()> {
        let mut line = serde_json::to_vec(event).map_err(io::Error::other)?;
        line.push(b'\n');
        file.write_all(&line)?;
        file.sync_data()
    }

    /// Start a new log with its `created` event.
    pub fn create(&self, id: &str, event: &Event) -> io::Result<()> {
        let path = self.path(id);
        let mut file = OpenOptions::new().write(true).create_new(true).open(&path)?;
        if let Err(e) = Self::write_line(&mut file, event) {
            let _ = std::fs::remove_file(&path);
            return Err(e);
        }
        sync_dir(&self.dir)
    }

    pub fn append(&self, id: &str, event: &Event) -> io::Result<()> {
        let mut file = OpenOptions::new().append(true).open(self.path(id))?;
        Self::write_line(&mut file, event)
    }

    /// All complete events, or `None` if the session has no log. A torn
    /// trailing line (no newline) is dropped and truncated away so later
    /// appends start on a fresh line.
    pub fn read(&self, id: &str) -> Result<Option<Vec<Event>>, StoreError> {
        let path = self.path(id);
        let mut file = match OpenOptions::new().read(true).write(true).open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let complete = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |p| p + 1);
        if complete < bytes.len() {
            log::warn!(
                "{}: dropping {} bytes of torn trailing event",
                path.display(),
                bytes.len() - complete
            );
            file.set_len(complete as u64)?;
            file.sync_data()?;
        }
        let mut events = Vec::new();
        for (i, line) in bytes[..complete].split(|b| *b == b'\n').enumerate() {
            if line.is_empty() {
                continue;
            }
            let event = serde_json::from_slice(line).map_err(|e| StoreError::Corrupt {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })?;
            events.push(event);
        }
        if events.is_empty() {
            return Ok(None);
        }
        Ok(Some(events))
    }
}

fn sync_dir(dir: &Path) -> io::Result<()> {
    #[cfg(unix)]
    File::open(dir)?.sync_all()?;
    #[cfg(not(unix))]
    let _ = dir;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::service::api::Status;

    fn closed() -> Event {
        Event::Closed {
            summary: CloseSummary {
                status: Status::Closed,
                iterations: 0,
                observations: 0,
                best_so_far: None,
                best_x: None,
            },
        }
    }

    #[test]
    fn ids_are_url_safe_and_22_chars() {
        for _ in 0..100 {
            let id = new_id();
            assert!(valid_id(&id), "{id}");
        }
        assert!(!valid_id("../../etc/passwd-xxxxxx"));
    }

    #[test]
    fn torn_tail_is_dropped_and_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let log = EventLog::open(dir.path()).unwrap();
        let id = new_id();
        log.create(&id, &closed()).unwrap();
        let mut f = OpenOptions::new().append(true).open(log.path(&id)).unwrap();
        f.write_all(br#"{"event":"clo"#).unwrap();
        assert_eq!(log.read(&id).unwrap().unwrap(), vec![closed()]);
        log.append(&id, &closed()).unwrap();
        assert_eq!(log.read(&id).unwrap().unwrap().len(), 2);
    }

    #[test]
    fn missing_and_corrupt_logs() {
        let dir = tempfile::tempdir().unwrap();
        let log = EventLog::open(dir.path()).unwrap();
        assert!(log.read(&new_id()).unwrap().is_none());
        let id = new_id();
        std::fs::write(log.path(&id), "not json\n{}\n").unwrap();
        assert!(matches!(log.read(&id), Err(StoreError::Corrupt { line: 1, .. })));
    }
}
