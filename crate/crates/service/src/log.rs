//! Append-only JSON-lines event log, one file per session.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use infoloss::listening::{RecordedResponse, SessionRecord};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        record: SessionRecord,
        token: String,
    },
    Response {
        trial: usize,
        response: RecordedResponse,
    },
}

/// A replayed session: its record with every logged response applied.
#[derive(Debug, Clone)]
pub struct Replayed {
    pub record: SessionRecord,
    pub token: String,
}

pub struct EventLog {
    file: std::fs::File,
    path: PathBuf,
}

impl EventLog {
    pub fn path_for(dir: &Path, session_id: &str) -> PathBuf {
        dir.join(format!("{session_id}.jsonl"))
    }

    /// Creates the log with its first event, durable on return.
    pub fn create(dir: &Path, first: &Event) -> std::io::Result<Self> {
        let Event::Created { record, .. } = first else {
            return Err(std::io::Error::other(
                "a log must start with a created event",
            ));
        };
        let path = Self::path_for(dir, &record.session_id);
        let file = std::fs::OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(&path)?;
        let mut log = EventLog { file, path };
        log.append(first)?;
        if let Ok(d) = std::fs::File::open(dir) {
            d.sync_all()?;
        }
        Ok(log)
    }

    /// Writes one line and syncs it to disk.
    pub fn append(&mut self, event: &Event) -> std::io::Result<()> {
        let mut line = serde_json::to_vec(event).map_err(std::io::Error::other)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Replays a log and reopens it for appending. A torn final line (a
    /// crash mid-write, never acknowledged) is cut off.
    pub fn replay(path: &Path) -> std::io::Result<(Replayed, Self)> {
        let bad = |msg: String| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("{}: {msg}", path.display()),
            )
        };
        let mut reader = BufReader::new(std::fs::File::open(path)?);
        let mut state: Option<Replayed> = None;
        let mut good_len = 0u64;
        let mut buf = Vec::new();
        loop {
            buf.clear();
            let n = reader.read_until(b'\n', &mut buf)?;
            if n == 0 {
                break;
            }
            if !buf.ends_with(b"\n") {
                break;
            }
            let event: Event = serde_json::from_slice(&buf)
                .map_err(|e| bad(format!("corrupt event at byte {good_len}: {e}")))?;
            match (event, &mut state) {
                (Event::Created { record, token }, None) => {
                    state = Some(Replayed { record, token })
                }
                (Event::Response { trial, response }, Some(s)) => {
                    s.record
                        .respond(trial, response)
                        .map_err(|e| bad(format!("inconsistent response to trial {trial}: {e}")))?;
                }
                _ => return Err(bad("events out of order".into())),
            }
            good_len += n as u64;
        }
        let state = state.ok_or_else(|| bad("no created event".into()))?;
        let file = std::fs::OpenOptions::new().append(true).open(path)?;
        if file.metadata()?.len() != good_len {
            file.set_len(good_len)?;
            file.sync_all()?;
        }
        Ok((
            state,
            EventLog {
                file,
                path: path.to_owned(),
            },
        ))
    }
}
