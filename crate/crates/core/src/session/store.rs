use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::review::{AuditEvent, ReviewSession, SessionError, SessionHeader};

/// One line of a session log file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogLine {
    Header(Box<SessionHeader>),
    Event(AuditEvent),
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("session `{0}` not found")]
    NotFound(String),
    #[error("session `{0}` already exists")]
    Exists(String),
    #[error("session log io error at {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt session log {}: {message}", .path.display())]
    Corrupt { path: PathBuf, message: String },
    #[error(transparent)]
    Session(#[from] SessionError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn line_of(line: &LogLine) -> String {
    let mut text = serde_json::to_string(line).expect("serializable log line");
    text.push('\n');
    text
}

/// Reads a session log and replays it.
pub fn load_session_log(path: &Path) -> Result<ReviewSession, StoreError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let corrupt = |message: String| StoreError::Corrupt {
        path: path.to_path_buf(),
        message,
    };
    let mut header = None;
    let mut events = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LogLine = serde_json::from_str(&line).map_err(|e| corrupt(format!("line {}: {e}", n + 1)))?;
        match (parsed, header.is_some()) {
            (LogLine::Header(h), false) => header = Some(*h),
            (LogLine::Event(e), true) => events.push(e),
            (LogLine::Header(_), true) => return Err(corrupt(format!("line {}: second header", n + 1))),
            (LogLine::Event(_), false) => return Err(corrupt("event before header".into())),
        }
    }
    let header = header.ok_or_else(|| corrupt("missing header".into()))?;
    Ok(ReviewSession::replay(header, events)?)
}

/// Writes a complete log for a session: its header followed by every event.
pub fn write_session_log(path: &Path, session: &ReviewSession) -> Result<(), StoreError> {
    let mut text = line_of(&LogLine::Header(Box::new(session.header.clone())));
    for event in &session.audit {
        text.push_str(&line_of(&LogLine::Event(event.clone())));
    }
    fs::write(path, text).map_err(io_err(path))
}

struct Slot {
    write: Mutex<()>,
    current: RwLock<Arc<ReviewSession>>,
}

/// Directory of append-only session logs, one `<session_id>.jsonl` each.
///
/// Mutations on one session are serialized and applied to a copy, which
/// replaces the published snapshot only after its event is on disk. Readers
/// get the latest published snapshot.
pub struct SessionStore {
    dir: PathBuf,
    slots: RwLock<HashMap<String, Arc<Slot>>>,
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(SessionStore {
            dir,
            slots: RwLock::default(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.jsonl"))
    }

    fn valid_id(id: &str) -> bool {
        !id.is_empty() && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
    }

    pub fn insert(&self, session: ReviewSession) -> Result<Arc<ReviewSession>, StoreError> {
        let id = session.id().to_string();
        if !Self::valid_id(&id) {
            return Err(StoreError::NotFound(id));
        }
        let mut slots = self.slots.write().expect("store lock");
        let path = self.path(&id);
        if slots.contains_key(&id) || path.exists() {
            return Err(StoreError::Exists(id));
        }
        let mut file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(io_err(&path))?;
        let mut text = line_of(&LogLine::Header(Box::new(session.header.clone())));
        for event in &session.audit {
            text.push_str(&line_of(&LogLine::Event(event.clone())));
        }
        file.write_all(text.as_bytes()).map_err(io_err(&path))?;
        file.sync_data().map_err(io_err(&path))?;
        let session = Arc::new(session);
        slots.insert(
            id,
            Arc::new(Slot {
                write: Mutex::new(()),
                current: RwLock::new(session.clone()),
            }),
        );
        Ok(session)
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, StoreError> {
        if let Some(slot) = self.slots.read().expect("store lock").get(id) {
            return Ok(slot.clone());
        }
        if !Self::valid_id(id) {
            return Err(StoreError::NotFound(id.to_string()));
        }
        let path = self.path(id);
        if !path.exists() {
            return Err(StoreError::NotFound(id.to_string()));
        }
        let session = load_session_log(&path)?;
        let mut slots = self.slots.write().expect("store lock");
        let slot = slots
            .entry(id.to_string())
            .or_insert_with(|| {
                Arc::new(Slot {
                    write: Mutex::new(()),
                    current: RwLock::new(Arc::new(session)),
                })
            })
            .clone();
        Ok(slot)
    }

    pub fn get(&self, id: &str) -> Result<Arc<ReviewSession>, StoreError> {
        let slot = self.slot(id)?;
        let current = slot.current.read().expect("session lock").clone();
        Ok(current)
    }

    /// Runs `f` on a copy of the session and persists the events it appends.
    pub fn mutate<F>(&self, id: &str, f: F) -> Result<Arc<ReviewSession>, StoreError>
    where
        F: FnOnce(&mut ReviewSession) -> Result<(), SessionError>,
    {
        let slot = self.slot(id)?;
        let _guard = slot.write.lock().expect("session write lock");
        let mut draft = (**slot.current.read().expect("session lock")).clone();
        let already = draft.audit.len();
        f(&mut draft)?;
        if draft.audit.len() > already {
            let path = self.path(id);
            let mut file = OpenOptions::new().append(true).open(&path).map_err(io_err(&path))?;
            let text: String = draft.audit[already..]
                .iter()
                .map(|e| line_of(&LogLine::Event(e.clone())))
                .collect();
            file.write_all(text.as_bytes()).map_err(io_err(&path))?;
            file.sync_data().map_err(io_err(&path))?;
        }
        let draft = Arc::new(draft);
        *slot.current.write().expect("session lock") = draft.clone();
        Ok(draft)
    }

    /// Every session log in the directory, sorted by id.
    pub fn all(&self) -> Result<Vec<Arc<ReviewSession>>, StoreError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.dir).map_err(io_err(&self.dir))? {
            let path = entry.map_err(io_err(&self.dir))?.path();
            if path.extension().is_some_and(|e| e == "jsonl") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        ids.sort();
        ids.iter().map(|id| self.get(id)).collect()
    }
}

/// Loads every `*.jsonl` session log under `dir`, sorted by file name.
pub fn load_session_dir(dir: &Path) -> Result<Vec<ReviewSession>, StoreError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_session_log(p)).collect()
}
