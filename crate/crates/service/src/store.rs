//! One append-only NDJSON file per trial.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use titekit_core::conduct::{parse_ndjson, to_ndjson_line, LogError, NewEvent, TrialConfig, TrialEvent, TrialLog};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("unknown trial {0}")]
    NotFound(String),
    #[error("idempotency key already used by trial {0}")]
    DuplicateKey(String),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("{0}")]
    Invalid(String),
    #[error("storage failure: {0}")]
    Io(#[from] std::io::Error),
}

struct Trial {
    writer: Mutex<File>,
    current: RwLock<Arc<TrialLog>>,
}

impl Trial {
    fn log(&self) -> Arc<TrialLog> {
        self.current.read().expect("lock poisoned").clone()
    }
}

pub struct Store {
    dir: PathBuf,
    trials: RwLock<BTreeMap<String, Arc<Trial>>>,
    keys: Mutex<BTreeMap<String, String>>,
}

fn write_line(file: &mut File, ev: &TrialEvent) -> std::io::Result<()> {
    file.write_all(to_ndjson_line(ev).as_bytes())?;
    file.sync_data()
}

/// Reads a trial file, cutting off a torn final line. Returns the events
/// and the byte length of the valid prefix.
fn recover(path: &Path) -> Result<(Vec<TrialEvent>, u64), StoreError> {
    let text = std::fs::read_to_string(path)?;
    let mut good = 0usize;
    let mut events = Vec::new();
    let mut rest = text.as_str();
    while let Some(nl) = rest.find('\n') {
        let line = &rest[..nl];
        if !line.trim().is_empty() {
            match parse_ndjson(line) {
                Ok(mut evs) => events.append(&mut evs),
                Err(_) if rest[nl + 1..].trim().is_empty() => break,
                Err((_, e)) => return Err(StoreError::Invalid(format!("{}: {e}", path.display()))),
            }
        }
        good += nl + 1;
        rest = &rest[nl + 1..];
    }
    Ok((events, good as u64))
}

impl Store {
    /// Opens `dir`, creating it if needed, and reloads every trial.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let mut trials = BTreeMap::new();
        let mut keys = BTreeMap::new();
        let mut entries: Vec<_> = std::fs::read_dir(&dir)?.collect::<Result<_, _>>()?;
        entries.sort_by_key(|e| e.file_name());
        for entry in entries {
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("ndjson") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else { continue };
            let (events, len) = recover(&path)?;
            if events.is_empty() {
                tracing::warn!(trial = %id, "skipping empty trial file");
                continue;
            }
            let log = TrialLog::from_events(events)
                .map_err(|(i, e)| StoreError::Invalid(format!("{}: event {}: {e}", path.display(), i + 1)))?;
            let file = OpenOptions::new().write(true).open(&path)?;
            if file.metadata()?.len() != len {
                tracing::warn!(trial = %id, "truncating torn final line");
                file.set_len(len)?;
                file.sync_all()?;
            }
            let mut file = file;
            std::io::Seek::seek(&mut file, std::io::SeekFrom::End(0))?;
            if let Some(k) = &log.config().idempotency_key {
                keys.insert(k.clone(), id.clone());
            }
            trials.insert(id, Arc::new(Trial { writer: Mutex::new(file), current: RwLock::new(Arc::new(log)) }));
        }
        Ok(Self { dir, trials: RwLock::new(trials), keys: Mutex::new(keys) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_of(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.ndjson"))
    }

    pub fn create(&self, config: TrialConfig, at: DateTime<Utc>) -> Result<(String, TrialEvent), StoreError> {
        let mut keys = self.keys.lock().expect("lock poisoned");
        if let Some(k) = &config.idempotency_key {
            if let Some(id) = keys.get(k) {
                return Err(StoreError::DuplicateKey(id.clone()));
            }
        }
        let log = TrialLog::create(config, at).map_err(|e| StoreError::Invalid(e.to_string()))?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let mut file = OpenOptions::new().create_new(true).append(true).open(self.path_of(&id))?;
        let first = log.events()[0].clone();
        write_line(&mut file, &first)?;
        if let Some(k) = &log.config().idempotency_key {
            keys.insert(k.clone(), id.clone());
        }
        let trial = Arc::new(Trial { writer: Mutex::new(file), current: RwLock::new(Arc::new(log)) });
        self.trials.write().expect("lock poisoned").insert(id.clone(), trial);
        Ok((id, first))
    }

    fn trial(&self, id: &str) -> Result<Arc<Trial>, StoreError> {
        self.trials.read().expect("lock poisoned").get(id).cloned().ok_or_else(|| StoreError::NotFound(id.to_string()))
    }

    pub fn log(&self, id: &str) -> Result<Arc<TrialLog>, StoreError> {
        Ok(self.trial(id)?.log())
    }

    pub fn ids(&self) -> Vec<String> {
        self.trials.read().expect("lock poisoned").keys().cloned().collect()
    }

    /// Validates, writes and fsyncs one event before publishing it.
    pub fn append(&self, id: &str, ev: NewEvent) -> Result<(TrialEvent, Vec<String>), StoreError> {
        let trial = self.trial(id)?;
        let mut file = trial.writer.lock().expect("lock poisoned");
        let mut log = (*trial.log()).clone();
        let (event, warnings) = log.append(ev)?;
        write_line(&mut file, &event)?;
        *trial.current.write().expect("lock poisoned") = Arc::new(log);
        Ok((event, warnings))
    }
}
