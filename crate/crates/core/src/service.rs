//! Durable session store. Each session lives in `sessions/<id>.jsonl`, one
//! [`TurnRecord`] per line, plus a `<id>.meta.json` sidecar. Every reply is
//! appended and synced before it is returned; reopening the store replays
//! each transcript through the dialog state machine.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialog::{
    extract_indicators, now_millis, DialogError, DialogPhase, DialogSession, Speaker, TrustIndicators, Turn,
    TurnRecord, DEFAULT_MAX_TURNS,
};
use crate::prompt_gen::PromptSet;
use crate::valence::ValenceLexicon;

/// Environment variable that overrides the persistence root.
pub const DATA_DIR_ENV: &str = "TRUSTCONV_DATA_DIR";
pub const DEFAULT_PROMPT_SET_ID: &str = "default";

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown prompt set `{0}`")]
    UnknownPromptSet(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("session is closed")]
    SessionClosed,
    #[error("prompt set `{0}` differs from the copy stored with existing sessions")]
    PromptSetChanged(String),
    #[error("invalid prompt set id `{0}`")]
    InvalidPromptSetId(String),
    #[error("corrupt session file {path}: {message}")]
    Corrupt { path: String, message: String },
    #[error(transparent)]
    Dialog(DialogError),
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ServiceError + '_ {
    move |source| ServiceError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionDescriptor {
    pub session_id: String,
    pub prompt_set_id: String,
    pub opening: String,
    pub phase: DialogPhase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reply {
    pub agent_reply: String,
    pub phase: DialogPhase,
    pub session_complete: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct SessionMeta {
    session_id: String,
    prompt_set_id: String,
    max_turns: usize,
}

struct Entry {
    session: DialogSession,
    file: File,
    path: PathBuf,
    replies: HashMap<String, Reply>,
}

pub struct SessionStore {
    root: PathBuf,
    prompt_sets: BTreeMap<String, Arc<PromptSet>>,
    lexicon: Arc<ValenceLexicon>,
    max_turns: usize,
    sessions: RwLock<HashMap<String, Arc<Mutex<Entry>>>>,
}

fn reply_of(session: &DialogSession) -> Reply {
    Reply {
        agent_reply: session.last_agent_turn().text.clone(),
        phase: session.phase(),
        session_complete: session.is_closed(),
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

/// Writes `contents` to a temporary sibling and renames it into place.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), ServiceError> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(contents).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

impl SessionStore {
    /// Opens (or creates) the store under `root` and restores every
    /// persisted session. Prompt sets are copied into the root on first use;
    /// a later run with a different set under the same id is refused, since
    /// stored sessions could no longer replay.
    pub fn open(
        root: &Path,
        prompt_sets: BTreeMap<String, PromptSet>,
        lexicon: ValenceLexicon,
        max_turns: usize,
    ) -> Result<Self, ServiceError> {
        let sessions_dir = root.join("sessions");
        let sets_dir = root.join("prompt_sets");
        fs::create_dir_all(&sessions_dir).map_err(io_err(&sessions_dir))?;
        fs::create_dir_all(&sets_dir).map_err(io_err(&sets_dir))?;
        let mut sets = BTreeMap::new();
        for (id, set) in prompt_sets {
            if !valid_id(&id) {
                return Err(ServiceError::InvalidPromptSetId(id));
            }
            let path = sets_dir.join(format!("{id}.json"));
            let json = set.to_json();
            match fs::read_to_string(&path) {
                Ok(stored) if stored != json => return Err(ServiceError::PromptSetChanged(id)),
                Ok(_) => {}
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => write_atomic(&path, json.as_bytes())?,
                Err(e) => return Err(io_err(&path)(e)),
            }
            sets.insert(id, Arc::new(set));
        }
        let store = Self {
            root: root.to_path_buf(),
            prompt_sets: sets,
            lexicon: Arc::new(lexicon),
            max_turns,
            sessions: RwLock::new(HashMap::new()),
        };
        store.restore()?;
        Ok(store)
    }

    pub fn with_defaults(root: &Path, prompt_set: PromptSet) -> Result<Self, ServiceError> {
        Self::open(
            root,
            BTreeMap::from([(DEFAULT_PROMPT_SET_ID.to_string(), prompt_set)]),
            ValenceLexicon::bundled(),
            DEFAULT_MAX_TURNS,
        )
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn sessions_dir(&self) -> PathBuf {
        self.root.join("sessions")
    }

    fn restore(&self) -> Result<(), ServiceError> {
        let dir = self.sessions_dir();
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
            .collect();
        paths.sort();
        let mut sessions = self.sessions.write().expect("session map lock");
        for path in paths {
            let entry = self.restore_one(&path)?;
            sessions.insert(entry.session.session_id.clone(), Arc::new(Mutex::new(entry)));
        }
        log::info!("restored {} sessions from {}", sessions.len(), dir.display());
        Ok(())
    }

    fn restore_one(&self, path: &Path) -> Result<Entry, ServiceError> {
        let corrupt = |message: String| ServiceError::Corrupt {
            path: path.display().to_string(),
            message,
        };
        let meta_path = path.with_extension("meta.json");
        let meta: SessionMeta = serde_json::from_str(&fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?)
            .map_err(|e| corrupt(format!("metadata: {e}")))?;
        let set = self
            .prompt_sets
            .get(&meta.prompt_set_id)
            .ok_or_else(|| ServiceError::UnknownPromptSet(meta.prompt_set_id.clone()))?;

        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut records = Vec::new();
        // Byte offset just past each parsed record.
        let mut ends = Vec::new();
        for line in text.split_inclusive('\n') {
            if !line.ends_with('\n') {
                // A torn final write: the reply was never acknowledged.
                log::warn!("{}: dropping incomplete trailing record", path.display());
                break;
            }
            let record: TurnRecord =
                serde_json::from_str(line).map_err(|e| corrupt(format!("record {}: {e}", records.len())))?;
            if record.session_id != meta.session_id || record.turn.index != records.len() {
                return Err(corrupt(format!("record {} is out of sequence", records.len())));
            }
            records.push(record);
            ends.push(ends.last().copied().unwrap_or(0) + line.len());
        }
        if records.is_empty() {
            return Err(corrupt("no opening turn".into()));
        }
        if records.len() % 2 == 0 {
            log::warn!("{}: dropping reply without an agent turn", path.display());
            records.pop();
            ends.pop();
        }
        let valid_len = *ends.last().expect("opening record");
        if valid_len != text.len() {
            let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
            f.set_len(valid_len as u64).map_err(io_err(path))?;
            f.sync_all().map_err(io_err(path))?;
        }

        let turns: Vec<Turn> = records.iter().map(|r| r.turn.clone()).collect();
        let session = DialogSession::replay(
            meta.session_id,
            set.clone(),
            self.lexicon.clone(),
            meta.max_turns,
            &turns,
        )
        .map_err(|e| corrupt(e.to_string()))?;
        let mut replies = HashMap::new();
        for (i, record) in records.iter().enumerate() {
            if let (Some(key), Some(agent)) = (&record.idempotency_key, records.get(i + 1)) {
                let phase = agent.turn.phase;
                replies.insert(
                    key.clone(),
                    Reply {
                        agent_reply: agent.turn.text.clone(),
                        phase,
                        session_complete: phase == DialogPhase::Closed,
                    },
                );
            }
        }
        let file = OpenOptions::new().append(true).open(path).map_err(io_err(path))?;
        Ok(Entry {
            session,
            file,
            path: path.to_path_buf(),
            replies,
        })
    }

    pub fn prompt_set_ids(&self) -> Vec<String> {
        self.prompt_sets.keys().cloned().collect()
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .sessions
            .read()
            .expect("session map lock")
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }

    fn entry(&self, session_id: &str) -> Result<Arc<Mutex<Entry>>, ServiceError> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(session_id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(session_id.to_string()))
    }

    fn append(entry: &mut Entry, turns: &[Turn], idempotency_key: Option<&str>) -> Result<(), ServiceError> {
        let mut buf = String::new();
        for turn in turns {
            let record = TurnRecord {
                session_id: entry.session.session_id.clone(),
                turn: turn.clone(),
                idempotency_key: (turn.speaker == Speaker::Respondent)
                    .then(|| idempotency_key.map(str::to_string))
                    .flatten(),
            };
            buf.push_str(&serde_json::to_string(&record).expect("turn serializes"));
            buf.push('\n');
        }
        let before = entry.file.metadata().map_err(io_err(&entry.path))?.len();
        let written = entry
            .file
            .write_all(buf.as_bytes())
            .and_then(|()| entry.file.sync_data());
        if let Err(e) = written {
            // Drop any partial record so later appends stay parseable.
            let _ = entry.file.set_len(before);
            return Err(io_err(&entry.path)(e));
        }
        Ok(())
    }

    /// Starts a session and persists its opening turn.
    pub fn create_session(&self, prompt_set_id: &str) -> Result<SessionDescriptor, ServiceError> {
        let set = self
            .prompt_sets
            .get(prompt_set_id)
            .ok_or_else(|| ServiceError::UnknownPromptSet(prompt_set_id.to_string()))?;
        let session_id = format!("{:032x}", rand::random::<u128>());
        let session = DialogSession::new(
            session_id.clone(),
            set.clone(),
            self.lexicon.clone(),
            self.max_turns,
            now_millis(),
        )
        .map_err(ServiceError::Dialog)?;
        let dir = self.sessions_dir();
        let meta = SessionMeta {
            session_id: session_id.clone(),
            prompt_set_id: prompt_set_id.to_string(),
            max_turns: self.max_turns,
        };
        write_atomic(
            &dir.join(format!("{session_id}.meta.json")),
            serde_json::to_string(&meta).expect("meta serializes").as_bytes(),
        )?;
        let path = dir.join(format!("{session_id}.jsonl"));
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        let mut entry = Entry {
            session,
            file,
            path,
            replies: HashMap::new(),
        };
        let opening = entry.session.transcript().to_vec();
        Self::append(&mut entry, &opening, None)?;
        let descriptor = SessionDescriptor {
            session_id: session_id.clone(),
            prompt_set_id: prompt_set_id.to_string(),
            opening: opening[0].text.clone(),
            phase: entry.session.phase(),
        };
        self.sessions
            .write()
            .expect("session map lock")
            .insert(session_id, Arc::new(Mutex::new(entry)));
        Ok(descriptor)
    }

    /// Advances the session with the respondent's text. A repeated
    /// idempotency key returns the stored reply without touching the
    /// transcript.
    pub fn post_message(
        &self,
        session_id: &str,
        text: &str,
        idempotency_key: Option<&str>,
    ) -> Result<Reply, ServiceError> {
        let entry = self.entry(session_id)?;
        let mut entry = entry.lock().expect("session lock");
        if let Some(reply) = idempotency_key.and_then(|k| entry.replies.get(k)) {
            return Ok(reply.clone());
        }
        if entry.session.is_closed() {
            return Err(ServiceError::SessionClosed);
        }
        let mut next = entry.session.clone();
        next.advance_at(text, now_millis()).map_err(|e| match e {
            DialogError::SessionClosed => ServiceError::SessionClosed,
            e => ServiceError::Dialog(e),
        })?;
        let new_turns = next.transcript()[entry.session.transcript().len()..].to_vec();
        Self::append(&mut entry, &new_turns, idempotency_key)?;
        entry.session = next;
        let reply = reply_of(&entry.session);
        if let Some(key) = idempotency_key {
            entry.replies.insert(key.to_string(), reply.clone());
        }
        Ok(reply)
    }

    pub fn get_transcript(&self, session_id: &str) -> Result<Vec<Turn>, ServiceError> {
        let entry = self.entry(session_id)?;
        let entry = entry.lock().expect("session lock");
        Ok(entry.session.transcript().to_vec())
    }

    pub fn get_indicators(&self, session_id: &str) -> Result<TrustIndicators, ServiceError> {
        let entry = self.entry(session_id)?;
        let entry = entry.lock().expect("session lock");
        Ok(extract_indicators(&entry.session))
    }

    pub fn phase(&self, session_id: &str) -> Result<DialogPhase, ServiceError> {
        let entry = self.entry(session_id)?;
        let entry = entry.lock().expect("session lock");
        Ok(entry.session.phase())
    }
}
