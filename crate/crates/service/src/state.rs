use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::Mutex;
use ppa_core::dialogue::{DialogueContext, SessionTranscript, Turn};
use ppa_core::memory::{EntryView, MemorySource, MemoryStore};
use ppa_core::pipeline::{
    self, ingest_session_history, HistoryType, IngestOptions, QueryType, StrategyConfig,
    TurnResult,
};
use ppa_core::providers::Providers;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{ApiError, CreateSession, Created, ServiceConfig};

/// The persona agent and the human it talks to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Speakers {
    pub agent: String,
    pub user: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveSession {
    pub session_id: String,
    pub dialogue_id: String,
    /// Position of this session within its dialogue, from 0.
    pub session_index: u32,
    pub speakers: Speakers,
    pub config: StrategyConfig,
    pub turns: Vec<Turn>,
    pub status: SessionStatus,
    /// The view returned by the most recent turn.
    pub last_turn: Option<Value>,
}

/// Reply to a posted turn.
#[derive(Debug, Clone, Serialize)]
pub struct TurnView {
    pub session_id: String,
    /// Index of the agent turn within the session.
    pub turn_index: usize,
    pub reply: Turn,
    #[serde(flatten)]
    pub result: TurnResult,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloseSummary {
    pub session_id: String,
    pub status: SessionStatus,
    pub history_type: HistoryType,
    pub entries_added: usize,
}

struct Dialogue {
    speakers: Speakers,
    memory: Arc<MemoryStore>,
    open_session: Option<String>,
    sessions: u32,
}

type SessionSlot = Arc<tokio::sync::Mutex<LiveSession>>;

struct Inner {
    providers: Providers,
    config: ServiceConfig,
    dialogues: Mutex<HashMap<String, Dialogue>>,
    sessions: Mutex<HashMap<String, SessionSlot>>,
    /// Last committed state of every session, in id order; written out as
    /// the session log.
    committed: Mutex<BTreeMap<String, LiveSession>>,
    /// Held while pool files are written.
    pool_files: Mutex<()>,
}

/// Shared service state; cheap to clone.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

fn file_safe(name: &str) -> String {
    name.bytes()
        .map(|b| {
            if b.is_ascii_alphanumeric() || b == b'-' || b == b'_' {
                (b as char).to_string()
            } else {
                format!("%{b:02X}")
            }
        })
        .collect()
}

impl AppState {
    /// Builds the state, restoring sessions and pools from the store
    /// directory when one is configured.
    pub fn open(providers: Providers, config: ServiceConfig) -> Result<Self, ApiError> {
        let dim = providers.embedder.dimension();
        let mut dialogues = HashMap::new();
        let mut sessions = HashMap::new();
        let mut committed = BTreeMap::new();
        if let Some(dir) = &config.store_dir {
            std::fs::create_dir_all(dir)?;
            for s in read_sessions(&dir.join("sessions.jsonl"))? {
                let d = match dialogues.entry(s.dialogue_id.clone()) {
                    std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                    std::collections::hash_map::Entry::Vacant(e) => {
                        let memory = MemoryStore::load_dir(&memory_dir(dir, &s.dialogue_id), dim)?;
                        e.insert(Dialogue {
                            speakers: s.speakers.clone(),
                            memory: Arc::new(memory),
                            open_session: None,
                            sessions: 0,
                        })
                    }
                };
                d.sessions = d.sessions.max(s.session_index + 1);
                if s.status == SessionStatus::Open {
                    d.open_session = Some(s.session_id.clone());
                }
                committed.insert(s.session_id.clone(), s.clone());
                sessions.insert(s.session_id.clone(), Arc::new(tokio::sync::Mutex::new(s)));
            }
            tracing::info!(dialogues = dialogues.len(), sessions = sessions.len(), "restored state");
        }
        Ok(Self(Arc::new(Inner {
            providers,
            config,
            dialogues: Mutex::new(dialogues),
            sessions: Mutex::new(sessions),
            committed: Mutex::new(committed),
            pool_files: Mutex::new(()),
        })))
    }

    pub fn providers(&self) -> &Providers {
        &self.0.providers
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.0.config
    }

    fn slot(&self, id: &str) -> Result<SessionSlot, ApiError> {
        self.0
            .sessions
            .lock()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("session {id}")))
    }

    fn dialogue_memory(&self, dialogue_id: &str) -> Result<Arc<MemoryStore>, ApiError> {
        self.0
            .dialogues
            .lock()
            .get(dialogue_id)
            .map(|d| d.memory.clone())
            .ok_or_else(|| ApiError::NotFound(format!("dialogue {dialogue_id}")))
    }

    pub async fn create_session(&self, req: CreateSession) -> Result<Created, ApiError> {
        if req.config.query_type == QueryType::Gold {
            return Err(ApiError::GoldRejected);
        }
        req.config
            .validate(false)
            .map_err(|e| ApiError::InvalidRequest(e.to_string()))?;
        let Speakers { agent, user } = &req.speakers;
        if req.dialogue_id.trim().is_empty() || agent.trim().is_empty() || user.trim().is_empty() {
            return Err(ApiError::InvalidRequest(
                "dialogue_id and both speakers must be non-empty".into(),
            ));
        }
        if agent == user {
            return Err(ApiError::InvalidRequest("agent and user must differ".into()));
        }
        if let Some(name) = req.personas.keys().find(|k| *k != agent && *k != user) {
            return Err(ApiError::InvalidRequest(format!("persona for unknown speaker {name}")));
        }

        let session_id = uuid::Uuid::new_v4().to_string();
        let (memory, session_index) = {
            let mut dialogues = self.0.dialogues.lock();
            let d = dialogues.entry(req.dialogue_id.clone()).or_insert_with(|| Dialogue {
                speakers: req.speakers.clone(),
                memory: Arc::new(
                    MemoryStore::new(self.0.providers.embedder.dimension())
                        .expect("embedders report a positive dimension"),
                ),
                open_session: None,
                sessions: 0,
            });
            if d.speakers != req.speakers {
                return Err(ApiError::InvalidRequest(format!(
                    "dialogue {} is between {} and {}",
                    req.dialogue_id, d.speakers.agent, d.speakers.user
                )));
            }
            if let Some(open) = &d.open_session {
                return Err(ApiError::Conflict(format!(
                    "dialogue {} already has open session {open}",
                    req.dialogue_id
                )));
            }
            d.open_session = Some(session_id.clone());
            (d.memory.clone(), d.sessions)
        };

        if let Err(e) = self.load_personas(&memory, &req).await {
            if let Some(d) = self.0.dialogues.lock().get_mut(&req.dialogue_id) {
                d.open_session = None;
            }
            return Err(e);
        }

        let session = LiveSession {
            session_id: session_id.clone(),
            dialogue_id: req.dialogue_id.clone(),
            session_index,
            speakers: req.speakers,
            config: req.config,
            turns: Vec::new(),
            status: SessionStatus::Open,
            last_turn: None,
        };
        self.commit(&session);
        self.0
            .sessions
            .lock()
            .insert(session_id.clone(), Arc::new(tokio::sync::Mutex::new(session)));
        if let Some(d) = self.0.dialogues.lock().get_mut(&req.dialogue_id) {
            d.sessions += 1;
        }
        self.persist(&req.dialogue_id, &memory)?;
        tracing::info!(%session_id, dialogue = %req.dialogue_id, session_index, "session opened");
        Ok(Created {
            session_id,
            dialogue_id: req.dialogue_id,
            session_index,
        })
    }

    async fn load_personas(&self, memory: &MemoryStore, req: &CreateSession) -> Result<(), ApiError> {
        for (speaker, sentences) in &req.personas {
            for s in sentences {
                memory
                    .add(speaker, s, MemorySource::PredefinedPersona, None, self.0.providers.embedder.as_ref())
                    .await?;
            }
        }
        Ok(())
    }

    /// Appends the user's turn, runs the strategy and appends the agent's
    /// reply. Nothing changes when the strategy fails.
    pub async fn post_turn(&self, id: &str, text: String) -> Result<TurnView, ApiError> {
        if text.trim().is_empty() {
            return Err(ApiError::InvalidRequest("turn text is empty".into()));
        }
        let slot = self.slot(id)?;
        let mut session = slot.lock().await;
        if session.status == SessionStatus::Closed {
            return Err(ApiError::SessionClosed(id.to_string()));
        }
        let memory = self.dialogue_memory(&session.dialogue_id)?;
        let Speakers { agent, user } = session.speakers.clone();

        let mut turns = session.turns.clone();
        turns.push(Turn::new(user.as_str(), text));
        let ctx = DialogueContext::new(agent.as_str(), user.as_str(), turns.clone())
            .map_err(|e| ApiError::InvalidRequest(e.to_string()))?;
        let turn_index = turns.len();
        let cfg = session
            .config
            .clone()
            .with_seed(session.config.seed.map(|s| s.wrapping_add(turn_index as u64)));
        let result = pipeline::run_turn(&ctx, &memory, &self.0.providers, &cfg, None).await?;

        let reply = Turn::new(agent.as_str(), result.final_response.as_str());
        let view = TurnView {
            session_id: id.to_string(),
            turn_index,
            reply: reply.clone(),
            result,
        };
        turns.push(reply);
        let mut next = session.clone();
        next.turns = turns;
        next.last_turn = Some(serde_json::to_value(&view).expect("turn views serialize"));
        let dialogue_id = next.dialogue_id.clone();
        self.commit(&next);
        *session = next;
        drop(session);
        self.persist_sessions()?;
        tracing::debug!(session = id, dialogue = %dialogue_id, turn_index, "turn answered");
        Ok(view)
    }

    /// Closes the session and ingests it into memory. Closing a closed
    /// session adds nothing. When ingestion fails the session stays open so
    /// the close can be retried.
    pub async fn close_session(&self, id: &str) -> Result<CloseSummary, ApiError> {
        let slot = self.slot(id)?;
        let mut session = slot.lock().await;
        let history_type = session.config.history_type;
        if session.status == SessionStatus::Closed {
            return Ok(CloseSummary {
                session_id: id.to_string(),
                status: SessionStatus::Closed,
                history_type,
                entries_added: 0,
            });
        }
        let memory = self.dialogue_memory(&session.dialogue_id)?;
        let Speakers { agent, user } = &session.speakers;
        let transcript =
            SessionTranscript::new([agent.clone(), user.clone()], session.turns.clone())
                .map_err(|e| ApiError::InvalidRequest(e.to_string()))?;
        let opts = if self.0.config.extract_user_facts {
            IngestOptions::both()
        } else {
            IngestOptions::only(agent.as_str())
        };
        let entries_added = ingest_session_history(
            &transcript,
            session.session_index,
            history_type,
            &memory,
            &self.0.providers,
            &opts,
        )
        .await?;

        session.status = SessionStatus::Closed;
        self.commit(&session);
        let dialogue_id = session.dialogue_id.clone();
        drop(session);
        if let Some(d) = self.0.dialogues.lock().get_mut(&dialogue_id) {
            if d.open_session.as_deref() == Some(id) {
                d.open_session = None;
            }
        }
        self.persist(&dialogue_id, &memory)?;
        tracing::info!(session = id, dialogue = %dialogue_id, entries_added, "session closed");
        Ok(CloseSummary {
            session_id: id.to_string(),
            status: SessionStatus::Closed,
            history_type,
            entries_added,
        })
    }

    pub async fn session(&self, id: &str) -> Result<LiveSession, ApiError> {
        let slot = self.slot(id)?;
        let s = slot.lock().await;
        Ok(s.clone())
    }

    /// Insertion-ordered entries of one speaker, or of both when `speaker`
    /// is absent (agent first).
    pub fn memory(&self, dialogue_id: &str, speaker: Option<&str>) -> Result<Vec<EntryView>, ApiError> {
        let dialogues = self.0.dialogues.lock();
        let d = dialogues
            .get(dialogue_id)
            .ok_or_else(|| ApiError::NotFound(format!("dialogue {dialogue_id}")))?;
        let owners: Vec<&str> = match speaker {
            Some(s) if s == d.speakers.agent || s == d.speakers.user => vec![s],
            Some(s) => {
                return Err(ApiError::NotFound(format!(
                    "speaker {s} in dialogue {dialogue_id}"
                )))
            }
            None => vec![&d.speakers.agent, &d.speakers.user],
        };
        Ok(owners
            .into_iter()
            .flat_map(|o| d.memory.entries(o))
            .map(|e| e.view())
            .collect())
    }

    fn commit(&self, session: &LiveSession) {
        self.0
            .committed
            .lock()
            .insert(session.session_id.clone(), session.clone());
    }

    fn persist(&self, dialogue_id: &str, memory: &MemoryStore) -> Result<(), ApiError> {
        if let Some(dir) = &self.0.config.store_dir {
            let _guard = self.0.pool_files.lock();
            memory.save_dir(&memory_dir(dir, dialogue_id))?;
        }
        self.persist_sessions()
    }

    fn persist_sessions(&self) -> Result<(), ApiError> {
        let Some(dir) = &self.0.config.store_dir else {
            return Ok(());
        };
        let committed = self.0.committed.lock();
        let mut lines = String::new();
        for s in committed.values() {
            lines.push_str(&serde_json::to_string(s).expect("sessions serialize"));
            lines.push('\n');
        }
        let tmp = dir.join("sessions.jsonl.tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(lines.as_bytes())?;
            f.sync_all()?;
        }
        std::fs::rename(tmp, dir.join("sessions.jsonl"))?;
        Ok(())
    }
}

fn memory_dir(store: &Path, dialogue_id: &str) -> PathBuf {
    store.join("dialogues").join(file_safe(dialogue_id))
}

fn read_sessions(path: &Path) -> Result<Vec<LiveSession>, ApiError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                let msg = format!("{}:{}: {e}", path.display(), i + 1);
                ApiError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, msg))
            })
        })
        .collect()
}
