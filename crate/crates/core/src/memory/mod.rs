//! Speaker-scoped memory pools of verbalized facts with embeddings.
//!
//! A [`MemoryPool`] belongs to one speaker and holds [`MemoryEntry`] values in
//! insertion order. Text is deduplicated after case folding and whitespace
//! collapsing. Retrieval is an exact cosine scan with a strict threshold and
//! insertion-order tie-breaking; pools are small enough that nothing else is
//! needed.
//!
//! [`MemoryStore`] groups the pools of one dialogue and is safe to share:
//! concurrent readers, writes serialized per pool.

mod persist;
mod similarity;
mod triples;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::providers::{EmbeddingProvider, ProviderError};
use crate::text::normalize_for_dedup;

pub use similarity::{cosine_similarity, retrieve_top_k};
pub use triples::{extract_triples, parse_triples, verbalize_triple, PersonaTriple};

#[derive(Debug, thiserror::Error)]
pub enum MemoryError {
    #[error("invalid triple: {0} is empty")]
    InvalidTriple(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("memory text is empty")]
    EmptyText,
    #[error("pool dimension must be positive")]
    ZeroDimension,
    #[error("session has no turns")]
    EmptySession,
    #[error("embedding provider failed: {0}")]
    Provider(#[from] ProviderError),
    #[error("extractor output is not parseable: {0}")]
    Parse(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Corrupt {
        path: String,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntryId(String);

impl EntryId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemorySource {
    PredefinedPersona,
    ExtractedHistory,
    RawUtterance,
    SessionSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub id: EntryId,
    pub owner: String,
    pub text: String,
    pub source: MemorySource,
    pub session_index: Option<u32>,
    pub embedding: Vec<f64>,
}

impl MemoryEntry {
    pub fn view(&self) -> EntryView {
        EntryView {
            id: self.id.clone(),
            owner: self.owner.clone(),
            text: self.text.clone(),
            source: self.source,
            session_index: self.session_index,
        }
    }
}

/// A memory entry without its embedding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryView {
    pub id: EntryId,
    pub owner: String,
    pub text: String,
    pub source: MemorySource,
    pub session_index: Option<u32>,
}

/// Serializes as the entry's [`EntryView`] plus `score`.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub entry: Arc<MemoryEntry>,
    pub score: f64,
}

/// Serialized form of a [`RetrievalResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedView {
    #[serde(flatten)]
    pub entry: EntryView,
    pub score: f64,
}

impl RetrievalResult {
    pub fn view(&self) -> RetrievedView {
        RetrievedView {
            entry: self.entry.view(),
            score: self.score,
        }
    }
}

impl Serialize for RetrievalResult {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.view().serialize(serializer)
    }
}

/// Outcome of adding text to a pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Insertion {
    Added(EntryId),
    /// The normalized text was already present under this id.
    Existing(EntryId),
}

impl Insertion {
    pub fn id(&self) -> &EntryId {
        match self {
            Self::Added(id) | Self::Existing(id) => id,
        }
    }

    pub fn is_added(&self) -> bool {
        matches!(self, Self::Added(_))
    }
}

#[derive(Debug, Clone)]
pub struct MemoryPool {
    owner: String,
    dimension: usize,
    entries: Vec<Arc<MemoryEntry>>,
    by_text: HashMap<String, usize>,
    ids: HashSet<EntryId>,
    next_seq: u64,
}

impl MemoryPool {
    pub fn new(owner: impl Into<String>, dimension: usize) -> Result<Self, MemoryError> {
        if dimension == 0 {
            return Err(MemoryError::ZeroDimension);
        }
        Ok(Self {
            owner: owner.into(),
            dimension,
            entries: Vec::new(),
            by_text: HashMap::new(),
            ids: HashSet::new(),
            next_seq: 0,
        })
    }

    pub fn owner(&self) -> &str {
        &self.owner
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn entries(&self) -> &[Arc<MemoryEntry>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Id of an entry whose normalized text equals `text`'s.
    pub fn find_text(&self, text: &str) -> Option<&EntryId> {
        self.by_text
            .get(&normalize_for_dedup(text))
            .map(|&i| &self.entries[i].id)
    }

    fn fresh_id(&mut self) -> EntryId {
        loop {
            let id = EntryId(format!("{}#{}", self.owner, self.next_seq));
            self.next_seq += 1;
            if !self.ids.contains(&id) {
                return id;
            }
        }
    }

    /// Appends a pre-embedded entry unless its normalized text is present.
    pub fn insert(
        &mut self,
        text: &str,
        source: MemorySource,
        session_index: Option<u32>,
        embedding: Vec<f64>,
    ) -> Result<Insertion, MemoryError> {
        if text.trim().is_empty() {
            return Err(MemoryError::EmptyText);
        }
        if embedding.len() != self.dimension {
            return Err(MemoryError::DimensionMismatch {
                expected: self.dimension,
                got: embedding.len(),
            });
        }
        let key = normalize_for_dedup(text);
        if let Some(&i) = self.by_text.get(&key) {
            return Ok(Insertion::Existing(self.entries[i].id.clone()));
        }
        let id = self.fresh_id();
        self.push(MemoryEntry {
            id: id.clone(),
            owner: self.owner.clone(),
            text: text.to_string(),
            source,
            session_index,
            embedding,
        });
        Ok(Insertion::Added(id))
    }

    fn push(&mut self, entry: MemoryEntry) {
        self.by_text
            .insert(normalize_for_dedup(&entry.text), self.entries.len());
        self.ids.insert(entry.id.clone());
        self.entries.push(Arc::new(entry));
    }

    pub fn retrieve_top_k(
        &self,
        query: &[f64],
        k: usize,
        theta: f64,
    ) -> Result<Vec<RetrievalResult>, MemoryError> {
        retrieve_top_k(&self.entries, self.dimension, query, k, theta)
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<(), MemoryError> {
        persist::save(self, path)
    }

    pub fn load_jsonl(
        owner: impl Into<String>,
        dimension: usize,
        path: &Path,
    ) -> Result<Self, MemoryError> {
        persist::load(owner.into(), dimension, path)
    }
}

/// Embeds `text` and adds it to `pool`. Duplicate text returns the existing
/// id without calling the embedder.
pub async fn add_entry(
    pool: &RwLock<MemoryPool>,
    text: &str,
    source: MemorySource,
    session_index: Option<u32>,
    embedder: &dyn EmbeddingProvider,
) -> Result<Insertion, MemoryError> {
    if text.trim().is_empty() {
        return Err(MemoryError::EmptyText);
    }
    {
        let guard = pool.read();
        if let Some(id) = guard.find_text(text) {
            return Ok(Insertion::Existing(id.clone()));
        }
        if embedder.dimension() != guard.dimension() {
            return Err(MemoryError::DimensionMismatch {
                expected: guard.dimension(),
                got: embedder.dimension(),
            });
        }
    }
    let embedding = embedder.embed(text).await?;
    // Re-checks for a concurrent insert of the same text.
    pool.write().insert(text, source, session_index, embedding)
}

pub type SharedPool = Arc<RwLock<MemoryPool>>;

/// All speaker pools of one dialogue.
#[derive(Debug)]
pub struct MemoryStore {
    dimension: usize,
    pools: RwLock<BTreeMap<String, SharedPool>>,
}

impl MemoryStore {
    pub fn new(dimension: usize) -> Result<Self, MemoryError> {
        if dimension == 0 {
            return Err(MemoryError::ZeroDimension);
        }
        Ok(Self {
            dimension,
            pools: RwLock::new(BTreeMap::new()),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// The speaker's pool, created empty on first use.
    pub fn pool(&self, owner: &str) -> SharedPool {
        if let Some(p) = self.pools.read().get(owner) {
            return Arc::clone(p);
        }
        let mut pools = self.pools.write();
        Arc::clone(pools.entry(owner.to_string()).or_insert_with(|| {
            Arc::new(RwLock::new(
                MemoryPool::new(owner, self.dimension).expect("dimension checked at construction"),
            ))
        }))
    }

    pub fn get(&self, owner: &str) -> Option<SharedPool> {
        self.pools.read().get(owner).cloned()
    }

    pub fn speakers(&self) -> Vec<String> {
        self.pools.read().keys().cloned().collect()
    }

    /// Snapshot of a speaker's entries in insertion order.
    pub fn entries(&self, owner: &str) -> Vec<Arc<MemoryEntry>> {
        self.get(owner)
            .map(|p| p.read().entries().to_vec())
            .unwrap_or_default()
    }

    pub async fn add(
        &self,
        owner: &str,
        text: &str,
        source: MemorySource,
        session_index: Option<u32>,
        embedder: &dyn EmbeddingProvider,
    ) -> Result<Insertion, MemoryError> {
        let pool = self.pool(owner);
        add_entry(&pool, text, source, session_index, embedder).await
    }

    /// Searches the named pools as one sequence: earlier owners' entries
    /// come first for tie-breaking.
    pub fn retrieve(
        &self,
        owners: &[&str],
        query: &[f64],
        k: usize,
        theta: f64,
    ) -> Result<Vec<RetrievalResult>, MemoryError> {
        let snapshot: Vec<Arc<MemoryEntry>> =
            owners.iter().flat_map(|o| self.entries(o)).collect();
        retrieve_top_k(&snapshot, self.dimension, query, k, theta)
    }

    /// Writes one `{owner}.jsonl` file per pool into `dir`.
    pub fn save_dir(&self, dir: &Path) -> Result<(), MemoryError> {
        std::fs::create_dir_all(dir).map_err(|source| MemoryError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        for (owner, pool) in self.pools.read().iter() {
            pool.read()
                .save_jsonl(&dir.join(persist::file_name(owner)))?;
        }
        Ok(())
    }

    /// Loads every `*.jsonl` pool file in `dir`; a missing directory yields
    /// an empty store.
    pub fn load_dir(dir: &Path, dimension: usize) -> Result<Self, MemoryError> {
        let store = Self::new(dimension)?;
        if !dir.exists() {
            return Ok(store);
        }
        let listing = std::fs::read_dir(dir).map_err(|source| MemoryError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let mut files: Vec<_> = listing
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        for path in files {
            let pool = persist::load_any_owner(dimension, &path)?;
            store
                .pools
                .write()
                .insert(pool.owner().to_string(), Arc::new(RwLock::new(pool)));
        }
        Ok(store)
    }
}
