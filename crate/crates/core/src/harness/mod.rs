//! Corpus replay and ablation experiments.

mod corpus;
mod report;

use std::path::{Path, PathBuf};

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dialogue::DialogueContext;
use crate::memory::{MemoryError, MemorySource, MemoryStore};
use crate::metrics::{self, MetricReport, MetricsError, ResponseMeasurement};
use crate::pipeline::{
    self, HistoryType, IngestOptions, PipelineError, QueryType, Strategy, StrategyConfig,
    TurnResult,
};
use crate::providers::mock::fnv1a64;
use crate::providers::{ProviderIdentities, Providers};

pub use corpus::{
    generate_mock_corpus, load_corpus, Corpus, CorpusError, MockCorpusConfig, MultiSessionDialogue,
};
pub use report::{render_csv, render_markdown, table_label_column};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("dialogue {dialogue_id}: loading personas: {source}")]
    Personas {
        dialogue_id: String,
        #[source]
        source: MemoryError,
    },
    #[error("dialogue {dialogue_id}, session {session_index}: {source}")]
    Ingest {
        dialogue_id: String,
        session_index: usize,
        #[source]
        source: PipelineError,
    },
    #[error("dialogue {dialogue_id}, turn {turn_index}: {source}")]
    Turn {
        dialogue_id: String,
        turn_index: usize,
        #[source]
        source: PipelineError,
    },
    #[error("dialogue {dialogue_id}, turn {turn_index}: scoring: {source}")]
    Score {
        dialogue_id: String,
        turn_index: usize,
        #[source]
        source: MetricsError,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// How a dialogue is replayed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayOptions {
    /// Session whose turns are predicted; the last session when absent or
    /// out of range.
    pub target_session_index: Option<usize>,
    pub seed: u64,
    /// Predict at most this many turns per dialogue.
    pub max_turns: Option<usize>,
    /// Only predict this speaker's turns.
    pub speaker: Option<String>,
}

/// One predicted turn of the target session.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayedTurn {
    pub dialogue_id: String,
    pub session_index: usize,
    pub turn_index: usize,
    pub speaker: String,
    pub gold: String,
    pub result: TurnResult,
}

/// The session index actually used for `d`.
pub fn target_session(d: &MultiSessionDialogue, requested: Option<usize>) -> usize {
    let last = d.sessions.len().saturating_sub(1);
    match requested {
        Some(i) if i > last => {
            tracing::warn!(
                dialogue = %d.dialogue_id,
                requested = i,
                using = last,
                "target session out of range; using the last session"
            );
            last
        }
        Some(i) => i,
        None => last,
    }
}

fn turn_seed(base: u64, dialogue_id: &str, turn_index: usize) -> u64 {
    base ^ fnv1a64(dialogue_id.as_bytes()).wrapping_add(turn_index as u64)
}

/// Builds the memory a dialogue has before its target session: predefined
/// personas plus every earlier session ingested per `cfg.history_type`.
pub async fn prepare_memory(
    d: &MultiSessionDialogue,
    target: usize,
    cfg: &StrategyConfig,
    providers: &Providers,
) -> Result<MemoryStore, HarnessError> {
    let store = MemoryStore::new(providers.embedder.dimension()).map_err(|source| {
        HarnessError::Personas {
            dialogue_id: d.dialogue_id.clone(),
            source,
        }
    })?;
    for speaker in &d.speakers {
        store.pool(speaker);
        for sentence in d.personas(speaker) {
            store
                .add(
                    speaker,
                    sentence,
                    MemorySource::PredefinedPersona,
                    None,
                    providers.embedder.as_ref(),
                )
                .await
                .map_err(|source| HarnessError::Personas {
                    dialogue_id: d.dialogue_id.clone(),
                    source,
                })?;
        }
    }
    for s in 0..target {
        let Some(session) = d.transcript(s) else {
            continue;
        };
        pipeline::ingest_session_history(
            &session,
            s as u32,
            cfg.history_type,
            &store,
            providers,
            &IngestOptions::both(),
        )
        .await
        .map_err(|source| HarnessError::Ingest {
            dialogue_id: d.dialogue_id.clone(),
            session_index: s,
            source,
        })?;
    }
    Ok(store)
}

/// Replays `d` with teacher forcing: every target-session turn whose
/// previous turn is the interlocutor's is predicted from the true prefix.
pub async fn replay_dialogue(
    d: &MultiSessionDialogue,
    cfg: &StrategyConfig,
    providers: &Providers,
    opts: &ReplayOptions,
) -> Result<Vec<ReplayedTurn>, HarnessError> {
    cfg.validate(true)
        .map_err(|e| HarnessError::Spec(e.to_string()))?;
    let target = target_session(d, opts.target_session_index);
    let store = prepare_memory(d, target, cfg, providers).await?;
    let turns = &d.sessions[target];
    let mut out = Vec::new();
    for i in 1..turns.len() {
        if opts.max_turns.is_some_and(|m| out.len() >= m) {
            break;
        }
        let turn = &turns[i];
        if opts.speaker.as_deref().is_some_and(|s| s != turn.speaker) {
            continue;
        }
        let Some(other) = d.other(&turn.speaker) else {
            continue;
        };
        if turns[i - 1].speaker != other {
            continue;
        }
        let ctx = DialogueContext::new(turn.speaker.as_str(), other, turns[..i].to_vec())
            .map_err(|e| HarnessError::Spec(format!("dialogue {}: {e}", d.dialogue_id)))?;
        let turn_cfg = cfg
            .clone()
            .with_seed(Some(turn_seed(opts.seed, &d.dialogue_id, i)));
        let result = pipeline::run_turn(&ctx, &store, providers, &turn_cfg, Some(&turn.text))
            .await
            .map_err(|source| HarnessError::Turn {
                dialogue_id: d.dialogue_id.clone(),
                turn_index: i,
                source,
            })?;
        out.push(ReplayedTurn {
            dialogue_id: d.dialogue_id.clone(),
            session_index: target,
            turn_index: i,
            speaker: turn.speaker.clone(),
            gold: turn.text.clone(),
            result,
        });
    }
    Ok(out)
}

/// Scores one predicted turn against its gold utterance and the speaker's
/// predefined personas.
pub async fn score_turn(
    d: &MultiSessionDialogue,
    t: &ReplayedTurn,
    providers: &Providers,
) -> Result<ResponseMeasurement, HarnessError> {
    metrics::score_response(
        &t.result.final_response,
        &t.gold,
        d.personas(&t.speaker),
        providers.nli.as_ref(),
    )
    .await
    .map_err(|source| HarnessError::Score {
        dialogue_id: d.dialogue_id.clone(),
        turn_index: t.turn_index,
        source,
    })
}

/// One row of an experiment: a strategy configuration, optionally tagged
/// with the table it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub table: Option<String>,
    pub config: StrategyConfig,
}

impl Serialize for GridCell {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut v = serde_json::to_value(&self.config).map_err(serde::ser::Error::custom)?;
        if let (Some(t), Value::Object(map)) = (&self.table, &mut v) {
            map.insert("table".into(), Value::String(t.clone()));
        }
        v.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for GridCell {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let mut v = Value::deserialize(deserializer)?;
        let table = match v.as_object_mut().and_then(|m| m.remove("table")) {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s),
            Some(other) => {
                return Err(serde::de::Error::custom(format!(
                    "table must be a string, got {other}"
                )))
            }
        };
        let config = serde_json::from_value(v).map_err(serde::de::Error::custom)?;
        Ok(Self { table, config })
    }
}

/// The three comparison tables: every strategy, every retrieval query
/// type under PPA, and every history representation under PPA.
pub fn comparison_grid() -> Vec<GridCell> {
    let cell = |table: &str, config: StrategyConfig| GridCell {
        table: Some(table.to_string()),
        config,
    };
    let mut grid: Vec<GridCell> = Strategy::ALL
        .iter()
        .map(|s| cell("strategies", StrategyConfig::new(*s)))
        .collect();
    grid.extend(
        QueryType::ALL
            .iter()
            .map(|q| cell("query_types", StrategyConfig::ppa().with_query_type(*q))),
    );
    grid.extend(
        HistoryType::ALL
            .iter()
            .map(|h| cell("history_types", StrategyConfig::ppa().with_history_type(*h))),
    );
    grid
}

fn default_workers() -> usize {
    4
}

fn default_ngram_order() -> usize {
    metrics::DEFAULT_NGRAM_ORDER
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub corpus_path: PathBuf,
    pub grid: Vec<GridCell>,
    #[serde(default)]
    pub target_session_index: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_ngram_order")]
    pub ngram_order: usize,
    #[serde(default)]
    pub max_turns_per_dialogue: Option<usize>,
    #[serde(default)]
    pub speaker: Option<String>,
}

impl ExperimentSpec {
    /// Reads a spec; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut spec: Self =
            serde_json::from_str(&text).map_err(|e| HarnessError::Spec(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if spec.corpus_path.is_relative() {
            spec.corpus_path = base.join(&spec.corpus_path);
        }
        if spec.output_dir.is_relative() {
            spec.output_dir = base.join(&spec.output_dir);
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.grid.is_empty() {
            return Err(HarnessError::Spec("grid is empty".into()));
        }
        if self.workers == 0 {
            return Err(HarnessError::Spec("workers must be positive".into()));
        }
        if !(1..=3).contains(&self.ngram_order) {
            return Err(HarnessError::Spec("ngram_order must be 1, 2 or 3".into()));
        }
        for (i, cell) in self.grid.iter().enumerate() {
            cell.config
                .validate(true)
                .map_err(|e| HarnessError::Spec(format!("grid[{i}]: {e}")))?;
        }
        Ok(())
    }

    fn replay_options(&self) -> ReplayOptions {
        ReplayOptions {
            target_session_index: self.target_session_index,
            seed: self.seed,
            max_turns: self.max_turns_per_dialogue,
            speaker: self.speaker.clone(),
        }
    }
}

/// Aggregated scores of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub table: Option<String>,
    pub config: StrategyConfig,
    /// Absent when every dialogue failed or produced no turns.
    pub report: Option<MetricReport>,
    pub dialogues_scored: usize,
    pub dialogues_excluded: usize,
    pub excluded: Vec<String>,
}

/// Persisted record of one predicted and scored turn.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponseRecord {
    pub cell: usize,
    pub table: Option<String>,
    pub config: StrategyConfig,
    #[serde(flatten)]
    pub turn: ReplayedTurn,
    pub c_score: f64,
    pub persona_f1: f64,
    pub rouge_l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub corpus_path: String,
    pub corpus_dialogues: usize,
    pub target_session_index: Option<usize>,
    pub ngram_order: usize,
    pub workers: usize,
    pub max_turns_per_dialogue: Option<usize>,
    pub speaker: Option<String>,
    pub grid: Vec<GridCell>,
    pub providers: ProviderIdentities,
    pub rows: Vec<ManifestRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestRow {
    pub table: Option<String>,
    pub label: String,
    pub n_responses: usize,
    pub dialogues_scored: usize,
    pub dialogues_excluded: usize,
    pub excluded: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ResultRow>,
    pub records: Vec<ResponseRecord>,
    pub manifest: Manifest,
    pub output_dir: PathBuf,
}

async fn run_cell(
    cell_index: usize,
    cell: &GridCell,
    corpus: &Corpus,
    spec: &ExperimentSpec,
    providers: &Providers,
) -> (ResultRow, Vec<ResponseRecord>) {
    let opts = spec.replay_options();
    let outcomes: Vec<Result<Vec<(ReplayedTurn, ResponseMeasurement)>, HarnessError>> =
        stream::iter(corpus.dialogues.iter())
            .map(|d| {
                let opts = &opts;
                async move {
                    let turns = replay_dialogue(d, &cell.config, providers, opts).await?;
                    let mut scored = Vec::with_capacity(turns.len());
                    for t in turns {
                        let m = score_turn(d, &t, providers).await?;
                        scored.push((t, m));
                    }
                    Ok(scored)
                }
            })
            .buffered(spec.workers)
            .collect()
            .await;

    let mut measurements = Vec::new();
    let mut records = Vec::new();
    let mut excluded = Vec::new();
    let mut scored = 0;
    for (d, outcome) in corpus.dialogues.iter().zip(outcomes) {
        match outcome {
            Ok(turns) => {
                scored += 1;
                for (turn, m) in turns {
                    records.push(ResponseRecord {
                        cell: cell_index,
                        table: cell.table.clone(),
                        config: cell.config.clone(),
                        turn,
                        c_score: m.c_score,
                        persona_f1: m.persona_f1,
                        rouge_l: m.rouge_l,
                    });
                    measurements.push(m);
                }
            }
            Err(e) => {
                tracing::warn!(dialogue = %d.dialogue_id, cell = cell_index, error = %e, "dialogue excluded");
                excluded.push(d.dialogue_id.clone());
            }
        }
    }
    let report = if measurements.is_empty() {
        None
    } else {
        metrics::aggregate(&measurements, spec.ngram_order).ok()
    };
    let row = ResultRow {
        table: cell.table.clone(),
        config: cell.config.clone(),
        report,
        dialogues_scored: scored,
        dialogues_excluded: excluded.len(),
        excluded,
    };
    (row, records)
}

/// Replays the corpus under every grid cell, scores the responses and writes
/// `results.csv`, `results.md`, `manifest.json` and `responses.jsonl` (plus
/// `table_<name>.csv` per tagged table) into the spec's output directory.
pub async fn run_experiment(
    spec: &ExperimentSpec,
    providers: &Providers,
) -> Result<ExperimentReport, HarnessError> {
    spec.validate()?;
    let corpus = load_corpus(&spec.corpus_path)?;
    let mut rows = Vec::with_capacity(spec.grid.len());
    let mut records = Vec::new();
    for (i, cell) in spec.grid.iter().enumerate() {
        let (row, mut recs) = run_cell(i, cell, &corpus, spec, providers).await;
        tracing::info!(cell = i, strategy = %cell.config.strategy, scored = row.dialogues_scored, "cell finished");
        rows.push(row);
        records.append(&mut recs);
    }

    let labels = report::row_labels(&rows);
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: spec.seed,
        corpus_path: spec.corpus_path.display().to_string(),
        corpus_dialogues: corpus.dialogues.len(),
        target_session_index: spec.target_session_index,
        ngram_order: spec.ngram_order,
        workers: spec.workers,
        max_turns_per_dialogue: spec.max_turns_per_dialogue,
        speaker: spec.speaker.clone(),
        grid: spec.grid.clone(),
        providers: providers.identities(),
        rows: rows
            .iter()
            .zip(&labels)
            .map(|(r, label)| ManifestRow {
                table: r.table.clone(),
                label: label.clone(),
                n_responses: r.report.as_ref().map_or(0, |m| m.n_responses),
                dialogues_scored: r.dialogues_scored,
                dialogues_excluded: r.dialogues_excluded,
                excluded: r.excluded.clone(),
            })
            .collect(),
    };

    let dir = &spec.output_dir;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let write = |name: &str, contents: String| {
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(io_err(&path))
    };
    write("results.csv", render_csv(&rows, &labels, None))?;
    write("results.md", render_markdown(&rows, &labels))?;
    for table in report::table_names(&rows) {
        write(
            &format!("table_{}.csv", report::file_safe(&table)),
            render_csv(&rows, &labels, Some(&table)),
        )?;
    }
    write(
        "manifest.json",
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
    )?;
    let mut jsonl = String::new();
    for r in &records {
        jsonl.push_str(&serde_json::to_string(r).expect("records serialize"));
        jsonl.push('\n');
    }
    write("responses.jsonl", jsonl)?;

    Ok(ExperimentReport {
        rows,
        records,
        manifest,
        output_dir: dir.clone(),
    })
}
