use crate::dialogue::SessionTranscript;
use crate::memory::{extract_triples, MemorySource, MemoryStore};
use crate::providers::{ChatProvider, ChatRequest, Providers};

use super::{prompts, HistoryType, PipelineError, Step};

/// Which pools a finished session is written into.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestOptions {
    /// Speakers whose pools receive entries; `None` means both.
    pub speakers: Option<Vec<String>>,
}

impl IngestOptions {
    pub fn both() -> Self {
        Self::default()
    }

    pub fn only(speaker: impl Into<String>) -> Self {
        Self {
            speakers: Some(vec![speaker.into()]),
        }
    }

    fn includes(&self, speaker: &str) -> bool {
        self.speakers
            .as_ref()
            .is_none_or(|s| s.iter().any(|x| x == speaker))
    }
}

/// One-paragraph summary of `session` from `speaker`'s perspective.
pub async fn summarize_session(
    session: &SessionTranscript,
    speaker: &str,
    chat: &dyn ChatProvider,
) -> Result<String, PipelineError> {
    if session.is_empty() {
        return Err(PipelineError::EmptySession);
    }
    let other = session.interlocutor(speaker).unwrap_or_default();
    let prompt = prompts::render_summary_prompt(session, speaker, other);
    let raw = chat
        .complete(&ChatRequest::new(prompt))
        .await
        .map_err(|source| PipelineError::Provider {
            step: Step::Summary,
            source,
        })?;
    let body = super::parse::strip_code_fences(&raw);
    Ok(body.split_whitespace().collect::<Vec<_>>().join(" "))
}

/// Compresses a finished session into memory entries per `history_type`
/// and returns how many new entries were added.
pub async fn ingest_session_history(
    session: &SessionTranscript,
    session_index: u32,
    history_type: HistoryType,
    memory: &MemoryStore,
    providers: &Providers,
    opts: &IngestOptions,
) -> Result<usize, PipelineError> {
    if session.is_empty() {
        return Ok(0);
    }
    let embedder = providers.embedder.as_ref();
    let mut items: Vec<(String, String, MemorySource)> = Vec::new();
    match history_type {
        HistoryType::Persona => {
            let triples = extract_triples(session, providers.chat.as_ref())
                .await
                .map_err(PipelineError::memory(Step::Extraction))?;
            for t in triples {
                let owner = session
                    .speakers
                    .iter()
                    .find(|s| s.eq_ignore_ascii_case(t.name()));
                if let Some(owner) = owner {
                    items.push((owner.clone(), t.verbalize(), MemorySource::ExtractedHistory));
                } else {
                    tracing::debug!(name = t.name(), "dropping triple about a non-speaker");
                }
            }
        }
        HistoryType::Utterance => {
            for turn in &session.turns {
                items.push((
                    turn.speaker.clone(),
                    format!("{}: {}", turn.speaker, turn.text),
                    MemorySource::RawUtterance,
                ));
            }
        }
        HistoryType::Summary => {
            for speaker in &session.speakers {
                if !opts.includes(speaker) {
                    continue;
                }
                let summary = summarize_session(session, speaker, providers.chat.as_ref()).await?;
                if !summary.is_empty() {
                    items.push((speaker.clone(), summary, MemorySource::SessionSummary));
                }
            }
        }
    }

    let mut added = 0;
    for (owner, text, source) in items {
        if !opts.includes(&owner) {
            continue;
        }
        let ins = memory
            .add(&owner, &text, source, Some(session_index), embedder)
            .await
            .map_err(PipelineError::memory(Step::Ingestion))?;
        added += usize::from(ins.is_added());
    }
    Ok(added)
}
