//! Response generation: PPA's generate, retrieve, refine loop and the
//! comparison strategies.

mod config;
mod ingest;
mod parse;
pub mod prompts;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dialogue::DialogueContext;
use crate::memory::{MemoryError, MemoryStore, RetrievalResult};
use crate::metrics::{self, MetricsError};
use crate::providers::{ChatRequest, ProviderError, Providers};

pub use config::{ConfigError, HistoryType, QueryType, Strategy, StrategyConfig};
pub use ingest::{ingest_session_history, summarize_session, IngestOptions};
pub use parse::{parse_json_response, ParsedResponse};

/// Final text used when a completion is empty after parsing.
pub const PLACEHOLDER_RESPONSE: &str = "...";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Step1,
    Retrieval,
    Step3,
    Selection,
    Extraction,
    Summary,
    Ingestion,
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Step1 => "step1",
            Self::Retrieval => "retrieval",
            Self::Step3 => "step3",
            Self::Selection => "selection",
            Self::Extraction => "extraction",
            Self::Summary => "summary",
            Self::Ingestion => "ingestion",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{step}: {source}")]
    Provider {
        step: Step,
        #[source]
        source: ProviderError,
    },
    #[error("{step}: {source}")]
    Memory {
        step: Step,
        #[source]
        source: MemoryError,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("query type gold requires a gold response")]
    GoldMissing,
    #[error("strategy {got} passed to the {expected} runner")]
    WrongStrategy { expected: Strategy, got: Strategy },
    #[error("session has no turns")]
    EmptySession,
}

impl PipelineError {
    pub fn step(&self) -> Option<Step> {
        match self {
            Self::Provider { step, .. } | Self::Memory { step, .. } => Some(*step),
            _ => None,
        }
    }

    /// Whether retrying the same request may succeed.
    pub fn is_transient(&self) -> bool {
        match self {
            Self::Provider { source, .. } => source.is_transient(),
            Self::Memory {
                source: MemoryError::Provider(p),
                ..
            } => p.is_transient(),
            _ => false,
        }
    }

    fn provider(step: Step) -> impl FnOnce(ProviderError) -> Self {
        move |source| Self::Provider { step, source }
    }

    fn memory(step: Step) -> impl FnOnce(MemoryError) -> Self {
        move |source| match source {
            MemoryError::Provider(source) => Self::Provider { step, source },
            source => Self::Memory { step, source },
        }
    }
}

/// Outcome of one response-generation turn.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnResult {
    pub strategy: Strategy,
    /// First-pass response; present for PPA only.
    pub general_response: Option<String>,
    /// Text that was embedded as the retrieval query, if any.
    pub retrieval_query: Option<String>,
    #[serde(skip)]
    pub query_embedding: Option<Vec<f64>>,
    pub retrieved: Vec<RetrievalResult>,
    pub final_response: String,
    pub prompts_used: Vec<String>,
    /// SimOAP candidates in sampling order.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected_candidate: Option<usize>,
    /// Some completion could not be parsed as JSON and was used raw.
    pub unparsed: bool,
}

impl TurnResult {
    fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            general_response: None,
            retrieval_query: None,
            query_embedding: None,
            retrieved: Vec::new(),
            final_response: String::new(),
            prompts_used: Vec::new(),
            candidates: Vec::new(),
            selected_candidate: None,
            unparsed: false,
        }
    }

    pub fn retrieved_texts(&self) -> Vec<&str> {
        self.retrieved.iter().map(|r| r.entry.text.as_str()).collect()
    }
}

fn owners<'a>(ctx: &'a DialogueContext, cfg: &StrategyConfig) -> Vec<&'a str> {
    if cfg.cross_speaker {
        vec![ctx.speaker(), ctx.other()]
    } else {
        vec![ctx.speaker()]
    }
}

fn check_strategy(cfg: &StrategyConfig, expected: Strategy) -> Result<(), PipelineError> {
    if cfg.strategy != expected {
        return Err(PipelineError::WrongStrategy {
            expected,
            got: cfg.strategy,
        });
    }
    Ok(())
}

async fn complete(
    providers: &Providers,
    request: ChatRequest,
    speaker: &str,
    step: Step,
) -> Result<ParsedResponse, PipelineError> {
    let raw = providers
        .chat
        .complete(&request)
        .await
        .map_err(PipelineError::provider(step))?;
    let mut parsed = parse_json_response(&raw, speaker);
    if parsed.text.trim().is_empty() {
        parsed.text = PLACEHOLDER_RESPONSE.to_string();
        parsed.unparsed = true;
    }
    Ok(parsed)
}

fn generation_request(prompt: &str, cfg: &StrategyConfig, seed: Option<u64>) -> ChatRequest {
    ChatRequest::new(prompt)
        .with_temperature(cfg.generation_temperature)
        .with_seed(seed)
}

async fn embed_and_retrieve(
    query: &str,
    ctx: &DialogueContext,
    memory: &MemoryStore,
    providers: &Providers,
    cfg: &StrategyConfig,
) -> Result<(Vec<f64>, Vec<RetrievalResult>), PipelineError> {
    let embedding = providers
        .embedder
        .embed(query)
        .await
        .map_err(PipelineError::provider(Step::Retrieval))?;
    let hits = memory
        .retrieve(&owners(ctx, cfg), &embedding, cfg.k, cfg.theta)
        .map_err(PipelineError::memory(Step::Retrieval))?;
    Ok((embedding, hits))
}

/// Runs the strategy named by `cfg`. `gold` is the reference response,
/// needed only by the `gold` query type.
pub async fn run_turn(
    ctx: &DialogueContext,
    memory: &MemoryStore,
    providers: &Providers,
    cfg: &StrategyConfig,
    gold: Option<&str>,
) -> Result<TurnResult, PipelineError> {
    match cfg.strategy {
        Strategy::Ppa => run_ppa_turn(ctx, memory, providers, cfg, gold).await,
        Strategy::DirectGen => run_direct_gen_turn(ctx, memory, providers, cfg).await,
        Strategy::DialogRetr => run_dialog_retr_turn(ctx, memory, providers, cfg).await,
        Strategy::SimOap => run_sim_oap_turn(ctx, memory, providers, cfg).await,
    }
}

/// Generate a persona-free response, retrieve memories with the query
/// chosen by `cfg.query_type`, then refine the response against them.
pub async fn run_ppa_turn(
    ctx: &DialogueContext,
    memory: &MemoryStore,
    providers: &Providers,
    cfg: &StrategyConfig,
    gold: Option<&str>,
) -> Result<TurnResult, PipelineError> {
    check_strategy(cfg, Strategy::Ppa)?;
    cfg.validate(gold.is_some())?;
    let mut out = TurnResult::new(Strategy::Ppa);

    let prompt1 = prompts::render_generation_prompt(ctx);
    let general = complete(
        providers,
        generation_request(&prompt1, cfg, cfg.seed),
        ctx.speaker(),
        Step::Step1,
    )
    .await?;
    out.prompts_used.push(prompt1);

    let query = match cfg.query_type {
        QueryType::Response => general.text.clone(),
        QueryType::Context => ctx.concatenated_text(),
        QueryType::Gold => gold
            .filter(|g| !g.trim().is_empty())
            .ok_or(PipelineError::GoldMissing)?
            .to_string(),
    };
    let (embedding, retrieved) = embed_and_retrieve(&query, ctx, memory, providers, cfg).await?;

    let sentences: Vec<&str> = retrieved.iter().map(|r| r.entry.text.as_str()).collect();
    let prompt2 = prompts::render_refinement_prompt(ctx, &general.text, &sentences);
    let refined = complete(
        providers,
        ChatRequest::new(prompt2.as_str()),
        ctx.speaker(),
        Step::Step3,
    )
    .await?;
    out.prompts_used.push(prompt2);

    out.unparsed = general.unparsed || refined.unparsed;
    out.final_response = refined.text;
    out.general_response = Some(general.text);
    out.retrieval_query = Some(query);
    out.query_embedding = Some(embedding);
    out.retrieved = retrieved;
    Ok(out)
}

/// One prompt with every pool sentence, then the dialogue.
pub async fn run_direct_gen_turn(
    ctx: &DialogueContext,
    memory: &MemoryStore,
    providers: &Providers,
    cfg: &StrategyConfig,
) -> Result<TurnResult, PipelineError> {
    check_strategy(cfg, Strategy::DirectGen)?;
    cfg.validate(true)?;
    let mut out = TurnResult::new(Strategy::DirectGen);
    let persona: Vec<String> = owners(ctx, cfg)
        .into_iter()
        .flat_map(|o| memory.entries(o))
        .map(|e| e.text.clone())
        .collect();
    let prompt = prompts::render_direct_gen_prompt(ctx, &persona);
    let parsed = complete(
        providers,
        generation_request(&prompt, cfg, cfg.seed),
        ctx.speaker(),
        Step::Step1,
    )
    .await?;
    out.prompts_used.push(prompt);
    out.final_response = parsed.text;
    out.unparsed = parsed.unparsed;
    Ok(out)
}

/// Retrieval by dialogue context ahead of a single generation.
pub async fn run_dialog_retr_turn(
    ctx: &DialogueContext,
    memory: &MemoryStore,
    providers: &Providers,
    cfg: &StrategyConfig,
) -> Result<TurnResult, PipelineError> {
    check_strategy(cfg, Strategy::DialogRetr)?;
    cfg.validate(true)?;
    let mut out = TurnResult::new(Strategy::DialogRetr);
    let query = ctx.concatenated_text();
    let (embedding, retrieved) = embed_and_retrieve(&query, ctx, memory, providers, cfg).await?;
    let sentences: Vec<&str> = retrieved.iter().map(|r| r.entry.text.as_str()).collect();
    let prompt = prompts::render_dialog_retr_prompt(ctx, &sentences);
    let parsed = complete(
        providers,
        generation_request(&prompt, cfg, cfg.seed),
        ctx.speaker(),
        Step::Step1,
    )
    .await?;
    out.prompts_used.push(prompt);
    out.final_response = parsed.text;
    out.unparsed = parsed.unparsed;
    out.retrieval_query = Some(query);
    out.query_embedding = Some(embedding);
    out.retrieved = retrieved;
    Ok(out)
}

/// Selection score of one SimOAP candidate: mean top-k similarity to the
/// pool plus C-Score against every pool sentence.
async fn sim_oap_score(
    candidate: &str,
    pool_sentences: &[String],
    ctx: &DialogueContext,
    memory: &MemoryStore,
    providers: &Providers,
    cfg: &StrategyConfig,
) -> Result<(f64, Vec<f64>, Vec<RetrievalResult>), PipelineError> {
    let (embedding, hits) = embed_and_retrieve(candidate, ctx, memory, providers, cfg).await?;
    let coherence = if hits.is_empty() {
        0.0
    } else {
        hits.iter().map(|h| h.score).sum::<f64>() / hits.len() as f64
    };
    let consistency = if pool_sentences.is_empty() {
        0.0
    } else {
        match metrics::c_score(candidate, pool_sentences, providers.nli.as_ref()).await {
            Ok(c) => c,
            Err(MetricsError::Provider(source)) => {
                return Err(PipelineError::Provider {
                    step: Step::Selection,
                    source,
                })
            }
            Err(_) => 0.0,
        }
    };
    Ok((coherence + consistency, embedding, hits))
}

/// Over-generates `oversample_n` candidates with distinct seeds and keeps
/// the best by coherence plus consistency; ties go to the earliest.
pub async fn run_sim_oap_turn(
    ctx: &DialogueContext,
    memory: &MemoryStore,
    providers: &Providers,
    cfg: &StrategyConfig,
) -> Result<TurnResult, PipelineError> {
    check_strategy(cfg, Strategy::SimOap)?;
    cfg.validate(true)?;
    let mut out = TurnResult::new(Strategy::SimOap);
    let prompt = prompts::render_generation_prompt(ctx);
    let base_seed = cfg.seed.unwrap_or(0);
    let mut candidates = Vec::with_capacity(cfg.oversample_n);
    for i in 0..cfg.oversample_n as u64 {
        let parsed = complete(
            providers,
            generation_request(&prompt, cfg, Some(base_seed.wrapping_add(i))),
            ctx.speaker(),
            Step::Step1,
        )
        .await?;
        candidates.push(parsed);
    }
    out.prompts_used.push(prompt);

    let pool_sentences: Vec<String> = owners(ctx, cfg)
        .into_iter()
        .flat_map(|o| memory.entries(o))
        .map(|e| e.text.clone())
        .collect();
    let mut best: Option<(usize, f64, Vec<f64>, Vec<RetrievalResult>)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let (score, embedding, hits) =
            sim_oap_score(&c.text, &pool_sentences, ctx, memory, providers, cfg).await?;
        if best.as_ref().is_none_or(|(_, s, _, _)| score > *s) {
            best = Some((i, score, embedding, hits));
        }
    }
    let (idx, _, embedding, hits) = best.expect("oversample_n >= 1");
    out.final_response = candidates[idx].text.clone();
    out.unparsed = candidates[idx].unparsed;
    out.retrieval_query = Some(out.final_response.clone());
    out.query_embedding = Some(embedding);
    out.retrieved = hits;
    out.selected_candidate = Some(idx);
    out.candidates = candidates.into_iter().map(|c| c.text).collect();
    Ok(out)
}
