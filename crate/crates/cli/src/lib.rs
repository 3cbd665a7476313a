//! Command-line front end: benchmark runs, metric scoring, corpus
//! generation and the HTTP service.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ppa_core::harness::{
    comparison_grid, generate_mock_corpus, run_experiment, ExperimentSpec, GridCell,
    MockCorpusConfig,
};
use ppa_core::metrics::{self, MetricReport};
use ppa_core::pipeline::{HistoryType, QueryType, Strategy, StrategyConfig};
use ppa_core::providers::Providers;
use ppa_service::ServiceConfig;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "ppa", version, about = "Persona-aligned response generation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replay a corpus under one or more strategy configurations.
    Bench(BenchArgs),
    /// Run the HTTP chat service.
    Serve(ServeArgs),
    /// Metric utilities.
    Metrics {
        #[command(subcommand)]
        command: MetricsCommand,
    },
    /// Write a deterministic synthetic corpus.
    GenCorpus(GenCorpusArgs),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum ProviderChoice {
    /// Rule-based chat, hashed embeddings and containment NLI.
    #[default]
    Offline,
    /// Endpoints from the `PPA_*` environment variables.
    Remote,
}

impl ProviderChoice {
    pub async fn build(self) -> Result<Providers> {
        Ok(match self {
            Self::Offline => Providers::offline(),
            Self::Remote => Providers::from_env()
                .await
                .context("configuring remote providers")?,
        })
    }
}

/// Flags mirroring a single strategy configuration.
#[derive(Debug, Clone, Args)]
pub struct StrategyArgs {
    #[arg(long, default_value = "ppa")]
    pub strategy: Strategy,
    #[arg(long, default_value = "response")]
    pub query_type: QueryType,
    #[arg(long, default_value = "persona")]
    pub history_type: HistoryType,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 0.2)]
    pub theta: f64,
    #[arg(long, default_value_t = 5)]
    pub oversample_n: usize,
}

impl StrategyArgs {
    pub fn config(&self) -> StrategyConfig {
        StrategyConfig::new(self.strategy)
            .with_query_type(self.query_type)
            .with_history_type(self.history_type)
            .with_k(self.k)
            .with_theta(self.theta)
            .with_oversample_n(self.oversample_n)
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Experiment spec; when absent the run is described by the flags below.
    #[arg(long, conflicts_with_all = ["corpus", "comparison"])]
    pub spec: Option<PathBuf>,
    #[arg(long, required_unless_present = "spec")]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    /// Run the strategy, query-type and history-type tables instead of a
    /// single configuration.
    #[arg(long)]
    pub comparison: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
    #[arg(long)]
    pub target_session: Option<usize>,
    #[arg(long)]
    pub max_turns: Option<usize>,
    #[command(flatten)]
    pub strategy: StrategyArgs,
    #[arg(long, value_enum, default_value_t)]
    pub providers: ProviderChoice,
}

impl BenchArgs {
    pub fn experiment(&self) -> Result<ExperimentSpec> {
        if let Some(path) = &self.spec {
            return ExperimentSpec::load(path).with_context(|| format!("loading {}", path.display()));
        }
        let grid = if self.comparison {
            comparison_grid()
        } else {
            vec![GridCell {
                table: None,
                config: self.strategy.config(),
            }]
        };
        Ok(ExperimentSpec {
            corpus_path: self.corpus.clone().expect("clap requires --corpus"),
            grid,
            target_session_index: self.target_session,
            seed: self.seed,
            output_dir: self.out.clone(),
            workers: self.workers,
            ngram_order: metrics::DEFAULT_NGRAM_ORDER,
            max_turns_per_dialogue: self.max_turns,
            speaker: None,
        })
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    #[arg(long)]
    pub store_dir: Option<PathBuf>,
    /// Directory with the built browser client.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    /// Only extract facts about the agent when a session closes.
    #[arg(long)]
    pub agent_facts_only: bool,
    #[arg(long, value_enum, default_value_t)]
    pub providers: ProviderChoice,
}

#[derive(Debug, Subcommand)]
pub enum MetricsCommand {
    /// Score responses against references and persona sentences.
    Score(ScoreArgs),
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// One response per line.
    #[arg(long)]
    pub responses: PathBuf,
    /// One reference per line, aligned with the responses.
    #[arg(long)]
    pub references: PathBuf,
    /// Either a JSON array of sentences shared by every response, or one
    /// JSON array per line aligned with the responses.
    #[arg(long)]
    pub personas: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = metrics::DEFAULT_NGRAM_ORDER)]
    pub ngram_order: usize,
    #[arg(long, value_enum, default_value_t)]
    pub providers: ProviderChoice,
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub dialogues: usize,
    #[arg(long, default_value_t = 3)]
    pub sessions: usize,
    #[arg(long, default_value_t = 6)]
    pub turns: usize,
    #[arg(long, default_value_t = 3)]
    pub personas: usize,
}

#[derive(Debug, Serialize)]
pub struct ScoredRow {
    pub index: usize,
    pub response: String,
    pub reference: String,
    pub c_score: f64,
    pub persona_f1: f64,
    pub rouge_l: f64,
}

#[derive(Debug, Serialize)]
pub struct ScoreReport {
    #[serde(flatten)]
    pub report: MetricReport,
    pub ngram_order: usize,
    pub rows: Vec<ScoredRow>,
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn read_personas(path: &Path, n: usize) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(shared) = serde_json::from_str::<Vec<String>>(&text) {
        return Ok(vec![shared; n]);
    }
    let rows: Vec<Vec<String>> = text
        .lines()
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1))
        })
        .collect::<Result<_>>()?;
    if rows.len() != n {
        bail!("{} has {} persona lines for {n} responses", path.display(), rows.len());
    }
    Ok(rows)
}

pub async fn score_files(args: &ScoreArgs, providers: &Providers) -> Result<ScoreReport> {
    let responses = read_lines(&args.responses)?;
    let references = read_lines(&args.references)?;
    if responses.len() != references.len() {
        bail!(
            "{} responses but {} references",
            responses.len(),
            references.len()
        );
    }
    let personas = read_personas(&args.personas, responses.len())?;
    let mut measurements = Vec::with_capacity(responses.len());
    let mut rows = Vec::with_capacity(responses.len());
    for (index, ((response, reference), persona)) in
        responses.iter().zip(&references).zip(&personas).enumerate()
    {
        let m = metrics::score_response(response, reference, persona, providers.nli.as_ref())
            .await
            .with_context(|| format!("scoring response {}", index + 1))?;
        rows.push(ScoredRow {
            index,
            response: response.clone(),
            reference: reference.clone(),
            c_score: m.c_score,
            persona_f1: m.persona_f1,
            rouge_l: m.rouge_l,
        });
        measurements.push(m);
    }
    let report = metrics::aggregate(&measurements, args.ngram_order)?;
    Ok(ScoreReport {
        report,
        ngram_order: args.ngram_order,
        rows,
    })
}

pub async fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Bench(args) => {
            let spec = args.experiment()?;
            let providers = args.providers.build().await?;
            let report = run_experiment(&spec, &providers).await?;
            for row in &report.manifest.rows {
                let table = row.table.as_deref().unwrap_or("-");
                println!(
                    "{table}\t{}\t{} responses\t{} dialogues ({} excluded)",
                    row.label, row.n_responses, row.dialogues_scored, row.dialogues_excluded
                );
            }
            println!("wrote {}", report.output_dir.display());
        }
        Command::Serve(args) => {
            let providers = args.providers.build().await?;
            let addr = SocketAddr::new(args.host, args.port);
            let listener = tokio::net::TcpListener::bind(addr)
                .await
                .with_context(|| format!("binding {addr}"))?;
            let config = ServiceConfig {
                store_dir: args.store_dir,
                static_dir: args.static_dir,
                extract_user_facts: !args.agent_facts_only,
            };
            ppa_service::serve(listener, providers, config).await?;
        }
        Command::Metrics {
            command: MetricsCommand::Score(args),
        } => {
            let providers = args.providers.build().await?;
            let report = score_files(&args, &providers).await?;
            let json = serde_json::to_string_pretty(&report)? + "\n";
            std::fs::write(&args.out, json)
                .with_context(|| format!("writing {}", args.out.display()))?;
            println!(
                "C={:.4} ENTR={:.4} P-F1={:.4} ROUGE={:.4} over {} responses",
                report.report.c_score,
                report.report.entropy,
                report.report.persona_f1,
                report.report.rouge_l,
                report.report.n_responses
            );
        }
        Command::GenCorpus(args) => {
            let cfg = MockCorpusConfig {
                dialogues: args.dialogues,
                sessions: args.sessions,
                turns_per_session: args.turns,
                personas_per_speaker: args.personas,
            };
            let corpus = generate_mock_corpus(&cfg, args.seed);
            std::fs::write(&args.out, corpus.to_json_pretty())
                .with_context(|| format!("writing {}", args.out.display()))?;
            println!("wrote {} dialogues to {}", corpus.dialogues.len(), args.out.display());
        }
    }
    Ok(())
}
