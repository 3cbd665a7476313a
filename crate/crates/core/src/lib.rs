//! Post-persona alignment for multi-session dialogue: memory pools,
//! provider contracts, the generate-retrieve-refine pipeline with its
//! baselines, evaluation metrics and a corpus replay harness.

pub mod dialogue;
pub mod harness;
pub mod memory;
pub mod metrics;
pub mod pipeline;
pub mod providers;
pub mod samples;
pub mod text;

pub use dialogue::{DialogueContext, SessionTranscript, Turn};
pub use memory::{MemoryEntry, MemoryPool, MemorySource, MemoryStore, RetrievalResult};
pub use pipeline::{run_turn, Strategy, StrategyConfig, TurnResult};
pub use providers::Providers;
