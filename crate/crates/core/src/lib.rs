//! Generation of nondirective trust-measurement prompts from validated
//! trust-scale items, and a relational conversational survey engine that
//! administers them.
//!
//! The prompt pipeline runs: [`corpus`] ingestion and filtering,
//! [`scale_ranking`], [`textprep`], [`embedding`], [`clustering`],
//! [`summarization`] and [`prompt_gen`]. The [`dialog`] state machine
//! administers a [`prompt_gen::PromptSet`], and [`service`] keeps sessions
//! durable on disk. [`pipeline`] wires every stage together.

pub mod clustering;
pub mod corpus;
pub mod dialog;
pub mod embedding;
pub mod pipeline;
pub mod prompt_gen;
pub mod resources;
pub mod scale_ranking;
pub mod service;
pub mod summarization;
pub mod textprep;
pub mod valence;

pub use clustering::{Cut, Dendrogram, FlatClustering, Linkage, Metric};
pub use corpus::{Construct, Domain, Scale, ScaleCorpus, Valence};
pub use dialog::{DialogPhase, DialogSession, Intent, IntentLabel, TrustIndicators, Turn};
pub use embedding::{EmbeddingTable, GloveConfig};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineError, PipelineOutput};
pub use prompt_gen::{Prompt, PromptLevel, PromptSet};
pub use service::SessionStore;
pub use valence::ValenceLexicon;
