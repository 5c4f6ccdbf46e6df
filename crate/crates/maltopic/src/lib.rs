//! Multi-agent LLM topic modeling for survey data.
//!
//! The pipeline enriches free-text survey responses with structured context
//! (agent 1), extracts topics from token-budgeted batches (agent 2),
//! deduplicates topics across batches (agent 3), and scores the result with
//! four quality metrics: word coherence (average PMI), word diversity,
//! average inter-topic embedding similarity, and document coverage.

pub mod baseline;
pub mod dedup;
pub mod enrich;
pub mod gateway;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod topics;

mod jsonx;

pub use gateway::{ChatExchange, CostModel, Gateway, GenerationParams, TokenBudget};
pub use metrics::{EmbeddingVector, MetricsReport};
pub use topics::Topic;
