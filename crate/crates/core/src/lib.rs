//! Dual-track knowledge-graph question answering.
//!
//! A question is first routed by an LLM classifier. Chained questions
//! ("When was the wife of the Inception director born?") go to a depth-first
//! path search over the knowledge graph; parallel questions ("Who is older,
//! A or B?") go to a draft-decompose-verify loop that grounds every atomic
//! claim against the graph independently. Both tracks share a two-stage
//! embedding/rerank scorer and a keyword + LLM relation denoiser.

pub mod answer;
pub mod chain;
pub mod classifier;
pub mod config;
pub mod context;
pub mod denoiser;
pub mod engine;
pub mod error;
pub mod eval;
pub mod kg;
pub mod llm;
pub mod scorer;
pub mod text;
pub mod transport;
pub mod verify;

pub use answer::{Answer, Question, QuestionType};
pub use config::EngineConfig;
pub use context::Services;
pub use engine::Engine;
pub use error::{Error, Result};
