//! Schema-organized long-term memory for agents.

pub mod adaptation;
pub mod clock;
pub mod config;
pub mod conflict;
pub mod engine;
pub mod eval;
pub mod fixtures;
pub mod ids;
pub mod init;
pub mod protocol;
pub mod provider;
pub mod query;
pub mod retrieval;
pub mod store;
pub mod text;
pub mod value;

pub use engine::{Engine, EngineError, IngestRequest};
