//! The cognition provider contract: every judgment the engine would
//! otherwise delegate to a language or embedding model.
//!
//! [`LexicalProvider`] is the deterministic reference implementation used by
//! the test suites; [`remote::RemoteProvider`] forwards the same calls to an
//! external process over the line-delimited JSON tool protocol.

pub mod lexical;
pub mod remote;
pub mod rules;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lexical::LexicalProvider;
pub use rules::{ExtractionRules, KeyRule, KeySource, TextRule};

use crate::conflict::ConflictPolicy;
use crate::ids::{BucketId, ExperienceId, SegmentId};
use crate::retrieval::QueryClass;
use crate::store::{Bucket, Element, Experience, Schema};
use crate::value::{KeyName, Value};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("experience text is empty")]
    EmptyExperience,
    #[error("invalid extraction rules: {0}")]
    InvalidRules(String),
    #[error("provider failure: {0}")]
    Failure(String),
}

/// A preprocessed piece of one experience, routed to a bucket and carrying
/// its extracted meta topic, primary entity and record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: SegmentId,
    pub text: String,
    pub experience_id: ExperienceId,
    pub extracted_meta: String,
    /// Primary entity; becomes the element label on evolution.
    pub entity: String,
    /// Projected onto the routed bucket's declared keys; canonical keys the
    /// text did not fill hold [`Value::Null`].
    pub extracted_record: BTreeMap<KeyName, Value>,
    pub bucket_hint: Option<BucketId>,
    /// Canonical keys filled with the null sentinel.
    #[serde(default)]
    pub missing_keys: Vec<KeyName>,
}

/// Scores produced for one segment against one schema / element pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProviderScores {
    pub schema_similarity: f64,
    pub element_compatibility: f64,
}

impl ProviderScores {
    pub fn is_valid(&self) -> bool {
        in_unit(self.schema_similarity) && in_unit(self.element_compatibility)
    }
}

pub fn in_unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

pub trait CognitionProvider: Send + Sync {
    fn name(&self) -> &str;

    /// Splits an experience into segments, routes each to one of `buckets`
    /// and extracts meta, entity and record.
    fn segment(&self, experience: &Experience, buckets: &[&Bucket]) -> Result<Vec<Segment>, ProviderError>;

    /// Schema-level similarity in [0, 1].
    fn schema_similarity(&self, segment: &Segment, schema: &Schema) -> f64;

    /// Element-level compatibility in [0, 1].
    fn element_compatibility(&self, segment: &Segment, element: &Element) -> f64;

    /// Domain conflict predicate on two values of `key`.
    fn value_conflict(&self, key: &str, a: &Value, b: &Value, policy: &ConflictPolicy) -> bool {
        policy.value_conflict(key, a, b)
    }

    /// Relevance of `text` to a retrieval query, in [0, 1].
    fn relevance(&self, query: &str, text: &str) -> f64 {
        crate::text::cosine(query, text)
    }

    /// Optional override of the rule-based question classifier.
    fn classify(&self, _question: &str) -> Option<QueryClass> {
        None
    }

    /// Providers that cannot be called concurrently return true; the engine
    /// then serializes every call into them.
    fn single_flight(&self) -> bool {
        false
    }
}
