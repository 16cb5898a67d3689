//! Provider that forwards every judgment to an external tool server, plus
//! the matching server-side handler that exposes any local provider.
//!
//! Scoring calls cannot return errors through the trait; a failed call
//! yields NaN, which the adaptation engine rejects as a provider failure.

use std::sync::Mutex;

use serde_json::{json, Value as Json};

use super::{CognitionProvider, ProviderError, Segment};
use crate::protocol::{ProtocolError, ToolHandler, Transport};
use crate::retrieval::QueryClass;
use crate::store::{Bucket, Element, Experience, Schema};

pub struct RemoteProvider {
    name: String,
    transport: Mutex<Box<dyn Transport>>,
}

impl std::fmt::Debug for RemoteProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteProvider").field("name", &self.name).finish()
    }
}

impl RemoteProvider {
    pub fn new(name: impl Into<String>, transport: Box<dyn Transport>) -> Self {
        RemoteProvider {
            name: name.into(),
            transport: Mutex::new(transport),
        }
    }

    fn call(&self, tool: &str, args: Json) -> Result<Json, ProtocolError> {
        let mut t = self.transport.lock().map_err(|_| ProtocolError::Closed)?;
        t.call(tool, args)
    }

    fn score(&self, tool: &str, args: Json) -> f64 {
        match self.call(tool, args) {
            Ok(v) => v.as_f64().unwrap_or(f64::NAN),
            Err(e) => {
                tracing::warn!(tool, error = %e, "remote provider call failed");
                f64::NAN
            }
        }
    }
}

impl CognitionProvider for RemoteProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn segment(&self, experience: &Experience, buckets: &[&Bucket]) -> Result<Vec<Segment>, ProviderError> {
        let result = self
            .call("segment", json!({ "experience": experience, "buckets": buckets }))
            .map_err(|e| match e {
                ProtocolError::Tool { message, .. } if message == ProviderError::EmptyExperience.to_string() => {
                    ProviderError::EmptyExperience
                }
                other => ProviderError::Failure(other.to_string()),
            })?;
        serde_json::from_value(result).map_err(|e| ProviderError::Failure(e.to_string()))
    }

    fn schema_similarity(&self, segment: &Segment, schema: &Schema) -> f64 {
        self.score("schema_similarity", json!({ "segment": segment, "schema": schema }))
    }

    fn element_compatibility(&self, segment: &Segment, element: &Element) -> f64 {
        self.score("element_compatibility", json!({ "segment": segment, "element": element }))
    }

    fn relevance(&self, query: &str, text: &str) -> f64 {
        self.score("relevance", json!({ "query": query, "text": text }))
    }

    fn classify(&self, question: &str) -> Option<QueryClass> {
        self.call("classify", json!({ "question": question }))
            .ok()
            .and_then(|v| serde_json::from_value(v).ok())
    }

    fn single_flight(&self) -> bool {
        true
    }
}

/// Serves a local provider's judgments over the tool protocol.
pub struct ProviderTools<P>(pub P);

fn arg<T: serde::de::DeserializeOwned>(args: &Json, field: &str) -> Result<T, String> {
    let v = args.get(field).ok_or_else(|| format!("missing argument `{field}`"))?;
    serde_json::from_value(v.clone()).map_err(|e| format!("bad argument `{field}`: {e}"))
}

impl<P: CognitionProvider> ToolHandler for ProviderTools<P> {
    fn tools(&self) -> Vec<&'static str> {
        vec!["segment", "schema_similarity", "element_compatibility", "relevance", "classify"]
    }

    fn call(&self, tool: &str, args: Json) -> Result<Json, String> {
        let p = &self.0;
        match tool {
            "segment" => {
                let exp: Experience = arg(&args, "experience")?;
                let buckets: Vec<Bucket> = arg(&args, "buckets")?;
                let refs: Vec<&Bucket> = buckets.iter().collect();
                let segs = p.segment(&exp, &refs).map_err(|e| e.to_string())?;
                serde_json::to_value(segs).map_err(|e| e.to_string())
            }
            "schema_similarity" => {
                let s: Segment = arg(&args, "segment")?;
                let schema: Schema = arg(&args, "schema")?;
                Ok(json!(p.schema_similarity(&s, &schema)))
            }
            "element_compatibility" => {
                let s: Segment = arg(&args, "segment")?;
                let e: Element = arg(&args, "element")?;
                Ok(json!(p.element_compatibility(&s, &e)))
            }
            "relevance" => {
                let q: String = arg(&args, "query")?;
                let t: String = arg(&args, "text")?;
                Ok(json!(p.relevance(&q, &t)))
            }
            "classify" => {
                let q: String = arg(&args, "question")?;
                Ok(serde_json::to_value(p.classify(&q)).map_err(|e| e.to_string())?)
            }
            other => Err(format!("unknown tool `{other}`")),
        }
    }
}
