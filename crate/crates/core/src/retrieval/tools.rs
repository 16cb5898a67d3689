//! The three tools the orchestrator drives: similarity retrieval, the
//! structured query engine and the calculator. They run in-process through
//! [`Tools`] or behind the line-delimited JSON protocol.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use super::retrieve;
use crate::protocol::ToolHandler;
use crate::provider::CognitionProvider;
use crate::query;
use crate::store::MemoryPool;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolName {
    Retrieve,
    Query,
    Calculate,
}

impl ToolName {
    pub fn as_str(self) -> &'static str {
        match self {
            ToolName::Retrieve => "retrieve",
            ToolName::Query => "query",
            ToolName::Calculate => "calculate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrieveArgs {
    pub query: String,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryArgs {
    pub query: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalculateArgs {
    pub expression: String,
    #[serde(default)]
    pub bindings: BTreeMap<String, f64>,
}

/// In-process tool registry over one pool snapshot.
#[derive(Clone)]
pub struct Tools {
    pub pool: Arc<MemoryPool>,
    pub provider: Arc<dyn CognitionProvider>,
}

fn parse_args<T: serde::de::DeserializeOwned>(args: Json) -> Result<T, String> {
    serde_json::from_value(args).map_err(|e| format!("bad arguments: {e}"))
}

impl ToolHandler for Tools {
    fn tools(&self) -> Vec<&'static str> {
        vec!["retrieve", "query", "calculate"]
    }

    fn call(&self, tool: &str, args: Json) -> Result<Json, String> {
        match tool {
            "retrieve" => {
                let a: RetrieveArgs = parse_args(args)?;
                let hits = retrieve(&self.pool, self.provider.as_ref(), &a.query, a.k).map_err(|e| e.to_string())?;
                Ok(json!(hits))
            }
            "query" => {
                let a: QueryArgs = parse_args(args)?;
                let table = query::run(&a.query, &self.pool).map_err(|e| format!("{}: {e}", e.code()))?;
                serde_json::to_value(table).map_err(|e| e.to_string())
            }
            "calculate" => {
                let a: CalculateArgs = parse_args(args)?;
                let v = query::eval_str(&a.expression, &a.bindings).map_err(|e| e.to_string())?;
                Ok(json!(v))
            }
            other => Err(format!("unknown tool `{other}`")),
        }
    }
}
