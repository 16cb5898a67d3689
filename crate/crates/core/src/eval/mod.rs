//! Synthetic aggregation benchmark: numeric records scattered through a
//! dialogue, questions over them with brute-force gold answers, and a
//! harness scoring answer accuracy and evidence coverage.

pub mod baseline;
pub mod generator;
pub mod harness;
pub mod oracle;
pub mod stream;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use baseline::VectorBaseline;
pub use generator::generate;
pub use stream::{sweep_stream, SweepStream};
pub use harness::{run, EngineTarget, EvalResult, EvalTarget, EvidenceItem, QuestionResult, Summary, TargetAnswer};

use crate::init::GoalSpec;
use crate::provider::ExtractionRules;
use crate::retrieval::QueryClass;
use crate::value::Timestamp;

pub const SUITE_FORMAT: &str = "schemamem-suite/1";
pub const RESULT_FORMAT: &str = "schemamem-eval/1";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid generator config: {0}")]
    ConfigInvalid(String),
    #[error("invalid suite: {0}")]
    InvalidSuite(String),
    #[error("engine unreachable: {0}")]
    EngineUnreachable(String),
    #[error("engine error: {0}")]
    Engine(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    #[default]
    Finance,
    Medical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DifficultyMix {
    #[serde(default)]
    pub easy: f64,
    #[serde(default)]
    pub medium: f64,
    #[serde(default)]
    pub hard: f64,
}

impl Default for DifficultyMix {
    fn default() -> Self {
        DifficultyMix {
            easy: 0.3,
            medium: 0.5,
            hard: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_records: usize,
    pub n_questions: usize,
    pub difficulty_mix: DifficultyMix,
    pub domain: Domain,
    /// Entities the records are spread over.
    pub entities: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_records: 160,
            n_questions: 60,
            difficulty_mix: DifficultyMix::default(),
            domain: Domain::Finance,
            entities: 4,
        }
    }
}

/// One dialogue turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: String,
    pub text: String,
    pub at: Timestamp,
}

/// A ground-truth data point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenRow {
    pub entity: String,
    /// `YYYY-MM-DD`.
    pub date: String,
    pub metrics: BTreeMap<String, f64>,
    /// The sentence that carries this row in the dialogue.
    pub text: String,
}

/// Identifies a ground-truth row.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EvidenceRef {
    pub entity: String,
    pub date: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    Sum,
    Avg,
    Count,
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub entity: String,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub key: String,
    /// Strictly above when true, strictly below otherwise.
    pub above: bool,
    pub threshold: f64,
}

/// Structured form of a question; one group is a plain aggregate, two
/// groups ask for `group[0] - group[1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionSpec {
    pub aggregate: Aggregate,
    pub metric: Option<String>,
    pub groups: Vec<GroupSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteQuestion {
    pub id: String,
    pub text: String,
    pub class: QueryClass,
    pub difficulty: Difficulty,
    pub spec: QuestionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_text: Option<String>,
    pub gold_evidence: Vec<EvidenceRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSuite {
    pub format: String,
    pub seed: u64,
    pub config: GenConfig,
    pub goal: GoalSpec,
    /// Extraction rules that let the deterministic provider read the
    /// dialogue.
    pub rules: ExtractionRules,
    /// Key holding each record's date.
    pub date_key: String,
    /// Reference time for relative phrases.
    pub now: Timestamp,
    pub dialogue: Vec<Turn>,
    pub hidden_table: Vec<HiddenRow>,
    pub questions: Vec<SuiteQuestion>,
}

impl SyntheticSuite {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("suite serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let suite: SyntheticSuite = serde_json::from_str(text).map_err(|e| EvalError::InvalidSuite(e.to_string()))?;
        if suite.format != SUITE_FORMAT {
            return Err(EvalError::InvalidSuite(format!(
                "format `{}`, expected `{SUITE_FORMAT}`",
                suite.format
            )));
        }
        Ok(suite)
    }

    /// Structural checks: every row's sentence is in the dialogue and every
    /// gold value recomputes from the hidden table.
    pub fn check(&self) -> Vec<String> {
        let mut problems = Vec::new();
        for row in &self.hidden_table {
            if !self.dialogue.iter().any(|t| t.text.contains(&row.text)) {
                problems.push(format!("row {} {} missing from dialogue", row.entity, row.date));
            }
        }
        for q in &self.questions {
            match oracle::gold(&q.spec, &self.hidden_table) {
                Some((v, ev)) => {
                    if q.gold_value != Some(v) {
                        problems.push(format!("{}: gold {:?} but oracle {v}", q.id, q.gold_value));
                    }
                    if ev != q.gold_evidence {
                        problems.push(format!("{}: gold evidence differs from oracle", q.id));
                    }
                }
                None => problems.push(format!("{}: oracle has no answer", q.id)),
            }
        }
        problems
    }
}
