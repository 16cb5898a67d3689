//! Runs a suite against a target and scores answers and evidence.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Difficulty, EvalError, EvidenceRef, SuiteQuestion, SyntheticSuite, Turn, RESULT_FORMAT};
use crate::clock::ManualClock;
use crate::config::EngineConfig;
use crate::engine::{Engine, IngestRequest};
use crate::ids::{ExperienceId, RecordId};
use crate::provider::LexicalProvider;

/// Relative tolerance on numeric answers.
pub const REL_TOL: f64 = 1e-6;
/// Absolute floor so gold values at or near zero stay gradable.
pub const ABS_FLOOR: f64 = 1e-12;

/// One piece of evidence returned by a target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum EvidenceItem {
    /// A structured row, identified the way the hidden table identifies it.
    Record(EvidenceRef),
    /// Raw text; covers every hidden row whose sentence it contains.
    Text(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TargetAnswer {
    pub value: Option<f64>,
    pub text: String,
    pub abstained: bool,
    pub evidence: Vec<EvidenceItem>,
}

pub trait EvalTarget {
    fn name(&self) -> String;
    fn prepare(&mut self, suite: &SyntheticSuite) -> Result<(), EvalError>;
    fn ingest(&mut self, turn: &Turn) -> Result<(), EvalError>;
    fn ask(&mut self, question: &SuiteQuestion) -> Result<TargetAnswer, EvalError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionResult {
    pub id: String,
    pub difficulty: Difficulty,
    pub question: String,
    pub gold_value: Option<f64>,
    pub value: Option<f64>,
    pub text: String,
    pub correct: bool,
    pub coverage: f64,
    pub abstained: bool,
    pub evidence_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub questions: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Mean per-question evidence coverage.
    pub coverage: f64,
    pub abstained: usize,
}

impl Summary {
    fn of<'a>(results: impl Iterator<Item = &'a QuestionResult>) -> Summary {
        let mut s = Summary::default();
        let mut coverage = 0.0;
        for r in results {
            s.questions += 1;
            s.correct += usize::from(r.correct);
            s.abstained += usize::from(r.abstained);
            coverage += r.coverage;
        }
        if s.questions > 0 {
            s.accuracy = s.correct as f64 / s.questions as f64;
            s.coverage = coverage / s.questions as f64;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub format: String,
    pub seed: u64,
    pub target: String,
    pub per_question: Vec<QuestionResult>,
    pub by_difficulty: BTreeMap<Difficulty, Summary>,
    pub overall: Summary,
}

pub fn numeric_match(got: f64, gold: f64) -> bool {
    (got - gold).abs() <= (REL_TOL * gold.abs()).max(ABS_FLOOR)
}

fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn correct(q: &SuiteQuestion, a: &TargetAnswer) -> bool {
    if a.abstained {
        return false;
    }
    match (q.gold_value, a.value, &q.gold_text) {
        (Some(g), Some(v), _) => numeric_match(v, g),
        (None, _, Some(t)) => normalize(t) == normalize(&a.text),
        _ => false,
    }
}

/// Fraction of gold rows the evidence covers; 1 when there is no gold
/// evidence.
pub fn coverage(gold: &[EvidenceRef], evidence: &[EvidenceItem], suite: &SyntheticSuite) -> f64 {
    if gold.is_empty() {
        return 1.0;
    }
    let covered = gold
        .iter()
        .filter(|g| {
            let text = suite
                .hidden_table
                .iter()
                .find(|r| r.entity == g.entity && r.date == g.date)
                .map(|r| r.text.as_str());
            evidence.iter().any(|e| match e {
                EvidenceItem::Record(r) => r == *g,
                EvidenceItem::Text(t) => text.is_some_and(|x| t.contains(x)),
            })
        })
        .count();
    covered as f64 / gold.len() as f64
}

/// Feeds the dialogue to `target` in order, then asks every question.
pub fn run(suite: &SyntheticSuite, target: &mut dyn EvalTarget) -> Result<EvalResult, EvalError> {
    target.prepare(suite)?;
    for turn in &suite.dialogue {
        target.ingest(turn)?;
    }
    let mut per_question = Vec::with_capacity(suite.questions.len());
    for q in &suite.questions {
        let a = target.ask(q)?;
        per_question.push(QuestionResult {
            id: q.id.clone(),
            difficulty: q.difficulty,
            question: q.text.clone(),
            gold_value: q.gold_value,
            value: a.value,
            correct: correct(q, &a),
            coverage: coverage(&q.gold_evidence, &a.evidence, suite),
            abstained: a.abstained,
            evidence_count: a.evidence.len(),
            text: a.text,
        });
    }
    let by_difficulty = Difficulty::ALL
        .iter()
        .map(|d| (*d, Summary::of(per_question.iter().filter(|r| r.difficulty == *d))))
        .filter(|(_, s)| s.questions > 0)
        .collect();
    Ok(EvalResult {
        format: RESULT_FORMAT.to_string(),
        seed: suite.seed,
        target: target.name(),
        overall: Summary::of(per_question.iter()),
        by_difficulty,
        per_question,
    })
}

/// The schema-memory engine, in process, reading the dialogue with the
/// suite's extraction rules.
#[derive(Debug, Default)]
pub struct EngineTarget {
    config: EngineConfig,
    engine: Option<Engine>,
    date_key: String,
}

impl EngineTarget {
    pub fn new(config: EngineConfig) -> Self {
        EngineTarget {
            config,
            engine: None,
            date_key: String::new(),
        }
    }

    pub fn engine(&self) -> Option<&Engine> {
        self.engine.as_ref()
    }

    fn ready(&self) -> Result<&Engine, EvalError> {
        self.engine
            .as_ref()
            .ok_or_else(|| EvalError::Engine("target used before prepare".into()))
    }
}

impl EvalTarget for EngineTarget {
    fn name(&self) -> String {
        "schemamem".to_string()
    }

    fn prepare(&mut self, suite: &SyntheticSuite) -> Result<(), EvalError> {
        let provider = LexicalProvider::new(suite.rules.clone()).map_err(|e| EvalError::InvalidSuite(e.to_string()))?;
        let engine = Engine::new(
            EngineConfig {
                data_root: None,
                ..self.config.clone()
            },
            Arc::new(provider),
            Arc::new(ManualClock::new(suite.now)),
        )
        .map_err(|e| EvalError::Engine(e.to_string()))?;
        engine.init(&suite.goal, false).map_err(|e| EvalError::Engine(e.to_string()))?;
        self.engine = Some(engine);
        self.date_key = suite.date_key.clone();
        Ok(())
    }

    fn ingest(&mut self, turn: &Turn) -> Result<(), EvalError> {
        let req = IngestRequest {
            source_tag: turn.speaker.clone(),
            received_at: Some(turn.at),
            ..IngestRequest::new(turn.text.clone())
        };
        self.ready()?.ingest(req).map_err(|e| EvalError::Engine(e.to_string()))?;
        Ok(())
    }

    fn ask(&mut self, question: &SuiteQuestion) -> Result<TargetAnswer, EvalError> {
        let engine = self.ready()?;
        let answer = engine.answer(&question.text, None);
        let pool = engine.pool();
        let evidence = answer
            .evidence
            .iter()
            .filter_map(|id| {
                if let Some(view) = pool.find_record(&RecordId::from(id.as_str())) {
                    let date = view.record.values.get(&self.date_key)?.as_time()?.date_string();
                    Some(EvidenceItem::Record(EvidenceRef {
                        entity: view.label,
                        date,
                    }))
                } else {
                    pool.experience(&ExperienceId::from(id.as_str()))
                        .map(|e| EvidenceItem::Text(e.raw_text.clone()))
                }
            })
            .collect();
        Ok(TargetAnswer {
            value: answer.value,
            text: answer.text,
            abstained: answer.abstained,
            evidence,
        })
    }
}
