//! Question answering over memory: classification, similarity retrieval
//! and a bounded tool loop over the query engine and calculator.

pub mod orchestrator;
pub mod time;
pub mod tools;

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use orchestrator::{Answer, Orchestrator, ToolStep};
pub use time::{resolve_ranges, TimeRange};
pub use tools::{ToolName, Tools};

use crate::ids::ExperienceId;
use crate::provider::CognitionProvider;
use crate::store::MemoryPool;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QueryClass {
    RegionalFact,
    MultiFragment,
    Aggregation,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("no experiences stored")]
    EmptyStore,
    #[error("k must be at least 1")]
    InvalidK,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    /// Hits returned by similarity retrieval.
    pub k: usize,
    /// Maximum tool steps per answer.
    pub budget: usize,
    /// Hits scoring below this are ignored.
    pub min_score: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            k: 5,
            budget: 8,
            min_score: 0.2,
        }
    }
}

static AGGREGATION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(how many|how much|total|sum|average|mean|avg|more\b.*\bthan|less\b.*\bthan|fewer|difference|compare|maximum|minimum|highest|lowest|count|increase|decrease)\b",
    )
    .expect("valid regex")
});

static MULTI_FRAGMENT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)(\b(based on|given my|considering|preferences?|should i|combin\w*)\b|&)").expect("valid regex")
});

/// Rule-based question classifier: aggregation cues first, then
/// multi-constraint cues, otherwise a regional fact.
pub fn classify(question: &str) -> Result<QueryClass, RetrievalError> {
    if question.trim().is_empty() {
        return Err(RetrievalError::EmptyQuestion);
    }
    Ok(if AGGREGATION.is_match(question) {
        QueryClass::Aggregation
    } else if MULTI_FRAGMENT.is_match(question) {
        QueryClass::MultiFragment
    } else {
        QueryClass::RegionalFact
    })
}

/// Classification with the provider's override taking precedence.
pub fn classify_with(provider: &dyn CognitionProvider, question: &str) -> Result<QueryClass, RetrievalError> {
    if question.trim().is_empty() {
        return Err(RetrievalError::EmptyQuestion);
    }
    match provider.classify(question) {
        Some(c) => Ok(c),
        None => classify(question),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub experience: ExperienceId,
    pub score: f64,
    pub text: String,
}

/// Top-`k` experiences by provider relevance, best first, ties by id.
pub fn retrieve(
    pool: &MemoryPool,
    provider: &dyn CognitionProvider,
    query: &str,
    k: usize,
) -> Result<Vec<Hit>, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    if pool.experiences.is_empty() {
        return Err(RetrievalError::EmptyStore);
    }
    let mut hits: Vec<Hit> = pool
        .experiences
        .values()
        .map(|e| Hit {
            experience: e.id.clone(),
            score: provider.relevance(query, &e.raw_text),
            text: e.raw_text.clone(),
        })
        .collect();
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.experience.cmp(&b.experience)));
    hits.truncate(k);
    Ok(hits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::LexicalProvider;
    use crate::store::{NewExperience, Store};
    use crate::value::Timestamp;

    #[test]
    fn classifier_examples() {
        assert_eq!(classify("Which cities did you last suggest for my vacation?"), Ok(QueryClass::RegionalFact));
        assert_eq!(
            classify("Based on my coastal & mid-range preferences, which recommended city should I choose?"),
            Ok(QueryClass::MultiFragment)
        );
        assert_eq!(
            classify("Did I drink more coffee this week than last week, and by how much?"),
            Ok(QueryClass::Aggregation)
        );
        assert_eq!(classify("  "), Err(RetrievalError::EmptyQuestion));
    }

    fn store(texts: &[&str]) -> Store {
        let s = Store::in_memory();
        for t in texts {
            s.put_experience(NewExperience {
                raw_text: t.to_string(),
                received_at: Timestamp(0),
                source_tag: "t".into(),
                source_quality: 1.0,
            })
            .unwrap();
        }
        s
    }

    #[test]
    fn retrieval_contract() {
        let p = LexicalProvider::default();
        let s = store(&["I love jazz concerts", "Coffee every morning", "jazz", "jazz"]);
        let pool = s.pool();
        let hits = retrieve(&pool, &p, "Coffee every morning", 2).unwrap();
        assert_eq!(hits[0].text, "Coffee every morning");
        assert_eq!(hits[0].score, 1.0);
        let all = retrieve(&pool, &p, "jazz", 10).unwrap();
        assert_eq!(all.len(), 4);
        // the two identical "jazz" experiences tie and come back in id order
        assert_eq!(all[0].score, all[1].score);
        assert!(all[0].experience < all[1].experience);
        assert_eq!(retrieve(&pool, &p, "x", 0), Err(RetrievalError::InvalidK));
        assert_eq!(retrieve(&Store::in_memory().pool(), &p, "x", 1), Err(RetrievalError::EmptyStore));
    }
}
