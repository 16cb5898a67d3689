//! Small built-in fixtures: the coffee-habit goal spec, extraction rules
//! and drink log used by tests, examples and the CLI demo.

use std::sync::Arc;

use crate::clock::ManualClock;
use crate::engine::{Engine, IngestRequest};
use crate::init::GoalSpec;
use crate::provider::{ExtractionRules, LexicalProvider};
use crate::value::Timestamp;

pub const COFFEE_GOAL_JSON: &str = include_str!("../fixtures/coffee_goal.json");
pub const COFFEE_RULES_JSON: &str = include_str!("../fixtures/coffee_rules.json");
pub const COFFEE_LOG_JSONL: &str = include_str!("../fixtures/coffee_log.jsonl");

pub const COFFEE_SENTENCE: &str = "I drank two coffees this morning, loved them";

/// "Now" for the coffee log: a Wednesday, so this week holds 6 cups of
/// coffee and last week 4.
pub const COFFEE_NOW: &str = "2024-06-12T18:00:00Z";

pub fn coffee_goal() -> GoalSpec {
    GoalSpec::from_json(COFFEE_GOAL_JSON).expect("coffee goal fixture parses")
}

pub fn coffee_rules() -> ExtractionRules {
    ExtractionRules::from_json(COFFEE_RULES_JSON).expect("coffee rules fixture parses")
}

pub fn coffee_log() -> Vec<IngestRequest> {
    COFFEE_LOG_JSONL
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("coffee log fixture parses"))
        .collect()
}

pub fn coffee_now() -> Timestamp {
    Timestamp::parse(COFFEE_NOW).expect("valid fixture time")
}

/// In-memory engine initialized with the coffee goal and fed the log.
pub fn coffee_engine() -> Engine {
    let provider = Arc::new(LexicalProvider::new(coffee_rules()).expect("coffee rules compile"));
    let engine = Engine::in_memory(provider, Arc::new(ManualClock::new(coffee_now())));
    engine.init(&coffee_goal(), false).expect("coffee goal initializes");
    for req in coffee_log() {
        engine.ingest(req).expect("coffee log ingests");
    }
    engine
}
