//! Seeded experience stream for threshold sweeps. Topics are short phrases
//! over a small shared vocabulary, so meta similarities between them spread
//! across the open unit interval rather than sitting at 0 or 1.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::init::{BucketSpec, GoalSpec};
use crate::provider::{ExtractionRules, KeyRule, KeySource, TextRule};
use crate::store::NewExperience;
use crate::value::{Timestamp, ValueKind};

const ADJECTIVES: &[&str] = &["green", "solar", "urban", "quiet", "mobile", "ancient"];
const NOUNS: &[&str] = &["energy", "garden", "music", "design", "travel", "finance", "cooking", "history"];
const NAMES: &[&str] = &["Ana", "Ben", "Chen", "Dara", "Eli", "Fay"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepStream {
    pub goal: GoalSpec,
    pub rules: ExtractionRules,
    pub experiences: Vec<NewExperience>,
}

fn phrase(rng: &mut ChaCha8Rng) -> String {
    let noun = NOUNS.choose(rng).expect("nouns");
    let n = rng.gen_range(0..=2);
    let adjectives: Vec<&str> = ADJECTIVES.choose_multiple(rng, n).copied().collect();
    let mut words = adjectives;
    words.push(noun);
    words.join(" ")
}

pub fn sweep_stream(seed: u64, n: usize) -> SweepStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = Timestamp::from_ymd(2024, 5, 1).expect("valid date").0;
    let experiences = (0..n)
        .map(|i| {
            let topic = phrase(&mut rng);
            let name = NAMES.choose(&mut rng).expect("names");
            NewExperience {
                raw_text: format!("Today I talked about {topic} with {name}."),
                received_at: Timestamp(start + 60 * i as i64),
                source_tag: "user".into(),
                source_quality: 0.8,
            }
        })
        .collect();
    let capture = r"about ((?:\w+ ){0,2}\w+) with";
    SweepStream {
        goal: GoalSpec {
            goal: "Track what the user talks about and with whom".into(),
            buckets: vec![BucketSpec {
                name: "User Events".into(),
                centric_info: "User Events talked conversations topics".into(),
                canonical_keys: vec!["topic".into()],
                optional_keys: vec![],
                schema_templates: vec![],
            }],
        },
        rules: ExtractionRules {
            meta: vec![TextRule::new(capture)],
            entity: vec![TextRule::new(r"with (\w+)")],
            keys: vec![KeyRule {
                key: "topic".into(),
                kind: ValueKind::String,
                source: KeySource::Text,
                patterns: vec![TextRule::new(capture)],
            }],
        },
        experiences,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        assert_eq!(sweep_stream(9, 20), sweep_stream(9, 20));
        assert_ne!(sweep_stream(9, 20).experiences, sweep_stream(10, 20).experiences);
        assert!(sweep_stream(9, 20).experiences[0].raw_text.starts_with("Today I talked about "));
    }
}
