//! Deterministic reference provider.
//!
//! Segmentation splits on sentence boundaries. Routing, schema similarity
//! and element compatibility are all TF-cosine over lowercase word tokens.
//! Meta, entity and record values come from [`ExtractionRules`], with a
//! first-content-word fallback for meta and entity.

use std::collections::BTreeMap;

use super::rules::{first_match, CompiledRules, ExtractionRules, KeySource};
use super::{CognitionProvider, ProviderError, Segment};
use crate::ids::{BucketId, SegmentId};
use crate::store::{Bucket, Element, Experience, Schema};
use crate::text::{tokenize, TermVector};
use crate::value::{KeyName, Value};

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "again", "all", "also", "am", "an", "and", "any", "are", "as", "at", "be",
    "been", "but", "by", "can", "could", "did", "do", "does", "for", "from", "got", "had", "has",
    "have", "he", "hello", "her", "here", "hi", "his", "how", "i", "if", "in", "is", "it", "its",
    "just", "let", "like", "m", "me", "more", "most", "much", "my", "no", "not", "of", "oh", "ok",
    "okay", "on", "or", "our", "really", "s", "she", "should", "so", "some", "sure", "t", "than",
    "thank", "thanks", "that", "the", "their", "them", "then", "there", "these", "they", "this",
    "those", "to", "too", "up", "very", "was", "we", "well", "were", "what", "when", "which",
    "who", "will", "with", "would", "yes", "you", "your",
];

/// Fallback meta/entity when no rule fires.
const GENERAL: &str = "General";

#[derive(Debug, Clone)]
pub struct LexicalProvider {
    rules: ExtractionRules,
    compiled: CompiledRules,
}

impl Default for LexicalProvider {
    fn default() -> Self {
        LexicalProvider::new(ExtractionRules::default()).expect("empty rules compile")
    }
}

/// Splits text after `.`, `!` or `?` runs that are followed by whitespace or
/// the end of input, and at line breaks. Decimal points stay inside numbers.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '\n' || c == '\r' {
            push_trimmed(&mut out, &mut current);
            continue;
        }
        current.push(c);
        if matches!(c, '.' | '!' | '?') {
            while let Some(&next) = chars.peek() {
                if matches!(next, '.' | '!' | '?' | '"' | '\'' | ')') {
                    current.push(next);
                    chars.next();
                } else {
                    break;
                }
            }
            if chars.peek().is_none_or(|n| n.is_whitespace()) {
                push_trimmed(&mut out, &mut current);
            }
        }
    }
    push_trimmed(&mut out, &mut current);
    out
}

fn push_trimmed(out: &mut Vec<String>, current: &mut String) {
    let t = current.trim();
    if tokenize(t).iter().any(|_| true) {
        out.push(t.to_string());
    }
    current.clear();
}

fn fallback_topic(text: &str) -> String {
    tokenize(text)
        .into_iter()
        .find(|t| !STOPWORDS.contains(&t.as_str()) && !t.chars().all(|c| c.is_ascii_digit()))
        .map(|t| {
            let mut cs = t.chars();
            match cs.next() {
                Some(first) => first.to_uppercase().chain(cs).collect(),
                None => t,
            }
        })
        .unwrap_or_else(|| GENERAL.to_string())
}

impl LexicalProvider {
    pub fn new(rules: ExtractionRules) -> Result<Self, ProviderError> {
        let compiled = rules.compile()?;
        Ok(LexicalProvider { rules, compiled })
    }

    pub fn rules(&self) -> &ExtractionRules {
        &self.rules
    }

    /// Argmax TF-cosine of `text` against each bucket's centric info; ties
    /// go to the smallest bucket id.
    pub fn route(&self, text: &str, buckets: &[&Bucket]) -> Option<BucketId> {
        let query = TermVector::from_text(text);
        let mut sorted: Vec<&&Bucket> = buckets.iter().collect();
        sorted.sort_by(|a, b| a.id.cmp(&b.id));
        let mut best: Option<(&BucketId, f64)> = None;
        for b in sorted {
            let score = query.cosine(&TermVector::from_text(&b.centric_info));
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((&b.id, score));
            }
        }
        best.map(|(id, _)| id.clone())
    }

    fn extract_record(&self, text: &str, experience: &Experience) -> BTreeMap<KeyName, Value> {
        let mut record = BTreeMap::new();
        for rule in &self.compiled.keys {
            if record.contains_key(&rule.key) {
                continue;
            }
            let value = match rule.source {
                KeySource::ReceivedAt => Some(Value::Time(experience.received_at)),
                KeySource::SourceTag => Some(Value::Str(experience.source_tag.clone())),
                KeySource::Text => rule
                    .patterns
                    .iter()
                    .filter_map(|p| p.apply(text))
                    .find_map(|raw| Value::parse_as(rule.kind, &raw)),
            };
            if let Some(v) = value {
                record.insert(rule.key.clone(), v);
            }
        }
        record
    }
}

impl CognitionProvider for LexicalProvider {
    fn name(&self) -> &str {
        "lexical"
    }

    fn segment(&self, experience: &Experience, buckets: &[&Bucket]) -> Result<Vec<Segment>, ProviderError> {
        if experience.raw_text.trim().is_empty() {
            return Err(ProviderError::EmptyExperience);
        }
        let mut sentences = split_sentences(&experience.raw_text);
        if sentences.is_empty() {
            // punctuation-only text still yields one segment
            sentences.push(experience.raw_text.trim().to_string());
        }
        Ok(sentences
            .into_iter()
            .enumerate()
            .map(|(i, text)| {
                let bucket = self.route(&text, buckets);
                let meta = first_match(&self.compiled.meta, &text).unwrap_or_else(|| fallback_topic(&text));
                let entity = first_match(&self.compiled.entity, &text).unwrap_or_else(|| meta.clone());
                let raw = self.extract_record(&text, experience);
                let target = bucket
                    .as_ref()
                    .and_then(|id| buckets.iter().find(|b| &b.id == id));
                let (record, missing) = match target {
                    Some(b) => project(raw, b),
                    None => (raw, Vec::new()),
                };
                Segment {
                    id: SegmentId::new(&experience.id, i),
                    text,
                    experience_id: experience.id.clone(),
                    extracted_meta: meta,
                    entity,
                    extracted_record: record,
                    bucket_hint: bucket,
                    missing_keys: missing,
                }
            })
            .collect())
    }

    fn schema_similarity(&self, segment: &Segment, schema: &Schema) -> f64 {
        TermVector::from_text(&segment.extracted_meta).cosine(&TermVector::from_text(&schema.meta))
    }

    fn element_compatibility(&self, segment: &Segment, element: &Element) -> f64 {
        TermVector::from_text(&segment.entity).cosine(&TermVector::from_text(&element.label))
    }

    /// Cosine over content words; falls back to all words when either side
    /// has none.
    fn relevance(&self, query: &str, text: &str) -> f64 {
        let (q, t) = (content_vector(query), content_vector(text));
        if q.is_empty() || t.is_empty() {
            crate::text::cosine(query, text)
        } else {
            q.cosine(&t)
        }
    }
}

fn content_vector(text: &str) -> TermVector {
    TermVector::from_tokens(tokenize(text).into_iter().filter(|t| !STOPWORDS.contains(&t.as_str())))
}

/// Keeps declared keys only and fills missing canonical keys with null.
pub fn project(mut raw: BTreeMap<KeyName, Value>, bucket: &Bucket) -> (BTreeMap<KeyName, Value>, Vec<KeyName>) {
    raw.retain(|k, _| bucket.declares(k));
    let mut missing = Vec::new();
    for k in &bucket.canonical_keys {
        if !raw.contains_key(k) {
            raw.insert(k.clone(), Value::Null);
            missing.push(k.clone());
        }
    }
    (raw, missing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::{ElementId, ExperienceId, SchemaId};
    use crate::provider::rules::{KeyRule, TextRule};
    use crate::value::{Timestamp, ValueKind};

    fn bucket(seq: u64, info: &str, keys: &[&str]) -> Bucket {
        Bucket {
            id: BucketId::from_seq(seq),
            name: info.into(),
            centric_info: info.into(),
            canonical_keys: keys.iter().map(|k| k.to_string()).collect(),
            optional_keys: vec![],
            schemas: Default::default(),
        }
    }

    fn experience(text: &str) -> Experience {
        Experience {
            id: ExperienceId::from_seq(1),
            raw_text: text.into(),
            received_at: Timestamp(1_700_000_000),
            source_tag: "chat".into(),
            source_quality: 0.9,
        }
    }

    fn drink_rules() -> ExtractionRules {
        ExtractionRules {
            meta: vec![TextRule::with_value(r"\b(drank|drink|coffees?|milk|tea)\b", "Drink")],
            entity: vec![
                TextRule::with_value(r"\bcoffees?\b", "Coffee"),
                TextRule::with_value(r"\bmilk\b", "Milk"),
            ],
            keys: vec![
                KeyRule {
                    key: "topic".into(),
                    kind: ValueKind::String,
                    source: KeySource::Text,
                    patterns: vec![TextRule::with_value(r"\bcoffees?\b", "coffee"), TextRule::with_value(r"\bmilk\b", "milk")],
                },
                KeyRule {
                    key: "attitude".into(),
                    kind: ValueKind::String,
                    source: KeySource::Text,
                    patterns: vec![TextRule::with_value(r"\b(loved?|like[ds]?|enjoy(ed)?)\b", "like"), TextRule::with_value(r"\b(hated?|dislike[ds]?)\b", "dislike")],
                },
                KeyRule {
                    key: "time".into(),
                    kind: ValueKind::Timestamp,
                    source: KeySource::ReceivedAt,
                    patterns: vec![],
                },
            ],
        }
    }

    #[test]
    fn coffee_turn_is_one_drink_segment() {
        let p = LexicalProvider::new(drink_rules()).unwrap();
        let b = bucket(1, "User Trait preferences likes drinks", &["topic", "attitude", "time"]);
        let segs = p
            .segment(&experience("I drank two coffees this morning, loved them"), &[&b])
            .unwrap();
        assert_eq!(segs.len(), 1);
        let s = &segs[0];
        assert_eq!(s.extracted_meta, "Drink");
        assert_eq!(s.entity, "Coffee");
        assert_eq!(s.extracted_record["topic"], Value::from("coffee"));
        assert_eq!(s.extracted_record["attitude"], Value::from("like"));
        assert_eq!(s.extracted_record["time"], Value::Time(Timestamp(1_700_000_000)));
        assert!(s.missing_keys.is_empty());
        assert_eq!(s.bucket_hint, Some(b.id.clone()));
    }

    #[test]
    fn empty_experience_rejected() {
        let p = LexicalProvider::default();
        assert_eq!(p.segment(&experience(""), &[]), Err(ProviderError::EmptyExperience));
    }

    #[test]
    fn two_sentences_two_segments() {
        assert_eq!(
            split_sentences("I love jazz concerts. My sister drinks green tea daily!"),
            vec!["I love jazz concerts.", "My sister drinks green tea daily!"]
        );
        assert_eq!(split_sentences("Close was 0.507 today.  Fine"), vec!["Close was 0.507 today.", "Fine"]);
        assert_eq!(split_sentences("line one\nline two"), vec!["line one", "line two"]);
        assert!(split_sentences(" ... ").is_empty());
    }

    #[test]
    fn missing_canonical_keys_become_null() {
        let p = LexicalProvider::new(drink_rules()).unwrap();
        let b = bucket(1, "User Trait", &["topic", "attitude", "place"]);
        let segs = p.segment(&experience("Milk is fine."), &[&b]).unwrap();
        let s = &segs[0];
        assert_eq!(s.extracted_record["attitude"], Value::Null);
        assert_eq!(s.extracted_record["place"], Value::Null);
        assert_eq!(s.missing_keys, vec!["attitude".to_string(), "place".to_string()]);
        // undeclared keys are projected away
        assert!(!s.extracted_record.contains_key("time"));
    }

    #[test]
    fn routing_prefers_matching_centric_info_then_smaller_id() {
        let p = LexicalProvider::default();
        let music = bucket(2, "music concerts songs", &["k"]);
        let drinks = bucket(3, "drinks coffee tea", &["k"]);
        let other = bucket(1, "unrelated", &["k"]);
        assert_eq!(p.route("we had coffee", &[&music, &drinks, &other]), Some(drinks.id.clone()));
        // nothing matches: smallest id wins the all-zero tie
        assert_eq!(p.route("zzz", &[&music, &drinks, &other]), Some(other.id.clone()));
        assert_eq!(p.route("zzz", &[]), None);
    }

    #[test]
    fn similarity_examples() {
        let p = LexicalProvider::default();
        let seg = |meta: &str, entity: &str| Segment {
            id: SegmentId("s".into()),
            text: String::new(),
            experience_id: ExperienceId::from_seq(1),
            extracted_meta: meta.into(),
            entity: entity.into(),
            extracted_record: Default::default(),
            bucket_hint: None,
            missing_keys: vec![],
        };
        let schema = |meta: &str| Schema {
            id: SchemaId::from_seq(1),
            meta: meta.into(),
            watched_keys: vec![],
            elements: Default::default(),
            created_at: Timestamp(0),
        };
        let element = |label: &str| Element {
            id: ElementId::from_seq(1),
            label: label.into(),
            records: vec![],
        };
        assert_eq!(p.schema_similarity(&seg("Drink", ""), &schema("Drink")), 1.0);
        assert_eq!(p.schema_similarity(&seg("Drink", ""), &schema("Music")), 0.0);
        let partial = p.schema_similarity(&seg("coffee drink", ""), &schema("drink"));
        assert!((partial - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(p.element_compatibility(&seg("", "Coffee"), &element("Coffee")), 1.0);
        assert_eq!(p.element_compatibility(&seg("", "Milk"), &element("Coffee")), 0.0);
        let partial = p.element_compatibility(&seg("", "Pure Milk"), &element("Milk"));
        assert!((partial - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn fallback_topic_skips_stopwords() {
        assert_eq!(fallback_topic("I really love the jazz"), "Love");
        assert_eq!(fallback_topic("to the of"), GENERAL);
    }
}
