//! Retrieval-only baseline: top-k experiences by relevance, then the
//! aggregate computed over whatever rows those k turns happen to carry.

use std::collections::BTreeMap;
use std::sync::{Arc, LazyLock};

use regex::Regex;

use super::{EvalError, EvalTarget, EvidenceItem, SuiteQuestion, SyntheticSuite, TargetAnswer, Turn};
use crate::ids::{BucketId, ExperienceId};
use crate::provider::{CognitionProvider, LexicalProvider};
use crate::retrieval::{resolve_ranges, retrieve};
use crate::store::{Bucket, Experience, MemoryPool};
use crate::text::tokenize;
use crate::value::Timestamp;

static FILTER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\bwhen (\w+) was (above|below) (-?[0-9]+(?:\.[0-9]+)?)").expect("valid regex")
});

#[derive(Debug)]
pub struct VectorBaseline {
    pub k: usize,
    provider: Option<LexicalProvider>,
    bucket: Option<Bucket>,
    pool: MemoryPool,
    date_key: String,
    now: Timestamp,
}

impl Default for VectorBaseline {
    fn default() -> Self {
        VectorBaseline::new(5)
    }
}

struct Row {
    entity: String,
    at: Timestamp,
    values: BTreeMap<String, f64>,
}

impl VectorBaseline {
    pub fn new(k: usize) -> Self {
        VectorBaseline {
            k,
            provider: None,
            bucket: None,
            pool: MemoryPool::default(),
            date_key: String::new(),
            now: Timestamp(0),
        }
    }

    fn rows(&self, provider: &LexicalProvider, bucket: &Bucket, experience: &Experience) -> Vec<Row> {
        let segments = provider.segment(experience, &[bucket]).unwrap_or_default();
        segments
            .into_iter()
            .filter_map(|s| {
                let at = s.extracted_record.get(&self.date_key)?.as_time()?;
                let values = s
                    .extracted_record
                    .iter()
                    .filter_map(|(k, v)| Some((k.to_string(), v.as_f64()?)))
                    .collect::<BTreeMap<_, _>>();
                (!values.is_empty()).then_some(Row {
                    entity: s.entity,
                    at,
                    values,
                })
            })
            .collect()
    }
}

fn position(tokens: &[String], word: &str) -> Option<usize> {
    let w = word.to_lowercase();
    tokens.iter().position(|t| *t == w)
}

impl EvalTarget for VectorBaseline {
    fn name(&self) -> String {
        format!("vector-top{}", self.k)
    }

    fn prepare(&mut self, suite: &SyntheticSuite) -> Result<(), EvalError> {
        let provider = LexicalProvider::new(suite.rules.clone()).map_err(|e| EvalError::InvalidSuite(e.to_string()))?;
        let spec = suite
            .goal
            .buckets
            .iter()
            .find(|b| b.canonical_keys.contains(&suite.date_key))
            .ok_or_else(|| EvalError::InvalidSuite(format!("no bucket declares `{}`", suite.date_key)))?;
        self.bucket = Some(Bucket {
            id: BucketId::from_seq(1),
            name: spec.name.clone(),
            centric_info: spec.centric_info.clone(),
            canonical_keys: spec.canonical_keys.iter().map(|k| k.as_str().into()).collect(),
            optional_keys: spec.optional_keys.iter().map(|k| k.as_str().into()).collect(),
            schemas: BTreeMap::new(),
        });
        self.provider = Some(provider);
        self.pool = MemoryPool::default();
        self.date_key = suite.date_key.clone();
        self.now = suite.now;
        Ok(())
    }

    fn ingest(&mut self, turn: &Turn) -> Result<(), EvalError> {
        let id = ExperienceId::from_seq(self.pool.experiences.len() as u64 + 1);
        self.pool.experiences.insert(
            id.clone(),
            Arc::new(Experience {
                id,
                raw_text: turn.text.clone(),
                received_at: turn.at,
                source_tag: turn.speaker.clone(),
                source_quality: 1.0,
            }),
        );
        Ok(())
    }

    fn ask(&mut self, question: &SuiteQuestion) -> Result<TargetAnswer, EvalError> {
        let (Some(provider), Some(bucket)) = (&self.provider, &self.bucket) else {
            return Err(EvalError::Engine("baseline used before prepare".into()));
        };
        let hits = retrieve(&self.pool, provider, &question.text, self.k).map_err(|e| EvalError::Engine(e.to_string()))?;
        let evidence: Vec<EvidenceItem> = hits.iter().map(|h| EvidenceItem::Text(h.text.clone())).collect();
        let rows: Vec<Row> = hits
            .iter()
            .filter_map(|h| self.pool.experience(&h.experience))
            .flat_map(|e| self.rows(provider, bucket, e))
            .collect();

        let q = question.text.as_str();
        let tokens = tokenize(q);
        let lower = q.to_lowercase();
        let filter = FILTER.captures(q).map(|c| {
            let above = c[2].eq_ignore_ascii_case("above");
            (c[1].to_lowercase(), above, c[3].parse::<f64>().unwrap_or(0.0))
        });
        let head = match FILTER.find(q) {
            Some(m) => &lower[..m.start()],
            None => &lower[..],
        };
        let head_tokens = tokenize(head);
        let metric = bucket
            .optional_keys
            .iter()
            .filter_map(|k| position(&head_tokens, k).map(|p| (p, k.to_string())))
            .min()
            .map(|(_, k)| k);
        let mut entities: Vec<(usize, String)> = rows
            .iter()
            .filter_map(|r| position(&tokens, &r.entity).map(|p| (p, r.entity.clone())))
            .collect();
        entities.sort();
        entities.dedup();
        let ranges = resolve_ranges(q, self.now);
        let groups: Vec<(Option<&str>, Option<(Timestamp, Timestamp)>)> = match (ranges.len(), entities.len()) {
            (2.., _) => ranges
                .iter()
                .take(2)
                .map(|r| (entities.first().map(|e| e.1.as_str()), Some((r.start, r.end))))
                .collect(),
            (_, 2..) => entities
                .iter()
                .take(2)
                .map(|e| (Some(e.1.as_str()), ranges.first().map(|r| (r.start, r.end))))
                .collect(),
            _ => vec![(entities.first().map(|e| e.1.as_str()), ranges.first().map(|r| (r.start, r.end)))],
        };

        let count = lower.starts_with("how many");
        let mut values = Vec::new();
        for (entity, range) in &groups {
            let selected: Vec<&Row> = rows
                .iter()
                .filter(|r| entity.is_none_or(|e| r.entity == e))
                .filter(|r| range.is_none_or(|(a, b)| r.at >= a && r.at <= b))
                .filter(|r| {
                    filter.as_ref().is_none_or(|(k, above, t)| match r.values.get(k) {
                        Some(v) if *above => v > t,
                        Some(v) => v < t,
                        None => false,
                    })
                })
                .collect();
            let xs: Vec<f64> = match &metric {
                Some(m) if !count => selected.iter().filter_map(|r| r.values.get(m).copied()).collect(),
                _ => selected.iter().map(|_| 1.0).collect(),
            };
            if xs.is_empty() {
                values.clear();
                break;
            }
            let v = if count {
                xs.len() as f64
            } else if lower.contains("average") {
                xs.iter().sum::<f64>() / xs.len() as f64
            } else if lower.contains("highest") {
                xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            } else if lower.contains("lowest") {
                xs.iter().copied().fold(f64::INFINITY, f64::min)
            } else {
                xs.iter().sum()
            };
            values.push(v);
        }
        let value = match values[..] {
            [v] => Some(v),
            [a, b] => Some(a - b),
            _ => None,
        };
        Ok(TargetAnswer {
            value,
            text: value.map(|v| v.to_string()).unwrap_or_else(|| "I don't know.".into()),
            abstained: value.is_none(),
            evidence,
        })
    }
}
