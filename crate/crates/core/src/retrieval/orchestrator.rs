//! The bounded plan–act–observe loop.
//!
//! Each question is classified and answered by a fixed strategy:
//!
//! * regional fact: one `retrieve` step, answer from the best hit;
//! * multi-fragment: `retrieve`, then one `query` per schema the hits
//!   produced records in, answer with the element that best matches the
//!   question;
//! * aggregation: one aggregate `query` per group (time range or entity),
//!   then a `calculate` step for the difference when there are two groups.
//!
//! Every tool call goes through a [`Transport`] and is recorded as a
//! [`ToolStep`]. Failures and budget exhaustion end in an abstention.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, LazyLock};
use std::time::Instant;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use super::time::{resolve_ranges, TimeRange};
use super::tools::{CalculateArgs, QueryArgs, RetrieveArgs, ToolName};
use super::{classify_with, Hit, QueryClass, RetrievalConfig};
use crate::ids::{BucketId, SchemaId};
use crate::protocol::Transport;
use crate::provider::CognitionProvider;
use crate::query::{
    self, glob_escape, AggFn, BucketRef, CalcValue, CmpOp, Column, Condition, Predicate, Pseudo, ResultTable,
    SelectItem, StructuredQuery,
};
use crate::store::{Bucket, MemoryPool};
use crate::text::tokenize;
use crate::value::{KeyName, Timestamp, Value, ValueKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolStep {
    pub index: usize,
    pub tool: ToolName,
    pub args: Json,
    /// Tool result, or `{"error": message}` when `ok` is false.
    pub observation: Json,
    pub ok: bool,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub question: String,
    pub class: Option<QueryClass>,
    pub text: String,
    pub value: Option<f64>,
    /// Experience and record ids the answer rests on.
    pub evidence: Vec<String>,
    pub trace: Vec<ToolStep>,
    pub abstained: bool,
}

const BUDGET_EXHAUSTED: &str = "step budget exhausted";
const MAX_FRAGMENT_QUERIES: usize = 4;

struct Outcome {
    text: String,
    value: Option<f64>,
    evidence: Vec<String>,
}

struct Session<'t> {
    transport: &'t mut dyn Transport,
    budget: usize,
    trace: Vec<ToolStep>,
}

impl Session<'_> {
    fn call(&mut self, tool: ToolName, args: Json) -> Result<Json, String> {
        if self.trace.len() >= self.budget {
            return Err(BUDGET_EXHAUSTED.into());
        }
        let started = Instant::now();
        let result = self.transport.call(tool.as_str(), args.clone());
        let elapsed_ms = started.elapsed().as_secs_f64() * 1000.0;
        let (observation, ok) = match &result {
            Ok(j) => (j.clone(), true),
            Err(e) => (json!({ "error": e.to_string() }), false),
        };
        self.trace.push(ToolStep {
            index: self.trace.len(),
            tool,
            args,
            observation,
            ok,
            elapsed_ms,
        });
        result.map_err(|e| format!("{} failed: {e}", tool.as_str()))
    }

    fn retrieve(&mut self, query: &str, k: usize) -> Result<Vec<Hit>, String> {
        let args = RetrieveArgs {
            query: query.to_string(),
            k,
        };
        let out = self.call(ToolName::Retrieve, json!(args))?;
        serde_json::from_value(out).map_err(|e| format!("unreadable retrieve result: {e}"))
    }

    fn query(&mut self, q: &StructuredQuery) -> Result<ResultTable, String> {
        let args = QueryArgs { query: q.to_string() };
        let out = self.call(ToolName::Query, json!(args))?;
        serde_json::from_value(out).map_err(|e| format!("unreadable query result: {e}"))
    }

    fn calculate(&mut self, expression: &str, bindings: BTreeMap<String, f64>) -> Result<f64, String> {
        let args = CalculateArgs {
            expression: expression.to_string(),
            bindings,
        };
        let out = self.call(ToolName::Calculate, json!(args))?;
        let v: CalcValue = serde_json::from_value(out).map_err(|e| format!("unreadable calculate result: {e}"))?;
        v.as_f64().ok_or_else(|| "calculation did not produce a number".to_string())
    }
}

/// One answering session over a pool snapshot.
pub struct Orchestrator<'a> {
    pool: &'a MemoryPool,
    provider: &'a dyn CognitionProvider,
    transport: &'a mut dyn Transport,
    config: RetrievalConfig,
    now: Timestamp,
}

impl<'a> Orchestrator<'a> {
    /// `pool` is used for planning (which buckets, keys and labels exist);
    /// all answers are computed through `transport`.
    pub fn new(
        pool: &'a MemoryPool,
        provider: &'a dyn CognitionProvider,
        transport: &'a mut dyn Transport,
        config: RetrievalConfig,
        now: Timestamp,
    ) -> Self {
        Orchestrator {
            pool,
            provider,
            transport,
            config,
            now,
        }
    }

    pub fn answer(&mut self, question: &str, budget: Option<usize>) -> Answer {
        let budget = budget.unwrap_or(self.config.budget);
        let class = classify_with(self.provider, question).ok();
        let mut session = Session {
            transport: &mut *self.transport,
            budget,
            trace: Vec::new(),
        };
        let outcome = match class {
            _ if budget == 0 => Err("budget must be at least 1".to_string()),
            None => Err("question is empty".to_string()),
            Some(QueryClass::RegionalFact) => regional(&mut session, &self.config, question),
            Some(QueryClass::MultiFragment) => {
                multi_fragment(&mut session, self.pool, self.provider, &self.config, question)
            }
            Some(QueryClass::Aggregation) => aggregation(&mut session, self.pool, question, self.now),
        };
        let trace = session.trace;
        match outcome {
            Ok(o) if !o.evidence.is_empty() => Answer {
                question: question.to_string(),
                class,
                text: o.text,
                value: o.value,
                evidence: o.evidence,
                trace,
                abstained: false,
            },
            Ok(_) => abstention(question, class, "no supporting evidence", trace),
            Err(reason) => abstention(question, class, &reason, trace),
        }
    }
}

fn abstention(question: &str, class: Option<QueryClass>, reason: &str, trace: Vec<ToolStep>) -> Answer {
    Answer {
        question: question.to_string(),
        class,
        text: format!("I don't know: {reason}."),
        value: None,
        evidence: Vec::new(),
        trace,
        abstained: true,
    }
}

fn relevant_hits(s: &mut Session<'_>, config: &RetrievalConfig, question: &str) -> Result<Vec<Hit>, String> {
    let hits: Vec<Hit> = s
        .retrieve(question, config.k)?
        .into_iter()
        .filter(|h| h.score > 0.0 && h.score >= config.min_score)
        .collect();
    if hits.is_empty() {
        Err("nothing relevant in memory".into())
    } else {
        Ok(hits)
    }
}

fn regional(s: &mut Session<'_>, config: &RetrievalConfig, question: &str) -> Result<Outcome, String> {
    let hits = relevant_hits(s, config, question)?;
    Ok(Outcome {
        text: hits[0].text.clone(),
        value: None,
        evidence: hits.iter().map(|h| h.experience.to_string()).collect(),
    })
}

fn multi_fragment(
    s: &mut Session<'_>,
    pool: &MemoryPool,
    provider: &dyn CognitionProvider,
    config: &RetrievalConfig,
    question: &str,
) -> Result<Outcome, String> {
    let hits = relevant_hits(s, config, question)?;
    let hit_evidence: Vec<String> = hits.iter().map(|h| h.experience.to_string()).collect();
    // schemas holding active records produced by the hits, in hit order
    let mut implicated: Vec<(&Bucket, SchemaId, String)> = Vec::new();
    for h in &hits {
        for b in pool.buckets.values() {
            for (schema, _, r) in b.records() {
                if r.active
                    && r.experience_id == h.experience
                    && !implicated.iter().any(|(ib, is, _)| ib.id == b.id && *is == schema.id)
                {
                    implicated.push((b, schema.id.clone(), schema.meta.clone()));
                }
            }
        }
    }
    implicated.truncate(MAX_FRAGMENT_QUERIES);
    if implicated.is_empty() {
        return Ok(Outcome {
            text: hits[0].text.clone(),
            value: None,
            evidence: hit_evidence,
        });
    }
    // (score, label, text, records) of the best-matching element so far
    let mut best: Option<(f64, String, String, Vec<String>)> = None;
    for (bucket, _, meta) in &implicated {
        let mut select = vec![SelectItem::Column(Column::Pseudo(Pseudo::Element))];
        select.extend(
            bucket
                .canonical_keys
                .iter()
                .chain(&bucket.optional_keys)
                .map(|k| SelectItem::Column(Column::Key(k.clone()))),
        );
        let q = StructuredQuery {
            bucket: BucketRef::Named(bucket.id.to_string()),
            schema_pattern: Some(glob_escape(meta)),
            element_pattern: None,
            filters: Vec::new(),
            group_by: Vec::new(),
            select,
            include_inactive: false,
        };
        let table = s.query(&q)?;
        // fold rows per element label
        let mut per_label: BTreeMap<String, (Vec<String>, Vec<String>)> = BTreeMap::new();
        for (row, prov) in table.rows.iter().zip(&table.provenance) {
            let label = row[0].to_string();
            let entry = per_label.entry(label).or_default();
            for (col, v) in table.columns.iter().zip(row).skip(1) {
                if !v.is_null() {
                    entry.0.push(format!("{col}={v}"));
                }
            }
            entry.1.extend(prov.iter().map(|r| r.to_string()));
        }
        for (label, (attrs, records)) in per_label {
            let description = format!("{label} {}", attrs.join(" "));
            let score = provider.relevance(question, &description);
            if score > 0.0 && best.as_ref().is_none_or(|(b, ..)| score > *b) {
                let text = if attrs.is_empty() {
                    label.clone()
                } else {
                    format!("{label} ({})", attrs.join(", "))
                };
                best = Some((score, label, text, records));
            }
        }
    }
    Ok(match best {
        Some((_, _, text, records)) => {
            let mut evidence = hit_evidence;
            evidence.extend(records);
            Outcome {
                text,
                value: None,
                evidence,
            }
        }
        None => Outcome {
            text: hits[0].text.clone(),
            value: None,
            evidence: hit_evidence,
        },
    })
}

static AVG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(average|mean|avg)\b").expect("valid regex"));
static MAX: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(highest|maximum|max|peak|largest)\b").expect("valid regex"));
static MIN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(lowest|minimum|min|smallest)\b").expect("valid regex"));
static COUNT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b((how many|number of)\s+(days|times|entries|records|readings|sessions|occasions)|count)\b")
        .expect("valid regex")
});
static COMPARE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(than|difference|compare|compared|versus|vs)\b").expect("valid regex"));
static FILTER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\bwhen\s+(?:the\s+|my\s+)?([a-z_][a-z0-9_]*)\s+was\s+(above|over|greater than|more than|at least|below|under|less than|at most)\s+(-?[0-9]+(?:\.[0-9]+)?)")
        .expect("valid regex")
});

fn agg_function(question: &str) -> AggFn {
    if AVG.is_match(question) {
        AggFn::Avg
    } else if MAX.is_match(question) {
        AggFn::Max
    } else if MIN.is_match(question) {
        AggFn::Min
    } else if COUNT.is_match(question) {
        AggFn::Count
    } else {
        AggFn::Sum
    }
}

/// Token position where `phrase` first appears in `tokens` (a trailing
/// plural `s` on the last word is tolerated).
fn mention(tokens: &[String], phrase: &str) -> Option<usize> {
    let words = tokenize(&phrase.replace('_', " "));
    if words.is_empty() || words.len() > tokens.len() {
        return None;
    }
    (0..=tokens.len() - words.len()).find(|&i| {
        words.iter().enumerate().all(|(j, w)| {
            let t = &tokens[i + j];
            t == w || (j + 1 == words.len() && *t == format!("{w}s"))
        })
    })
}

/// Observed kinds of each key over a bucket's active records, keys in
/// declared order then the rest alphabetically.
fn observed_keys(bucket: &Bucket) -> Vec<(KeyName, BTreeSet<ValueKind>)> {
    let mut kinds: BTreeMap<&KeyName, BTreeSet<ValueKind>> = BTreeMap::new();
    for (_, _, r) in bucket.records() {
        if r.active {
            for (k, v) in &r.values {
                let entry = kinds.entry(k).or_default();
                if let Some(kind) = v.kind() {
                    entry.insert(kind);
                }
            }
        }
    }
    let mut out: Vec<(KeyName, BTreeSet<ValueKind>)> = Vec::new();
    for k in bucket.canonical_keys.iter().chain(&bucket.optional_keys) {
        if let Some(set) = kinds.remove(k) {
            out.push((k.clone(), set));
        }
    }
    out.extend(kinds.into_iter().map(|(k, s)| (k.clone(), s)));
    out
}

struct Group {
    label: String,
    entity: Option<String>,
    range: Option<TimeRange>,
}

struct Plan<'p> {
    bucket: &'p Bucket,
    func: AggFn,
    metric: Option<KeyName>,
    time: Column,
    filter: Option<Predicate>,
    groups: Vec<Group>,
}

impl Plan<'_> {
    fn query(&self, g: &Group) -> StructuredQuery {
        let mut filters = Vec::new();
        if let Some(r) = &g.range {
            filters.push(Predicate {
                column: self.time.clone(),
                condition: Condition::Between(Value::Time(r.start), Value::Time(r.end)),
            });
        }
        filters.extend(self.filter.clone());
        StructuredQuery {
            bucket: BucketRef::Named(self.bucket.id.to_string()),
            schema_pattern: None,
            element_pattern: g.entity.as_deref().map(glob_escape),
            filters,
            group_by: Vec::new(),
            select: vec![SelectItem::Aggregate(self.func, self.metric.clone().map(Column::Key))],
            include_inactive: false,
        }
    }
}

fn plan_aggregation<'p>(pool: &'p MemoryPool, question: &str, now: Timestamp) -> Result<Plan<'p>, String> {
    let tokens = tokenize(question);
    let func = agg_function(question);
    // (entity mentions, key mentions, centric similarity) decides the bucket
    let mut chosen: Option<((usize, usize, f64), &Bucket, Vec<(KeyName, BTreeSet<ValueKind>)>)> = None;
    for b in pool.buckets.values() {
        let keys = observed_keys(b);
        let numeric = keys.iter().any(|(_, kinds)| kinds.contains(&ValueKind::Number));
        if !numeric && func != AggFn::Count {
            continue;
        }
        if keys.is_empty() {
            continue;
        }
        let labels = element_labels(b);
        let entity_hits = labels.iter().filter(|l| mention(&tokens, l).is_some()).count();
        let key_hits = keys.iter().filter(|(k, _)| mention(&tokens, k).is_some()).count();
        let sim = crate::text::cosine(question, &format!("{} {}", b.name, b.centric_info));
        let score = (entity_hits, key_hits, sim);
        let better = match &chosen {
            None => true,
            Some((best, ..)) => {
                (score.0, score.1) > (best.0, best.1) || ((score.0, score.1) == (best.0, best.1) && score.2 > best.2)
            }
        };
        if better {
            chosen = Some((score, b, keys));
        }
    }
    let (_, bucket, keys) = chosen.ok_or("no numeric data in memory")?;
    let is_numeric = |k: &str| {
        keys.iter()
            .any(|(key, kinds)| key == k && kinds.len() == 1 && kinds.contains(&ValueKind::Number))
    };

    let filter = FILTER.captures(question).and_then(|c| {
        let key = keys.iter().map(|(k, _)| k).find(|k| mention(&tokenize(&c[1]), k) == Some(0))?;
        let op = match c[2].to_lowercase().as_str() {
            "above" | "over" | "greater than" | "more than" => CmpOp::Gt,
            "at least" => CmpOp::Ge,
            "at most" => CmpOp::Le,
            _ => CmpOp::Lt,
        };
        let n: f64 = c[3].parse().ok()?;
        Some(Predicate {
            column: Column::Key(key.clone()),
            condition: Condition::Compare(op, Value::Num(n)),
        })
    });
    let filter_key = filter.as_ref().and_then(|p| match &p.column {
        Column::Key(k) => Some(k.clone()),
        Column::Pseudo(_) => None,
    });
    // the filter clause is not where the metric is named
    let metric_tokens: Vec<String> = match FILTER.find(question) {
        Some(m) => tokenize(&format!("{} {}", &question[..m.start()], &question[m.end()..])),
        None => tokens.clone(),
    };
    let candidates: Vec<&KeyName> = keys
        .iter()
        .map(|(k, _)| k)
        .filter(|k| is_numeric(k) && Some(*k) != filter_key.as_ref())
        .collect();
    let mentioned = candidates
        .iter()
        .filter_map(|k| mention(&metric_tokens, k).map(|p| (p, *k)))
        .min_by_key(|(p, _)| *p)
        .map(|(_, k)| k.clone());
    let metric = match func {
        AggFn::Count => None,
        _ => Some(
            mentioned
                .or_else(|| candidates.first().map(|k| (*k).clone()))
                .ok_or("no numeric key to aggregate")?,
        ),
    };
    let time = keys
        .iter()
        .find(|(_, kinds)| kinds.len() == 1 && kinds.contains(&ValueKind::Timestamp))
        .map(|(k, _)| Column::Key(k.clone()))
        .unwrap_or(Column::Pseudo(Pseudo::CreatedAt));

    let mut entities: Vec<(usize, String)> = element_labels(bucket)
        .into_iter()
        .filter_map(|l| mention(&tokens, &l).map(|p| (p, l)))
        .collect();
    entities.sort();
    let entities: Vec<String> = entities.into_iter().map(|(_, l)| l).collect();
    let ranges = resolve_ranges(question, now);
    let groups = if ranges.len() >= 2 {
        ranges
            .into_iter()
            .take(2)
            .map(|r| Group {
                label: r.phrase.clone(),
                entity: entities.first().cloned(),
                range: Some(r),
            })
            .collect()
    } else if entities.len() >= 2 && COMPARE.is_match(question) {
        entities
            .iter()
            .take(2)
            .map(|e| Group {
                label: e.clone(),
                entity: Some(e.clone()),
                range: ranges.first().cloned(),
            })
            .collect()
    } else {
        vec![Group {
            label: entities.first().cloned().unwrap_or_else(|| bucket.name.clone()),
            entity: entities.first().cloned(),
            range: ranges.first().cloned(),
        }]
    };
    Ok(Plan {
        bucket,
        func,
        metric,
        time,
        filter,
        groups,
    })
}

/// Distinct labels of elements holding active records.
fn element_labels(bucket: &Bucket) -> Vec<String> {
    let mut labels: Vec<String> = Vec::new();
    for s in bucket.schemas.values() {
        for e in s.elements.values() {
            if e.active_records().next().is_some() && !labels.contains(&e.label) {
                labels.push(e.label.clone());
            }
        }
    }
    labels
}

fn fmt_num(x: f64) -> String {
    let rounded = (x * 1e6).round() / 1e6;
    format!("{rounded}")
}

fn aggregation(s: &mut Session<'_>, pool: &MemoryPool, question: &str, now: Timestamp) -> Result<Outcome, String> {
    let plan = plan_aggregation(pool, question, now)?;
    let mut values = Vec::new();
    let mut evidence: Vec<String> = Vec::new();
    for g in &plan.groups {
        let table = s.query(&plan.query(g))?;
        let ids = table.evidence();
        if ids.is_empty() {
            return Err(format!("no matching records for {}", g.label));
        }
        let v = table
            .scalar()
            .and_then(Value::as_f64)
            .ok_or_else(|| format!("no value for {}", g.label))?;
        values.push(v);
        for id in ids {
            let id = id.to_string();
            if !evidence.contains(&id) {
                evidence.push(id);
            }
        }
    }
    let subject = match &plan.metric {
        Some(m) => format!("{}({m})", plan.func.name()),
        None => "count".to_string(),
    };
    let (value, text) = if let [a, b] = values[..] {
        let bindings = BTreeMap::from([("q1".to_string(), a), ("q2".to_string(), b)]);
        let diff = s.calculate("q1 - q2", bindings)?;
        let text = format!(
            "{} ({subject}: {} {}, {} {})",
            fmt_num(diff),
            plan.groups[0].label,
            fmt_num(a),
            plan.groups[1].label,
            fmt_num(b)
        );
        (diff, text)
    } else {
        let v = values[0];
        (v, format!("{} ({subject} over {} records)", fmt_num(v), evidence.len()))
    };
    Ok(Outcome {
        text,
        value: Some(value),
        evidence,
    })
}

/// Copy of `pool` keeping only the records whose ids are in `evidence`.
pub fn restrict(pool: &MemoryPool, evidence: &[String]) -> MemoryPool {
    let keep: BTreeSet<&str> = evidence.iter().map(String::as_str).collect();
    let mut out = pool.clone();
    for bucket in out.buckets.values_mut() {
        let b = Arc::make_mut(bucket);
        for schema in b.schemas.values_mut() {
            for element in schema.elements.values_mut() {
                element.records.retain(|r| keep.contains(r.id.as_str()));
            }
        }
    }
    out
}

/// Re-runs an answer's query and calculate steps against only its evidence
/// records. For a correct numeric answer this reproduces `answer.value`.
pub fn recompute(answer: &Answer, pool: &MemoryPool) -> Option<f64> {
    let restricted = restrict(pool, &answer.evidence);
    let mut scalars = Vec::new();
    let mut result = None;
    for step in answer.trace.iter().filter(|s| s.ok) {
        match step.tool {
            ToolName::Query => {
                let args: QueryArgs = serde_json::from_value(step.args.clone()).ok()?;
                let table = query::run(&args.query, &restricted).ok()?;
                let v = table.scalar().and_then(Value::as_f64);
                scalars.push(v);
                result = v;
            }
            ToolName::Calculate => {
                let args: CalculateArgs = serde_json::from_value(step.args.clone()).ok()?;
                let bindings = scalars
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v.map(|v| (format!("q{}", i + 1), v)))
                    .collect::<Option<BTreeMap<_, _>>>()?;
                result = query::eval_str(&args.expression, &bindings).ok()?.as_f64();
            }
            ToolName::Retrieve => {}
        }
    }
    result
}

/// Which bucket ids the answer's evidence records live in.
pub fn evidence_buckets(answer: &Answer, pool: &MemoryPool) -> BTreeSet<BucketId> {
    answer
        .evidence
        .iter()
        .filter_map(|id| pool.find_record(&id.as_str().into()))
        .map(|v| v.bucket)
        .collect()
}
