//! Independent oracles shared by the integration tests and the acceptance
//! runner. Each check returns a one-line detail on success and a
//! description of the first mismatch on failure.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use schemamem_core::adaptation::{decide, AdaptationConfig, Adapter, Path as AdaptPath};
use schemamem_core::clock::ManualClock;
use schemamem_core::conflict::{
    apply_report, reliability, resolve, AgeUnit, ConflictPolicy, ReliabilityWeights, Scoring, SupportScaling, Tolerance,
};
use schemamem_core::ids::{BucketId, ElementId, ExperienceId, RecordId, SchemaId, SegmentId};
use schemamem_core::provider::{CognitionProvider, LexicalProvider, ProviderError, Segment};
use schemamem_core::query::{
    self, AggFn, BucketRef, CmpOp, Column, Condition, Predicate, Pseudo, SelectItem, StructuredQuery,
};
use schemamem_core::store::{
    self, Bucket, BucketDef, Element, Experience, MemoryPool, NewExperience, NewRecord, PersistOptions, Record, Schema,
    Store,
};
use schemamem_core::value::{Timestamp, Value};

pub type Check = Result<String, String>;

const DAY: i64 = 86_400;

// ---------------------------------------------------------------- conflict

fn brute_conflict(policy_tol: f64, a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Str(x), Value::Str(y)) => x.to_lowercase() != y.to_lowercase(),
        (Value::Num(x), Value::Num(y)) => (x - y).abs() > policy_tol,
        (Value::Bool(x), Value::Bool(y)) => x != y,
        _ => false,
    }
}

fn brute_score(r: &Record, w: (f64, f64, f64), now: i64) -> f64 {
    let age_days = (now - r.created_at.0) as f64 / DAY as f64;
    let s = r.supports as f64;
    w.0 * (1.0 / (1.0 + age_days)) + w.1 * r.source_quality + w.2 * (s / (1.0 + s))
}

/// Expected `(active flags by id, winners)` by reachability closure and a
/// full sort of each component.
fn brute_resolve(
    records: &[Record],
    keys: &[String],
    tol: f64,
    w: (f64, f64, f64),
    now: i64,
) -> (BTreeMap<RecordId, bool>, BTreeSet<RecordId>) {
    let n = records.len();
    let mut reach = vec![vec![false; n]; n];
    let mut edged = vec![false; n];
    for i in 0..n {
        reach[i][i] = true;
        for j in 0..n {
            if i == j {
                continue;
            }
            let hit = keys.iter().any(|k| match (records[i].values.get(k), records[j].values.get(k)) {
                (Some(a), Some(b)) => brute_conflict(tol, a, b),
                _ => false,
            });
            if hit {
                reach[i][j] = true;
                edged[i] = true;
            }
        }
    }
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][m] && reach[m][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    let mut active: BTreeMap<RecordId, bool> = records.iter().map(|r| (r.id.clone(), r.active)).collect();
    let mut winners = BTreeSet::new();
    let mut seen = vec![false; n];
    for i in 0..n {
        if !edged[i] || seen[i] {
            continue;
        }
        let mut comp: Vec<&Record> = (0..n).filter(|&j| reach[i][j]).map(|j| &records[j]).collect();
        for j in 0..n {
            if reach[i][j] {
                seen[j] = true;
            }
        }
        comp.sort_by(|a, b| {
            brute_score(b, w, now)
                .total_cmp(&brute_score(a, w, now))
                .then(b.created_at.cmp(&a.created_at))
                .then(b.source_quality.total_cmp(&a.source_quality))
                .then(a.id.cmp(&b.id))
        });
        winners.insert(comp[0].id.clone());
        for (k, r) in comp.iter().enumerate() {
            active.insert(r.id.clone(), k == 0);
        }
    }
    (active, winners)
}

fn random_value(rng: &mut ChaCha8Rng, key: usize) -> Option<Value> {
    match rng.gen_range(0..10) {
        0 => None,
        1 => Some(Value::Null),
        _ => Some(match key {
            0 => Value::Str(["tea", "Tea", "coffee", "milk"].choose(rng).unwrap().to_string()),
            1 => Value::Num([1.0, 1.25, 1.5, 2.0, 3.0].choose(rng).copied().unwrap()),
            _ => Value::Bool(rng.gen()),
        }),
    }
}

pub fn conflict_oracle(seed: u64, n: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all_keys = ["topic".to_string(), "amount".to_string(), "flag".to_string()];
    let now = 1_000 * DAY;
    let mut components = 0;
    for case in 0..n {
        let a: f64 = rng.gen_range(0.0..1.0);
        let b: f64 = rng.gen_range(0.0..1.0);
        let c: f64 = rng.gen_range(0.0..1.0);
        let total = a + b + c;
        let w = (a / total, b / total, 1.0 - a / total - b / total);
        let weights = ReliabilityWeights::new(w.0, w.1, w.2).map_err(|e| format!("case {case}: {e}"))?;
        let scoring = Scoring {
            weights,
            age_unit: AgeUnit::DAYS,
            support_scaling: SupportScaling::Saturating,
        };
        let tol = 0.3;
        let policy = ConflictPolicy {
            default_tolerance: Tolerance::Absolute(tol),
            ..ConflictPolicy::default()
        };
        let keys: Vec<String> = all_keys.iter().filter(|_| rng.gen_bool(0.8)).cloned().collect();
        let records: Vec<Record> = (0..rng.gen_range(1..=6))
            .map(|i| Record {
                id: RecordId::from_seq(i as u64 + 1),
                values: (0..3)
                    .filter_map(|k| random_value(&mut rng, k).map(|v| (all_keys[k].clone(), v)))
                    .collect(),
                created_at: Timestamp(now - rng.gen_range(0..4) * DAY / 2),
                source_quality: [0.2, 0.5, 0.8, 1.0].choose(&mut rng).copied().unwrap(),
                supports: rng.gen_range(0..3),
                active: rng.gen_bool(0.8),
                experience_id: ExperienceId::from_seq(1),
            })
            .collect();
        let mut element = Element {
            id: ElementId::from_seq(1),
            label: "E".into(),
            records: records.clone(),
        };
        let report = resolve(&element, &keys, &policy, &scoring, Timestamp(now)).map_err(|e| format!("case {case}: {e}"))?;
        apply_report(&mut element, &report);
        let got: BTreeMap<RecordId, bool> = element.records.iter().map(|r| (r.id.clone(), r.active)).collect();
        let got_winners: BTreeSet<RecordId> = report.winners.iter().cloned().collect();
        let (want, want_winners) = brute_resolve(&records, &keys, tol, w, now);
        if got != want || got_winners != want_winners {
            return Err(format!(
                "case {case}: flags {got:?} vs {want:?}, winners {got_winners:?} vs {want_winners:?}"
            ));
        }
        components += report.components.len();
    }
    Ok(format!("{n} elements, {components} conflict components"))
}

// ---------------------------------------------------------------- dispatch

/// Scores read from tables keyed by schema / element id.
struct TableProvider {
    bucket: BucketId,
    schema: BTreeMap<SchemaId, f64>,
    element: BTreeMap<ElementId, f64>,
}

impl CognitionProvider for TableProvider {
    fn name(&self) -> &str {
        "table"
    }

    fn segment(&self, experience: &Experience, _: &[&Bucket]) -> Result<Vec<Segment>, ProviderError> {
        Ok(vec![probe_segment(&self.bucket, &experience.id)])
    }

    fn schema_similarity(&self, _: &Segment, schema: &Schema) -> f64 {
        self.schema[&schema.id]
    }

    fn element_compatibility(&self, _: &Segment, element: &Element) -> f64 {
        self.element[&element.id]
    }
}

fn probe_segment(bucket: &BucketId, exp: &ExperienceId) -> Segment {
    Segment {
        id: SegmentId::new(exp, 0),
        text: "probe".into(),
        experience_id: exp.clone(),
        extracted_meta: "Probe".into(),
        entity: "Probe".into(),
        extracted_record: [("topic".to_string(), Value::Str("probe".into()))].into(),
        bucket_hint: Some(bucket.clone()),
        missing_keys: vec![],
    }
}

/// Exhaustive argmax: all maxima collected, smallest id taken.
fn naive_path(provider: &TableProvider, bucket: &Bucket, theta_meta: f64, theta_elem: f64) -> (AdaptPath, bool, bool) {
    let scores: Vec<(SchemaId, f64)> = bucket.schemas.keys().map(|id| (id.clone(), provider.schema[id])).collect();
    if scores.is_empty() {
        return (AdaptPath::Creation, false, false);
    }
    let top = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let chosen = scores.iter().filter(|s| s.1 == top).map(|s| s.0.clone()).min().unwrap();
    let meta_edge = top == theta_meta;
    if top < theta_meta {
        return (AdaptPath::Creation, meta_edge, false);
    }
    let el: Vec<f64> = bucket.schemas[&chosen].elements.keys().map(|id| provider.element[id]).collect();
    if el.is_empty() {
        return (AdaptPath::Evolution, meta_edge, false);
    }
    let k = el.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let path = if k >= theta_elem { AdaptPath::Assimilation } else { AdaptPath::Evolution };
    (path, meta_edge, k == theta_elem)
}

pub fn dispatch_oracle(seed: u64, n: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let (mut meta_edges, mut elem_edges) = (0, 0);
    let mut paths = BTreeMap::new();
    for case in 0..n {
        let theta_meta = *grid[1..10].choose(&mut rng).unwrap();
        let theta_elem = *grid[1..10].choose(&mut rng).unwrap();
        let store = Store::in_memory();
        let b = store.put_bucket(BucketDef::new("probe bucket", &["topic"])).map_err(|e| e.to_string())?;
        let exp = store
            .put_experience(NewExperience {
                raw_text: "seed".into(),
                received_at: Timestamp(0),
                source_tag: "user".into(),
                source_quality: 1.0,
            })
            .map_err(|e| e.to_string())?;
        let mut provider = TableProvider {
            bucket: b.clone(),
            schema: BTreeMap::new(),
            element: BTreeMap::new(),
        };
        // draw around the thresholds so exact-boundary cases are common
        let draw = |rng: &mut ChaCha8Rng, theta: f64| match rng.gen_range(0..4) {
            0 => theta,
            _ => *grid.choose(rng).unwrap(),
        };
        for s in 0..rng.gen_range(0..=4) {
            let sid = store.create_schema(&b, &format!("M{s}"), vec![], Timestamp(0)).map_err(|e| e.to_string())?;
            provider.schema.insert(sid.clone(), draw(&mut rng, theta_meta));
            for e in 0..rng.gen_range(0..=4) {
                let eid = store.create_element(&b, &sid, &format!("E{e}")).map_err(|e| e.to_string())?;
                provider.element.insert(eid.clone(), draw(&mut rng, theta_elem));
                store
                    .insert_record(
                        &b,
                        &sid,
                        &eid,
                        NewRecord {
                            values: [("topic".to_string(), Value::Str(format!("t{e}")))].into(),
                            created_at: Timestamp(0),
                            source_quality: 1.0,
                            supports: 0,
                            experience_id: exp.clone(),
                        },
                    )
                    .map_err(|e| e.to_string())?;
            }
        }
        let config = AdaptationConfig::new(theta_meta, theta_elem).map_err(|e| e.to_string())?;
        let pool = store.pool();
        let bucket = pool.bucket(&b).unwrap();
        let (want, meta_edge, elem_edge) = naive_path(&provider, bucket, theta_meta, theta_elem);
        let decision = decide(&provider, bucket, &probe_segment(&b, &exp), &config).map_err(|e| e.to_string())?;
        if decision.path != want {
            return Err(format!(
                "case {case}: decide chose {:?}, naive {want:?} (theta {theta_meta}/{theta_elem})",
                decision.path
            ));
        }
        let clock = ManualClock::new(Timestamp(10));
        let adapter = Adapter {
            store: &store,
            provider: &provider,
            config,
            policy: &ConflictPolicy::default(),
            scoring: &Scoring::default(),
            clock: &clock,
        };
        let report = adapter
            .adapt(NewExperience {
                raw_text: "probe".into(),
                received_at: Timestamp(10),
                source_tag: "user".into(),
                source_quality: 1.0,
            })
            .map_err(|e| format!("case {case}: {e}"))?;
        if report.per_segment[0].path != want {
            return Err(format!("case {case}: adapt took {:?}, naive {want:?}", report.per_segment[0].path));
        }
        meta_edges += usize::from(meta_edge);
        elem_edges += usize::from(elem_edge && want == AdaptPath::Assimilation);
        *paths.entry(format!("{want:?}")).or_insert(0) += 1;
    }
    if meta_edges == 0 || elem_edges == 0 {
        return Err(format!("boundary cases not exercised: s*=theta {meta_edges}, kappa*=theta {elem_edges}"));
    }
    Ok(format!(
        "{n} instances {paths:?}; boundary s*=theta_meta {meta_edges}, kappa*=theta_elem {elem_edges}"
    ))
}

// ------------------------------------------------------------- reliability

pub struct ReliabilityRow {
    pub weights: (f64, f64, f64),
    pub age_secs: i64,
    pub unit: &'static str,
    pub quality: f64,
    pub supports: u64,
    pub scaling: SupportScaling,
    pub expected: f64,
}

/// Hand-computed reference scores.
pub fn reliability_table() -> Vec<ReliabilityRow> {
    use SupportScaling::{Raw, Saturating};
    let row = |weights, age_secs, unit, quality, supports, scaling, expected| ReliabilityRow {
        weights,
        age_secs,
        unit,
        quality,
        supports,
        scaling,
        expected,
    };
    vec![
        row((1.0, 0.0, 0.0), 0, "days", 0.3, 0, Saturating, 1.0),
        row((1.0, 0.0, 0.0), DAY, "days", 0.3, 0, Saturating, 0.5),
        row((1.0, 0.0, 0.0), 3 * DAY, "days", 0.3, 5, Saturating, 0.25),
        row((0.0, 1.0, 0.0), 9 * DAY, "days", 0.8, 2, Saturating, 0.8),
        row((0.0, 0.0, 1.0), 0, "days", 0.8, 1, Saturating, 0.5),
        row((0.0, 0.0, 1.0), 0, "days", 0.8, 3, Saturating, 0.75),
        row((0.0, 0.0, 1.0), 0, "days", 0.8, 3, Raw, 3.0),
        row((0.5, 0.25, 0.25), DAY, "days", 0.8, 1, Saturating, 0.25 + 0.2 + 0.125),
        row((0.5, 0.5, 0.0), 3600, "hours", 1.0, 0, Saturating, 0.25 + 0.5),
        row((0.5, 0.5, 0.0), 3600, "days", 1.0, 0, Saturating, 0.5 / (1.0 + 1.0 / 24.0) + 0.5),
        row((0.2, 0.3, 0.5), 7 * DAY, "weeks", 0.6, 4, Saturating, 0.1 + 0.18 + 0.4),
        row((0.2, 0.3, 0.5), 90, "minutes", 0.0, 0, Saturating, 0.2 / 2.5),
        row((1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0), 0, "days", 1.0, 0, Saturating, 2.0 / 3.0),
    ]
}

pub fn reliability_points() -> Check {
    let now = 100 * DAY;
    let mut worst: f64 = 0.0;
    for (i, row) in reliability_table().iter().enumerate() {
        let scoring = Scoring {
            weights: ReliabilityWeights::new(row.weights.0, row.weights.1, row.weights.2).map_err(|e| e.to_string())?,
            age_unit: row.unit.parse().map_err(|e: schemamem_core::conflict::ConflictError| e.to_string())?,
            support_scaling: row.scaling,
        };
        let record = Record {
            id: RecordId::from_seq(1),
            values: BTreeMap::new(),
            created_at: Timestamp(now - row.age_secs),
            source_quality: row.quality,
            supports: row.supports,
            active: true,
            experience_id: ExperienceId::from_seq(1),
        };
        let got = reliability(&record, &scoring, Timestamp(now)).map_err(|e| e.to_string())?;
        let age = row.age_secs as f64 / scoring.age_unit.secs();
        let s = row.supports as f64;
        let support = match row.scaling {
            SupportScaling::Saturating => s / (1.0 + s),
            SupportScaling::Raw => s,
        };
        let direct = row.weights.0 / (1.0 + age) + row.weights.1 * row.quality + row.weights.2 * support;
        for (what, want) in [("table", row.expected), ("formula", direct)] {
            let err = (got - want).abs();
            worst = worst.max(err);
            if err > 1e-12 {
                return Err(format!("row {i}: {got} vs {what} {want}"));
            }
        }
    }
    Ok(format!("{} rows, max abs error {worst:e}", reliability_table().len()))
}

// ------------------------------------------------------------------- query

struct Fixture {
    pool: Arc<MemoryPool>,
    /// (active, n, x, g) per record.
    rows: Vec<(bool, Option<i64>, Option<f64>, String)>,
}

fn query_fixture(rng: &mut ChaCha8Rng) -> Result<Fixture, String> {
    let store = Store::in_memory();
    let e = |x: store::StoreError| x.to_string();
    let b = store
        .put_bucket(BucketDef {
            name: "facts".into(),
            centric_info: "facts".into(),
            canonical_keys: vec!["g".into()],
            optional_keys: vec!["n".into(), "x".into()],
        })
        .map_err(e)?;
    let exp = store
        .put_experience(NewExperience {
            raw_text: "x".into(),
            received_at: Timestamp(0),
            source_tag: "user".into(),
            source_quality: 1.0,
        })
        .map_err(e)?;
    let s = store.create_schema(&b, "M", vec![], Timestamp(0)).map_err(e)?;
    let mut rows = Vec::new();
    for el in 0..rng.gen_range(1..=3) {
        let eid = store.create_element(&b, &s, &format!("E{el}")).map_err(e)?;
        for _ in 0..rng.gen_range(0..=8) {
            let n = rng.gen_bool(0.85).then(|| rng.gen_range(-50..=50));
            let x = rng.gen_bool(0.85).then(|| rng.gen_range(-1e3..1e3));
            let g = ["a", "b", "c"].choose(rng).unwrap().to_string();
            let mut values = BTreeMap::from([("g".to_string(), Value::Str(g.clone()))]);
            values.insert("n".into(), n.map_or(Value::Null, |v| Value::Num(v as f64)));
            values.insert("x".into(), x.map_or(Value::Null, Value::Num));
            let rid = store
                .insert_record(
                    &b,
                    &s,
                    &eid,
                    NewRecord {
                        values,
                        created_at: Timestamp(0),
                        source_quality: 1.0,
                        supports: 0,
                        experience_id: exp.clone(),
                    },
                )
                .map_err(e)?;
            let active = rng.gen_bool(0.8);
            if !active {
                store.set_active(&b, &s, &eid, &rid, false).map_err(e)?;
            }
            rows.push((active, n, x, g));
        }
    }
    Ok(Fixture { pool: store.pool(), rows })
}

fn brute_agg(func: AggFn, values: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    match func {
        AggFn::Count => Some(present.len() as f64),
        _ if present.is_empty() => None,
        AggFn::Sum => Some(present.iter().sum()),
        AggFn::Avg => Some(present.iter().sum::<f64>() / present.len() as f64),
        AggFn::Min => present.iter().copied().reduce(f64::min),
        AggFn::Max => present.iter().copied().reduce(f64::max),
    }
}

pub fn query_oracle(seed: u64, n: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut compared = 0usize;
    for case in 0..n {
        let f = query_fixture(&mut rng)?;
        let func = *AggFn::ALL.choose(&mut rng).unwrap();
        let key = if rng.gen_bool(0.5) { "n" } else { "x" };
        let grouped = rng.gen_bool(0.5);
        let inactive = rng.gen_bool(0.3);
        let threshold = rng.gen_bool(0.5).then(|| rng.gen_range(-40..=40));
        let mut text = "FROM facts".to_string();
        if let Some(t) = threshold {
            text += &format!(" WHERE n >= {t}");
        }
        if grouped {
            text += " GROUP BY g SELECT g, ";
        } else {
            text += " SELECT ";
        }
        text += &format!("{}({key})", func.name());
        if inactive {
            text += " INCLUDE INACTIVE";
        }
        let table = query::run(&text, &f.pool).map_err(|e| format!("case {case} `{text}`: {e}"))?;

        let mut want: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
        for (active, nv, xv, g) in &f.rows {
            if !active && !inactive {
                continue;
            }
            if let Some(t) = threshold {
                if !nv.is_some_and(|v| v >= t) {
                    continue;
                }
            }
            let group = if grouped { g.clone() } else { String::new() };
            let v = if key == "n" { nv.map(|v| v as f64) } else { *xv };
            want.entry(group).or_default().push(v);
        }
        if !grouped {
            want.entry(String::new()).or_default();
        }
        let mut got: BTreeMap<String, Option<f64>> = BTreeMap::new();
        for row in &table.rows {
            let (group, value) = if grouped {
                (row[0].as_str().unwrap_or_default().to_string(), &row[1])
            } else {
                (String::new(), &row[0])
            };
            got.insert(group, value.as_f64());
        }
        let want: BTreeMap<String, Option<f64>> = want.iter().map(|(g, v)| (g.clone(), brute_agg(func, v))).collect();
        if got.keys().collect::<Vec<_>>() != want.keys().collect::<Vec<_>>() {
            return Err(format!("case {case} `{text}`: groups {got:?} vs {want:?}"));
        }
        for (g, w) in &want {
            let ok = match (got[g], w) {
                (None, None) => true,
                (Some(a), Some(b)) if key == "n" && func != AggFn::Avg => a == *b,
                (Some(a), Some(b)) => (a - b).abs() <= 1e-9 * b.abs().max(1.0),
                _ => false,
            };
            if !ok {
                return Err(format!("case {case} `{text}` group {g:?}: {:?} vs {w:?}", got[g]));
            }
            compared += 1;
        }
    }
    Ok(format!("{n} fixtures, {compared} aggregate values"))
}

pub fn parser_fuzz(seed: u64, n: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds = [
        r#"FROM user_events SCHEMA "Drink" ELEMENT "Coffee" WHERE time BETWEEN @2024-06-03 AND @2024-06-09 SELECT sum(cups)"#,
        "FROM * GROUP BY $element SELECT $element, count(*) INCLUDE INACTIVE",
        r#"FROM "a b" WHERE `odd key` CONTAINS "x\"y" AND n != -1.5e3 SELECT n"#,
    ];
    let mut accepted = 0;
    for i in 0..n {
        let text = if i % 2 == 0 {
            let len = rng.gen_range(0..64);
            let bytes: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            String::from_utf8_lossy(&bytes).into_owned()
        } else {
            // byte-level mutations of valid queries reach deeper parser states
            let mut bytes = seeds.choose(&mut rng).unwrap().as_bytes().to_vec();
            for _ in 0..rng.gen_range(1..4) {
                let at = rng.gen_range(0..=bytes.len());
                match rng.gen_range(0..3) {
                    0 if at < bytes.len() => {
                        bytes.remove(at);
                    }
                    1 => bytes.insert(at, rng.gen()),
                    _ => bytes.truncate(at),
                }
            }
            String::from_utf8_lossy(&bytes).into_owned()
        };
        let outcome = std::panic::catch_unwind(|| query::parse(&text).is_ok());
        match outcome {
            Ok(ok) => accepted += usize::from(ok),
            Err(_) => return Err(format!("parser panicked on {text:?}")),
        }
    }
    Ok(format!("{n} inputs, {accepted} parsed, no panics"))
}

fn random_name(rng: &mut ChaCha8Rng) -> String {
    let plain = ["cups", "time", "topic", "a_b", "x1", "from", "Select", "odd key", "quo\"te", "back`tick", "sl\\ash"];
    let mut s = plain.choose(rng).unwrap().to_string();
    if rng.gen_bool(0.2) {
        s.push('é');
    }
    s
}

fn random_column(rng: &mut ChaCha8Rng) -> Column {
    if rng.gen_bool(0.25) {
        Column::Pseudo(*Pseudo::ALL.choose(rng).unwrap())
    } else {
        Column::Key(random_name(rng))
    }
}

fn random_literal(rng: &mut ChaCha8Rng) -> Value {
    match rng.gen_range(0..6) {
        0 => Value::Null,
        1 => Value::Str(random_name(rng)),
        2 => Value::Num(rng.gen_range(-1e6..1e6)),
        3 => Value::Num(rng.gen_range(-100..100) as f64),
        4 => Value::Time(Timestamp(rng.gen_range(0..4_000_000_000))),
        _ => Value::Bool(rng.gen()),
    }
}

fn random_query(rng: &mut ChaCha8Rng) -> StructuredQuery {
    let filters = (0..rng.gen_range(0..3))
        .map(|_| Predicate {
            column: random_column(rng),
            condition: match rng.gen_range(0..3) {
                0 => Condition::Compare(
                    *[CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge].choose(rng).unwrap(),
                    random_literal(rng),
                ),
                1 => Condition::Contains(random_name(rng)),
                _ => Condition::Between(random_literal(rng), random_literal(rng)),
            },
        })
        .collect();
    let group_by: Vec<Column> = (0..rng.gen_range(0..3)).map(|_| random_column(rng)).collect();
    let aggregate = !group_by.is_empty() || rng.gen_bool(0.5);
    let mut select: Vec<SelectItem> = Vec::new();
    for _ in 0..rng.gen_range(1..4) {
        let item = if aggregate {
            match rng.gen_range(0..3) {
                0 if !group_by.is_empty() => SelectItem::Column(group_by.choose(rng).unwrap().clone()),
                1 => SelectItem::Aggregate(AggFn::Count, None),
                _ => SelectItem::Aggregate(*AggFn::ALL.choose(rng).unwrap(), Some(random_column(rng))),
            }
        } else {
            SelectItem::Column(random_column(rng))
        };
        select.push(item);
    }
    StructuredQuery {
        bucket: match rng.gen_range(0..3) {
            0 => BucketRef::All,
            _ => BucketRef::Named(random_name(rng)),
        },
        schema_pattern: rng.gen_bool(0.5).then(|| random_name(rng) + "*"),
        element_pattern: rng.gen_bool(0.5).then(|| random_name(rng)),
        filters,
        group_by,
        select,
        include_inactive: rng.gen(),
    }
}

pub fn round_trip(seed: u64, n: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        let q = random_query(&mut rng);
        let printed = q.to_string();
        let parsed = query::parse(&printed).map_err(|e| format!("query {i} `{printed}`: {e}"))?;
        if parsed != q {
            return Err(format!("query {i} `{printed}` parsed to a different AST"));
        }
        if parsed.to_string() != printed {
            return Err(format!("query {i} `{printed}` reprinted differently"));
        }
    }
    Ok(format!("{n} generated queries"))
}

// ------------------------------------------------------------ persistence

/// Random single-mutation steps against `store`, returning the canonical
/// bytes after each committed version (index = version).
fn crash_workload(store: &Store, rng: &mut ChaCha8Rng, steps: usize) -> Result<Vec<Vec<u8>>, String> {
    let e = |x: store::StoreError| x.to_string();
    let mut states = vec![store.pool().canonical_bytes()];
    let push = |store: &Store, states: &mut Vec<Vec<u8>>| {
        let v = store.version() as usize;
        if v == states.len() {
            states.push(store.pool().canonical_bytes());
        }
    };
    let mut buckets: Vec<BucketId> = Vec::new();
    let mut schemas: Vec<(BucketId, SchemaId)> = Vec::new();
    let mut elements: Vec<(BucketId, SchemaId, ElementId)> = Vec::new();
    let mut records: Vec<(BucketId, SchemaId, ElementId, RecordId)> = Vec::new();
    let mut experiences: Vec<ExperienceId> = Vec::new();
    for i in 0..steps {
        let choice = rng.gen_range(0..7);
        match choice {
            0 if buckets.len() < 3 => {
                let b = store
                    .put_bucket(BucketDef::new(format!("bucket {i}"), &["topic"]))
                    .map_err(e)?;
                buckets.push(b);
            }
            1 => {
                let x = store
                    .put_experience(NewExperience {
                        raw_text: format!("turn {i} with \"quotes\" and\nnewline"),
                        received_at: Timestamp(i as i64),
                        source_tag: "user".into(),
                        source_quality: 0.5,
                    })
                    .map_err(e)?;
                experiences.push(x);
            }
            2 if !buckets.is_empty() => {
                let b = buckets.choose(rng).unwrap().clone();
                let s = store.create_schema(&b, &format!("Meta{i}"), vec![], Timestamp(i as i64)).map_err(e)?;
                schemas.push((b, s));
            }
            3 if !schemas.is_empty() => {
                let (b, s) = schemas.choose(rng).unwrap().clone();
                let el = store.create_element(&b, &s, &format!("El{i}")).map_err(e)?;
                elements.push((b, s, el));
            }
            4 if !elements.is_empty() && !experiences.is_empty() => {
                let (b, s, el) = elements.choose(rng).unwrap().clone();
                let r = store
                    .insert_record(
                        &b,
                        &s,
                        &el,
                        NewRecord {
                            values: [("topic".to_string(), Value::Str(format!("v{}", rng.gen_range(0..3))))].into(),
                            created_at: Timestamp(i as i64),
                            source_quality: rng.gen_range(0.0..1.0),
                            supports: 0,
                            experience_id: experiences.choose(rng).unwrap().clone(),
                        },
                    )
                    .map_err(e)?;
                records.push((b, s, el, r));
            }
            5 if !records.is_empty() => {
                let (b, s, el, r) = records.choose(rng).unwrap().clone();
                store.set_active(&b, &s, &el, &r, rng.gen()).map_err(e)?;
            }
            6 if !records.is_empty() => {
                let (b, s, el, r) = records.choose(rng).unwrap().clone();
                store.add_support(&b, &s, &el, &r).map_err(e)?;
            }
            _ => {
                store.set_goal(&format!("goal {i}")).map_err(e)?;
            }
        }
        push(store, &mut states);
        if states.len() != store.version() as usize + 1 {
            return Err(format!("step {i}: version {} but {} states", store.version(), states.len()));
        }
    }
    Ok(states)
}

fn simulate(dir: &Path, log: &[u8], snapshots: &[(u64, Vec<u8>)], upto: u64) -> Result<Vec<u8>, String> {
    let _ = std::fs::remove_dir_all(dir);
    std::fs::create_dir_all(dir.join("snapshots")).map_err(|e| e.to_string())?;
    std::fs::write(dir.join("log.jsonl"), log).map_err(|e| e.to_string())?;
    for (v, bytes) in snapshots.iter().filter(|(v, _)| *v <= upto) {
        std::fs::write(dir.join("snapshots").join(store::snapshot::file_name(*v)), bytes).map_err(|e| e.to_string())?;
    }
    let (pool, _) = store::recover(dir).map_err(|e| e.to_string())?;
    Ok(pool.canonical_bytes())
}

pub fn crash_replay(seed: u64, steps: usize, scratch: &Path) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let live = scratch.join("live");
    let store = Store::open(
        &live,
        PersistOptions {
            sync: false,
            snapshot_every: 25,
        },
    )
    .map_err(|e| e.to_string())?;
    let states = crash_workload(&store, &mut rng, steps)?;
    store.flush().map_err(|e| e.to_string())?;
    drop(store);

    let log = std::fs::read(live.join("log.jsonl")).map_err(|e| e.to_string())?;
    let mut snapshots = Vec::new();
    for entry in std::fs::read_dir(live.join("snapshots")).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let snap = store::Snapshot::read_from(&path).map_err(|e| e.to_string())?;
        let pool = snap.restore().map_err(|e| e.to_string())?;
        snapshots.push((pool.version, snap.as_bytes().to_vec()));
    }
    let line_ends: Vec<usize> = log.iter().enumerate().filter(|(_, b)| **b == b'\n').map(|(i, _)| i + 1).collect();
    if line_ends.len() + 1 != states.len() {
        return Err(format!("{} log lines for {} versions", line_ends.len(), states.len() - 1));
    }
    let sim = scratch.join("sim");
    let mut checks = 0;
    for k in 0..=line_ends.len() {
        let end = if k == 0 { 0 } else { line_ends[k - 1] };
        // killed right after line k
        let got = simulate(&sim, &log[..end], &snapshots, k as u64)?;
        if got != states[k] && (k == 0 || got != states[k - 1]) {
            return Err(format!("kill after line {k}: recovered state matches neither version {k} nor {}", k.saturating_sub(1)));
        }
        checks += 1;
        // killed halfway through line k+1
        if k < line_ends.len() {
            let next = line_ends[k];
            let cut = end + (next - end) / 2;
            let got = simulate(&sim, &log[..cut], &snapshots, k as u64)?;
            if got != states[k] {
                return Err(format!("torn line {}: recovered state differs from version {k}", k + 1));
            }
            checks += 1;
        }
        // killed while writing a snapshot of version k
        if let Some((_, bytes)) = snapshots.iter().find(|(v, _)| *v == k as u64) {
            let mut torn = snapshots.clone();
            torn.retain(|(v, _)| *v != k as u64);
            torn.push((k as u64, bytes[..bytes.len() / 2].to_vec()));
            let got = simulate(&sim, &log[..end], &torn, k as u64)?;
            if got != states[k] {
                return Err(format!("torn snapshot {k}: recovered state differs"));
            }
            checks += 1;
        }
    }
    // a torn tail is cut when the store reopens, and appends continue from it
    let mid = line_ends.len() / 2;
    let cut = line_ends[mid] + 3;
    simulate(&sim, &log[..cut], &[], mid as u64 + 1)?;
    let reopened = Store::open(&sim, PersistOptions::default()).map_err(|e| e.to_string())?;
    reopened.set_goal("after restart").map_err(|e| e.to_string())?;
    let expect = reopened.pool().canonical_bytes();
    drop(reopened);
    let (again, _) = store::recover(&sim).map_err(|e| e.to_string())?;
    if again.canonical_bytes() != expect {
        return Err("append after torn-tail recovery did not replay".into());
    }
    Ok(format!("{} versions, {checks} kill points", states.len() - 1))
}

// ------------------------------------------------------------------- sweep

pub const SWEEP_THETAS: [f64; 5] = [0.30, 0.50, 0.70, 0.85, 0.95];

pub fn sweep_rows(seed: u64, n: usize) -> Result<Vec<(f64, u64, u64, u64)>, String> {
    use schemamem_core::eval::sweep_stream;
    use schemamem_core::Engine;
    let stream = sweep_stream(seed, n);
    let provider = LexicalProvider::new(stream.rules.clone()).map_err(|e| e.to_string())?;
    let engine = Engine::in_memory(Arc::new(provider), Arc::new(ManualClock::new(Timestamp(0))));
    engine.init(&stream.goal, false).map_err(|e| e.to_string())?;
    let rows = engine.sweep(&stream.experiences, &SWEEP_THETAS).map_err(|e| e.to_string())?;
    Ok(rows
        .iter()
        .map(|r| (r.theta, r.counters.assimilation, r.counters.evolution, r.counters.creation))
        .collect())
}

pub fn sweep_monotone(seed: u64, n: usize) -> Check {
    let rows = sweep_rows(seed, n)?;
    for w in rows.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b.3 < a.3 || b.1 > a.1 {
            return Err(format!("not monotone between theta {} and {}: {rows:?}", a.0, b.0));
        }
    }
    let (first, last) = (rows[0], rows[rows.len() - 1]);
    if last.3 <= first.3 {
        return Err(format!("creation did not increase: {rows:?}"));
    }
    let table: Vec<String> = rows.iter().map(|r| format!("{}:{}/{}/{}", r.0, r.1, r.2, r.3)).collect();
    Ok(format!("theta:A/E/C {}", table.join(" ")))
}
