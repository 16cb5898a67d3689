//! Query evaluation over a pool snapshot.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use super::ast::{AggFn, BucketRef, CmpOp, Column, Condition, Pseudo, SelectItem, StructuredQuery};
use super::glob::glob_match;
use super::table::ResultTable;
use super::QueryError;
use crate::ids::RecordId;
use crate::store::{Bucket, Element, MemoryPool, Record, Schema};
use crate::text::canonical_string;
use crate::value::{KeyName, Value, ValueKind};

/// One candidate record with its place in the hierarchy.
#[derive(Debug, Clone, Copy)]
pub struct Row<'a> {
    pub bucket: &'a Bucket,
    pub schema: &'a Schema,
    pub element: &'a Element,
    pub record: &'a Record,
}

impl Row<'_> {
    pub fn get(&self, column: &Column) -> Value {
        match column {
            Column::Key(k) => self.record.values.get(k).cloned().unwrap_or(Value::Null),
            Column::Pseudo(p) => match p {
                Pseudo::Bucket => Value::Str(self.bucket.name.clone()),
                Pseudo::Schema => Value::Str(self.schema.meta.clone()),
                Pseudo::Element => Value::Str(self.element.label.clone()),
                Pseudo::Record => Value::Str(self.record.id.to_string()),
                Pseudo::CreatedAt => Value::Time(self.record.created_at),
                Pseudo::Active => Value::Bool(self.record.active),
            },
        }
    }
}

fn pseudo_kind(p: Pseudo) -> ValueKind {
    match p {
        Pseudo::CreatedAt => ValueKind::Timestamp,
        Pseudo::Active => ValueKind::Boolean,
        _ => ValueKind::String,
    }
}

fn compare(a: &Value, b: &Value) -> Option<Ordering> {
    match (a, b) {
        (Value::Str(x), Value::Str(y)) => Some(canonical_string(x).cmp(&canonical_string(y))),
        (Value::Num(x), Value::Num(y)) => x.partial_cmp(y),
        (Value::Time(x), Value::Time(y)) => Some(x.cmp(y)),
        (Value::Bool(x), Value::Bool(y)) => Some(x.cmp(y)),
        _ => None,
    }
}

/// Predicate semantics on one value. Missing keys read as null; null only
/// satisfies `= null`, and any non-null value satisfies `!= null`. Values
/// of a different type than the literal never match. Strings compare by
/// their canonical (case-folded, whitespace-collapsed) form.
pub fn condition_holds(value: &Value, condition: &Condition) -> bool {
    match condition {
        Condition::Compare(CmpOp::Eq, Value::Null) => value.is_null(),
        Condition::Compare(CmpOp::Ne, Value::Null) => !value.is_null(),
        Condition::Compare(op, lit) => compare(value, lit).is_some_and(|o| match op {
            CmpOp::Eq => o == Ordering::Equal,
            CmpOp::Ne => o != Ordering::Equal,
            CmpOp::Lt => o == Ordering::Less,
            CmpOp::Le => o != Ordering::Greater,
            CmpOp::Gt => o == Ordering::Greater,
            CmpOp::Ge => o != Ordering::Less,
        }),
        Condition::Contains(needle) => value
            .as_str()
            .is_some_and(|s| s.to_lowercase().contains(&needle.to_lowercase())),
        Condition::Between(lo, hi) => {
            compare(value, lo).is_some_and(|o| o != Ordering::Less)
                && compare(value, hi).is_some_and(|o| o != Ordering::Greater)
        }
    }
}

/// Computes one aggregate over a column's values. Nulls are skipped;
/// count of nothing is 0, every other aggregate of nothing is null.
pub fn aggregate(func: AggFn, values: &[Value]) -> Value {
    let present: Vec<&Value> = values.iter().filter(|v| !v.is_null()).collect();
    match func {
        AggFn::Count => Value::Num(present.len() as f64),
        AggFn::Sum | AggFn::Avg => {
            let nums: Vec<f64> = present.iter().filter_map(|v| v.as_f64()).collect();
            if nums.is_empty() {
                return Value::Null;
            }
            let sum: f64 = nums.iter().sum();
            if func == AggFn::Sum {
                Value::Num(sum)
            } else {
                Value::Num(sum / nums.len() as f64)
            }
        }
        AggFn::Min => present.into_iter().min_by(|a, b| a.total_cmp(b)).cloned().unwrap_or(Value::Null),
        AggFn::Max => present.into_iter().max_by(|a, b| a.total_cmp(b)).cloned().unwrap_or(Value::Null),
    }
}

fn target_buckets<'a>(q: &StructuredQuery, pool: &'a MemoryPool) -> Result<Vec<&'a Bucket>, QueryError> {
    match &q.bucket {
        BucketRef::All => Ok(pool.buckets.values().map(|b| b.as_ref()).collect()),
        BucketRef::Named(name) => pool
            .find_bucket(name)
            .map(|b| vec![b])
            .ok_or_else(|| QueryError::UnknownBucket(name.clone())),
    }
}

/// Declared and observed kinds of every key in the target buckets.
fn key_kinds(buckets: &[&Bucket]) -> BTreeMap<KeyName, BTreeSet<ValueKind>> {
    let mut out: BTreeMap<KeyName, BTreeSet<ValueKind>> = BTreeMap::new();
    for b in buckets {
        for k in b.canonical_keys.iter().chain(&b.optional_keys) {
            out.entry(k.clone()).or_default();
        }
        for (_, _, r) in b.records() {
            for (k, v) in &r.values {
                let kinds = out.entry(k.clone()).or_default();
                if let Some(kind) = v.kind() {
                    kinds.insert(kind);
                }
            }
        }
    }
    out
}

fn validate(q: &StructuredQuery, buckets: &[&Bucket]) -> Result<(), QueryError> {
    let kinds = key_kinds(buckets);
    for k in q.keys() {
        if !kinds.contains_key(k) {
            return Err(QueryError::UnknownKey(k.clone()));
        }
    }
    let kinds_of = |c: &Column| -> BTreeSet<ValueKind> {
        match c {
            Column::Key(k) => kinds.get(k).cloned().unwrap_or_default(),
            Column::Pseudo(p) => BTreeSet::from([pseudo_kind(*p)]),
        }
    };
    let mismatch = |c: &Column| QueryError::TypeMismatch(c.to_string());
    for p in &q.filters {
        let observed = kinds_of(&p.column);
        let literal_kinds: Vec<ValueKind> = match &p.condition {
            Condition::Compare(_, v) => v.kind().into_iter().collect(),
            Condition::Contains(_) => vec![ValueKind::String],
            Condition::Between(lo, hi) => {
                if lo.kind() != hi.kind() || lo.is_null() {
                    return Err(mismatch(&p.column));
                }
                lo.kind().into_iter().collect()
            }
        };
        for kind in literal_kinds {
            if !observed.is_empty() && !observed.contains(&kind) {
                return Err(mismatch(&p.column));
            }
        }
    }
    for s in &q.select {
        if let SelectItem::Aggregate(func, Some(c)) = s {
            let observed = kinds_of(c);
            let ok = match func {
                AggFn::Count => true,
                AggFn::Sum | AggFn::Avg => observed.iter().all(|k| *k == ValueKind::Number),
                AggFn::Min | AggFn::Max => observed.len() <= 1,
            };
            if !ok {
                return Err(mismatch(c));
            }
        }
    }
    Ok(())
}

/// Candidate rows after bucket, pattern, activity and predicate filters, in
/// hierarchy order (bucket, schema, element ids, then record order).
pub fn matching_rows<'a>(q: &StructuredQuery, buckets: &[&'a Bucket]) -> Vec<Row<'a>> {
    let mut out = Vec::new();
    for bucket in buckets {
        for schema in bucket.schemas.values() {
            if q.schema_pattern.as_ref().is_some_and(|p| !glob_match(p, &schema.meta)) {
                continue;
            }
            for element in schema.elements.values() {
                if q.element_pattern.as_ref().is_some_and(|p| !glob_match(p, &element.label)) {
                    continue;
                }
                for record in &element.records {
                    if !record.active && !q.include_inactive {
                        continue;
                    }
                    let row = Row {
                        bucket,
                        schema,
                        element,
                        record,
                    };
                    if q.filters.iter().all(|p| condition_holds(&row.get(&p.column), &p.condition)) {
                        out.push(row);
                    }
                }
            }
        }
    }
    out
}

fn project(item: &SelectItem, rows: &[Row<'_>]) -> Value {
    match item {
        SelectItem::Column(c) => rows.first().map_or(Value::Null, |r| r.get(c)),
        SelectItem::Aggregate(_, None) => Value::Num(rows.len() as f64),
        SelectItem::Aggregate(func, Some(c)) => {
            let values: Vec<Value> = rows.iter().map(|r| r.get(c)).collect();
            aggregate(*func, &values)
        }
    }
}

fn ids(rows: &[Row<'_>]) -> Vec<RecordId> {
    rows.iter().map(|r| r.record.id.clone()).collect()
}

pub fn evaluate(q: &StructuredQuery, pool: &MemoryPool) -> Result<ResultTable, QueryError> {
    let buckets = target_buckets(q, pool)?;
    validate(q, &buckets)?;
    let rows = matching_rows(q, &buckets);
    let mut table = ResultTable {
        columns: q.select.iter().map(|s| s.to_string()).collect(),
        rows: Vec::new(),
        provenance: Vec::new(),
    };
    if q.group_by.is_empty() {
        if q.has_aggregates() {
            table.rows.push(q.select.iter().map(|s| project(s, &rows)).collect());
            table.provenance.push(ids(&rows));
        } else {
            for r in &rows {
                let one = std::slice::from_ref(r);
                table.rows.push(q.select.iter().map(|s| project(s, one)).collect());
                table.provenance.push(vec![r.record.id.clone()]);
            }
        }
        return Ok(table);
    }
    let mut groups: Vec<(Vec<Value>, Vec<Row<'_>>)> = Vec::new();
    for r in rows {
        let key: Vec<Value> = q.group_by.iter().map(|c| r.get(c)).collect();
        match groups.iter_mut().find(|(k, _)| same_key(k, &key)) {
            Some((_, members)) => members.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups.sort_by(|(a, _), (b, _)| cmp_keys(a, b));
    for (_, members) in &groups {
        table.rows.push(q.select.iter().map(|s| project(s, members)).collect());
        table.provenance.push(ids(members));
    }
    Ok(table)
}

fn same_key(a: &[Value], b: &[Value]) -> bool {
    cmp_keys(a, b) == Ordering::Equal
}

fn cmp_keys(a: &[Value], b: &[Value]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}
