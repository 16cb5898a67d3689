//! The four-tier memory hierarchy: pool → bucket → schema → element →
//! records, plus the raw experiences records link back to.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ids::{BucketId, ElementId, ExperienceId, RecordId, SchemaId};
use crate::value::{KeyName, Timestamp, Value};

/// A raw ingested interaction unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub id: ExperienceId,
    pub raw_text: String,
    pub received_at: Timestamp,
    pub source_tag: String,
    pub source_quality: f64,
}

/// One descriptor set attached to an element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: RecordId,
    pub values: BTreeMap<KeyName, Value>,
    pub created_at: Timestamp,
    pub source_quality: f64,
    pub supports: u64,
    pub active: bool,
    pub experience_id: ExperienceId,
}

impl Record {
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.values.get(key)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub id: ElementId,
    pub label: String,
    /// Ordered by creation.
    pub records: Vec<Record>,
}

impl Element {
    pub fn active_records(&self) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(|r| r.active)
    }

    pub fn record(&self, id: &RecordId) -> Option<&Record> {
        self.records.iter().find(|r| &r.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub id: SchemaId,
    pub meta: String,
    /// Keys a template declared it watches; empty for schemas created by
    /// adaptation.
    #[serde(default)]
    pub watched_keys: Vec<KeyName>,
    pub elements: BTreeMap<ElementId, Element>,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub id: BucketId,
    pub name: String,
    pub centric_info: String,
    /// Every record in this bucket must carry these keys.
    pub canonical_keys: Vec<KeyName>,
    /// Extra descriptors records may carry.
    #[serde(default)]
    pub optional_keys: Vec<KeyName>,
    pub schemas: BTreeMap<SchemaId, Schema>,
}

impl Bucket {
    pub fn declares(&self, key: &str) -> bool {
        self.canonical_keys.iter().any(|k| k == key) || self.optional_keys.iter().any(|k| k == key)
    }

    pub fn records(&self) -> impl Iterator<Item = (&Schema, &Element, &Record)> {
        self.schemas.values().flat_map(|s| {
            s.elements
                .values()
                .flat_map(move |e| e.records.iter().map(move |r| (s, e, r)))
        })
    }

    /// Case-insensitive name match where `_` and spaces are interchangeable.
    pub fn name_matches(&self, reference: &str) -> bool {
        normalize_name(&self.name) == normalize_name(reference)
    }
}

pub(crate) fn normalize_name(s: &str) -> String {
    s.trim()
        .to_lowercase()
        .replace(['_', '-'], " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// The whole memory: buckets and the experiences their records cite.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MemoryPool {
    pub version: u64,
    #[serde(default)]
    pub goal: Option<String>,
    pub buckets: BTreeMap<BucketId, Arc<Bucket>>,
    pub experiences: BTreeMap<ExperienceId, Arc<Experience>>,
}

/// Location of a record inside the hierarchy, with the labels a reader
/// usually wants alongside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordView {
    pub bucket: BucketId,
    pub bucket_name: String,
    pub schema: SchemaId,
    pub meta: String,
    pub element: ElementId,
    pub label: String,
    pub record: Record,
}

impl MemoryPool {
    pub fn bucket(&self, id: &BucketId) -> Option<&Bucket> {
        self.buckets.get(id).map(Arc::as_ref)
    }

    /// Resolves a bucket by id or by (normalized) name.
    pub fn find_bucket(&self, reference: &str) -> Option<&Bucket> {
        self.buckets
            .get(&BucketId::from(reference))
            .map(Arc::as_ref)
            .or_else(|| self.buckets.values().map(Arc::as_ref).find(|b| b.name_matches(reference)))
    }

    pub fn schema(&self, bucket: &BucketId, schema: &SchemaId) -> Option<&Schema> {
        self.bucket(bucket)?.schemas.get(schema)
    }

    pub fn element(&self, bucket: &BucketId, schema: &SchemaId, element: &ElementId) -> Option<&Element> {
        self.schema(bucket, schema)?.elements.get(element)
    }

    pub fn experience(&self, id: &ExperienceId) -> Option<&Experience> {
        self.experiences.get(id).map(Arc::as_ref)
    }

    pub fn record_count(&self) -> usize {
        self.buckets.values().map(|b| b.records().count()).sum()
    }

    pub fn find_record(&self, id: &RecordId) -> Option<RecordView> {
        self.buckets.values().find_map(|b| {
            b.records().find(|(_, _, r)| &r.id == id).map(|(s, e, r)| RecordView {
                bucket: b.id.clone(),
                bucket_name: b.name.clone(),
                schema: s.id.clone(),
                meta: s.meta.clone(),
                element: e.id.clone(),
                label: e.label.clone(),
                record: r.clone(),
            })
        })
    }

    /// Deterministic serialization: every map in the pool is ordered, so
    /// equal pools always produce identical bytes.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("memory pool serializes")
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty() && self.experiences.is_empty()
    }
}
