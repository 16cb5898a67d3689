//! Store mutations. Every change to a [`MemoryPool`] is expressed as one
//! [`Mutation`]; the event log persists exactly these values and recovery
//! replays them through the same `check` / `apply` pair.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::model::{Bucket, Element, Experience, MemoryPool, Record, Schema};
use super::StoreError;
use crate::ids::{BucketId, ElementId, RecordId, SchemaId};
use crate::value::{KeyName, Timestamp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", content = "payload", rename_all = "snake_case")]
pub enum Mutation {
    SetGoal {
        goal: String,
    },
    PutBucket {
        id: BucketId,
        name: String,
        centric_info: String,
        canonical_keys: Vec<KeyName>,
        #[serde(default)]
        optional_keys: Vec<KeyName>,
    },
    PutExperience {
        experience: Experience,
    },
    CreateSchema {
        bucket: BucketId,
        id: SchemaId,
        meta: String,
        #[serde(default)]
        watched_keys: Vec<KeyName>,
        created_at: Timestamp,
    },
    CreateElement {
        bucket: BucketId,
        schema: SchemaId,
        id: ElementId,
        label: String,
    },
    InsertRecord {
        bucket: BucketId,
        schema: SchemaId,
        element: ElementId,
        record: Record,
    },
    SetActive {
        bucket: BucketId,
        schema: SchemaId,
        element: ElementId,
        record: RecordId,
        active: bool,
    },
    AddSupport {
        bucket: BucketId,
        schema: SchemaId,
        element: ElementId,
        record: RecordId,
    },
}

impl Mutation {
    pub fn op_name(&self) -> &'static str {
        match self {
            Mutation::SetGoal { .. } => "set_goal",
            Mutation::PutBucket { .. } => "put_bucket",
            Mutation::PutExperience { .. } => "put_experience",
            Mutation::CreateSchema { .. } => "create_schema",
            Mutation::CreateElement { .. } => "create_element",
            Mutation::InsertRecord { .. } => "insert_record",
            Mutation::SetActive { .. } => "set_active",
            Mutation::AddSupport { .. } => "add_support",
        }
    }
}

pub(crate) fn validate_keys(keys: &[KeyName]) -> Result<(), StoreError> {
    if keys.is_empty() {
        return Err(StoreError::EmptyKeySet);
    }
    let mut seen = BTreeSet::new();
    for k in keys {
        if k.trim().is_empty() {
            return Err(StoreError::InvalidKeyName(k.clone()));
        }
        if !seen.insert(k.as_str()) {
            return Err(StoreError::DuplicateKeyName(k.clone()));
        }
    }
    Ok(())
}

fn check_quality(q: f64) -> Result<(), StoreError> {
    if (0.0..=1.0).contains(&q) {
        Ok(())
    } else {
        Err(StoreError::InvalidSourceQuality(q))
    }
}

impl MemoryPool {
    fn target_element(
        &self,
        bucket: &BucketId,
        schema: &SchemaId,
        element: &ElementId,
    ) -> Result<(&Bucket, &Element), StoreError> {
        let b = self
            .bucket(bucket)
            .ok_or_else(|| StoreError::UnknownTarget(format!("bucket {bucket}")))?;
        let e = b
            .schemas
            .get(schema)
            .ok_or_else(|| StoreError::UnknownTarget(format!("schema {schema}")))?
            .elements
            .get(element)
            .ok_or_else(|| StoreError::UnknownTarget(format!("element {element}")))?;
        Ok((b, e))
    }

    /// Verifies that `mutation` can be applied without violating any pool
    /// invariant. `apply` relies on this having succeeded.
    pub fn check(&self, mutation: &Mutation) -> Result<(), StoreError> {
        match mutation {
            Mutation::SetGoal { .. } => Ok(()),
            Mutation::PutBucket {
                id,
                canonical_keys,
                optional_keys,
                ..
            } => {
                validate_keys(canonical_keys)?;
                if self.buckets.contains_key(id) {
                    return Err(StoreError::DuplicateId(id.to_string()));
                }
                if let Some(k) = optional_keys.iter().find(|k| canonical_keys.contains(k)) {
                    return Err(StoreError::DuplicateKeyName(k.clone()));
                }
                Ok(())
            }
            Mutation::PutExperience { experience } => {
                if experience.raw_text.trim().is_empty() {
                    return Err(StoreError::EmptyText("raw_text"));
                }
                check_quality(experience.source_quality)?;
                if self.experiences.contains_key(&experience.id) {
                    return Err(StoreError::DuplicateId(experience.id.to_string()));
                }
                Ok(())
            }
            Mutation::CreateSchema { bucket, id, meta, .. } => {
                let b = self
                    .bucket(bucket)
                    .ok_or_else(|| StoreError::UnknownBucket(bucket.clone()))?;
                if meta.trim().is_empty() {
                    return Err(StoreError::EmptyText("meta"));
                }
                if b.schemas.contains_key(id) {
                    return Err(StoreError::DuplicateId(id.to_string()));
                }
                Ok(())
            }
            Mutation::CreateElement {
                bucket,
                schema,
                id,
                label,
            } => {
                let s = self
                    .schema(bucket, schema)
                    .ok_or_else(|| StoreError::UnknownSchema(schema.clone()))?;
                if label.trim().is_empty() {
                    return Err(StoreError::EmptyText("label"));
                }
                if s.elements.contains_key(id) {
                    return Err(StoreError::DuplicateId(id.to_string()));
                }
                Ok(())
            }
            Mutation::InsertRecord {
                bucket,
                schema,
                element,
                record,
            } => {
                let (b, e) = self.target_element(bucket, schema, element)?;
                if let Some(k) = b.canonical_keys.iter().find(|k| !record.values.contains_key(*k)) {
                    return Err(StoreError::MissingCanonicalKey(k.clone()));
                }
                if let Some((k, _)) = record.values.iter().find(|(_, v)| !v.is_storable()) {
                    return Err(StoreError::InvalidValue(k.clone()));
                }
                check_quality(record.source_quality)?;
                if !self.experiences.contains_key(&record.experience_id) {
                    return Err(StoreError::UnknownExperience(record.experience_id.clone()));
                }
                if e.records.iter().any(|r| r.id == record.id) {
                    return Err(StoreError::DuplicateId(record.id.to_string()));
                }
                Ok(())
            }
            Mutation::SetActive {
                bucket,
                schema,
                element,
                record,
                ..
            }
            | Mutation::AddSupport {
                bucket,
                schema,
                element,
                record,
            } => {
                let (_, e) = self.target_element(bucket, schema, element)?;
                e.record(record)
                    .map(|_| ())
                    .ok_or_else(|| StoreError::UnknownTarget(format!("record {record}")))
            }
        }
    }

    /// Applies a checked mutation and bumps the version.
    ///
    /// Panics if the mutation's target does not exist; call
    /// [`MemoryPool::check`] first.
    pub fn apply(&mut self, mutation: Mutation) {
        self.version += 1;
        match mutation {
            Mutation::SetGoal { goal } => self.goal = Some(goal),
            Mutation::PutBucket {
                id,
                name,
                centric_info,
                canonical_keys,
                optional_keys,
            } => {
                self.buckets.insert(
                    id.clone(),
                    Arc::new(Bucket {
                        id,
                        name,
                        centric_info,
                        canonical_keys,
                        optional_keys,
                        schemas: BTreeMap::new(),
                    }),
                );
            }
            Mutation::PutExperience { experience } => {
                self.experiences
                    .insert(experience.id.clone(), Arc::new(experience));
            }
            Mutation::CreateSchema {
                bucket,
                id,
                meta,
                watched_keys,
                created_at,
            } => {
                self.bucket_mut(&bucket).schemas.insert(
                    id.clone(),
                    Schema {
                        id,
                        meta,
                        watched_keys,
                        elements: BTreeMap::new(),
                        created_at,
                    },
                );
            }
            Mutation::CreateElement {
                bucket,
                schema,
                id,
                label,
            } => {
                self.schema_mut(&bucket, &schema).elements.insert(
                    id.clone(),
                    Element {
                        id,
                        label,
                        records: Vec::new(),
                    },
                );
            }
            Mutation::InsertRecord {
                bucket,
                schema,
                element,
                record,
            } => self.element_mut(&bucket, &schema, &element).records.push(record),
            Mutation::SetActive {
                bucket,
                schema,
                element,
                record,
                active,
            } => {
                if let Some(r) = self.record_mut(&bucket, &schema, &element, &record) {
                    r.active = active;
                }
            }
            Mutation::AddSupport {
                bucket,
                schema,
                element,
                record,
            } => {
                if let Some(r) = self.record_mut(&bucket, &schema, &element, &record) {
                    r.supports += 1;
                }
            }
        }
    }

    fn bucket_mut(&mut self, id: &BucketId) -> &mut Bucket {
        Arc::make_mut(self.buckets.get_mut(id).expect("checked bucket"))
    }

    fn schema_mut(&mut self, bucket: &BucketId, schema: &SchemaId) -> &mut Schema {
        self.bucket_mut(bucket)
            .schemas
            .get_mut(schema)
            .expect("checked schema")
    }

    fn element_mut(&mut self, bucket: &BucketId, schema: &SchemaId, element: &ElementId) -> &mut Element {
        self.schema_mut(bucket, schema)
            .elements
            .get_mut(element)
            .expect("checked element")
    }

    fn record_mut(
        &mut self,
        bucket: &BucketId,
        schema: &SchemaId,
        element: &ElementId,
        record: &RecordId,
    ) -> Option<&mut Record> {
        self.element_mut(bucket, schema, element)
            .records
            .iter_mut()
            .find(|r| &r.id == record)
    }
}
