//! Adaptation processing: routes each segment of a new experience to
//! assimilation (record into an existing element), evolution (new element)
//! or creation (new schema), then resolves conflicts in every schema the
//! run modified.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::MutexGuard;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::conflict::{self, ConflictError, ConflictPolicy, Scoring};
use crate::ids::{BucketId, ElementId, ExperienceId, RecordId, SchemaId, SegmentId};
use crate::provider::{in_unit, CognitionProvider, ProviderError, Segment};
use crate::store::{Bucket, MemoryPool, NewExperience, NewRecord, Store, StoreError};
use crate::value::{KeyName, Timestamp};

#[derive(Debug, Error)]
pub enum AdaptError {
    #[error("threshold {name} = {value} outside [0, 1]")]
    InvalidTheta { name: &'static str, value: f64 },
    #[error("the store has no buckets")]
    NoBuckets,
    #[error("experience text is empty")]
    EmptyExperience,
    #[error("provider failure on segment {segment}: {reason}")]
    ProviderFailure { segment: String, reason: String },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Conflict(#[from] ConflictError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptationConfig {
    pub theta_meta: f64,
    pub theta_elem: f64,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        AdaptationConfig {
            theta_meta: 0.70,
            theta_elem: 0.60,
        }
    }
}

impl AdaptationConfig {
    pub fn new(theta_meta: f64, theta_elem: f64) -> Result<Self, AdaptError> {
        let c = AdaptationConfig { theta_meta, theta_elem };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), AdaptError> {
        for (name, value) in [("theta_meta", self.theta_meta), ("theta_elem", self.theta_elem)] {
            if !in_unit(value) {
                return Err(AdaptError::InvalidTheta { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Path {
    Assimilation,
    Evolution,
    Creation,
}

/// The dispatch decision for one segment, before any mutation.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub path: Path,
    pub best_schema: Option<SchemaId>,
    /// Best schema similarity; 0 when the bucket has no schemas.
    pub s_star: f64,
    pub best_element: Option<ElementId>,
    /// Best element compatibility; absent when the matched schema has no
    /// elements or no schema matched.
    pub kappa_star: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counters {
    pub assimilation: u64,
    pub evolution: u64,
    pub creation: u64,
}

impl Counters {
    pub fn add(&mut self, path: Path) {
        match path {
            Path::Assimilation => self.assimilation += 1,
            Path::Evolution => self.evolution += 1,
            Path::Creation => self.creation += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.assimilation + self.evolution + self.creation
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub segment_id: SegmentId,
    pub bucket: BucketId,
    pub path: Path,
    pub best_schema: Option<SchemaId>,
    pub s_star: f64,
    pub kappa_star: Option<f64>,
    /// Id of what the path produced: the record on assimilation, the new
    /// element on evolution, the new schema on creation.
    pub produced: String,
    pub schema: SchemaId,
    pub element: ElementId,
    pub record: RecordId,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing_keys: Vec<KeyName>,
    /// Existing records whose support count this segment raised.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub supported: Vec<RecordId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationReport {
    pub experience_id: ExperienceId,
    pub per_segment: Vec<SegmentReport>,
    pub counters: Counters,
    /// Conflict components whose active flags changed in this run.
    pub conflicts_resolved: u64,
    pub deactivated: Vec<RecordId>,
    pub reactivated: Vec<RecordId>,
}

fn checked_score(segment: &Segment, what: &str, score: f64) -> Result<f64, AdaptError> {
    if in_unit(score) {
        Ok(score)
    } else {
        Err(AdaptError::ProviderFailure {
            segment: segment.id.to_string(),
            reason: format!("{what} score {score} outside [0, 1]"),
        })
    }
}

/// Runs the threshold dispatch for one segment against the current state of
/// its bucket. Ties in either argmax go to the smallest id.
pub fn decide(
    provider: &dyn CognitionProvider,
    bucket: &Bucket,
    segment: &Segment,
    config: &AdaptationConfig,
) -> Result<Decision, AdaptError> {
    let mut best: Option<(&SchemaId, f64)> = None;
    for (id, schema) in &bucket.schemas {
        let s = checked_score(segment, "schema similarity", provider.schema_similarity(segment, schema))?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((id, s));
        }
    }
    let Some((schema_id, s_star)) = best else {
        return Ok(Decision {
            path: Path::Creation,
            best_schema: None,
            s_star: 0.0,
            best_element: None,
            kappa_star: None,
        });
    };
    if s_star < config.theta_meta {
        return Ok(Decision {
            path: Path::Creation,
            best_schema: Some(schema_id.clone()),
            s_star,
            best_element: None,
            kappa_star: None,
        });
    }
    let mut best_el: Option<(&ElementId, f64)> = None;
    for (id, element) in &bucket.schemas[schema_id].elements {
        let k = checked_score(segment, "element compatibility", provider.element_compatibility(segment, element))?;
        if best_el.is_none_or(|(_, b)| k > b) {
            best_el = Some((id, k));
        }
    }
    let path = match best_el {
        Some((_, k)) if k >= config.theta_elem => Path::Assimilation,
        _ => Path::Evolution,
    };
    Ok(Decision {
        path,
        best_schema: Some(schema_id.clone()),
        s_star,
        best_element: best_el.map(|(id, _)| id.clone()),
        kappa_star: best_el.map(|(_, k)| k),
    })
}

/// One adaptation context: a store, a provider and the settings that shape
/// dispatch and conflict resolution.
pub struct Adapter<'a> {
    pub store: &'a Store,
    pub provider: &'a dyn CognitionProvider,
    pub config: AdaptationConfig,
    pub policy: &'a ConflictPolicy,
    pub scoring: &'a Scoring,
    pub clock: &'a dyn Clock,
}

fn record_time(pool: &MemoryPool, bucket: &BucketId, schema: &SchemaId, element: &ElementId, at: Timestamp) -> Timestamp {
    // keep each element's records ordered by creation time
    pool.element(bucket, schema, element)
        .and_then(|e| e.records.iter().map(|r| r.created_at).max())
        .map_or(at, |last| last.max(at))
}

impl<'a> Adapter<'a> {
    /// Stores `experience`, segments it and applies one update operator per
    /// segment, then resolves conflicts across the modified schemas.
    pub fn adapt(&self, experience: NewExperience) -> Result<AdaptationReport, AdaptError> {
        self.config.validate()?;
        if experience.raw_text.trim().is_empty() {
            return Err(AdaptError::EmptyExperience);
        }
        let pool = self.store.pool();
        if pool.buckets.is_empty() {
            return Err(AdaptError::NoBuckets);
        }
        let exp_id = self.store.put_experience(experience)?;
        let pool = self.store.pool();
        let exp = pool.experience(&exp_id).expect("experience just stored").clone();
        let buckets: Vec<&Bucket> = pool.buckets.values().map(|b| b.as_ref()).collect();
        let segments = self.provider.segment(&exp, &buckets).map_err(|e| match e {
            ProviderError::EmptyExperience => AdaptError::EmptyExperience,
            other => AdaptError::ProviderFailure {
                segment: exp_id.to_string(),
                reason: other.to_string(),
            },
        })?;

        let mut touched = BTreeSet::new();
        for seg in &segments {
            match &seg.bucket_hint {
                Some(b) if pool.buckets.contains_key(b) => {
                    touched.insert(b.clone());
                }
                other => {
                    return Err(AdaptError::ProviderFailure {
                        segment: seg.id.to_string(),
                        reason: format!("segment routed to unknown bucket {other:?}"),
                    })
                }
            }
        }
        // acquire writer locks in id order so concurrent runs cannot deadlock
        let locks: Vec<_> = touched.iter().map(|b| self.store.bucket_lock(b)).collect();
        let _guards: Vec<MutexGuard<'_, ()>> = locks
            .iter()
            .map(|l| l.lock().unwrap_or_else(|p| p.into_inner()))
            .collect();

        let mut report = AdaptationReport {
            experience_id: exp_id.clone(),
            per_segment: Vec::with_capacity(segments.len()),
            counters: Counters::default(),
            conflicts_resolved: 0,
            deactivated: Vec::new(),
            reactivated: Vec::new(),
        };
        let mut modified: BTreeSet<(BucketId, SchemaId)> = BTreeSet::new();
        for seg in &segments {
            let out = self.apply_segment(seg, exp.received_at, exp.source_quality)?;
            modified.insert((out.bucket.clone(), out.schema.clone()));
            report.counters.add(out.path);
            report.per_segment.push(out);
        }
        self.resolve_modified(&modified, &mut report)?;
        Ok(report)
    }

    fn apply_segment(&self, seg: &Segment, received_at: Timestamp, quality: f64) -> Result<SegmentReport, AdaptError> {
        let pool = self.store.pool();
        let bucket_id = seg.bucket_hint.clone().expect("routing checked");
        let bucket = pool.bucket(&bucket_id).ok_or_else(|| StoreError::UnknownBucket(bucket_id.clone()))?;
        let d = decide(self.provider, bucket, seg, &self.config)?;
        let (schema, element, record, produced, supported) = match d.path {
            Path::Assimilation => {
                let schema = d.best_schema.clone().expect("assimilation has a schema");
                let element = d.best_element.clone().expect("assimilation has an element");
                let (record, supported) = self.schema_update(seg, &bucket_id, &schema, &element, received_at, quality)?;
                (schema, element, record.clone(), record.to_string(), supported)
            }
            Path::Evolution => {
                let schema = d.best_schema.clone().expect("evolution has a schema");
                let (element, record) = self.schema_evolution(seg, &bucket_id, &schema, received_at, quality)?;
                (schema, element.clone(), record, element.to_string(), Vec::new())
            }
            Path::Creation => {
                let (schema, element, record) = self.schema_creation(seg, &bucket_id, received_at, quality)?;
                (schema.clone(), element, record, schema.to_string(), Vec::new())
            }
        };
        tracing::debug!(segment = %seg.id, path = ?d.path, s_star = d.s_star, kappa_star = ?d.kappa_star, "segment dispatched");
        Ok(SegmentReport {
            segment_id: seg.id.clone(),
            bucket: bucket_id,
            path: d.path,
            best_schema: d.best_schema,
            s_star: d.s_star,
            kappa_star: d.kappa_star,
            produced,
            schema,
            element,
            record,
            missing_keys: seg.missing_keys.clone(),
            supported,
        })
    }

    fn new_record(&self, seg: &Segment, created_at: Timestamp, quality: f64) -> NewRecord {
        NewRecord {
            values: seg.extracted_record.clone(),
            created_at,
            source_quality: quality,
            supports: 0,
            experience_id: seg.experience_id.clone(),
        }
    }

    /// Adds the segment's record to an existing element and raises the
    /// support count of every active record it fully agrees with.
    pub fn schema_update(
        &self,
        seg: &Segment,
        bucket: &BucketId,
        schema: &SchemaId,
        element: &ElementId,
        received_at: Timestamp,
        quality: f64,
    ) -> Result<(RecordId, Vec<RecordId>), AdaptError> {
        let pool = self.store.pool();
        let at = record_time(&pool, bucket, schema, element, received_at);
        let id = self.store.insert_record(bucket, schema, element, self.new_record(seg, at, quality))?;
        let pool = self.store.pool();
        let b = pool.bucket(bucket).expect("bucket exists");
        let e = pool.element(bucket, schema, element).expect("element exists");
        let new = e.record(&id).expect("record just inserted");
        let agreeing: Vec<RecordId> = e
            .active_records()
            .filter(|r| r.id != id && conflict::supports(new, r, &b.canonical_keys, self.policy))
            .map(|r| r.id.clone())
            .collect();
        for r in &agreeing {
            self.store.add_support(bucket, schema, element, r)?;
        }
        Ok((id, agreeing))
    }

    /// Adds a new element labeled with the segment's entity, holding the
    /// segment's record.
    pub fn schema_evolution(
        &self,
        seg: &Segment,
        bucket: &BucketId,
        schema: &SchemaId,
        received_at: Timestamp,
        quality: f64,
    ) -> Result<(ElementId, RecordId), AdaptError> {
        let element = self.store.create_element(bucket, schema, &seg.entity)?;
        let record = self
            .store
            .insert_record(bucket, schema, &element, self.new_record(seg, received_at, quality))?;
        Ok((element, record))
    }

    /// Creates a schema with the segment's meta and attaches the record
    /// through an immediate evolution step.
    pub fn schema_creation(
        &self,
        seg: &Segment,
        bucket: &BucketId,
        received_at: Timestamp,
        quality: f64,
    ) -> Result<(SchemaId, ElementId, RecordId), AdaptError> {
        let schema = self
            .store
            .create_schema(bucket, &seg.extracted_meta, Vec::new(), received_at)?;
        let (element, record) = self.schema_evolution(seg, bucket, &schema, received_at, quality)?;
        Ok((schema, element, record))
    }

    fn resolve_modified(
        &self,
        modified: &BTreeSet<(BucketId, SchemaId)>,
        report: &mut AdaptationReport,
    ) -> Result<(), AdaptError> {
        let pool = self.store.pool();
        let now = self.clock.now();
        for (bucket_id, schema_id) in modified {
            let bucket = pool.bucket(bucket_id).expect("modified bucket exists");
            let schema = &bucket.schemas[schema_id];
            for element in schema.elements.values() {
                let latest = element.records.iter().map(|r| r.created_at).max();
                let element_now = latest.map_or(now, |t| t.max(now));
                let res = conflict::resolve_with(element, &bucket.canonical_keys, self.scoring, element_now, |k, a, b| {
                    self.provider.value_conflict(k, a, b, self.policy)
                })?;
                for comp in &res.components {
                    if comp
                        .iter()
                        .any(|id| res.deactivated.contains(id) || res.reactivated.contains(id))
                    {
                        report.conflicts_resolved += 1;
                    }
                }
                for id in &res.deactivated {
                    self.store.set_active(bucket_id, schema_id, &element.id, id, false)?;
                }
                for id in &res.reactivated {
                    self.store.set_active(bucket_id, schema_id, &element.id, id, true)?;
                }
                report.deactivated.extend(res.deactivated);
                report.reactivated.extend(res.reactivated);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub theta: f64,
    pub counters: Counters,
}

/// Replays `stream` once per threshold, each time on a fresh copy of
/// `base`, and reports the path counters.
pub fn sweep_theta(
    base: &MemoryPool,
    stream: &[NewExperience],
    thetas: &[f64],
    provider: &dyn CognitionProvider,
    config: AdaptationConfig,
    policy: &ConflictPolicy,
    scoring: &Scoring,
    clock: &dyn Clock,
) -> Result<Vec<SweepRow>, AdaptError> {
    for &t in thetas {
        AdaptationConfig { theta_meta: t, ..config }.validate()?;
    }
    let mut rows = Vec::with_capacity(thetas.len());
    for &theta in thetas {
        let store = Store::from_pool(base.clone());
        let adapter = Adapter {
            store: &store,
            provider,
            config: AdaptationConfig { theta_meta: theta, ..config },
            policy,
            scoring,
            clock,
        };
        let mut counters = Counters::default();
        for exp in stream {
            let r = adapter.adapt(exp.clone())?;
            counters.assimilation += r.counters.assimilation;
            counters.evolution += r.counters.evolution;
            counters.creation += r.counters.creation;
        }
        rows.push(SweepRow { theta, counters });
    }
    Ok(rows)
}

/// Pool statistics used by tests and the inspection API.
pub fn structure_counts(pool: &MemoryPool) -> BTreeMap<&'static str, usize> {
    let schemas: usize = pool.buckets.values().map(|b| b.schemas.len()).sum();
    let elements: usize = pool
        .buckets
        .values()
        .flat_map(|b| b.schemas.values())
        .map(|s| s.elements.len())
        .sum();
    BTreeMap::from([
        ("buckets", pool.buckets.len()),
        ("schemas", schemas),
        ("elements", elements),
        ("records", pool.record_count()),
        ("experiences", pool.experiences.len()),
    ])
}
