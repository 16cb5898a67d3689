//! The schema store: owns the memory hierarchy and its durable persistence.
//!
//! Readers take an immutable [`Arc<MemoryPool>`] and never block writers for
//! longer than one pointer clone. Each mutation is checked, appended to the
//! event log, then applied copy-on-write under a short exclusive section, so
//! log order always equals application order. Multi-step writers (an
//! adaptation run, initialization) additionally hold the per-bucket writer
//! lock from [`Store::bucket_lock`], which serializes runs on one bucket
//! while runs on distinct buckets interleave.

pub mod log;
pub mod model;
pub mod mutation;
pub mod snapshot;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use thiserror::Error;

pub use model::{Bucket, Element, Experience, MemoryPool, Record, RecordView, Schema};
pub use mutation::Mutation;
pub use snapshot::Snapshot;

use crate::ids::{BucketId, ElementId, ExperienceId, RecordId, SchemaId};
use crate::value::{KeyName, Timestamp, Value};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("bucket key set is empty")]
    EmptyKeySet,
    #[error("duplicate key name `{0}`")]
    DuplicateKeyName(KeyName),
    #[error("invalid key name `{0}`")]
    InvalidKeyName(KeyName),
    #[error("record is missing canonical key `{0}`")]
    MissingCanonicalKey(KeyName),
    #[error("unknown target: {0}")]
    UnknownTarget(String),
    #[error("unknown bucket {0}")]
    UnknownBucket(BucketId),
    #[error("unknown schema {0}")]
    UnknownSchema(SchemaId),
    #[error("unknown experience {0}")]
    UnknownExperience(ExperienceId),
    #[error("value for `{0}` is not storable")]
    InvalidValue(KeyName),
    #[error("source quality {0} outside [0, 1]")]
    InvalidSourceQuality(f64),
    #[error("{0} must not be empty")]
    EmptyText(&'static str),
    #[error("id {0} already exists")]
    DuplicateId(String),
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
    #[error("corrupt event log: {0}")]
    CorruptLog(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Durability knobs for an on-disk store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PersistOptions {
    /// `fsync` after every appended log line.
    pub sync: bool,
    /// Write a full snapshot every this many versions; 0 disables.
    pub snapshot_every: u64,
}

impl Default for PersistOptions {
    fn default() -> Self {
        PersistOptions {
            sync: true,
            snapshot_every: 1000,
        }
    }
}

#[derive(Debug)]
struct Persistence {
    root: PathBuf,
    log: log::EventLog,
    options: PersistOptions,
}

impl Persistence {
    fn snapshot_dir(&self) -> PathBuf {
        self.root.join("snapshots")
    }
}

/// Fields of a new bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketDef {
    pub name: String,
    pub centric_info: String,
    pub canonical_keys: Vec<KeyName>,
    pub optional_keys: Vec<KeyName>,
}

impl BucketDef {
    /// A bucket named after its centric info.
    pub fn new(centric_info: impl Into<String>, canonical_keys: &[&str]) -> Self {
        let centric_info = centric_info.into();
        BucketDef {
            name: centric_info.clone(),
            centric_info,
            canonical_keys: canonical_keys.iter().map(|k| k.to_string()).collect(),
            optional_keys: Vec::new(),
        }
    }
}

/// Fields of a new experience; the store assigns the id.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NewExperience {
    pub raw_text: String,
    pub received_at: Timestamp,
    pub source_tag: String,
    pub source_quality: f64,
}

/// Fields of a new record; the store assigns the id and marks it active.
#[derive(Debug, Clone, PartialEq)]
pub struct NewRecord {
    pub values: BTreeMap<KeyName, Value>,
    pub created_at: Timestamp,
    pub source_quality: f64,
    pub supports: u64,
    pub experience_id: ExperienceId,
}

#[derive(Debug)]
pub struct Store {
    state: RwLock<Arc<MemoryPool>>,
    writers: Mutex<BTreeMap<BucketId, Arc<Mutex<()>>>>,
    persistence: Option<Mutex<Persistence>>,
}

impl Default for Store {
    fn default() -> Self {
        Store::in_memory()
    }
}

impl Store {
    /// A store without persistence.
    pub fn in_memory() -> Self {
        Store::from_pool(MemoryPool::default())
    }

    pub fn from_pool(pool: MemoryPool) -> Self {
        Store {
            state: RwLock::new(Arc::new(pool)),
            writers: Mutex::new(BTreeMap::new()),
            persistence: None,
        }
    }

    /// Opens (or creates) an on-disk store at `root`, recovering state from
    /// the newest readable snapshot plus the log entries after it.
    pub fn open(root: impl AsRef<Path>, options: PersistOptions) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        std::fs::create_dir_all(root.join("snapshots"))?;
        let (pool, valid_len) = recover(&root)?;
        let log = log::EventLog::open(&root.join("log.jsonl"), valid_len, options.sync)?;
        Ok(Store {
            state: RwLock::new(Arc::new(pool)),
            writers: Mutex::new(BTreeMap::new()),
            persistence: Some(Mutex::new(Persistence { root, log, options })),
        })
    }

    /// Immutable view of the current state.
    pub fn pool(&self) -> Arc<MemoryPool> {
        Arc::clone(&self.state.read().expect("store lock poisoned"))
    }

    pub fn version(&self) -> u64 {
        self.state.read().expect("store lock poisoned").version
    }

    pub fn data_root(&self) -> Option<PathBuf> {
        self.persistence
            .as_ref()
            .map(|p| p.lock().expect("persistence lock poisoned").root.clone())
    }

    /// The single-writer lock of one bucket.
    pub fn bucket_lock(&self, bucket: &BucketId) -> Arc<Mutex<()>> {
        let mut writers = self.writers.lock().expect("writer table poisoned");
        Arc::clone(writers.entry(bucket.clone()).or_default())
    }

    /// Checks, logs and applies one mutation built against the current state.
    /// `build` receives the version the mutation will carry and may decline
    /// to mutate by returning `None`.
    fn commit<T>(
        &self,
        build: impl FnOnce(&MemoryPool, u64) -> Result<(Option<Mutation>, T), StoreError>,
    ) -> Result<T, StoreError> {
        let mut state = self.state.write().expect("store lock poisoned");
        let next = state.version + 1;
        let (mutation, out) = build(&state, next)?;
        let Some(mutation) = mutation else {
            return Ok(out);
        };
        state.check(&mutation)?;
        if let Some(p) = &self.persistence {
            let mut p = p.lock().expect("persistence lock poisoned");
            p.log.append(next, &mutation)?;
            Arc::make_mut(&mut state).apply(mutation);
            let every = p.options.snapshot_every;
            if every > 0 && next.is_multiple_of(every) {
                let path = p.snapshot_dir().join(snapshot::file_name(next));
                Snapshot::capture(&state).write_to(&path)?;
            }
        } else {
            Arc::make_mut(&mut state).apply(mutation);
        }
        Ok(out)
    }

    /// Applies an externally built mutation (used by replay tooling).
    pub fn apply(&self, mutation: Mutation) -> Result<u64, StoreError> {
        self.commit(|_, next| Ok((Some(mutation), next)))
    }

    pub fn set_goal(&self, goal: &str) -> Result<(), StoreError> {
        self.commit(|_, _| {
            Ok((
                Some(Mutation::SetGoal {
                    goal: goal.to_string(),
                }),
                (),
            ))
        })
    }

    /// Creates a bucket. Idempotent: an existing bucket with identical
    /// centric info and canonical keys is returned instead.
    pub fn put_bucket(&self, def: BucketDef) -> Result<BucketId, StoreError> {
        mutation::validate_keys(&def.canonical_keys)?;
        self.commit(|pool, next| {
            if let Some(existing) = pool
                .buckets
                .values()
                .find(|b| b.centric_info == def.centric_info && b.canonical_keys == def.canonical_keys)
            {
                return Ok((None, existing.id.clone()));
            }
            let id = BucketId::from_seq(next);
            let m = Mutation::PutBucket {
                id: id.clone(),
                name: def.name,
                centric_info: def.centric_info,
                canonical_keys: def.canonical_keys,
                optional_keys: def.optional_keys,
            };
            Ok((Some(m), id))
        })
    }

    pub fn put_experience(&self, exp: NewExperience) -> Result<ExperienceId, StoreError> {
        self.commit(|_, next| {
            let id = ExperienceId::from_seq(next);
            let m = Mutation::PutExperience {
                experience: Experience {
                    id: id.clone(),
                    raw_text: exp.raw_text,
                    received_at: exp.received_at,
                    source_tag: exp.source_tag,
                    source_quality: exp.source_quality,
                },
            };
            Ok((Some(m), id))
        })
    }

    pub fn create_schema(
        &self,
        bucket: &BucketId,
        meta: &str,
        watched_keys: Vec<KeyName>,
        created_at: Timestamp,
    ) -> Result<SchemaId, StoreError> {
        self.commit(|_, next| {
            let id = SchemaId::from_seq(next);
            let m = Mutation::CreateSchema {
                bucket: bucket.clone(),
                id: id.clone(),
                meta: meta.to_string(),
                watched_keys,
                created_at,
            };
            Ok((Some(m), id))
        })
    }

    pub fn create_element(
        &self,
        bucket: &BucketId,
        schema: &SchemaId,
        label: &str,
    ) -> Result<ElementId, StoreError> {
        self.commit(|_, next| {
            let id = ElementId::from_seq(next);
            let m = Mutation::CreateElement {
                bucket: bucket.clone(),
                schema: schema.clone(),
                id: id.clone(),
                label: label.to_string(),
            };
            Ok((Some(m), id))
        })
    }

    /// Appends an active record to an element. The record must carry every
    /// canonical key of its bucket.
    pub fn insert_record(
        &self,
        bucket: &BucketId,
        schema: &SchemaId,
        element: &ElementId,
        record: NewRecord,
    ) -> Result<RecordId, StoreError> {
        self.commit(|_, next| {
            let id = RecordId::from_seq(next);
            let m = Mutation::InsertRecord {
                bucket: bucket.clone(),
                schema: schema.clone(),
                element: element.clone(),
                record: Record {
                    id: id.clone(),
                    values: record.values,
                    created_at: record.created_at,
                    source_quality: record.source_quality,
                    supports: record.supports,
                    active: true,
                    experience_id: record.experience_id,
                },
            };
            Ok((Some(m), id))
        })
    }

    pub fn set_active(
        &self,
        bucket: &BucketId,
        schema: &SchemaId,
        element: &ElementId,
        record: &RecordId,
        active: bool,
    ) -> Result<(), StoreError> {
        self.commit(|_, _| {
            let m = Mutation::SetActive {
                bucket: bucket.clone(),
                schema: schema.clone(),
                element: element.clone(),
                record: record.clone(),
                active,
            };
            Ok((Some(m), ()))
        })
    }

    pub fn add_support(
        &self,
        bucket: &BucketId,
        schema: &SchemaId,
        element: &ElementId,
        record: &RecordId,
    ) -> Result<(), StoreError> {
        self.commit(|_, _| {
            let m = Mutation::AddSupport {
                bucket: bucket.clone(),
                schema: schema.clone(),
                element: element.clone(),
                record: record.clone(),
            };
            Ok((Some(m), ()))
        })
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot::capture(&self.pool())
    }

    pub fn restore(snapshot: &Snapshot) -> Result<MemoryPool, StoreError> {
        snapshot.restore()
    }

    /// Writes a snapshot of the current state into the data root.
    pub fn write_snapshot(&self) -> Result<Option<PathBuf>, StoreError> {
        let Some(p) = &self.persistence else {
            return Ok(None);
        };
        let state = self.state.read().expect("store lock poisoned");
        let p = p.lock().expect("persistence lock poisoned");
        let path = p.snapshot_dir().join(snapshot::file_name(state.version));
        Snapshot::capture(&state).write_to(&path)?;
        Ok(Some(path))
    }

    /// Flushes and syncs the event log.
    pub fn flush(&self) -> Result<(), StoreError> {
        if let Some(p) = &self.persistence {
            p.lock().expect("persistence lock poisoned").log.flush()?;
        }
        Ok(())
    }
}

/// Rebuilds the pool from `<root>`: newest readable snapshot, then every log
/// entry past it. Returns the pool and the durable length of the log.
pub fn recover(root: &Path) -> Result<(MemoryPool, u64), StoreError> {
    let mut pool = MemoryPool::default();
    for (version, path) in snapshot::list(&root.join("snapshots"))? {
        match Snapshot::read_from(&path) {
            Ok(snap) => {
                pool = snap.restore()?;
                break;
            }
            Err(e) => tracing::warn!(version, error = %e, "skipping unreadable snapshot"),
        }
    }
    let scan = log::scan(&root.join("log.jsonl"))?;
    if scan.torn {
        tracing::warn!(entries = scan.entries.len(), "event log has a torn tail");
    }
    for entry in scan.entries {
        if entry.version <= pool.version {
            continue;
        }
        if entry.version != pool.version + 1 {
            return Err(StoreError::CorruptLog(format!(
                "expected version {}, found {}",
                pool.version + 1,
                entry.version
            )));
        }
        pool.check(&entry.mutation)
            .map_err(|e| StoreError::CorruptLog(format!("version {}: {e}", entry.version)))?;
        pool.apply(entry.mutation);
    }
    Ok((pool, scan.valid_len))
}
