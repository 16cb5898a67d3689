//! The engine facade the service, CLI and evaluation harness drive: one
//! store, one provider, one configuration and a clock.

use std::path::Path as FsPath;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaptation::{self, AdaptError, AdaptationReport, Adapter, SweepRow};
use crate::clock::{Clock, SystemClock};
use crate::config::{ConfigError, EngineConfig};
use crate::conflict::ConflictPolicy;
use crate::ids::{BucketId, ElementId, ExperienceId, RecordId, SchemaId};
use crate::init::{self, GoalSpec, InitError, LayoutSummary};
use crate::protocol::{Direct, ProtocolError, Subprocess, Transport};
use crate::provider::remote::RemoteProvider;
use crate::provider::{CognitionProvider, ExtractionRules, LexicalProvider, ProviderError, Segment};
use crate::query::{self, QueryError, ResultTable};
use crate::retrieval::orchestrator::{Answer, Orchestrator};
use crate::retrieval::{QueryClass, Tools};
use crate::store::{Bucket, Element, Experience, MemoryPool, NewExperience, RecordView, Schema, Store, StoreError};
use crate::value::{KeyName, Timestamp, Value};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Init(#[from] InitError),
    #[error(transparent)]
    Adapt(#[from] AdaptError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid request: {0}")]
    Invalid(String),
}

impl EngineError {
    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::Config(_) => "ConfigInvalid",
            EngineError::Store(StoreError::Io(_)) => "StorageError",
            EngineError::Store(StoreError::CorruptLog(_) | StoreError::CorruptSnapshot(_)) => "StorageCorrupt",
            EngineError::Store(_) => "InvalidRecord",
            EngineError::Init(InitError::EmptySpec) => "EmptySpec",
            EngineError::Init(InitError::DuplicateBucketName(_)) => "DuplicateBucketName",
            EngineError::Init(InitError::Invalid(_)) => "InvalidSpec",
            EngineError::Init(InitError::NonEmptyStore) => "NonEmptyStore",
            EngineError::Init(InitError::Store(_)) => "StorageError",
            EngineError::Adapt(AdaptError::InvalidTheta { .. }) => "InvalidTheta",
            EngineError::Adapt(AdaptError::NoBuckets) => "NoBuckets",
            EngineError::Adapt(AdaptError::EmptyExperience) => "EmptyExperience",
            EngineError::Adapt(AdaptError::ProviderFailure { .. }) => "ProviderFailure",
            EngineError::Adapt(AdaptError::Store(_)) => "StorageError",
            EngineError::Adapt(AdaptError::Conflict(_)) => "ConflictError",
            EngineError::Query(e) => e.code(),
            EngineError::Provider(_) => "ProviderFailure",
            EngineError::Protocol(_) => "ToolFailure",
            EngineError::NotFound(_) => "NotFound",
            EngineError::Invalid(_) => "InvalidRequest",
        }
    }

    /// True when the caller, not the engine, is at fault.
    pub fn is_caller_error(&self) -> bool {
        !matches!(
            self.code(),
            "StorageError" | "StorageCorrupt" | "ProviderFailure" | "ConflictError" | "ToolFailure"
        )
    }
}

/// Serializes every call into a provider that cannot run concurrently.
pub struct SerializedProvider {
    inner: Arc<dyn CognitionProvider>,
    gate: Mutex<()>,
}

impl SerializedProvider {
    pub fn new(inner: Arc<dyn CognitionProvider>) -> Self {
        SerializedProvider {
            inner,
            gate: Mutex::new(()),
        }
    }

    fn with<T>(&self, f: impl FnOnce(&dyn CognitionProvider) -> T) -> T {
        let _g = self.gate.lock().unwrap_or_else(|p| p.into_inner());
        f(self.inner.as_ref())
    }
}

impl CognitionProvider for SerializedProvider {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn segment(&self, experience: &Experience, buckets: &[&Bucket]) -> Result<Vec<Segment>, ProviderError> {
        self.with(|p| p.segment(experience, buckets))
    }

    fn schema_similarity(&self, segment: &Segment, schema: &Schema) -> f64 {
        self.with(|p| p.schema_similarity(segment, schema))
    }

    fn element_compatibility(&self, segment: &Segment, element: &Element) -> f64 {
        self.with(|p| p.element_compatibility(segment, element))
    }

    fn value_conflict(&self, key: &str, a: &Value, b: &Value, policy: &ConflictPolicy) -> bool {
        self.with(|p| p.value_conflict(key, a, b, policy))
    }

    fn relevance(&self, query: &str, text: &str) -> f64 {
        self.with(|p| p.relevance(query, text))
    }

    fn classify(&self, question: &str) -> Option<QueryClass> {
        self.with(|p| p.classify(question))
    }
}

/// Body of an ingest call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestRequest {
    pub raw_text: String,
    #[serde(default = "default_source_tag")]
    pub source_tag: String,
    #[serde(default = "default_quality")]
    pub source_quality: f64,
    /// Defaults to the engine clock.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub received_at: Option<Timestamp>,
}

fn default_source_tag() -> String {
    "user".to_string()
}

fn default_quality() -> f64 {
    1.0
}

impl IngestRequest {
    pub fn new(raw_text: impl Into<String>) -> Self {
        IngestRequest {
            raw_text: raw_text.into(),
            source_tag: default_source_tag(),
            source_quality: default_quality(),
            received_at: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketSummary {
    pub id: BucketId,
    pub name: String,
    pub centric_info: String,
    pub canonical_keys: Vec<KeyName>,
    pub optional_keys: Vec<KeyName>,
    pub schemas: usize,
    pub records: usize,
}

impl BucketSummary {
    fn of(b: &Bucket) -> Self {
        BucketSummary {
            id: b.id.clone(),
            name: b.name.clone(),
            centric_info: b.centric_info.clone(),
            canonical_keys: b.canonical_keys.clone(),
            optional_keys: b.optional_keys.clone(),
            schemas: b.schemas.len(),
            records: b.records().count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementSummary {
    pub id: ElementId,
    pub label: String,
    pub records: usize,
    pub active_records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaSummary {
    pub id: SchemaId,
    pub meta: String,
    pub watched_keys: Vec<KeyName>,
    pub created_at: Timestamp,
    pub elements: Vec<ElementSummary>,
}

impl SchemaSummary {
    fn of(s: &Schema) -> Self {
        SchemaSummary {
            id: s.id.clone(),
            meta: s.meta.clone(),
            watched_keys: s.watched_keys.clone(),
            created_at: s.created_at,
            elements: s
                .elements
                .values()
                .map(|e| ElementSummary {
                    id: e.id.clone(),
                    label: e.label.clone(),
                    records: e.records.len(),
                    active_records: e.active_records().count(),
                })
                .collect(),
        }
    }
}

/// Whatever an id names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Inspection {
    Bucket {
        bucket: BucketSummary,
        schemas: Vec<SchemaSummary>,
    },
    Schema {
        bucket: BucketId,
        schema: SchemaSummary,
    },
    Element {
        bucket: BucketId,
        schema: SchemaId,
        element: Element,
    },
    Record(RecordView),
    Experience(Experience),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
    pub store_version: u64,
    pub provider: String,
    pub buckets: usize,
    pub experiences: usize,
    pub records: usize,
}

pub struct Engine {
    store: Store,
    provider: Arc<dyn CognitionProvider>,
    config: EngineConfig,
    clock: Arc<dyn Clock>,
    // initialization excludes adaptation; adaptations share it
    structure: RwLock<()>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("provider", &self.provider.name())
            .field("data_root", &self.config.data_root)
            .field("version", &self.store.version())
            .finish()
    }
}

/// Builds the provider a configuration asks for.
pub fn provider_from_config(config: &EngineConfig) -> Result<Arc<dyn CognitionProvider>, EngineError> {
    if let Some(cmd) = &config.provider.command {
        let (program, args) = cmd.split_first().ok_or_else(|| EngineError::Invalid("empty provider command".into()))?;
        let transport = Subprocess::spawn(program, args)?;
        return Ok(Arc::new(RemoteProvider::new(program.clone(), Box::new(transport))));
    }
    let rules = match &config.provider.rules {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: path.clone(),
                source,
            })?;
            ExtractionRules::from_json(&text)?
        }
        None => ExtractionRules::default(),
    };
    Ok(Arc::new(LexicalProvider::new(rules)?))
}

impl Engine {
    /// Opens (or recovers) the store named by `config.data_root`, or an
    /// in-memory store when it is unset.
    pub fn new(config: EngineConfig, provider: Arc<dyn CognitionProvider>, clock: Arc<dyn Clock>) -> Result<Self, EngineError> {
        config.validate()?;
        let store = match &config.data_root {
            Some(root) => Store::open(root, config.persistence.into())?,
            None => Store::in_memory(),
        };
        let provider: Arc<dyn CognitionProvider> = if provider.single_flight() {
            Arc::new(SerializedProvider::new(provider))
        } else {
            provider
        };
        Ok(Engine {
            store,
            provider,
            config,
            clock,
            structure: RwLock::new(()),
        })
    }

    /// Provider from the config and the system clock.
    pub fn from_config(config: EngineConfig) -> Result<Self, EngineError> {
        let provider = provider_from_config(&config)?;
        Engine::new(config, provider, Arc::new(SystemClock))
    }

    /// In-memory engine with default settings.
    pub fn in_memory(provider: Arc<dyn CognitionProvider>, clock: Arc<dyn Clock>) -> Self {
        Engine::new(EngineConfig::default(), provider, clock).expect("default config is valid")
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn pool(&self) -> Arc<MemoryPool> {
        self.store.pool()
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn provider(&self) -> &Arc<dyn CognitionProvider> {
        &self.provider
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn init(&self, spec: &GoalSpec, force: bool) -> Result<LayoutSummary, EngineError> {
        let _excl = self.structure.write().unwrap_or_else(|p| p.into_inner());
        Ok(init::initialize(spec, &self.store, force, self.clock.now())?)
    }

    pub fn layout(&self) -> LayoutSummary {
        init::layout(&self.store.pool())
    }

    fn adapter(&self) -> Adapter<'_> {
        Adapter {
            store: &self.store,
            provider: self.provider.as_ref(),
            config: self.config.adaptation,
            policy: &self.config.conflict,
            scoring: &self.config.scoring,
            clock: self.clock.as_ref(),
        }
    }

    pub fn ingest(&self, req: IngestRequest) -> Result<AdaptationReport, EngineError> {
        if !(0.0..=1.0).contains(&req.source_quality) {
            return Err(EngineError::Invalid(format!("source_quality {} outside [0, 1]", req.source_quality)));
        }
        let _shared = self.structure.read().unwrap_or_else(|p| p.into_inner());
        let exp = NewExperience {
            raw_text: req.raw_text,
            received_at: req.received_at.unwrap_or_else(|| self.clock.now()),
            source_tag: req.source_tag,
            source_quality: req.source_quality,
        };
        let report = self.adapter().adapt(exp)?;
        tracing::debug!(experience = %report.experience_id, segments = report.per_segment.len(), "ingested");
        Ok(report)
    }

    pub fn query(&self, text: &str) -> Result<ResultTable, EngineError> {
        Ok(query::run(text, &self.store.pool())?)
    }

    /// In-process tools over the current snapshot.
    pub fn tools(&self) -> Tools {
        Tools {
            pool: self.store.pool(),
            provider: self.provider.clone(),
        }
    }

    pub fn answer(&self, question: &str, budget: Option<usize>) -> Answer {
        let tools = self.tools();
        let pool = tools.pool.clone();
        let mut transport = Direct(tools);
        self.answer_over(&pool, &mut transport, question, budget)
    }

    /// Answers through an arbitrary tool transport, e.g. a tool server
    /// subprocess. `pool` is the snapshot used for planning.
    pub fn answer_over(
        &self,
        pool: &MemoryPool,
        transport: &mut dyn Transport,
        question: &str,
        budget: Option<usize>,
    ) -> Answer {
        Orchestrator::new(pool, self.provider.as_ref(), transport, self.config.retrieval, self.clock.now())
            .answer(question, budget)
    }

    pub fn buckets(&self) -> Vec<BucketSummary> {
        self.store.pool().buckets.values().map(|b| BucketSummary::of(b)).collect()
    }

    pub fn schemas(&self, bucket: &str) -> Result<Vec<SchemaSummary>, EngineError> {
        let pool = self.store.pool();
        let b = pool
            .find_bucket(bucket)
            .ok_or_else(|| EngineError::NotFound(format!("bucket {bucket}")))?;
        Ok(b.schemas.values().map(SchemaSummary::of).collect())
    }

    pub fn record(&self, id: &str) -> Result<RecordView, EngineError> {
        self.store
            .pool()
            .find_record(&RecordId::from(id))
            .ok_or_else(|| EngineError::NotFound(format!("record {id}")))
    }

    /// Looks up any bucket, schema, element, record or experience id (or a
    /// bucket name).
    pub fn inspect(&self, id: &str) -> Result<Inspection, EngineError> {
        let pool = self.store.pool();
        let not_found = || EngineError::NotFound(id.to_string());
        if RecordId::matches_kind(id) {
            return pool.find_record(&RecordId::from(id)).map(Inspection::Record).ok_or_else(not_found);
        }
        if ExperienceId::matches_kind(id) {
            return pool
                .experience(&ExperienceId::from(id))
                .cloned()
                .map(Inspection::Experience)
                .ok_or_else(not_found);
        }
        if SchemaId::matches_kind(id) {
            let sid = SchemaId::from(id);
            return pool
                .buckets
                .values()
                .find_map(|b| {
                    b.schemas.get(&sid).map(|s| Inspection::Schema {
                        bucket: b.id.clone(),
                        schema: SchemaSummary::of(s),
                    })
                })
                .ok_or_else(not_found);
        }
        if ElementId::matches_kind(id) {
            let eid = ElementId::from(id);
            return pool
                .buckets
                .values()
                .find_map(|b| {
                    b.schemas.values().find_map(|s| {
                        s.elements.get(&eid).map(|e| Inspection::Element {
                            bucket: b.id.clone(),
                            schema: s.id.clone(),
                            element: e.clone(),
                        })
                    })
                })
                .ok_or_else(not_found);
        }
        let b = pool.find_bucket(id).ok_or_else(not_found)?;
        Ok(Inspection::Bucket {
            bucket: BucketSummary::of(b),
            schemas: b.schemas.values().map(SchemaSummary::of).collect(),
        })
    }

    pub fn health(&self) -> Health {
        let pool = self.store.pool();
        Health {
            status: "ok".into(),
            version: VERSION.into(),
            store_version: pool.version,
            provider: self.provider.name().to_string(),
            buckets: pool.buckets.len(),
            experiences: pool.experiences.len(),
            records: pool.record_count(),
        }
    }

    /// Replays `stream` from the current state once per θ_meta value, on
    /// copies; the engine itself is not modified.
    pub fn sweep(&self, stream: &[NewExperience], thetas: &[f64]) -> Result<Vec<SweepRow>, EngineError> {
        Ok(adaptation::sweep_theta(
            &self.store.pool(),
            stream,
            thetas,
            self.provider.as_ref(),
            self.config.adaptation,
            &self.config.conflict,
            &self.config.scoring,
            self.clock.as_ref(),
        )?)
    }

    /// Forces buffered log writes to disk.
    pub fn flush(&self) -> Result<(), EngineError> {
        Ok(self.store.flush()?)
    }

    /// Writes a snapshot now (on-disk stores only).
    pub fn snapshot_to_disk(&self) -> Result<Option<std::path::PathBuf>, EngineError> {
        Ok(self.store.write_snapshot()?)
    }

    pub fn data_root(&self) -> Option<&FsPath> {
        self.config.data_root.as_deref()
    }
}
