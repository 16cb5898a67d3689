//! Goal-driven initialization: a declarative [`GoalSpec`] becomes buckets
//! and empty schema templates before any experience arrives.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{BucketId, SchemaId};
use crate::store::model::normalize_name;
use crate::store::{BucketDef, MemoryPool, Store, StoreError};
use crate::value::{KeyName, Timestamp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateSpec {
    pub meta: String,
    #[serde(default)]
    pub watched_keys: Vec<KeyName>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BucketSpec {
    pub name: String,
    pub centric_info: String,
    pub canonical_keys: Vec<KeyName>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub optional_keys: Vec<KeyName>,
    #[serde(default)]
    pub schema_templates: Vec<TemplateSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalSpec {
    pub goal: String,
    pub buckets: Vec<BucketSpec>,
}

impl GoalSpec {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// One problem found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum Diagnostic {
    EmptySpec,
    EmptyBucketName { index: usize },
    DuplicateBucketName { name: String },
    NoCanonicalKeys { bucket: String },
    InvalidKeyName { bucket: String, key: String },
    DuplicateKey { bucket: String, key: String },
    EmptyTemplateMeta { bucket: String },
    UndeclaredWatchedKey { bucket: String, meta: String, key: String },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::EmptySpec => write!(f, "spec declares no buckets"),
            Diagnostic::EmptyBucketName { index } => write!(f, "bucket #{index} has an empty name"),
            Diagnostic::DuplicateBucketName { name } => write!(f, "bucket name `{name}` is used more than once"),
            Diagnostic::NoCanonicalKeys { bucket } => write!(f, "bucket `{bucket}` has no canonical keys"),
            Diagnostic::InvalidKeyName { bucket, key } => write!(f, "bucket `{bucket}` declares invalid key `{key}`"),
            Diagnostic::DuplicateKey { bucket, key } => write!(f, "bucket `{bucket}` declares key `{key}` twice"),
            Diagnostic::EmptyTemplateMeta { bucket } => write!(f, "bucket `{bucket}` has a template with empty meta"),
            Diagnostic::UndeclaredWatchedKey { bucket, meta, key } => {
                write!(f, "template `{meta}` in bucket `{bucket}` watches undeclared key `{key}`")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum InitError {
    #[error("spec declares no buckets")]
    EmptySpec,
    #[error("bucket name `{0}` is used more than once")]
    DuplicateBucketName(String),
    #[error("invalid goal spec: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
    #[error("memory is not empty; pass force to initialize anyway")]
    NonEmptyStore,
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Every violation in `spec`, without touching any store.
pub fn validate(spec: &GoalSpec) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if spec.buckets.is_empty() {
        out.push(Diagnostic::EmptySpec);
    }
    let mut names = BTreeSet::new();
    for (i, b) in spec.buckets.iter().enumerate() {
        let normalized = normalize_name(&b.name);
        if normalized.is_empty() {
            out.push(Diagnostic::EmptyBucketName { index: i });
        } else if !names.insert(normalized) {
            out.push(Diagnostic::DuplicateBucketName { name: b.name.clone() });
        }
        if b.canonical_keys.is_empty() {
            out.push(Diagnostic::NoCanonicalKeys { bucket: b.name.clone() });
        }
        let mut keys = BTreeSet::new();
        for k in b.canonical_keys.iter().chain(&b.optional_keys) {
            if k.trim().is_empty() {
                out.push(Diagnostic::InvalidKeyName {
                    bucket: b.name.clone(),
                    key: k.clone(),
                });
            } else if !keys.insert(k.as_str()) {
                out.push(Diagnostic::DuplicateKey {
                    bucket: b.name.clone(),
                    key: k.clone(),
                });
            }
        }
        for t in &b.schema_templates {
            if t.meta.trim().is_empty() {
                out.push(Diagnostic::EmptyTemplateMeta { bucket: b.name.clone() });
            }
            for k in &t.watched_keys {
                if !keys.contains(k.as_str()) {
                    out.push(Diagnostic::UndeclaredWatchedKey {
                        bucket: b.name.clone(),
                        meta: t.meta.clone(),
                        key: k.clone(),
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaLayout {
    pub id: SchemaId,
    pub meta: String,
    pub watched_keys: Vec<KeyName>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketLayout {
    pub id: BucketId,
    pub name: String,
    pub centric_info: String,
    pub canonical_keys: Vec<KeyName>,
    pub optional_keys: Vec<KeyName>,
    pub schemas: Vec<SchemaLayout>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutSummary {
    pub goal: Option<String>,
    pub buckets: Vec<BucketLayout>,
}

/// Current bucket and schema structure of a pool.
pub fn layout(pool: &MemoryPool) -> LayoutSummary {
    LayoutSummary {
        goal: pool.goal.clone(),
        buckets: pool
            .buckets
            .values()
            .map(|b| BucketLayout {
                id: b.id.clone(),
                name: b.name.clone(),
                centric_info: b.centric_info.clone(),
                canonical_keys: b.canonical_keys.clone(),
                optional_keys: b.optional_keys.clone(),
                schemas: b
                    .schemas
                    .values()
                    .map(|s| SchemaLayout {
                        id: s.id.clone(),
                        meta: s.meta.clone(),
                        watched_keys: s.watched_keys.clone(),
                    })
                    .collect(),
            })
            .collect(),
    }
}

impl LayoutSummary {
    /// The layout as a goal spec, ids dropped.
    pub fn to_spec(&self) -> GoalSpec {
        GoalSpec {
            goal: self.goal.clone().unwrap_or_default(),
            buckets: self
                .buckets
                .iter()
                .map(|b| BucketSpec {
                    name: b.name.clone(),
                    centric_info: b.centric_info.clone(),
                    canonical_keys: b.canonical_keys.clone(),
                    optional_keys: b.optional_keys.clone(),
                    schema_templates: b
                        .schemas
                        .iter()
                        .map(|s| TemplateSpec {
                            meta: s.meta.clone(),
                            watched_keys: s.watched_keys.clone(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Creates the spec's buckets and empty template schemas.
///
/// With `force` on a non-empty store the layout is laid over the existing
/// memory: buckets with identical centric info and keys, and templates whose
/// meta already exists in their bucket, are reused.
pub fn initialize(spec: &GoalSpec, store: &Store, force: bool, now: Timestamp) -> Result<LayoutSummary, InitError> {
    let diagnostics = validate(spec);
    if let Some(d) = diagnostics.first() {
        return Err(match d {
            Diagnostic::EmptySpec => InitError::EmptySpec,
            Diagnostic::DuplicateBucketName { name } => InitError::DuplicateBucketName(name.clone()),
            _ => match diagnostics.iter().find_map(|d| match d {
                Diagnostic::DuplicateBucketName { name } => Some(name.clone()),
                _ => None,
            }) {
                Some(name) => InitError::DuplicateBucketName(name),
                None => InitError::Invalid(diagnostics),
            },
        });
    }
    let pool = store.pool();
    if !pool.is_empty() && !force {
        return Err(InitError::NonEmptyStore);
    }
    // a forced layout may not rename an existing bucket's meaning
    for b in &spec.buckets {
        if let Some(existing) = pool.buckets.values().find(|e| e.name_matches(&b.name)) {
            if existing.centric_info != b.centric_info || existing.canonical_keys != b.canonical_keys {
                return Err(InitError::DuplicateBucketName(b.name.clone()));
            }
        }
    }
    store.set_goal(&spec.goal)?;
    for b in &spec.buckets {
        let id = store.put_bucket(BucketDef {
            name: b.name.clone(),
            centric_info: b.centric_info.clone(),
            canonical_keys: b.canonical_keys.clone(),
            optional_keys: b.optional_keys.clone(),
        })?;
        for t in &b.schema_templates {
            let exists = store
                .pool()
                .bucket(&id)
                .is_some_and(|bucket| bucket.schemas.values().any(|s| s.meta == t.meta));
            if !exists {
                store.create_schema(&id, &t.meta, t.watched_keys.clone(), now)?;
            }
        }
    }
    Ok(layout(&store.pool()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> GoalSpec {
        serde_json::from_value(serde_json::json!({
            "goal": "Be a personal assistant that remembers habits",
            "buckets": [
                {"name": "User Trait", "centric_info": "User Trait", "canonical_keys": ["topic", "attitude"],
                 "schema_templates": [{"meta": "Drink", "watched_keys": ["attitude"]}]},
                {"name": "User Events", "centric_info": "User Events", "canonical_keys": ["topic", "time"],
                 "optional_keys": ["cups"],
                 "schema_templates": [{"meta": "Drink", "watched_keys": ["cups"]}, {"meta": "Travel"}]},
                {"name": "Agent Events", "centric_info": "Agent Events", "canonical_keys": ["topic", "time"]}
            ]
        }))
        .unwrap()
    }

    #[test]
    fn three_buckets_with_templates() {
        let store = Store::in_memory();
        let summary = initialize(&spec(), &store, false, Timestamp(0)).unwrap();
        assert_eq!(summary.buckets.len(), 3);
        assert_eq!(summary.buckets[1].schemas.len(), 2);
        let pool = store.pool();
        assert!(pool.buckets.values().flat_map(|b| b.schemas.values()).all(|s| s.elements.is_empty()));
        assert_eq!(summary.to_spec(), spec());
        assert_eq!(layout(&pool), summary);
    }

    #[test]
    fn preconditions() {
        let store = Store::in_memory();
        initialize(&spec(), &store, false, Timestamp(0)).unwrap();
        assert!(matches!(initialize(&spec(), &store, false, Timestamp(0)), Err(InitError::NonEmptyStore)));
        // forcing the same layout again reuses everything
        let again = initialize(&spec(), &store, true, Timestamp(0)).unwrap();
        assert_eq!(again.to_spec(), spec());
        let empty = GoalSpec {
            goal: "g".into(),
            buckets: vec![],
        };
        assert!(matches!(initialize(&empty, &Store::in_memory(), false, Timestamp(0)), Err(InitError::EmptySpec)));
    }

    #[test]
    fn diagnostics() {
        assert!(validate(&spec()).is_empty());
        let mut dup = spec();
        dup.buckets[2].name = "user_trait".into();
        assert_eq!(
            validate(&dup),
            vec![Diagnostic::DuplicateBucketName {
                name: "user_trait".into()
            }]
        );
        assert!(matches!(
            initialize(&dup, &Store::in_memory(), false, Timestamp(0)),
            Err(InitError::DuplicateBucketName(n)) if n == "user_trait"
        ));
        let mut watch = spec();
        watch.buckets[0].schema_templates[0].watched_keys.push("mood".into());
        let d = validate(&watch);
        assert_eq!(d.len(), 1);
        assert!(d[0].to_string().contains("mood"));
    }
}
