//! Full-state snapshots: `<root>/snapshots/<version>.snap`.
//!
//! A snapshot is a one-line JSON header carrying the body length and CRC-32,
//! followed by the pool's canonical serialization.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::model::MemoryPool;
use super::StoreError;

pub const SNAPSHOT_FORMAT: &str = "schemamem-snapshot/1";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u64,
    len: u64,
    crc32: u32,
}

/// An encoded, immutable copy of the pool at one version.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub version: u64,
    bytes: Arc<[u8]>,
}

impl Snapshot {
    pub fn capture(pool: &MemoryPool) -> Self {
        let body = pool.canonical_bytes();
        let header = Header {
            format: SNAPSHOT_FORMAT.to_string(),
            version: pool.version,
            len: body.len() as u64,
            crc32: crc32fast::hash(&body),
        };
        let mut bytes = serde_json::to_vec(&header).expect("header serializes");
        bytes.push(b'\n');
        bytes.extend_from_slice(&body);
        Snapshot {
            version: pool.version,
            bytes: bytes.into(),
        }
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self, StoreError> {
        let snap = Snapshot {
            version: 0,
            bytes: bytes.into(),
        };
        let pool = snap.restore()?;
        Ok(Snapshot {
            version: pool.version,
            ..snap
        })
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Decodes the pool, verifying length and checksum.
    pub fn restore(&self) -> Result<MemoryPool, StoreError> {
        let corrupt = |why: &str| StoreError::CorruptSnapshot(why.to_string());
        let split = self
            .bytes
            .iter()
            .position(|b| *b == b'\n')
            .ok_or_else(|| corrupt("missing header"))?;
        let header: Header = serde_json::from_slice(&self.bytes[..split])
            .map_err(|e| corrupt(&format!("bad header: {e}")))?;
        if header.format != SNAPSHOT_FORMAT {
            return Err(corrupt(&format!("unknown format {}", header.format)));
        }
        let body = &self.bytes[split + 1..];
        if body.len() as u64 != header.len {
            return Err(corrupt(&format!(
                "body is {} bytes, header says {}",
                body.len(),
                header.len
            )));
        }
        if crc32fast::hash(body) != header.crc32 {
            return Err(corrupt("checksum mismatch"));
        }
        let pool: MemoryPool =
            serde_json::from_slice(body).map_err(|e| corrupt(&format!("bad body: {e}")))?;
        if pool.version != header.version {
            return Err(corrupt("version mismatch"));
        }
        Ok(pool)
    }

    /// Writes atomically (temp file + rename).
    pub fn write_to(&self, path: &Path) -> Result<(), StoreError> {
        let tmp = path.with_extension("snap.tmp");
        std::fs::write(&tmp, &self.bytes)?;
        std::fs::File::open(&tmp)?.sync_all()?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self, StoreError> {
        Snapshot::from_bytes(std::fs::read(path)?)
    }
}

/// Snapshot files in `dir`, newest first.
pub fn list(dir: &Path) -> Result<Vec<(u64, PathBuf)>, StoreError> {
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut found = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("snap") {
            continue;
        }
        if let Some(v) = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<u64>().ok())
        {
            found.push((v, path));
        }
    }
    found.sort_by_key(|f| std::cmp::Reverse(f.0));
    Ok(found)
}

pub fn file_name(version: u64) -> String {
    format!("{version}.snap")
}
