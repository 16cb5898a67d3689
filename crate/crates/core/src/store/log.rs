//! Append-only event log: `<root>/log.jsonl`.
//!
//! One mutation per line, framed by the newline and guarded by a CRC-32 of
//! the payload:
//!
//! ```text
//! {"version":7,"op":"insert_record","payload":{...},"crc32":1234567890}
//! ```
//!
//! The checksum covers the payload's compact JSON with object keys sorted,
//! which is exactly what is written. A line that fails to parse or whose
//! checksum does not match marks the end of the durable prefix; everything
//! from that line on is treated as a torn write and cut off when the log is
//! reopened for appending.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::mutation::Mutation;
use super::StoreError;

#[derive(Debug, Serialize, Deserialize)]
struct Envelope {
    version: u64,
    op: String,
    payload: serde_json::Value,
    crc32: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub version: u64,
    pub mutation: Mutation,
}

/// Result of scanning a log file.
#[derive(Debug, Default)]
pub struct LogScan {
    pub entries: Vec<LogEntry>,
    /// Byte length of the durable prefix.
    pub valid_len: u64,
    /// True if bytes after the durable prefix were ignored.
    pub torn: bool,
}

pub fn checksum(payload: &serde_json::Value) -> u32 {
    crc32fast::hash(payload.to_string().as_bytes())
}

/// Renders one log line, including the trailing newline.
pub fn encode_line(version: u64, mutation: &Mutation) -> String {
    let tagged = serde_json::to_value(mutation).expect("mutation serializes");
    let payload = tagged.get("payload").cloned().unwrap_or(serde_json::Value::Null);
    let envelope = Envelope {
        version,
        op: mutation.op_name().to_string(),
        crc32: checksum(&payload),
        payload,
    };
    let mut line = serde_json::to_string(&envelope).expect("envelope serializes");
    line.push('\n');
    line
}

fn decode_line(line: &str) -> Option<LogEntry> {
    let envelope: Envelope = serde_json::from_str(line).ok()?;
    if checksum(&envelope.payload) != envelope.crc32 {
        return None;
    }
    let tagged = serde_json::json!({ "op": envelope.op, "payload": envelope.payload });
    let mutation: Mutation = serde_json::from_value(tagged).ok()?;
    Some(LogEntry {
        version: envelope.version,
        mutation,
    })
}

/// Reads the durable prefix of the log at `path`. A missing file is an
/// empty log.
pub fn scan(path: &Path) -> Result<LogScan, StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(LogScan::default()),
        Err(e) => return Err(e.into()),
    };
    let mut reader = BufReader::new(file);
    let mut scan = LogScan::default();
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf)?;
        if n == 0 {
            break;
        }
        let complete = buf.last() == Some(&b'\n');
        let entry = complete
            .then(|| std::str::from_utf8(&buf[..n - 1]).ok())
            .flatten()
            .and_then(decode_line);
        match entry {
            Some(entry) => {
                scan.valid_len += n as u64;
                scan.entries.push(entry);
            }
            None => {
                scan.torn = true;
                break;
            }
        }
    }
    Ok(scan)
}

/// Append handle on the event log.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
    sync: bool,
}

impl EventLog {
    /// Opens the log for appending, cutting any torn tail at `valid_len`.
    pub fn open(path: &Path, valid_len: u64, sync: bool) -> Result<Self, StoreError> {
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .write(true)
            .truncate(false)
            .open(path)?;
        if file.metadata()?.len() != valid_len {
            tracing::warn!(path = %path.display(), valid_len, "truncating torn event log tail");
            file.set_len(valid_len)?;
        }
        file.seek(SeekFrom::End(0))?;
        Ok(EventLog {
            path: path.to_path_buf(),
            file,
            sync,
        })
    }

    pub fn append(&mut self, version: u64, mutation: &Mutation) -> Result<(), StoreError> {
        let line = encode_line(version, mutation);
        self.file.write_all(line.as_bytes())?;
        if self.sync {
            self.file.sync_data()?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), StoreError> {
        self.file.flush()?;
        self.file.sync_all()?;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
