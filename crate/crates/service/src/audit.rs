//! Access events. An event names who did what to which (hashed) patient and
//! how it ended; it never carries record content.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuditAction {
    Summarize,
    Ask,
    FetchSummary,
    ReadAudit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuditOutcome {
    Ok,
    Denied,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditEvent {
    pub event_id: String,
    pub at: DateTime<Utc>,
    /// Label of the API key, or `anonymous` when none matched.
    pub actor: String,
    pub action: AuditAction,
    pub patient_ref_hash: Option<String>,
    pub outcome: AuditOutcome,
}

/// Field names an event may carry; anything else is a schema violation.
pub const AUDIT_FIELDS: [&str; 6] = ["event_id", "at", "actor", "action", "patient_ref_hash", "outcome"];

/// Salted SHA-256 of a patient id, hex encoded.
pub fn patient_ref_hash(salt: &str, patient_id: &str) -> String {
    let mut h = Sha256::new();
    h.update(salt.as_bytes());
    h.update([0u8]);
    h.update(patient_id.as_bytes());
    hex::encode(h.finalize())
}

pub trait AuditSink: Send + Sync {
    fn append(&self, event: &AuditEvent) -> io::Result<()>;
    fn events(&self) -> io::Result<Vec<AuditEvent>>;
}

#[derive(Debug, Default)]
pub struct MemoryAuditSink {
    events: Mutex<Vec<AuditEvent>>,
}

impl MemoryAuditSink {
    pub fn new() -> Self {
        Self::default()
    }
}

impl AuditSink for MemoryAuditSink {
    fn append(&self, event: &AuditEvent) -> io::Result<()> {
        self.events
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(event.clone());
        Ok(())
    }

    fn events(&self) -> io::Result<Vec<AuditEvent>> {
        Ok(self.events.lock().unwrap_or_else(|e| e.into_inner()).clone())
    }
}

/// Append-only JSON lines file.
#[derive(Debug)]
pub struct JsonlAuditSink {
    path: PathBuf,
    file: Mutex<File>,
}

impl JsonlAuditSink {
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl AuditSink for JsonlAuditSink {
    fn append(&self, event: &AuditEvent) -> io::Result<()> {
        let mut line = serde_json::to_string(event)?;
        line.push('\n');
        let mut f = self.file.lock().unwrap_or_else(|e| e.into_inner());
        f.write_all(line.as_bytes())?;
        f.flush()
    }

    fn events(&self) -> io::Result<Vec<AuditEvent>> {
        let _guard = self.file.lock().unwrap_or_else(|e| e.into_inner());
        let reader = BufReader::new(File::open(&self.path)?);
        let mut out = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event(n: u32) -> AuditEvent {
        AuditEvent {
            event_id: format!("e{n}"),
            at: DateTime::from_timestamp(1_700_000_000 + n as i64, 0).unwrap(),
            actor: "ward".into(),
            action: AuditAction::Ask,
            patient_ref_hash: Some(patient_ref_hash("salt", "p1")),
            outcome: AuditOutcome::Ok,
        }
    }

    #[test]
    fn hash_is_salted_and_stable() {
        let a = patient_ref_hash("s1", "p1");
        assert_eq!(a, patient_ref_hash("s1", "p1"));
        assert_ne!(a, patient_ref_hash("s2", "p1"));
        assert_ne!(patient_ref_hash("s", "1p"), patient_ref_hash("s1", "p"));
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn jsonl_sink_appends_and_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit/events.jsonl");
        let sink = JsonlAuditSink::open(&path).unwrap();
        sink.append(&event(1)).unwrap();
        sink.append(&event(2)).unwrap();
        drop(sink);
        let sink = JsonlAuditSink::open(&path).unwrap();
        sink.append(&event(3)).unwrap();
        let ids: Vec<_> = sink.events().unwrap().into_iter().map(|e| e.event_id).collect();
        assert_eq!(ids, ["e1", "e2", "e3"]);
    }

    #[test]
    fn serialized_fields_are_the_declared_set() {
        let v = serde_json::to_value(event(1)).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        let mut want = AUDIT_FIELDS.to_vec();
        want.sort();
        assert_eq!(keys, want);
    }
}
