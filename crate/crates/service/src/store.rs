//! Summary-only retention: one JSON file per artifact holding the summary
//! and a handful of metadata fields.

use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use ehrsum_core::summarizer::{BackendKind, SummaryDocument};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactTimestamps {
    pub generated_at: DateTime<Utc>,
    pub stored_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredArtifact {
    pub artifact_id: String,
    pub summary: SummaryDocument,
    pub patient_ref_hash: String,
    pub timestamps: ArtifactTimestamps,
    pub backend: BackendKind,
}

/// Top-level keys of a persisted artifact.
pub const ARTIFACT_FIELDS: [&str; 5] = ["artifact_id", "backend", "patient_ref_hash", "summary", "timestamps"];

#[derive(Debug, Clone)]
pub struct ArtifactStore {
    dir: PathBuf,
}

/// Artifact ids are hyphenated UUIDs; anything else never touches the disk.
pub fn is_artifact_id(id: &str) -> bool {
    uuid::Uuid::try_parse(id).is_ok_and(|u| u.hyphenated().to_string() == id)
}

impl ArtifactStore {
    pub fn open(dir: impl AsRef<Path>) -> io::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    /// Writes through a temporary file so readers never see half an artifact.
    pub fn put(&self, artifact: &StoredArtifact) -> io::Result<()> {
        let body = serde_json::to_vec_pretty(artifact)?;
        let tmp = self.dir.join(format!(".{}.tmp", artifact.artifact_id));
        std::fs::write(&tmp, body)?;
        std::fs::rename(tmp, self.path(&artifact.artifact_id))
    }

    pub fn get(&self, id: &str) -> io::Result<Option<StoredArtifact>> {
        if !is_artifact_id(id) {
            return Ok(None);
        }
        match std::fs::read(self.path(id)) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }
}
