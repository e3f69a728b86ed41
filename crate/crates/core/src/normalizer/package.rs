use std::collections::{HashMap, HashSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::record::EvidenceItem;
use super::trends::TrendEntry;
use crate::fhir_client::RetrievalReport;
use crate::resource::SectionKey;

pub const SCHEMA_VERSION: &str = "ehrsum.ccp/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SectionState {
    Populated,
    Empty,
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub key: SectionKey,
    pub state: SectionState,
    pub items: Vec<EvidenceItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationWarning {
    /// `{ResourceType}/{id}` when known.
    pub source: String,
    pub message: String,
}

/// Document structure offered by a source Composition. Kept as metadata
/// for renderers; never a summary section.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositionScaffold {
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub document_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<DateTime<Utc>>,
    #[serde(default)]
    pub section_titles: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageMetadata {
    #[serde(default)]
    pub compositions: Vec<CompositionScaffold>,
    #[serde(default)]
    pub skipped_records: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PackageError {
    #[error("unsupported schema_version `{0}`")]
    SchemaVersion(String),
    #[error("expected {expected} sections in canonical order, found {found:?}")]
    SectionOrder { expected: usize, found: Vec<SectionKey> },
    #[error("evidence id `{0}` appears more than once")]
    DuplicateEvidence(String),
    #[error("item `{id}` is filed under {found} but belongs to {expected}")]
    MisfiledItem {
        id: String,
        expected: SectionKey,
        found: SectionKey,
    },
    #[error("section {key} is {state:?} but holds {count} items")]
    StateMismatch {
        key: SectionKey,
        state: SectionState,
        count: usize,
    },
    #[error("patient anchor `{0}` is not the Patient Information item")]
    PatientAnchor(String),
    #[error("item `{0}` is malformed: {1}")]
    MalformedItem(String, &'static str),
    #[error("trend cites unknown evidence `{0}`")]
    DanglingTrend(String),
    #[error("invalid context package JSON: {0}")]
    Json(String),
}

/// Immutable, section-grouped evidence for one patient.
///
/// Built by [`build_context_package`](super::build_context_package) or read
/// back from JSON; both paths enforce the same structural invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PackageParts")]
pub struct ClinicalContextPackage {
    schema_version: String,
    patient: EvidenceItem,
    sections: Vec<Section>,
    trends: Vec<TrendEntry>,
    retrieval_report: RetrievalReport,
    built_at: DateTime<Utc>,
    warnings: Vec<NormalizationWarning>,
    metadata: PackageMetadata,
    #[serde(skip)]
    index: HashMap<String, (usize, usize)>,
}

#[derive(Deserialize)]
struct PackageParts {
    schema_version: String,
    patient: EvidenceItem,
    sections: Vec<Section>,
    trends: Vec<TrendEntry>,
    retrieval_report: RetrievalReport,
    built_at: DateTime<Utc>,
    #[serde(default)]
    warnings: Vec<NormalizationWarning>,
    #[serde(default)]
    metadata: PackageMetadata,
}

impl TryFrom<PackageParts> for ClinicalContextPackage {
    type Error = PackageError;

    fn try_from(p: PackageParts) -> Result<Self, Self::Error> {
        if p.schema_version != SCHEMA_VERSION {
            return Err(PackageError::SchemaVersion(p.schema_version));
        }
        let keys: Vec<SectionKey> = p.sections.iter().map(|s| s.key).collect();
        if keys != SectionKey::ALL {
            return Err(PackageError::SectionOrder {
                expected: SectionKey::ALL.len(),
                found: keys,
            });
        }
        let mut index = HashMap::new();
        for (si, section) in p.sections.iter().enumerate() {
            let populated = !section.items.is_empty();
            if populated != (section.state == SectionState::Populated) {
                return Err(PackageError::StateMismatch {
                    key: section.key,
                    state: section.state,
                    count: section.items.len(),
                });
            }
            for (ii, item) in section.items.iter().enumerate() {
                if item.section != section.key {
                    return Err(PackageError::MisfiledItem {
                        id: item.evidence_id.clone(),
                        expected: item.section,
                        found: section.key,
                    });
                }
                if item.duplicate_count == 0 {
                    return Err(PackageError::MalformedItem(
                        item.evidence_id.clone(),
                        "duplicate_count is 0",
                    ));
                }
                if item.display.trim().is_empty() {
                    return Err(PackageError::MalformedItem(item.evidence_id.clone(), "empty display"));
                }
                if index.insert(item.evidence_id.clone(), (si, ii)).is_some() {
                    return Err(PackageError::DuplicateEvidence(item.evidence_id.clone()));
                }
            }
        }
        let anchor_ok = p.sections[0].items.first() == Some(&p.patient);
        if !anchor_ok {
            return Err(PackageError::PatientAnchor(p.patient.evidence_id));
        }
        for t in &p.trends {
            for id in std::iter::once(&t.latest_evidence_id).chain(t.prior_evidence_id.as_ref()) {
                if !index.contains_key(id) {
                    return Err(PackageError::DanglingTrend(id.clone()));
                }
            }
        }
        Ok(Self {
            schema_version: p.schema_version,
            patient: p.patient,
            sections: p.sections,
            trends: p.trends,
            retrieval_report: p.retrieval_report,
            built_at: p.built_at,
            warnings: p.warnings,
            metadata: p.metadata,
            index,
        })
    }
}

impl ClinicalContextPackage {
    pub(super) fn assemble(
        patient: EvidenceItem,
        sections: Vec<Section>,
        trends: Vec<TrendEntry>,
        retrieval_report: RetrievalReport,
        warnings: Vec<NormalizationWarning>,
        metadata: PackageMetadata,
    ) -> Result<Self, PackageError> {
        let built_at = retrieval_report.finished_at;
        PackageParts {
            schema_version: SCHEMA_VERSION.to_string(),
            patient,
            sections,
            trends,
            retrieval_report,
            built_at,
            warnings,
            metadata,
        }
        .try_into()
    }

    pub fn from_json(json: &str) -> Result<Self, PackageError> {
        serde_json::from_str(json).map_err(|e| PackageError::Json(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("package serializes")
    }

    /// SHA-256 of the compact JSON encoding, hex.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("package serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn schema_version(&self) -> &str {
        &self.schema_version
    }

    pub fn patient(&self) -> &EvidenceItem {
        &self.patient
    }

    pub fn sections(&self) -> &[Section] {
        &self.sections
    }

    pub fn section(&self, key: SectionKey) -> &Section {
        &self.sections[key as usize]
    }

    pub fn trends(&self) -> &[TrendEntry] {
        &self.trends
    }

    pub fn retrieval_report(&self) -> &RetrievalReport {
        &self.retrieval_report
    }

    pub fn built_at(&self) -> DateTime<Utc> {
        self.built_at
    }

    pub fn warnings(&self) -> &[NormalizationWarning] {
        &self.warnings
    }

    pub fn metadata(&self) -> &PackageMetadata {
        &self.metadata
    }

    pub fn item(&self, evidence_id: &str) -> Option<&EvidenceItem> {
        self.index.get(evidence_id).map(|&(s, i)| &self.sections[s].items[i])
    }

    /// All evidence items in section order.
    pub fn items(&self) -> impl Iterator<Item = &EvidenceItem> {
        self.sections.iter().flat_map(|s| s.items.iter())
    }

    pub fn evidence_ids(&self) -> HashSet<&str> {
        self.index.keys().map(String::as_str).collect()
    }
}
