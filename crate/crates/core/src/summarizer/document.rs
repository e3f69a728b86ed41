use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Deserializer, Serialize};

use crate::resource::SectionKey;

pub const DEFAULT_DISCLAIMER: &str = "Generated from retrieved EHR data for clinician review. \
It does not replace the source record; verify against the linked evidence before acting.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StatementKind {
    Fact,
    Trend,
    MissingData,
}

/// A number asserted by a statement together with the item it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NumericClaim {
    #[serde(deserialize_with = "number_or_string")]
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    pub evidence_id: String,
}

fn number_or_string<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    match serde_json::Value::deserialize(d)? {
        serde_json::Value::String(s) => Ok(s),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        other => Err(serde::de::Error::custom(format!(
            "expected number or string, found {other}"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalRole {
    /// Presented as the most recent value of a series.
    Latest,
    /// Presented as the value before the latest.
    Prior,
    /// A plain date attached to one item.
    Event,
}

/// A date asserted by a statement about one cited item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalClaim {
    pub evidence_id: String,
    pub date: NaiveDate,
    pub role: TemporalRole,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryStatement {
    pub text: String,
    pub section: SectionKey,
    pub kind: StatementKind,
    #[serde(default)]
    pub evidence_refs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub numeric_claims: Vec<NumericClaim>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub temporal_claims: Vec<TemporalClaim>,
}

impl SummaryStatement {
    pub fn missing(section: SectionKey, text: String) -> Self {
        Self {
            text,
            section,
            kind: StatementKind::MissingData,
            evidence_refs: vec![],
            numeric_claims: vec![],
            temporal_claims: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummarySection {
    pub key: SectionKey,
    pub statements: Vec<SummaryStatement>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum BackendKind {
    Deterministic,
    Hosted { endpoint: String, model: String },
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendKind::Deterministic => f.write_str("deterministic"),
            BackendKind::Hosted { model, .. } => write!(f, "hosted ({model})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    OmitEmpty,
    #[default]
    NoticeEmpty,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown render mode `{0}` (expected omit-empty or notice-empty)")]
pub struct UnknownRenderMode(pub String);

impl FromStr for RenderMode {
    type Err = UnknownRenderMode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().replace('-', "_").to_ascii_lowercase().as_str() {
            "omit_empty" => Ok(RenderMode::OmitEmpty),
            "notice_empty" => Ok(RenderMode::NoticeEmpty),
            _ => Err(UnknownRenderMode(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViolationCategory {
    UnresolvedEvidence,
    ValueMismatch,
    RecommendationLanguage,
    ForeignContent,
}

/// Position of a statement: section plus index within that section.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StatementRef {
    pub section: SectionKey,
    pub index: usize,
}

impl fmt::Display for StatementRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.section, self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundingViolation {
    /// Position in document order, counting from zero across sections.
    pub statement_index: usize,
    pub statement: StatementRef,
    pub category: ViolationCategory,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentMetadata {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<GroundingViolation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_reason: Option<String>,
}

impl DocumentMetadata {
    fn is_empty(&self) -> bool {
        self.violations.is_empty() && self.fallback_reason.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DocumentError {
    #[error("sections out of canonical order: {0} after {1}")]
    SectionOrder(SectionKey, SectionKey),
    #[error("statement {0} is filed under the wrong section")]
    Misfiled(StatementRef),
    #[error("invalid summary JSON: {0}")]
    Json(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DocumentParts")]
pub struct SummaryDocument {
    pub patient_header: String,
    sections: Vec<SummarySection>,
    pub disclaimer: String,
    pub ccp_fingerprint: String,
    pub backend: BackendKind,
    pub generated_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "DocumentMetadata::is_empty")]
    pub metadata: DocumentMetadata,
}

#[derive(Deserialize)]
struct DocumentParts {
    patient_header: String,
    sections: Vec<SummarySection>,
    disclaimer: String,
    ccp_fingerprint: String,
    backend: BackendKind,
    generated_at: DateTime<Utc>,
    #[serde(default)]
    metadata: DocumentMetadata,
}

fn check_sections(sections: &[SummarySection]) -> Result<(), DocumentError> {
    for pair in sections.windows(2) {
        if pair[1].key <= pair[0].key {
            return Err(DocumentError::SectionOrder(pair[1].key, pair[0].key));
        }
    }
    for s in sections {
        if let Some(index) = s.statements.iter().position(|st| st.section != s.key) {
            return Err(DocumentError::Misfiled(StatementRef { section: s.key, index }));
        }
    }
    Ok(())
}

impl TryFrom<DocumentParts> for SummaryDocument {
    type Error = DocumentError;

    fn try_from(p: DocumentParts) -> Result<Self, Self::Error> {
        check_sections(&p.sections)?;
        Ok(Self {
            patient_header: p.patient_header,
            sections: p.sections,
            disclaimer: p.disclaimer,
            ccp_fingerprint: p.ccp_fingerprint,
            backend: p.backend,
            generated_at: p.generated_at,
            metadata: p.metadata,
        })
    }
}

impl SummaryDocument {
    /// Sections must be in strictly increasing [`SectionKey`] order and each
    /// statement must name the section it sits in.
    pub fn new(
        patient_header: String,
        sections: Vec<SummarySection>,
        disclaimer: String,
        ccp_fingerprint: String,
        backend: BackendKind,
        generated_at: DateTime<Utc>,
    ) -> Result<Self, DocumentError> {
        check_sections(&sections)?;
        Ok(Self {
            patient_header,
            sections,
            disclaimer,
            ccp_fingerprint,
            backend,
            generated_at,
            metadata: DocumentMetadata::default(),
        })
    }

    pub fn from_json(json: &str) -> Result<Self, DocumentError> {
        serde_json::from_str(json).map_err(|e| DocumentError::Json(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes")
    }

    pub fn sections(&self) -> &[SummarySection] {
        &self.sections
    }

    pub fn section(&self, key: SectionKey) -> Option<&SummarySection> {
        self.sections.iter().find(|s| s.key == key)
    }

    /// All statements in document order.
    pub fn statements(&self) -> impl Iterator<Item = (StatementRef, &SummaryStatement)> {
        self.sections.iter().flat_map(|s| {
            s.statements
                .iter()
                .enumerate()
                .map(move |(index, st)| (StatementRef { section: s.key, index }, st))
        })
    }

    pub fn statement(&self, at: StatementRef) -> Option<&SummaryStatement> {
        self.section(at.section)?.statements.get(at.index)
    }

    pub fn statement_count(&self) -> usize {
        self.sections.iter().map(|s| s.statements.len()).sum()
    }

    /// Mutable access for tooling that edits documents in place, such as the
    /// evaluator's seeded mutations. Statements must stay in their section.
    pub fn statements_mut(&mut self, key: SectionKey) -> Option<&mut Vec<SummaryStatement>> {
        self.sections
            .iter_mut()
            .find(|s| s.key == key)
            .map(|s| &mut s.statements)
    }

    /// Inserts the section in canonical position if it is not present.
    pub fn section_mut_or_insert(&mut self, key: SectionKey) -> &mut Vec<SummaryStatement> {
        let pos = match self.sections.binary_search_by_key(&key, |s| s.key) {
            Ok(pos) => pos,
            Err(pos) => {
                self.sections.insert(
                    pos,
                    SummarySection {
                        key,
                        statements: vec![],
                    },
                );
                pos
            }
        };
        &mut self.sections[pos].statements
    }

    /// Every evidence id cited anywhere in the document.
    pub fn cited_ids(&self) -> std::collections::BTreeSet<&str> {
        self.statements()
            .flat_map(|(_, st)| st.evidence_refs.iter().map(String::as_str))
            .collect()
    }
}
