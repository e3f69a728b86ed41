//! Raw FHIR records to [`ClinicalContextPackage`].
//!
//! Build order: normalize each record, file it under its section, sort
//! newest first (undated last, in source order), collapse duplicates,
//! then derive lab trends. Every step is a pure function of its input.

mod dedup;
mod package;
mod record;
mod timestamp;
mod trends;

use std::collections::HashMap;

use serde_json::Value;

pub use dedup::{dedup_key, deduplicate, DedupKey};
pub use package::{
    ClinicalContextPackage, CompositionScaffold, NormalizationWarning, PackageError, PackageMetadata, Section,
    SectionState, SCHEMA_VERSION,
};
pub use record::{attr, canonical_number, normalize_record, Coding, EvidenceItem, NormalizeError, Normalized};
pub use timestamp::{extract_timestamp, extract_timestamp_detailed, parse_fhir_datetime, timestamp_precedence};
pub use trends::{compute_trends, direction_between, Direction, TrendEntry, TrendPoint, FLAT_TOLERANCE};

use crate::fhir_client::{RawResourceRecord, RetrievalReport};
use crate::resource::{ResourceType, SectionKey};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BuildError {
    #[error("no Patient record to anchor the package")]
    MissingAnchor,
    #[error(transparent)]
    Package(#[from] PackageError),
}

/// Sorts newest first; undated items follow in their original order.
pub fn sort_section_items(items: &mut [EvidenceItem]) {
    items.sort_by(|a, b| match (a.effective_at, b.effective_at) {
        (Some(x), Some(y)) => y.cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
}

fn state_for(key: SectionKey, items: &[EvidenceItem], report: &RetrievalReport) -> SectionState {
    if !items.is_empty() {
        return SectionState::Populated;
    }
    match report.status(key.backing_type()) {
        Some(status) if status.is_unavailable() => SectionState::Unavailable,
        _ => SectionState::Empty,
    }
}

fn composition_scaffold(record: &RawResourceRecord, evidence_id: String) -> CompositionScaffold {
    let p = &record.payload;
    let text = |v: Option<&Value>| v.and_then(Value::as_str).map(record::clean_text);
    let document_type = p.get("type").and_then(|t| {
        t.get("coding")
            .and_then(Value::as_array)
            .and_then(|c| c.iter().find_map(|c| text(c.get("display"))))
            .or_else(|| text(t.get("text")))
    });
    CompositionScaffold {
        source: evidence_id,
        title: text(p.get("title")),
        document_type,
        date: p.get("date").and_then(Value::as_str).and_then(parse_fhir_datetime),
        section_titles: p
            .get("section")
            .and_then(Value::as_array)
            .map(|s| s.iter().filter_map(|sec| text(sec.get("title"))).collect())
            .unwrap_or_default(),
    }
}

/// Builds the context package for one patient.
///
/// Exactly one Patient record anchors the package; if several are present
/// the one matching `report.patient_id` (else the first) is used and the
/// rest are skipped with a warning. `built_at` is the retrieval finish
/// time, so identical inputs give byte-identical output.
pub fn build_context_package(
    records: &[RawResourceRecord],
    report: &RetrievalReport,
) -> Result<ClinicalContextPackage, BuildError> {
    let anchor_idx = records
        .iter()
        .position(|r| r.resource_type == ResourceType::Patient && r.source_id == report.patient_id)
        .or_else(|| records.iter().position(|r| r.resource_type == ResourceType::Patient))
        .ok_or(BuildError::MissingAnchor)?;

    let mut warnings = Vec::new();
    let mut metadata = PackageMetadata::default();
    let mut id_uses: HashMap<String, u32> = HashMap::new();
    let mut unique_id = |base: String| {
        let n = id_uses.entry(base.clone()).or_insert(0);
        *n += 1;
        if *n == 1 {
            base
        } else {
            format!("{base}#{n}")
        }
    };

    let anchor = normalize_record(&records[anchor_idx]).map_err(|_| BuildError::MissingAnchor)?;
    let mut patient = anchor.item;
    patient.evidence_id = unique_id(patient.evidence_id);
    for w in anchor.warnings {
        warnings.push(NormalizationWarning {
            source: patient.evidence_id.clone(),
            message: w,
        });
    }

    let mut by_section: Vec<Vec<EvidenceItem>> = vec![Vec::new(); SectionKey::ALL.len()];
    by_section[SectionKey::PatientInformation as usize].push(patient.clone());

    for (i, record) in records.iter().enumerate() {
        if i == anchor_idx {
            continue;
        }
        let source = format!("{}/{}", record.resource_type, record.source_id);
        if record.resource_type == ResourceType::Patient {
            metadata.skipped_records += 1;
            warnings.push(NormalizationWarning {
                source,
                message: "additional Patient record ignored".into(),
            });
            continue;
        }
        if record.resource_type == ResourceType::Composition {
            let id = unique_id(source);
            metadata.compositions.push(composition_scaffold(record, id));
            continue;
        }
        match normalize_record(record) {
            Ok(Normalized { mut item, warnings: ws }) => {
                item.evidence_id = unique_id(item.evidence_id);
                for w in ws {
                    warnings.push(NormalizationWarning {
                        source: item.evidence_id.clone(),
                        message: w,
                    });
                }
                by_section[item.section as usize].push(item);
            }
            Err(e) => {
                metadata.skipped_records += 1;
                warnings.push(NormalizationWarning {
                    source,
                    message: format!("record skipped: {e}"),
                });
            }
        }
    }

    let mut sections = Vec::with_capacity(SectionKey::ALL.len());
    let mut trends = Vec::new();
    for (key, mut items) in SectionKey::ALL.into_iter().zip(by_section) {
        if key != SectionKey::PatientInformation {
            sort_section_items(&mut items);
            items = deduplicate(items);
            sort_section_items(&mut items);
        }
        if key == SectionKey::LaboratoryAndVitalSigns {
            trends = compute_trends(&items);
        }
        sections.push(Section {
            key,
            state: state_for(key, &items, report),
            items,
        });
    }

    Ok(ClinicalContextPackage::assemble(
        patient,
        sections,
        trends,
        report.clone(),
        warnings,
        metadata,
    )?)
}

#[cfg(test)]
mod tests;
