//! Normalization of a single FHIR resource into an [`EvidenceItem`].

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::timestamp::{extract_timestamp_detailed, lookup, parse_fhir_datetime};
use crate::fhir_client::RawResourceRecord;
use crate::resource::{ResourceType, SectionKey};

/// Longest free-text value kept from a resource.
const MAX_TEXT_LEN: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Coding {
    pub system: String,
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display: Option<String>,
}

/// One normalized clinical fact and the unit of citation in summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceItem {
    /// `{ResourceType}/{id}`, with a `#n` suffix when the same id repeats.
    pub evidence_id: String,
    pub resource_type: ResourceType,
    pub section: SectionKey,
    pub display: String,
    pub codes: Vec<Coding>,
    pub effective_at: Option<DateTime<Utc>>,
    pub status: Option<String>,
    pub attributes: BTreeMap<String, String>,
    pub duplicate_count: u32,
    pub source_url: String,
}

impl EvidenceItem {
    /// First coding carrying a code.
    pub fn primary_code(&self) -> Option<&Coding> {
        self.codes.first()
    }

    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attributes.get(key).map(String::as_str)
    }

    /// Numeric value of a quantity/integer observation.
    pub fn numeric_value(&self) -> Option<f64> {
        match self.attr(attr::VALUE_KIND) {
            Some("quantity") | Some("integer") => self.attr(attr::VALUE)?.parse::<f64>().ok().filter(|v| v.is_finite()),
            _ => None,
        }
    }
}

/// Attribute keys written by the normalizer.
pub mod attr {
    pub const VALUE: &str = "value";
    pub const VALUE_KIND: &str = "value_kind";
    pub const UNIT: &str = "unit";
    pub const CATEGORY: &str = "category";
    pub const DOSE: &str = "dose";
    pub const INTENT: &str = "intent";
    pub const CRITICALITY: &str = "criticality";
    pub const REACTION: &str = "reaction";
    pub const CLASS: &str = "class";
    pub const REASON: &str = "reason";
    pub const PERIOD_START: &str = "period_start";
    pub const PERIOD_END: &str = "period_end";
    pub const CONCLUSION: &str = "conclusion";
    pub const GENDER: &str = "gender";
    pub const BIRTH_DATE: &str = "birth_date";
    pub const RELATIONSHIP: &str = "relationship";
    pub const VERIFICATION: &str = "verification";
    pub const MODALITY: &str = "modality";
    pub const TITLE: &str = "title";
    pub const COLLAPSED_IDS: &str = "collapsed_ids";
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NormalizeError {
    #[error("payload has no resourceType")]
    MissingResourceType,
    #[error("payload resourceType `{found}` does not match record type `{expected}`")]
    TypeMismatch { expected: ResourceType, found: String },
    #[error("payload has no id")]
    MissingId,
    #[error("Composition is document scaffolding, not an evidence item")]
    Composition,
}

/// A normalized item plus non-fatal issues found on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub item: EvidenceItem,
    pub warnings: Vec<String>,
}

/// Converts one raw record into an evidence item.
///
/// The returned `evidence_id` has no collision suffix; that is assigned when
/// the whole package is built.
pub fn normalize_record(record: &RawResourceRecord) -> Result<Normalized, NormalizeError> {
    let rt = record.resource_type;
    let payload = &record.payload;
    match payload.get("resourceType").and_then(Value::as_str) {
        None => return Err(NormalizeError::MissingResourceType),
        Some(found) if found != rt.as_str() => {
            return Err(NormalizeError::TypeMismatch {
                expected: rt,
                found: clean_text(found),
            })
        }
        Some(_) => {}
    }
    let id = payload
        .get("id")
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or(NormalizeError::MissingId)?;
    let section = rt.section().ok_or(NormalizeError::Composition)?;

    let mut warnings = Vec::new();
    let ts = extract_timestamp_detailed(record);
    for (field, raw) in &ts.unparseable {
        warnings.push(format!("unparseable {field} {raw}"));
    }

    let concept = primary_concept(rt, payload);
    let codes = concept.map(codings).unwrap_or_default();
    let display = if rt == ResourceType::Patient {
        patient_name(payload)
    } else {
        concept.and_then(concept_label)
    }
    .or_else(|| fallback_label(rt, payload))
    .unwrap_or_else(|| format!("Unlabeled {}", rt.as_str()));

    let mut attributes = BTreeMap::new();
    extract_attributes(rt, payload, &mut attributes);

    Ok(Normalized {
        item: EvidenceItem {
            evidence_id: format!("{}/{}", rt.as_str(), clean_text(id)),
            resource_type: rt,
            section,
            display,
            codes,
            effective_at: ts.at,
            status: status_of(rt, payload),
            attributes,
            duplicate_count: 1,
            source_url: record.source_url.clone(),
        },
        warnings,
    })
}

/// The CodeableConcept that names what a resource is about.
fn primary_concept(rt: ResourceType, p: &Value) -> Option<&Value> {
    match rt {
        ResourceType::Observation
        | ResourceType::Condition
        | ResourceType::Procedure
        | ResourceType::DiagnosticReport
        | ResourceType::AllergyIntolerance
        | ResourceType::Flag => p.get("code"),
        ResourceType::MedicationRequest => p.get("medicationCodeableConcept"),
        ResourceType::Encounter => first(p, "type").or_else(|| p.get("serviceType")),
        ResourceType::FamilyMemberHistory => first(p, "condition").and_then(|c| c.get("code")),
        ResourceType::Immunization => p.get("vaccineCode"),
        ResourceType::CarePlan | ResourceType::Consent => first(p, "category"),
        ResourceType::Goal => p.get("description"),
        ResourceType::Device => p.get("type"),
        ResourceType::ImagingStudy => first(p, "procedureCode"),
        ResourceType::Composition => p.get("type"),
        ResourceType::Patient => None,
    }
}

fn first<'a>(p: &'a Value, key: &str) -> Option<&'a Value> {
    p.get(key).and_then(Value::as_array).and_then(|a| a.first())
}

fn str_at<'a>(v: &'a Value, path: &str) -> Option<&'a str> {
    lookup(v, path)
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty())
}

fn codings(concept: &Value) -> Vec<Coding> {
    let Some(list) = concept.get("coding").and_then(Value::as_array) else {
        return vec![];
    };
    list.iter()
        .filter_map(|c| {
            let code = str_at(c, "code")?;
            Some(Coding {
                system: str_at(c, "system").map(clean_text).unwrap_or_default(),
                code: clean_text(code),
                display: str_at(c, "display").map(clean_text),
            })
        })
        .collect()
}

/// First coding display, then concept text, then first code literal.
fn concept_label(concept: &Value) -> Option<String> {
    let list = concept.get("coding").and_then(Value::as_array);
    let coding_display = list.and_then(|l| l.iter().find_map(|c| str_at(c, "display")));
    let text = str_at(concept, "text");
    let code = list.and_then(|l| l.iter().find_map(|c| str_at(c, "code")));
    coding_display.or(text).or(code).map(clean_text)
}

fn fallback_label(rt: ResourceType, p: &Value) -> Option<String> {
    let raw = match rt {
        ResourceType::CarePlan => str_at(p, "title"),
        ResourceType::MedicationRequest => str_at(p, "medicationReference.display"),
        ResourceType::Device => first(p, "deviceName").and_then(|d| str_at(d, "name")),
        ResourceType::ImagingStudy => first(p, "modality").and_then(|m| str_at(m, "display").or(str_at(m, "code"))),
        ResourceType::Encounter => str_at(p, "class.display"),
        _ => None,
    };
    raw.map(clean_text)
}

fn patient_name(p: &Value) -> Option<String> {
    let name = first(p, "name")?;
    if let Some(text) = str_at(name, "text") {
        return Some(clean_text(text));
    }
    let mut parts: Vec<&str> = name
        .get("given")
        .and_then(Value::as_array)
        .map(|g| g.iter().filter_map(Value::as_str).collect())
        .unwrap_or_default();
    if let Some(family) = str_at(name, "family") {
        parts.push(family);
    }
    let joined = clean_text(&parts.join(" "));
    (!joined.is_empty()).then_some(joined)
}

fn status_of(rt: ResourceType, p: &Value) -> Option<String> {
    let raw = match rt {
        ResourceType::Condition | ResourceType::AllergyIntolerance => {
            first(p.get("clinicalStatus").unwrap_or(&Value::Null), "coding").and_then(|c| str_at(c, "code"))
        }
        ResourceType::Goal => str_at(p, "lifecycleStatus"),
        ResourceType::Patient => None,
        _ => str_at(p, "status"),
    };
    raw.map(clean_text)
}

fn extract_attributes(rt: ResourceType, p: &Value, out: &mut BTreeMap<String, String>) {
    let mut put = |key: &str, value: Option<String>| {
        if let Some(v) = value.filter(|v| !v.is_empty()) {
            out.insert(key.to_string(), v);
        }
    };
    match rt {
        ResourceType::Patient => {
            put(attr::GENDER, str_at(p, "gender").map(clean_text));
            put(attr::BIRTH_DATE, str_at(p, "birthDate").map(clean_text));
        }
        ResourceType::Observation => {
            if let Some((value, kind, unit)) = observation_value(p) {
                put(attr::VALUE, Some(value));
                put(attr::VALUE_KIND, Some(kind.to_string()));
                put(attr::UNIT, unit);
            }
            put(attr::CATEGORY, category_codes(p.get("category")));
        }
        ResourceType::Condition => {
            put(
                attr::VERIFICATION,
                first(p.get("verificationStatus").unwrap_or(&Value::Null), "coding")
                    .and_then(|c| str_at(c, "code"))
                    .map(clean_text),
            );
            put(attr::CATEGORY, category_codes(p.get("category")));
        }
        ResourceType::MedicationRequest => {
            put(
                attr::DOSE,
                first(p, "dosageInstruction")
                    .and_then(|d| str_at(d, "text"))
                    .map(clean_text),
            );
            put(attr::INTENT, str_at(p, "intent").map(clean_text));
        }
        ResourceType::AllergyIntolerance => {
            put(attr::CRITICALITY, str_at(p, "criticality").map(clean_text));
            put(
                attr::REACTION,
                first(p, "reaction")
                    .and_then(|r| first(r, "manifestation"))
                    .and_then(concept_label),
            );
        }
        ResourceType::Flag => {
            put(attr::PERIOD_START, str_at(p, "period.start").map(iso_date));
            put(attr::PERIOD_END, str_at(p, "period.end").map(iso_date));
        }
        ResourceType::Encounter => {
            put(
                attr::CLASS,
                str_at(p, "class.display").or(str_at(p, "class.code")).map(clean_text),
            );
            put(attr::PERIOD_START, str_at(p, "period.start").map(iso_date));
            put(attr::PERIOD_END, str_at(p, "period.end").map(iso_date));
            put(attr::REASON, first(p, "reasonCode").and_then(concept_label));
        }
        ResourceType::DiagnosticReport => {
            put(attr::CONCLUSION, str_at(p, "conclusion").map(clean_text));
        }
        ResourceType::FamilyMemberHistory => {
            put(attr::RELATIONSHIP, p.get("relationship").and_then(concept_label));
        }
        ResourceType::ImagingStudy => {
            put(
                attr::MODALITY,
                first(p, "modality").and_then(|m| str_at(m, "code")).map(clean_text),
            );
        }
        ResourceType::CarePlan => {
            put(attr::TITLE, str_at(p, "title").map(clean_text));
            put(attr::INTENT, str_at(p, "intent").map(clean_text));
        }
        ResourceType::Consent => {
            put("scope", p.get("scope").and_then(concept_label));
        }
        ResourceType::Procedure
        | ResourceType::Immunization
        | ResourceType::Goal
        | ResourceType::Device
        | ResourceType::Composition => {}
    }
}

/// value[x] of an Observation as (value, kind, unit).
fn observation_value(p: &Value) -> Option<(String, &'static str, Option<String>)> {
    if let Some(q) = p.get("valueQuantity") {
        let value = q.get("value")?;
        let number = match value {
            Value::Number(n) => n.as_f64(),
            Value::String(s) => s.trim().parse::<f64>().ok(),
            _ => None,
        }
        .filter(|v| v.is_finite())?;
        let unit = str_at(q, "unit").or(str_at(q, "code")).map(clean_text);
        return Some((canonical_number(number), "quantity", unit));
    }
    if let Some(n) = p.get("valueInteger").and_then(Value::as_i64) {
        return Some((n.to_string(), "integer", None));
    }
    if let Some(s) = str_at(p, "valueString") {
        return Some((clean_text(s), "string", None));
    }
    if let Some(b) = p.get("valueBoolean").and_then(Value::as_bool) {
        return Some((b.to_string(), "boolean", None));
    }
    if let Some(label) = p.get("valueCodeableConcept").and_then(concept_label) {
        return Some((label, "concept", None));
    }
    None
}

fn category_codes(category: Option<&Value>) -> Option<String> {
    let codes: Vec<String> = category?.as_array()?.iter().flat_map(codings).map(|c| c.code).collect();
    (!codes.is_empty()).then(|| codes.join(","))
}

fn iso_date(raw: &str) -> String {
    match parse_fhir_datetime(raw) {
        Some(at) => at.format("%Y-%m-%d").to_string(),
        None => clean_text(raw),
    }
}

/// Shortest decimal that round-trips, without a trailing `.0`.
pub fn canonical_number(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    format!("{v}")
}

/// Collapses whitespace, drops control characters and caps length.
pub(crate) fn clean_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len().min(MAX_TEXT_LEN));
    let mut pending_space = false;
    for ch in s.chars() {
        if ch.is_whitespace() || ch.is_control() {
            pending_space = !out.is_empty();
            continue;
        }
        if out.chars().count() >= MAX_TEXT_LEN {
            break;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.push(ch);
    }
    out
}
