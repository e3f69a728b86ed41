//! Fixed sentence templates shared by the deterministic backend and Q&A.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use chrono::{DateTime, Utc};
use regex::Regex;

use super::document::{NumericClaim, StatementKind, SummaryStatement, TemporalClaim, TemporalRole};
use crate::normalizer::{attr, canonical_number, EvidenceItem, TrendEntry, TrendPoint};
use crate::resource::{ResourceType, SectionKey};

pub fn fmt_date(at: DateTime<Utc>) -> String {
    at.format("%Y-%m-%d").to_string()
}

fn with_unit(value: &str, unit: Option<&str>) -> String {
    match unit {
        Some(u) => format!("{value} {u}"),
        None => value.to_string(),
    }
}

/// One line describing an item, e.g. `Warfarin 5 MG, active, 1 tablet daily — 2024-03-01`.
pub fn item_text(item: &EvidenceItem) -> String {
    let head = match (item.resource_type, item.attr(attr::VALUE)) {
        (ResourceType::Observation, Some(v)) => format!("{}: {}", item.display, with_unit(v, item.attr(attr::UNIT))),
        _ => item.display.clone(),
    };
    let mut parts = vec![head];
    let mut push = |label: Option<&str>, value: Option<&str>| {
        if let Some(v) = value {
            parts.push(match label {
                Some(l) => format!("{l} {v}"),
                None => v.to_string(),
            });
        }
    };
    match item.resource_type {
        ResourceType::Patient => {
            push(None, item.attr(attr::GENDER));
            push(Some("born"), item.attr(attr::BIRTH_DATE));
        }
        ResourceType::MedicationRequest => {
            push(None, item.status.as_deref());
            push(None, item.attr(attr::DOSE));
            push(None, item.attr(attr::INTENT).filter(|i| *i != "order"));
        }
        ResourceType::AllergyIntolerance => {
            push(None, item.status.as_deref());
            push(Some("criticality"), item.attr(attr::CRITICALITY));
            push(Some("reaction"), item.attr(attr::REACTION));
        }
        ResourceType::Encounter => {
            push(None, item.status.as_deref());
            push(None, item.attr(attr::CLASS));
            push(Some("reason"), item.attr(attr::REASON));
        }
        ResourceType::DiagnosticReport => {
            push(None, item.status.as_deref());
            push(None, item.attr(attr::CONCLUSION));
        }
        ResourceType::FamilyMemberHistory => {
            push(None, item.attr(attr::RELATIONSHIP));
            push(None, item.status.as_deref());
        }
        _ => push(None, item.status.as_deref()),
    }
    let mut text = parts.join(", ");
    if let Some(at) = item.effective_at {
        text.push_str(" — ");
        text.push_str(&fmt_date(at));
    }
    if item.duplicate_count > 1 {
        text.push_str(&format!(" (recorded {} times)", item.duplicate_count));
    }
    text
}

pub fn fact_statement(item: &EvidenceItem) -> SummaryStatement {
    let numeric_claims = item
        .numeric_value()
        .and(item.attr(attr::VALUE))
        .map(|v| NumericClaim {
            value: v.to_string(),
            unit: item.attr(attr::UNIT).map(str::to_string),
            evidence_id: item.evidence_id.clone(),
        })
        .into_iter()
        .collect();
    let temporal_claims = item
        .effective_at
        .map(|at| TemporalClaim {
            evidence_id: item.evidence_id.clone(),
            date: at.date_naive(),
            role: TemporalRole::Event,
        })
        .into_iter()
        .collect();
    SummaryStatement {
        text: item_text(item),
        section: item.section,
        kind: StatementKind::Fact,
        evidence_refs: vec![item.evidence_id.clone()],
        numeric_claims,
        temporal_claims,
    }
}

fn point_text(p: &TrendPoint) -> String {
    format!(
        "{} on {}",
        with_unit(&canonical_number(p.value), p.unit.as_deref()),
        fmt_date(p.at)
    )
}

pub fn trend_text(entry: &TrendEntry) -> String {
    let tail = match &entry.prior {
        Some(prior) => format!("{} from {}", entry.direction.as_str(), point_text(prior)),
        None => entry.direction.as_str().to_string(),
    };
    format!("{}: {} ({tail})", entry.display, point_text(&entry.latest))
}

pub fn trend_statement(entry: &TrendEntry) -> SummaryStatement {
    let claim = |p: &TrendPoint, id: &str, role| {
        (
            NumericClaim {
                value: canonical_number(p.value),
                unit: p.unit.clone(),
                evidence_id: id.to_string(),
            },
            TemporalClaim {
                evidence_id: id.to_string(),
                date: p.at.date_naive(),
                role,
            },
        )
    };
    let mut claims = vec![claim(&entry.latest, &entry.latest_evidence_id, TemporalRole::Latest)];
    let mut refs = vec![entry.latest_evidence_id.clone()];
    if let (Some(p), Some(id)) = (&entry.prior, &entry.prior_evidence_id) {
        claims.push(claim(p, id, TemporalRole::Prior));
        refs.push(id.clone());
    }
    let (numeric_claims, temporal_claims) = claims.into_iter().unzip();
    SummaryStatement {
        text: trend_text(entry),
        section: SectionKey::LaboratoryAndVitalSigns,
        kind: StatementKind::Trend,
        evidence_refs: refs,
        numeric_claims,
        temporal_claims,
    }
}

pub fn missing_text(key: SectionKey, unavailable: bool) -> String {
    if unavailable {
        format!("{} unavailable from source", key.label())
    } else {
        format!("No {} available", key.label().to_lowercase())
    }
}

// ---- token helpers used by grounding checks and Q&A ----

const STOPWORDS: &[&str] = &[
    "the", "and", "for", "with", "from", "was", "were", "are", "has", "had", "have", "this", "that", "these", "those",
    "into", "onto", "per", "not", "but", "all", "any", "its", "his", "her", "their", "there", "than", "then", "also",
    "been", "being", "patient", "patients",
];

pub(crate) fn is_stopword(token: &str) -> bool {
    STOPWORDS.contains(&token)
}

/// Lowercased alphanumeric runs.
pub(crate) fn words(s: &str) -> impl Iterator<Item = String> + '_ {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Words of three or more characters that carry content: not stopwords and
/// not bare numbers.
pub(crate) fn content_words(s: &str) -> BTreeSet<String> {
    words(s)
        .filter(|w| w.chars().count() >= 3 && !is_stopword(w) && !w.chars().all(|c| c.is_ascii_digit()))
        .collect()
}

static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b\d+(?:\.\d+)?\b").expect("valid regex"));

/// Standalone numbers in canonical form; digits inside words such as
/// `HbA1c` are not numbers.
pub(crate) fn numbers(s: &str) -> BTreeSet<String> {
    NUMBER
        .find_iter(s)
        .filter_map(|m| m.as_str().parse::<f64>().ok())
        .map(canonical_number)
        .collect()
}

/// Every string an item contributes to token and number matching.
pub(crate) fn item_sources(item: &EvidenceItem) -> Vec<String> {
    let mut out = vec![item.display.clone(), item.duplicate_count.to_string()];
    for c in &item.codes {
        out.push(c.code.clone());
        out.extend(c.display.clone());
    }
    out.extend(item.status.clone());
    out.extend(
        item.attributes
            .iter()
            .filter(|(k, _)| k.as_str() != attr::COLLAPSED_IDS)
            .map(|(_, v)| v.clone()),
    );
    out.extend(item.effective_at.map(fmt_date));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_ignore_digits_inside_words() {
        let got = numbers("HbA1c: 7.20 % — 2024-06-15 (recorded 3 times) 5mg");
        let want: BTreeSet<String> = ["7.2", "2024", "6", "15", "3"].iter().map(|s| s.to_string()).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn content_words_drop_noise() {
        let got = content_words("The patient has Type 2 diabetes, on 2024");
        let want: BTreeSet<String> = ["type", "diabetes"].iter().map(|s| s.to_string()).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn missing_notices() {
        assert_eq!(
            missing_text(SectionKey::Immunizations, false),
            "No immunizations available"
        );
        assert_eq!(
            missing_text(SectionKey::AllergiesAndIntolerances, true),
            "Allergies and Intolerances unavailable from source"
        );
    }
}
