//! Statement-level checks that a summary says only what its package holds.

use std::collections::BTreeSet;

use regex::Regex;

use super::document::{GroundingViolation, StatementKind, SummaryDocument, SummaryStatement, ViolationCategory};
use super::templates::{content_words, item_sources, numbers};
use crate::normalizer::{attr, canonical_number, ClinicalContextPackage, EvidenceItem, SectionState};

pub const DEFAULT_RECOMMENDATION_PHRASES: &[&str] = &[
    "recommend",
    "should start",
    "should stop",
    "consider prescribing",
    "advise",
    "suggest initiating",
    "needs to be treated with",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GroundingError {
    #[error("summary was built from package {found}, not {expected}")]
    FingerprintMismatch { expected: String, found: String },
}

/// Validator configuration.
#[derive(Debug, Clone)]
pub struct GroundingPolicy {
    recommendation: Option<Regex>,
    phrases: Vec<String>,
}

impl Default for GroundingPolicy {
    fn default() -> Self {
        Self::with_phrases(DEFAULT_RECOMMENDATION_PHRASES.iter().map(|s| s.to_string()).collect())
    }
}

impl GroundingPolicy {
    /// Phrases match case-insensitively at a word start, so `recommend`
    /// also catches `recommended`.
    pub fn with_phrases(phrases: Vec<String>) -> Self {
        let alternatives: Vec<String> = phrases
            .iter()
            .map(|p| p.trim())
            .filter(|p| !p.is_empty())
            .map(|p| regex::escape(&p.to_lowercase()).replace(' ', r"\s+"))
            .collect();
        let recommendation = (!alternatives.is_empty())
            .then(|| Regex::new(&format!(r"\b(?:{})", alternatives.join("|"))).expect("escaped phrases"));
        Self {
            recommendation,
            phrases,
        }
    }

    pub fn phrases(&self) -> &[String] {
        &self.phrases
    }
}

pub fn validate_grounding(
    doc: &SummaryDocument,
    ccp: &ClinicalContextPackage,
) -> Result<Vec<GroundingViolation>, GroundingError> {
    validate_grounding_with(doc, ccp, &GroundingPolicy::default())
}

/// Empty result means every statement is grounded.
pub fn validate_grounding_with(
    doc: &SummaryDocument,
    ccp: &ClinicalContextPackage,
    policy: &GroundingPolicy,
) -> Result<Vec<GroundingViolation>, GroundingError> {
    let expected = ccp.fingerprint();
    if doc.ccp_fingerprint != expected {
        return Err(GroundingError::FingerprintMismatch {
            expected,
            found: doc.ccp_fingerprint.clone(),
        });
    }
    Ok(check_statements(doc, ccp, policy))
}

/// The statement checks without the fingerprint comparison.
pub(crate) fn check_statements(
    doc: &SummaryDocument,
    ccp: &ClinicalContextPackage,
    policy: &GroundingPolicy,
) -> Vec<GroundingViolation> {
    let mut out = Vec::new();
    for (n, (at, st)) in doc.statements().enumerate() {
        for (category, detail) in check_statement(st, ccp, policy) {
            out.push(GroundingViolation {
                statement_index: n,
                statement: at,
                category,
                detail,
            });
        }
    }
    out
}

/// At most one finding per category, with details joined.
fn check_statement(
    st: &SummaryStatement,
    ccp: &ClinicalContextPackage,
    policy: &GroundingPolicy,
) -> Vec<(ViolationCategory, String)> {
    let mut unresolved = Vec::new();
    let mut mismatch = Vec::new();
    let mut foreign = Vec::new();

    let mut cited: Vec<&EvidenceItem> = Vec::new();
    for id in &st.evidence_refs {
        match ccp.item(id) {
            None => unresolved.push(format!("cites unknown evidence {id}")),
            Some(item) if item.section != st.section => {
                unresolved.push(format!("cites {id} from section {}", item.section))
            }
            Some(item) => cited.push(item),
        }
    }

    match st.kind {
        StatementKind::Fact | StatementKind::Trend => {
            if st.evidence_refs.is_empty() {
                unresolved.push("cites no evidence".into());
            }
        }
        StatementKind::MissingData => {
            if !st.evidence_refs.is_empty() {
                foreign.push("missing-data notice cites evidence".into());
            }
            if ccp.section(st.section).state == SectionState::Populated {
                foreign.push(format!("claims {} has no data but the package holds items", st.section));
            }
        }
    }

    for claim in &st.numeric_claims {
        if !st.evidence_refs.contains(&claim.evidence_id) {
            unresolved.push(format!("numeric claim cites unreferenced {}", claim.evidence_id));
            continue;
        }
        let Some(item) = cited.iter().find(|i| i.evidence_id == claim.evidence_id) else {
            continue;
        };
        match item.attr(attr::VALUE) {
            None => mismatch.push(format!(
                "{} has no value but the statement claims {}",
                item.evidence_id, claim.value
            )),
            Some(actual) if canonical(actual) != canonical(&claim.value) => mismatch.push(format!(
                "claims {} but {} holds {actual}",
                claim.value, item.evidence_id
            )),
            Some(_) => {}
        }
        if let (Some(claimed), Some(actual)) = (&claim.unit, item.attr(attr::UNIT)) {
            if claimed.trim() != actual {
                mismatch.push(format!("claims unit {claimed} but {} is in {actual}", item.evidence_id));
            }
        }
    }
    for claim in &st.temporal_claims {
        if !st.evidence_refs.contains(&claim.evidence_id) {
            unresolved.push(format!("date claim cites unreferenced {}", claim.evidence_id));
        }
    }

    if !cited.is_empty() {
        let sources: Vec<String> = cited.iter().flat_map(|i| item_sources(i)).collect();
        let known_numbers: BTreeSet<String> = sources.iter().flat_map(|s| numbers(s)).collect();
        let stray: Vec<String> = numbers(&st.text).difference(&known_numbers).cloned().collect();
        if !stray.is_empty() {
            mismatch.push(format!("numbers not found in cited evidence: {}", stray.join(", ")));
        }

        if st.kind == StatementKind::Fact {
            let said = content_words(&st.text);
            let known: BTreeSet<String> = sources.iter().flat_map(|s| content_words(s)).collect();
            if !said.is_empty() && said.is_disjoint(&known) {
                foreign.push("shares no terms with the cited evidence".into());
            }
        }
    }

    let mut out = Vec::new();
    if !unresolved.is_empty() {
        out.push((ViolationCategory::UnresolvedEvidence, unresolved.join("; ")));
    }
    if !mismatch.is_empty() {
        out.push((ViolationCategory::ValueMismatch, mismatch.join("; ")));
    }
    if let Some(phrase) = recommendation_phrase(&st.text, &cited, policy) {
        out.push((
            ViolationCategory::RecommendationLanguage,
            format!("contains \"{phrase}\""),
        ));
    }
    if !foreign.is_empty() {
        out.push((ViolationCategory::ForeignContent, foreign.join("; ")));
    }
    out
}

fn canonical(raw: &str) -> String {
    let trimmed = raw.trim();
    match trimmed.parse::<f64>() {
        Ok(v) if v.is_finite() => canonical_number(v),
        _ => trimmed.to_string(),
    }
}

/// Text copied from cited evidence is not the summarizer's own wording, so
/// it is blanked out before the lexicon runs.
fn recommendation_phrase(text: &str, cited: &[&EvidenceItem], policy: &GroundingPolicy) -> Option<String> {
    let re = policy.recommendation.as_ref()?;
    let mut own = text.to_lowercase();
    let mut quoted: Vec<String> = cited
        .iter()
        .flat_map(|i| item_sources(i))
        .map(|s| s.to_lowercase())
        .filter(|s| s.chars().count() >= 3)
        .collect();
    quoted.sort_by_key(|s| std::cmp::Reverse(s.len()));
    for q in quoted {
        own = own.replace(&q, " ");
    }
    re.find(&own).map(|m| m.as_str().to_string())
}
