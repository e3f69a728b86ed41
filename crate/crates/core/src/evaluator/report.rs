use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::checklist::{Checklist, ChecklistDomain};
use crate::normalizer::{ClinicalContextPackage, EvidenceItem, SectionState};
use crate::resource::SectionKey;
use crate::summarizer::{
    validate_grounding_with, GroundingError, GroundingPolicy, StatementRef, SummaryDocument, SummaryStatement,
    TemporalRole, ViolationCategory,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorCategory {
    Omission,
    IncorrectValue,
    IncorrectTemporalContext,
    HallucinationInference,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 4] = [
        ErrorCategory::Omission,
        ErrorCategory::IncorrectValue,
        ErrorCategory::IncorrectTemporalContext,
        ErrorCategory::HallucinationInference,
    ];
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorCategory::Omission => "omission",
            ErrorCategory::IncorrectValue => "incorrect value",
            ErrorCategory::IncorrectTemporalContext => "incorrect temporal context",
            ErrorCategory::HallucinationInference => "hallucination/inference",
        })
    }
}

/// What an error points at: a statement, or an uncited item of a domain.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorRef {
    Statement { statement: StatementRef },
    Evidence { domain: String, evidence_id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationError {
    pub category: ErrorCategory,
    #[serde(rename = "ref")]
    pub reference: ErrorRef,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainCoverage {
    pub domain: String,
    pub section: SectionKey,
    pub safety_critical: bool,
    pub matched: usize,
    pub cited: usize,
    /// `None` when the package holds nothing for the domain.
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OmissionFinding {
    pub domain: String,
    pub evidence_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub ccp_fingerprint: String,
    pub coverage: Vec<DomainCoverage>,
    /// Mean over applicable domains.
    pub mean_coverage: Option<f64>,
    /// Fraction of each populated section's items that some statement cites.
    pub section_completeness: BTreeMap<SectionKey, f64>,
    pub errors: Vec<EvaluationError>,
    pub omission_findings: Vec<OmissionFinding>,
    pub overall_pass: bool,
}

impl EvaluationReport {
    pub fn count(&self, category: ErrorCategory) -> usize {
        self.errors.iter().filter(|e| e.category == category).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn cited_ids(doc: &SummaryDocument) -> BTreeSet<&str> {
    doc.cited_ids()
}

pub fn coverage_score(
    ccp: &ClinicalContextPackage,
    doc: &SummaryDocument,
    checklist: &Checklist,
) -> Vec<DomainCoverage> {
    let cited = cited_ids(doc);
    checklist
        .domains
        .iter()
        .map(|d| {
            let matched = d.matching(ccp);
            let hit = matched
                .iter()
                .filter(|i| cited.contains(i.evidence_id.as_str()))
                .count();
            DomainCoverage {
                domain: d.label.clone(),
                section: d.section,
                safety_critical: d.safety_critical,
                matched: matched.len(),
                cited: hit,
                coverage: (!matched.is_empty()).then(|| hit as f64 / matched.len() as f64),
            }
        })
        .collect()
}

fn uncited<'a>(
    ccp: &'a ClinicalContextPackage,
    cited: &BTreeSet<&str>,
    domain: &ChecklistDomain,
) -> Vec<&'a EvidenceItem> {
    domain
        .matching(ccp)
        .into_iter()
        .filter(|i| !cited.contains(i.evidence_id.as_str()))
        .collect()
}

pub fn omission_risk(
    ccp: &ClinicalContextPackage,
    doc: &SummaryDocument,
    checklist: &Checklist,
) -> Vec<OmissionFinding> {
    let cited = cited_ids(doc);
    checklist
        .domains
        .iter()
        .filter(|d| d.safety_critical)
        .flat_map(|d| {
            uncited(ccp, &cited, d).into_iter().map(|i| OmissionFinding {
                domain: d.label.clone(),
                evidence_id: i.evidence_id.clone(),
            })
        })
        .collect()
}

pub fn section_completeness(ccp: &ClinicalContextPackage, doc: &SummaryDocument) -> BTreeMap<SectionKey, f64> {
    let cited = cited_ids(doc);
    ccp.sections()
        .iter()
        .filter(|s| s.state == SectionState::Populated && !s.items.is_empty())
        .map(|s| {
            let hit = s
                .items
                .iter()
                .filter(|i| cited.contains(i.evidence_id.as_str()))
                .count();
            (s.key, hit as f64 / s.items.len() as f64)
        })
        .collect()
}

/// Errors under the default checklist and grounding policy.
pub fn categorize_errors(
    ccp: &ClinicalContextPackage,
    doc: &SummaryDocument,
) -> Result<Vec<EvaluationError>, GroundingError> {
    categorize_errors_with(ccp, doc, &Checklist::default(), &GroundingPolicy::default())
}

/// One error per (statement, category) and one omission per uncited item.
/// Safety-critical domains claim an item before the others do.
pub fn categorize_errors_with(
    ccp: &ClinicalContextPackage,
    doc: &SummaryDocument,
    checklist: &Checklist,
    policy: &GroundingPolicy,
) -> Result<Vec<EvaluationError>, GroundingError> {
    let violations = validate_grounding_with(doc, ccp, policy)?;

    let mut per_statement: BTreeMap<(StatementRef, ErrorCategory), Vec<String>> = BTreeMap::new();
    for v in violations {
        let category = match v.category {
            ViolationCategory::ValueMismatch => ErrorCategory::IncorrectValue,
            ViolationCategory::UnresolvedEvidence
            | ViolationCategory::ForeignContent
            | ViolationCategory::RecommendationLanguage => ErrorCategory::HallucinationInference,
        };
        per_statement.entry((v.statement, category)).or_default().push(v.detail);
    }
    for (at, st) in doc.statements() {
        let found = temporal_problems(st, ccp);
        if !found.is_empty() {
            per_statement
                .entry((at, ErrorCategory::IncorrectTemporalContext))
                .or_default()
                .extend(found);
        }
    }

    let mut errors = Vec::new();
    let cited = cited_ids(doc);
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let ordered = checklist
        .domains
        .iter()
        .filter(|d| d.safety_critical)
        .chain(checklist.domains.iter().filter(|d| !d.safety_critical));
    for d in ordered {
        for item in uncited(ccp, &cited, d) {
            if seen.insert(item.evidence_id.clone()) {
                errors.push(EvaluationError {
                    category: ErrorCategory::Omission,
                    reference: ErrorRef::Evidence {
                        domain: d.label.clone(),
                        evidence_id: item.evidence_id.clone(),
                    },
                    detail: format!("{} ({}) is not cited by any statement", item.display, item.evidence_id),
                });
            }
        }
    }
    for ((at, category), details) in per_statement {
        errors.push(EvaluationError {
            category,
            reference: ErrorRef::Statement { statement: at },
            detail: details.join("; "),
        });
    }
    Ok(errors)
}

fn date_pattern() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b\d{4}-\d{2}-\d{2}\b").expect("static pattern"))
}

fn item_dates(item: &EvidenceItem) -> BTreeSet<NaiveDate> {
    let mut out: BTreeSet<NaiveDate> = item.effective_at.map(|a| a.date_naive()).into_iter().collect();
    for v in item.attributes.values() {
        for m in date_pattern().find_iter(v) {
            if let Ok(d) = m.as_str().parse() {
                out.insert(d);
            }
        }
    }
    out
}

/// The series an item belongs to: same section and primary code, dated,
/// and numeric whenever the item itself is numeric.
fn series<'a>(ccp: &'a ClinicalContextPackage, item: &EvidenceItem) -> Vec<&'a EvidenceItem> {
    let Some(code) = item.primary_code() else {
        return Vec::new();
    };
    let numeric = item.numeric_value().is_some();
    ccp.section(item.section)
        .items
        .iter()
        .filter(|i| i.effective_at.is_some())
        .filter(|i| !numeric || i.numeric_value().is_some())
        .filter(|i| {
            i.primary_code()
                .is_some_and(|c| c.system == code.system && c.code == code.code)
        })
        .collect()
}

fn temporal_problems(st: &SummaryStatement, ccp: &ClinicalContextPackage) -> Vec<String> {
    let mut out = Vec::new();
    let cited: Vec<&EvidenceItem> = st.evidence_refs.iter().filter_map(|id| ccp.item(id)).collect();
    if cited.is_empty() {
        return out;
    }

    let mut latest_at = None;
    for claim in &st.temporal_claims {
        let Some(item) = cited.iter().find(|i| i.evidence_id == claim.evidence_id) else {
            continue;
        };
        let Some(at) = item.effective_at else {
            out.push(format!("dates {} but {} is undated", claim.date, item.evidence_id));
            continue;
        };
        if at.date_naive() != claim.date {
            out.push(format!(
                "dates {} as {} but it is {}",
                item.evidence_id,
                claim.date,
                at.date_naive()
            ));
        }
        if claim.role == TemporalRole::Latest {
            latest_at = Some(at);
            let newest = series(ccp, item).iter().filter_map(|i| i.effective_at).max();
            if newest.is_some_and(|n| n > at) {
                out.push(format!(
                    "presents {} as most recent but a newer value exists",
                    item.evidence_id
                ));
            }
        }
    }
    for claim in st.temporal_claims.iter().filter(|c| c.role == TemporalRole::Prior) {
        let Some(item) = cited.iter().find(|i| i.evidence_id == claim.evidence_id) else {
            continue;
        };
        let (Some(at), Some(latest)) = (item.effective_at, latest_at) else {
            continue;
        };
        if at >= latest {
            out.push(format!("prior value {} is not older than the latest", item.evidence_id));
            continue;
        }
        let skipped = series(ccp, item)
            .iter()
            .filter_map(|i| i.effective_at)
            .any(|t| t > at && t < latest);
        if skipped {
            out.push(format!("prior value {} skips a newer earlier value", item.evidence_id));
        }
    }

    let known: BTreeSet<NaiveDate> = cited.iter().flat_map(|i| item_dates(i)).collect();
    for m in date_pattern().find_iter(&st.text) {
        if let Ok(d) = m.as_str().parse::<NaiveDate>() {
            if !known.contains(&d) {
                out.push(format!("mentions {d}, a date of none of the cited items"));
            }
        }
    }
    out
}

pub fn evaluate(
    ccp: &ClinicalContextPackage,
    doc: &SummaryDocument,
    checklist: &Checklist,
) -> Result<EvaluationReport, GroundingError> {
    evaluate_with(ccp, doc, checklist, &GroundingPolicy::default())
}

pub fn evaluate_with(
    ccp: &ClinicalContextPackage,
    doc: &SummaryDocument,
    checklist: &Checklist,
    policy: &GroundingPolicy,
) -> Result<EvaluationReport, GroundingError> {
    let errors = categorize_errors_with(ccp, doc, checklist, policy)?;
    let coverage = coverage_score(ccp, doc, checklist);
    let applicable: Vec<f64> = coverage.iter().filter_map(|c| c.coverage).collect();
    let mean_coverage = (!applicable.is_empty()).then(|| applicable.iter().sum::<f64>() / applicable.len() as f64);
    let omission_findings = omission_risk(ccp, doc, checklist);
    let overall_pass = omission_findings.is_empty()
        && !errors
            .iter()
            .any(|e| e.category == ErrorCategory::HallucinationInference);
    Ok(EvaluationReport {
        ccp_fingerprint: ccp.fingerprint(),
        coverage,
        mean_coverage,
        section_completeness: section_completeness(ccp, doc),
        errors,
        omission_findings,
        overall_pass,
    })
}
