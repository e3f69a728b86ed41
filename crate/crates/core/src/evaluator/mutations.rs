//! Single-site corruptions of a valid summary, each with the error the
//! evaluator is expected to report.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::checklist::Checklist;
use super::report::{ErrorCategory, ErrorRef, EvaluationError};
use crate::normalizer::{canonical_number, direction_between, ClinicalContextPackage, TrendEntry};
use crate::summarizer::{
    item_sources, numbers, trend_statement, StatementKind, StatementRef, SummaryDocument, SummaryStatement,
    TemporalRole,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationKind {
    ValueChange,
    TemporalSwap,
    SafetyDeletion,
    DanglingCitation,
}

impl MutationKind {
    pub const ALL: [MutationKind; 4] = [
        MutationKind::ValueChange,
        MutationKind::TemporalSwap,
        MutationKind::SafetyDeletion,
        MutationKind::DanglingCitation,
    ];

    pub fn expected(self) -> ErrorCategory {
        match self {
            MutationKind::ValueChange => ErrorCategory::IncorrectValue,
            MutationKind::TemporalSwap => ErrorCategory::IncorrectTemporalContext,
            MutationKind::SafetyDeletion => ErrorCategory::Omission,
            MutationKind::DanglingCitation => ErrorCategory::HallucinationInference,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MutationSite {
    Statement { statement: StatementRef },
    Evidence { evidence_id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeededMutation {
    pub kind: MutationKind,
    pub site: MutationSite,
    pub description: String,
}

impl SeededMutation {
    pub fn expected(&self) -> ErrorCategory {
        self.kind.expected()
    }

    fn points_here(&self, error: &EvaluationError) -> bool {
        match (&self.site, &error.reference) {
            (MutationSite::Statement { statement }, ErrorRef::Statement { statement: s }) => statement == s,
            (MutationSite::Evidence { evidence_id }, ErrorRef::Evidence { evidence_id: e, .. }) => evidence_id == e,
            _ => false,
        }
    }

    /// True when `errors` is exactly one error, of the expected category,
    /// at the mutated site.
    pub fn detected_exactly(&self, errors: &[EvaluationError]) -> bool {
        matches!(errors, [only] if only.category == self.expected() && self.points_here(only))
    }
}

fn number_token() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b\d+(?:\.\d+)?\b").expect("static pattern"))
}

/// Applies one mutation of `kind`, choosing the site with `seed`. Returns
/// `None` when the document has no eligible site.
pub fn apply_mutation(
    ccp: &ClinicalContextPackage,
    doc: &SummaryDocument,
    kind: MutationKind,
    seed: u64,
) -> Option<(SummaryDocument, SeededMutation)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = doc.clone();
    let site = match kind {
        MutationKind::ValueChange => {
            let candidates: Vec<StatementRef> = doc
                .statements()
                .filter(|(_, st)| value_site(ccp, st).is_some())
                .map(|(at, _)| at)
                .collect();
            let at = *candidates.choose(&mut rng)?;
            let st = &mut out.statements_mut(at.section)?[at.index];
            let (start, end) = value_site(ccp, st)?;
            let old = st.numeric_claims[0].value.clone();
            let taken: BTreeSet<String> = number_token()
                .find_iter(&st.text)
                .map(|m| m.as_str().to_string())
                .chain(
                    st.evidence_refs
                        .iter()
                        .filter_map(|id| ccp.item(id))
                        .flat_map(item_sources)
                        .flat_map(|s| numbers(&s)),
                )
                .collect();
            let base: f64 = old.parse().ok()?;
            let new = (1..)
                .map(|k| canonical_number(base + 1.5 * k as f64))
                .find(|v| !taken.contains(v))?;
            st.text.replace_range(start..end, &new);
            st.numeric_claims[0].value = new.clone();
            SeededMutation {
                kind,
                site: MutationSite::Statement { statement: at },
                description: format!("{at}: {old} changed to {new}"),
            }
        }
        MutationKind::TemporalSwap => {
            let candidates: Vec<(StatementRef, &TrendEntry)> = doc
                .statements()
                .filter(|(_, st)| st.kind == StatementKind::Trend)
                .filter_map(|(at, st)| {
                    let latest = st.temporal_claims.iter().find(|c| c.role == TemporalRole::Latest)?;
                    let entry = ccp
                        .trends()
                        .iter()
                        .find(|t| t.latest_evidence_id == latest.evidence_id)?;
                    let prior = entry.prior.as_ref()?;
                    (prior.at.date_naive() != entry.latest.at.date_naive()).then_some((at, entry))
                })
                .collect();
            let (at, entry) = *candidates.choose(&mut rng)?;
            let prior = entry.prior.clone()?;
            let swapped = TrendEntry {
                code: entry.code.clone(),
                display: entry.display.clone(),
                direction: direction_between(prior.value, entry.latest.value),
                latest: prior,
                prior: Some(entry.latest.clone()),
                latest_evidence_id: entry.prior_evidence_id.clone()?,
                prior_evidence_id: Some(entry.latest_evidence_id.clone()),
            };
            out.statements_mut(at.section)?[at.index] = trend_statement(&swapped);
            SeededMutation {
                kind,
                site: MutationSite::Statement { statement: at },
                description: format!("{at}: latest and prior swapped"),
            }
        }
        MutationKind::SafetyDeletion => {
            let checklist = Checklist::default();
            let safety: BTreeSet<String> = checklist
                .domains
                .iter()
                .filter(|d| d.safety_critical)
                .flat_map(|d| d.matching(ccp))
                .map(|i| i.evidence_id.clone())
                .collect();
            let candidates: Vec<(StatementRef, String)> = doc
                .statements()
                .filter(|(_, st)| st.evidence_refs.len() == 1 && safety.contains(&st.evidence_refs[0]))
                .filter(|(_, st)| cited_once(doc, &st.evidence_refs[0]))
                .map(|(at, st)| (at, st.evidence_refs[0].clone()))
                .collect();
            let (at, id) = candidates.choose(&mut rng)?.clone();
            out.statements_mut(at.section)?.remove(at.index);
            SeededMutation {
                kind,
                site: MutationSite::Evidence {
                    evidence_id: id.clone(),
                },
                description: format!("{at}: statement citing {id} deleted"),
            }
        }
        MutationKind::DanglingCitation => {
            let sections: Vec<_> = doc.sections().iter().map(|s| s.key).collect();
            let key = *sections.choose(&mut rng)?;
            let id = format!("{}/seeded-{}", key.backing_type(), seed);
            let list = out.statements_mut(key)?;
            let at = StatementRef {
                section: key,
                index: list.len(),
            };
            list.push(SummaryStatement {
                text: "Additional finding documented".into(),
                section: key,
                kind: StatementKind::Fact,
                evidence_refs: vec![id.clone()],
                numeric_claims: vec![],
                temporal_claims: vec![],
            });
            SeededMutation {
                kind,
                site: MutationSite::Statement { statement: at },
                description: format!("{at}: appended statement citing absent {id}"),
            }
        }
    };
    Some((out, site))
}

fn cited_once(doc: &SummaryDocument, id: &str) -> bool {
    doc.statements()
        .filter(|(_, st)| st.evidence_refs.iter().any(|r| r == id))
        .count()
        == 1
}

/// Byte range of the first numeric claim's value in the text, after the
/// cited item's display name.
fn value_site(ccp: &ClinicalContextPackage, st: &SummaryStatement) -> Option<(usize, usize)> {
    let claim = st.numeric_claims.first()?;
    let item = ccp.item(&claim.evidence_id)?;
    let skip = if st.text.starts_with(&item.display) {
        item.display.len()
    } else {
        0
    };
    number_token()
        .find_iter(&st.text)
        .find(|m| m.start() >= skip && m.as_str() == claim.value)
        .map(|m| (m.start(), m.end()))
}
