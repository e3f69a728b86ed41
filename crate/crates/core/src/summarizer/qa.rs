//! Follow-up questions answered by lexical lookup over the package.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::templates::{item_text, words};
use crate::normalizer::{attr, ClinicalContextPackage, EvidenceItem};
use crate::resource::SectionKey;

pub const REFUSAL_TEXT: &str = "This information is not in the retrieved context for this patient.";

/// Answers are capped at this many cited items.
pub const MAX_ANSWER_ITEMS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundedAnswer {
    pub text: String,
    pub evidence_refs: Vec<String>,
    pub refused: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refusal_reason: Option<String>,
}

impl GroundedAnswer {
    fn refuse(reason: &str) -> Self {
        Self {
            text: REFUSAL_TEXT.to_string(),
            evidence_refs: vec![],
            refused: true,
            refusal_reason: Some(reason.to_string()),
        }
    }
}

/// Drug names that stand in for the class word.
pub const ANTICOAGULANT_TERMS: &[&str] = &[
    "warfarin",
    "apixaban",
    "rivaroxaban",
    "dabigatran",
    "edoxaban",
    "heparin",
    "enoxaparin",
];

const QUESTION_STOPWORDS: &[&str] = &[
    "what",
    "whats",
    "which",
    "when",
    "where",
    "who",
    "how",
    "does",
    "did",
    "the",
    "and",
    "for",
    "with",
    "any",
    "are",
    "was",
    "were",
    "has",
    "have",
    "had",
    "show",
    "tell",
    "give",
    "list",
    "me",
    "patient",
    "patients",
    "current",
    "currently",
    "most",
    "recent",
    "last",
    "latest",
    "newest",
    "value",
    "values",
    "level",
    "levels",
    "result",
    "results",
    "this",
    "that",
    "their",
    "his",
    "her",
    "there",
    "about",
    "from",
    "of",
    "on",
    "in",
    "is",
    "a",
    "an",
    "to",
    "be",
    "do",
    "my",
    "our",
];

/// Crude plural folding so `allergies` meets `allergy`.
fn stem(word: &str) -> String {
    if let Some(base) = word.strip_suffix("ies").filter(|b| b.len() >= 3) {
        format!("{base}y")
    } else if let Some(base) = word.strip_suffix('s').filter(|b| b.len() >= 3 && !b.ends_with('s')) {
        base.to_string()
    } else {
        word.to_string()
    }
}

fn question_terms(question: &str) -> BTreeSet<String> {
    let raw: Vec<String> = words(question).collect();
    let mut terms = BTreeSet::new();
    for w in &raw {
        if QUESTION_STOPWORDS.contains(&w.as_str()) {
            continue;
        }
        let w = stem(w);
        match w.as_str() {
            "anticoagulant" | "anticoagulation" | "thinner" => {
                terms.extend(ANTICOAGULANT_TERMS.iter().map(|s| s.to_string()));
            }
            "a1c" | "hba1c" => {
                terms.extend(["a1c", "hba1c", "4548"].map(String::from));
            }
            "admission" | "admitted" | "hospitalization" | "hospitalisation" | "inpatient" => {
                terms.extend(["inpatient", "imp", "admission", "hospitalization"].map(String::from));
            }
            _ => {}
        }
        if w.len() >= 2 {
            terms.insert(w);
        }
    }
    terms
}

fn wants_latest(question: &str) -> bool {
    let ws: Vec<String> = words(question).collect();
    ws.iter().any(|w| matches!(w.as_str(), "latest" | "last" | "newest"))
        || ws.windows(2).any(|p| p[0] == "most" && p[1] == "recent")
}

fn item_terms(item: &EvidenceItem) -> BTreeSet<String> {
    let mut sources = vec![item.display.clone(), item.section.label().to_string()];
    for c in &item.codes {
        sources.push(c.code.clone());
        sources.extend(c.display.clone());
    }
    for key in [
        attr::CATEGORY,
        attr::CLASS,
        attr::REASON,
        attr::CRITICALITY,
        attr::REACTION,
    ] {
        sources.extend(item.attr(key).map(str::to_string));
    }
    sources.iter().flat_map(|s| words(s)).map(|w| stem(&w)).collect()
}

/// Scores items by how many question terms they contain.
///
/// With a "most recent" style qualifier only the newest of the best
/// matches is cited; otherwise up to [`MAX_ANSWER_ITEMS`] best matches are,
/// newest first. No match is a refusal, never a guess.
pub fn answer_question(ccp: &ClinicalContextPackage, question: &str) -> GroundedAnswer {
    if question.trim().is_empty() {
        return GroundedAnswer::refuse("empty question");
    }
    let terms = question_terms(question);
    if terms.is_empty() {
        return GroundedAnswer::refuse("question has no searchable terms");
    }

    let mut scored: Vec<(usize, &EvidenceItem)> = ccp
        .items()
        .filter(|i| i.section != SectionKey::PatientInformation || terms.iter().any(|t| t == "demographic"))
        .map(|i| (item_terms(i).intersection(&terms).count(), i))
        .filter(|(score, _)| *score > 0)
        .collect();
    let Some(best) = scored.iter().map(|(s, _)| *s).max() else {
        return GroundedAnswer::refuse("no matching evidence in the retrieved context");
    };
    scored.retain(|(s, _)| *s == best);
    // newest first, undated last, stable otherwise
    scored.sort_by(|a, b| {
        b.1.effective_at
            .is_some()
            .cmp(&a.1.effective_at.is_some())
            .then(b.1.effective_at.cmp(&a.1.effective_at))
    });

    let chosen: Vec<&EvidenceItem> = if wants_latest(question) {
        scored.iter().take(1).map(|(_, i)| *i).collect()
    } else {
        scored.iter().take(MAX_ANSWER_ITEMS).map(|(_, i)| *i).collect()
    };
    GroundedAnswer {
        text: chosen.iter().map(|i| item_text(i)).collect::<Vec<_>>().join("; "),
        evidence_refs: chosen.iter().map(|i| i.evidence_id.clone()).collect(),
        refused: false,
        refusal_reason: None,
    }
}

/// The expanded terms a question is matched on; exposed for checks that an
/// answer's citations really overlap the question.
pub fn matched_terms(question: &str, item: &EvidenceItem) -> BTreeSet<String> {
    item_terms(item)
        .intersection(&question_terms(question))
        .cloned()
        .collect()
}
