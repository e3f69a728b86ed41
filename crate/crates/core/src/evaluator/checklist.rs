use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::normalizer::{ClinicalContextPackage, EvidenceItem};
use crate::resource::SectionKey;
use crate::summarizer::ANTICOAGULANT_TERMS;

/// RxNorm codes counted as anticoagulants by the default checklist.
pub const ANTICOAGULANT_CODES: &[&str] = &[
    "855332", "855288", "855296", "855302", "855312", "855318", "855324", "855338", "855344",
    "855350", // warfarin
    "1364430", "1364435", "1364445", // apixaban
    "1114198", "1232082", "1232086", // rivaroxaban
    "1037045", "1037179", // dabigatran
    "1599543", "1599551", "1599555", // edoxaban
    "854228", "854235", "854238", // enoxaparin
];

/// Predicate selecting the evidence items a domain is about.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Matcher {
    /// Every item in the section.
    All,
    /// Items whose status is one of these (case-insensitive).
    Status {
        any_of: Vec<String>,
    },
    /// Items carrying any of these codes in any coding.
    Codes {
        any_of: Vec<String>,
    },
    /// Items whose display contains any of these words (case-insensitive).
    Keywords {
        any_of: Vec<String>,
    },
    /// The newest dated item of each code; undated items are never key.
    LatestPerCode,
    AnyOf {
        matchers: Vec<Matcher>,
    },
}

impl Matcher {
    fn select<'a>(&self, items: &'a [EvidenceItem]) -> Vec<&'a EvidenceItem> {
        match self {
            Matcher::LatestPerCode => {
                let mut newest: BTreeMap<(String, String), &EvidenceItem> = BTreeMap::new();
                for item in items {
                    let (Some(code), Some(at)) = (item.primary_code(), item.effective_at) else {
                        continue;
                    };
                    let slot = newest.entry((code.system.clone(), code.code.clone())).or_insert(item);
                    if slot.effective_at.is_some_and(|s| at > s) {
                        *slot = item;
                    }
                }
                items
                    .iter()
                    .filter(|i| newest.values().any(|n| n.evidence_id == i.evidence_id))
                    .collect()
            }
            Matcher::AnyOf { matchers } => {
                let chosen: Vec<Vec<&EvidenceItem>> = matchers.iter().map(|m| m.select(items)).collect();
                items
                    .iter()
                    .filter(|i| chosen.iter().any(|c| c.iter().any(|x| x.evidence_id == i.evidence_id)))
                    .collect()
            }
            _ => items.iter().filter(|i| self.matches_one(i)).collect(),
        }
    }

    fn matches_one(&self, item: &EvidenceItem) -> bool {
        match self {
            Matcher::All => true,
            Matcher::Status { any_of } => item
                .status
                .as_deref()
                .is_some_and(|s| any_of.iter().any(|a| a.eq_ignore_ascii_case(s))),
            Matcher::Codes { any_of } => item.codes.iter().any(|c| any_of.contains(&c.code)),
            Matcher::Keywords { any_of } => {
                let display = item.display.to_lowercase();
                any_of.iter().any(|k| display.contains(&k.to_lowercase()))
            }
            Matcher::LatestPerCode | Matcher::AnyOf { .. } => unreachable!("handled by select"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChecklistDomain {
    pub label: String,
    pub section: SectionKey,
    #[serde(default)]
    pub safety_critical: bool,
    pub matcher: Matcher,
}

impl ChecklistDomain {
    /// Items of the package this domain applies to.
    pub fn matching<'a>(&self, ccp: &'a ClinicalContextPackage) -> Vec<&'a EvidenceItem> {
        self.matcher.select(&ccp.section(self.section).items)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checklist {
    pub domains: Vec<ChecklistDomain>,
}

#[derive(Debug, thiserror::Error)]
#[error("invalid checklist: {0}")]
pub struct ChecklistError(String);

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl Default for Checklist {
    fn default() -> Self {
        let domain = |label: &str, section, safety_critical, matcher| ChecklistDomain {
            label: label.to_string(),
            section,
            safety_critical,
            matcher,
        };
        Self {
            domains: vec![
                domain("demographics", SectionKey::PatientInformation, false, Matcher::All),
                domain(
                    "active problems",
                    SectionKey::Conditions,
                    false,
                    Matcher::Status {
                        any_of: words(&["active", "recurrence", "relapse"]),
                    },
                ),
                domain(
                    "major historical problems",
                    SectionKey::Conditions,
                    false,
                    Matcher::Status {
                        any_of: words(&["inactive", "remission", "resolved"]),
                    },
                ),
                domain(
                    "current medications",
                    SectionKey::Medications,
                    false,
                    Matcher::Status {
                        any_of: words(&["active", "on-hold"]),
                    },
                ),
                domain("allergies", SectionKey::AllergiesAndIntolerances, true, Matcher::All),
                domain(
                    "anticoagulants",
                    SectionKey::Medications,
                    true,
                    Matcher::AnyOf {
                        matchers: vec![
                            Matcher::Codes {
                                any_of: words(ANTICOAGULANT_CODES),
                            },
                            Matcher::Keywords {
                                any_of: words(ANTICOAGULANT_TERMS),
                            },
                        ],
                    },
                ),
                domain(
                    "key recent labs and vitals",
                    SectionKey::LaboratoryAndVitalSigns,
                    false,
                    Matcher::LatestPerCode,
                ),
                domain("major procedures", SectionKey::Procedures, false, Matcher::All),
                domain("encounter context", SectionKey::Encounters, false, Matcher::All),
                domain("preventive care", SectionKey::Immunizations, false, Matcher::All),
            ],
        }
    }
}

impl Checklist {
    pub fn from_json(json: &str) -> Result<Self, ChecklistError> {
        let list: Self = serde_json::from_str(json).map_err(|e| ChecklistError(e.to_string()))?;
        if list.domains.is_empty() {
            return Err(ChecklistError("no domains".into()));
        }
        Ok(list)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checklist serializes")
    }
}
