use super::document::{BackendKind, RenderMode, SummaryDocument, SummarySection, SummaryStatement, DEFAULT_DISCLAIMER};
use super::templates::{fact_statement, missing_text, trend_statement};
use crate::normalizer::{attr, ClinicalContextPackage, SectionState};
use crate::resource::SectionKey;

/// Options for the built-in template backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummaryOptions {
    pub mode: RenderMode,
    pub disclaimer: String,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        Self {
            mode: RenderMode::default(),
            disclaimer: DEFAULT_DISCLAIMER.to_string(),
        }
    }
}

impl SummaryOptions {
    pub fn with_mode(mode: RenderMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }
}

/// `Name (gender, born YYYY-MM-DD)`, leaving out what the record lacks.
pub fn patient_header(ccp: &ClinicalContextPackage) -> String {
    let p = ccp.patient();
    let details: Vec<String> = [
        p.attr(attr::GENDER).map(str::to_string),
        p.attr(attr::BIRTH_DATE).map(|b| format!("born {b}")),
    ]
    .into_iter()
    .flatten()
    .collect();
    if details.is_empty() {
        p.display.clone()
    } else {
        format!("{} ({})", p.display, details.join(", "))
    }
}

pub fn summarize_deterministic(ccp: &ClinicalContextPackage, mode: RenderMode) -> SummaryDocument {
    summarize_deterministic_with(ccp, &SummaryOptions::with_mode(mode))
}

/// Template rendering of every item and trend in the package.
///
/// Output is a pure function of the package and options: `generated_at` is
/// the package's `built_at`.
pub fn summarize_deterministic_with(ccp: &ClinicalContextPackage, options: &SummaryOptions) -> SummaryDocument {
    let mut sections = Vec::new();
    for section in ccp.sections() {
        let statements: Vec<SummaryStatement> = match section.state {
            SectionState::Populated => {
                let mut out = Vec::with_capacity(section.items.len());
                if section.key == SectionKey::LaboratoryAndVitalSigns {
                    out.extend(ccp.trends().iter().map(trend_statement));
                }
                out.extend(section.items.iter().map(fact_statement));
                out
            }
            SectionState::Unavailable => vec![SummaryStatement::missing(section.key, missing_text(section.key, true))],
            SectionState::Empty => match options.mode {
                RenderMode::OmitEmpty => continue,
                RenderMode::NoticeEmpty => {
                    vec![SummaryStatement::missing(section.key, missing_text(section.key, false))]
                }
            },
        };
        sections.push(SummarySection {
            key: section.key,
            statements,
        });
    }
    SummaryDocument::new(
        patient_header(ccp),
        sections,
        options.disclaimer.clone(),
        ccp.fingerprint(),
        BackendKind::Deterministic,
        ccp.built_at(),
    )
    .expect("sections are emitted in canonical order")
}
