//! Evidence-cited summaries of a [`ClinicalContextPackage`](crate::normalizer::ClinicalContextPackage).
//!
//! Two backends produce the same [`SummaryDocument`] shape: fixed templates
//! ([`summarize_deterministic`]) and an external generative service
//! ([`summarize_via_backend`]). Hosted output only survives if
//! [`validate_grounding`] finds nothing wrong with it.

mod backend;
mod deterministic;
mod document;
mod grounding;
mod qa;
mod render;
mod templates;

pub use backend::{
    parse_backend_response, summarize_via_backend, summarize_with_fallback, BackendError, BackendRequest,
    BackendTransport, GuardrailPrompt, HostedBackend, HttpBackendTransport,
};
pub use deterministic::{patient_header, summarize_deterministic, summarize_deterministic_with, SummaryOptions};
pub use document::{
    BackendKind, DocumentError, DocumentMetadata, GroundingViolation, NumericClaim, RenderMode, StatementKind,
    StatementRef, SummaryDocument, SummarySection, SummaryStatement, TemporalClaim, TemporalRole, UnknownRenderMode,
    ViolationCategory, DEFAULT_DISCLAIMER,
};
pub use grounding::{
    validate_grounding, validate_grounding_with, GroundingError, GroundingPolicy, DEFAULT_RECOMMENDATION_PHRASES,
};
pub use qa::{answer_question, matched_terms, GroundedAnswer, ANTICOAGULANT_TERMS, MAX_ANSWER_ITEMS, REFUSAL_TEXT};
pub use render::{render_markdown, render_text};
pub use templates::{fact_statement, fmt_date, item_text, missing_text, trend_statement, trend_text};
pub(crate) use templates::{item_sources, numbers};

#[cfg(test)]
mod tests;
