//! Scores a summary against the package it was built from: checklist
//! coverage, safety omissions, an error taxonomy and temporal checks.
//!
//! [`apply_mutation`] corrupts a valid summary at one site so detector
//! accuracy can be measured, and [`run_stress_suite`] drives the named hard
//! cases through the whole pipeline.

mod checklist;
mod mutations;
mod report;
mod stress;

pub use checklist::{Checklist, ChecklistDomain, ChecklistError, Matcher, ANTICOAGULANT_CODES};
pub use mutations::{apply_mutation, MutationKind, MutationSite, SeededMutation};
pub use report::{
    categorize_errors, categorize_errors_with, coverage_score, evaluate, evaluate_with, omission_risk,
    section_completeness, DomainCoverage, ErrorCategory, ErrorRef, EvaluationError, EvaluationReport, OmissionFinding,
};
pub use stress::{
    run_case, run_stress_suite, CaseResult, SuiteReport, CONFLICTING_OBSERVATIONS, DUPLICATE_ORDERS, LONGITUDINAL_LABS,
    MISSING_RESOURCES, STRESS_CASES,
};

#[cfg(test)]
mod tests;
