//! Retrieval, normalization, grounded summarization and evaluation of
//! patient records exposed through FHIR R4.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`fhir_client`] retrieves a targeted set of resource types for one
//!    patient, recording per-type failures instead of aborting.
//! 2. [`normalizer`] turns the raw resources into an immutable
//!    [`ClinicalContextPackage`](normalizer::ClinicalContextPackage).
//! 3. [`summarizer`] renders a [`SummaryDocument`](summarizer::SummaryDocument)
//!    whose statements cite the evidence they were built from.
//! 4. [`evaluator`] scores a summary against its context package.
//!
//! [`testkit`] generates synthetic patients and serves them through an
//! in-process FHIR source.

pub mod evaluator;
pub mod fhir_client;
pub mod normalizer;
pub mod pipeline;
pub mod resource;
pub mod settings;
pub mod summarizer;
pub mod testkit;

pub use resource::{ResourceType, SectionKey};
