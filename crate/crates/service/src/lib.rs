//! HTTP/JSON front end for the summarization pipeline.
//!
//! | method | path            | role          |
//! |--------|-----------------|---------------|
//! | POST   | `/summarize`    | any key       |
//! | POST   | `/ask`          | any key       |
//! | GET    | `/summary/{id}` | any key       |
//! | GET    | `/audit`        | administrator |
//! | GET    | `/health`       | none          |
//!
//! Keys are sent as `Authorization: Bearer {key}`. Patient data lives only
//! for the duration of a request; in summary-only retention the rendered
//! summary is written to disk and nothing else.

mod app;
pub mod audit;
pub mod limiter;
pub mod store;

pub use app::{
    start, AskResponse, EvidenceLink, RunningService, Service, ServiceError, ARTIFACT_HEADER, PATIENT_UNAVAILABLE,
};
