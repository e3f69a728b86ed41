//! A hosted-backend stand-in that answers from the template summary.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use async_trait::async_trait;
use serde_json::{json, Value};

use crate::resource::SectionKey;
use crate::summarizer::{
    summarize_deterministic, BackendError, BackendRequest, BackendTransport, HostedBackend, RenderMode, SummaryDocument,
};

pub const STUB_ENDPOINT: &str = "http://stub-backend.local/v1/summarize";
pub const STUB_MODEL: &str = "stub-echo";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StubBehavior {
    /// Schema-valid, fully grounded output.
    Grounded,
    /// Adds a statement citing an id that is not in the package.
    DanglingCitation,
    /// Adds a statement whose number is not in the cited item.
    MismatchedValue,
    /// Adds a treatment suggestion.
    Recommendation,
    /// Answers with something that is not the response schema.
    Malformed,
    /// Fails as if the endpoint were down.
    Unreachable,
}

#[derive(Debug)]
pub struct StubBackend {
    behavior: StubBehavior,
    requests: AtomicUsize,
}

impl StubBackend {
    pub fn new(behavior: StubBehavior) -> Self {
        Self {
            behavior,
            requests: AtomicUsize::new(0),
        }
    }

    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }
}

/// A [`HostedBackend`] wired to a fresh stub.
pub fn stub_hosted(behavior: StubBehavior) -> (HostedBackend, Arc<StubBackend>) {
    let stub = Arc::new(StubBackend::new(behavior));
    let backend = HostedBackend::new(STUB_ENDPOINT, STUB_MODEL, stub.clone()).expect("endpoint set");
    (backend, stub)
}

/// The wire response a backend would send for `doc`.
pub fn to_wire(doc: &SummaryDocument) -> Value {
    let sections: Vec<Value> = doc
        .sections()
        .iter()
        .map(|s| {
            let statements: Vec<Value> = s
                .statements
                .iter()
                .map(|st| {
                    json!({
                        "text": st.text, "evidence_ids": st.evidence_refs, "kind": st.kind,
                        "numeric_claims": st.numeric_claims, "temporal_claims": st.temporal_claims,
                    })
                })
                .collect();
            json!({"key": s.key, "statements": statements})
        })
        .collect();
    json!({ "sections": sections })
}

#[async_trait]
impl BackendTransport for StubBackend {
    async fn send(&self, request: &BackendRequest<'_>) -> Result<String, BackendError> {
        self.requests.fetch_add(1, Ordering::Relaxed);
        let ccp = request.ccp;
        let mut wire = to_wire(&summarize_deterministic(ccp, RenderMode::NoticeEmpty));
        let patient = ccp.patient();
        let extra = match self.behavior {
            StubBehavior::Grounded => None,
            StubBehavior::DanglingCitation => Some(json!({
                "text": format!("{} was seen for a follow-up visit", patient.display),
                "evidence_ids": ["Encounter/not-in-package"],
            })),
            StubBehavior::MismatchedValue => Some(json!({
                "text": format!("{} weighs 999 kg", patient.display),
                "evidence_ids": [patient.evidence_id],
                "numeric_claims": [{"value": 999, "unit": "kg", "evidence_id": patient.evidence_id}],
            })),
            StubBehavior::Recommendation => Some(json!({
                "text": format!("{}: recommend starting insulin", patient.display),
                "evidence_ids": [patient.evidence_id],
            })),
            StubBehavior::Malformed => return Ok(r#"{"summary": "free text instead of sections"}"#.into()),
            StubBehavior::Unreachable => return Err(BackendError::Unreachable("connection refused".into())),
        };
        if let Some(statement) = extra {
            let sections = wire["sections"].as_array_mut().expect("sections array");
            let patient_section = sections
                .iter_mut()
                .find(|s| s["key"] == json!(SectionKey::PatientInformation))
                .expect("patient section is always populated");
            patient_section["statements"]
                .as_array_mut()
                .expect("statements array")
                .push(statement);
        }
        Ok(wire.to_string())
    }
}
