//! Adapter for an external generative backend.
//!
//! Wire format, request: `{instructions, model, ccp}`; response:
//! `{sections: [{key, statements: [{text, evidence_ids, numeric_claims, kind?, temporal_claims?}]}]}`.
//! Whatever comes back is validated before it is returned.

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::deterministic::{patient_header, summarize_deterministic_with, SummaryOptions};
use super::document::{
    BackendKind, NumericClaim, StatementKind, SummaryDocument, SummarySection, SummaryStatement, TemporalClaim,
};
use super::grounding::{check_statements, GroundingPolicy};
use crate::normalizer::ClinicalContextPackage;
use crate::resource::SectionKey;

const DEFAULT_INSTRUCTIONS: &str = "\
You receive a clinical context package as JSON. Write a summary for a clinician.
Rules:
1. Use only the section keys listed in the package, in the same order.
2. Write each statement in your own concise words; do not paste whole input records.
3. Leave out any section that has no items rather than guessing at its contents.
4. Report what the record shows. Do not diagnose and do not suggest treatments or medication changes.
5. Every statement must list the evidence_id values it relies on in evidence_ids, and every number you state \
must appear in numeric_claims with the evidence_id it came from.
Reply with JSON only: {\"sections\": [{\"key\": ..., \"statements\": [{\"text\": ..., \"evidence_ids\": [...], \
\"numeric_claims\": [{\"value\": ..., \"unit\": ..., \"evidence_id\": ...}]}]}]}";

/// Instruction block sent with every hosted request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardrailPrompt {
    pub text: String,
}

impl Default for GuardrailPrompt {
    fn default() -> Self {
        Self {
            text: DEFAULT_INSTRUCTIONS.to_string(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct BackendRequest<'a> {
    pub instructions: &'a str,
    pub model: &'a str,
    pub ccp: &'a ClinicalContextPackage,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("backend did not answer within {0:?}")]
    Timeout(Duration),
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("backend returned HTTP {0}")]
    Status(u16),
    #[error("backend response is malformed: {0}")]
    Malformed(String),
    #[error("hosted backend is not configured: {0}")]
    NotConfigured(&'static str),
}

/// Delivers one request body and returns the raw response body.
#[async_trait]
pub trait BackendTransport: Send + Sync {
    async fn send(&self, request: &BackendRequest<'_>) -> Result<String, BackendError>;
}

/// JSON over HTTP POST.
#[derive(Debug, Clone)]
pub struct HttpBackendTransport {
    client: reqwest::Client,
    endpoint: String,
}

impl HttpBackendTransport {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            client: reqwest::Client::new(),
            endpoint: endpoint.into(),
        }
    }
}

#[async_trait]
impl BackendTransport for HttpBackendTransport {
    async fn send(&self, request: &BackendRequest<'_>) -> Result<String, BackendError> {
        let resp = self
            .client
            .post(&self.endpoint)
            .json(request)
            .send()
            .await
            .map_err(|e| BackendError::Unreachable(e.without_url().to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(BackendError::Status(status.as_u16()));
        }
        resp.text()
            .await
            .map_err(|e| BackendError::Unreachable(e.without_url().to_string()))
    }
}

/// A configured hosted endpoint.
#[derive(Clone)]
pub struct HostedBackend {
    pub endpoint: String,
    pub model: String,
    pub timeout: Duration,
    transport: Arc<dyn BackendTransport>,
}

impl std::fmt::Debug for HostedBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HostedBackend")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("timeout", &self.timeout)
            .finish_non_exhaustive()
    }
}

impl HostedBackend {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        transport: Arc<dyn BackendTransport>,
    ) -> Result<Self, BackendError> {
        let endpoint = endpoint.into();
        if endpoint.trim().is_empty() {
            return Err(BackendError::NotConfigured("endpoint is empty"));
        }
        Ok(Self {
            endpoint,
            model: model.into(),
            timeout: Duration::from_secs(60),
            transport,
        })
    }

    /// Talks to `endpoint` over HTTP.
    pub fn http(endpoint: impl Into<String>, model: impl Into<String>) -> Result<Self, BackendError> {
        let endpoint = endpoint.into();
        let transport = Arc::new(HttpBackendTransport::new(endpoint.clone()));
        Self::new(endpoint, model, transport)
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn kind(&self) -> BackendKind {
        BackendKind::Hosted {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireResponse {
    sections: Vec<WireSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireSection {
    key: SectionKey,
    statements: Vec<WireStatement>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireStatement {
    text: String,
    #[serde(default)]
    evidence_ids: Vec<String>,
    #[serde(default)]
    numeric_claims: Vec<NumericClaim>,
    #[serde(default)]
    kind: Option<StatementKind>,
    #[serde(default)]
    temporal_claims: Vec<TemporalClaim>,
}

/// Decodes a backend response body into canonical-order sections.
///
/// A statement without `kind` is a Fact when it cites evidence and a
/// MissingData notice otherwise. Unknown or repeated section keys are errors.
pub fn parse_backend_response(body: &str) -> Result<Vec<SummarySection>, BackendError> {
    let wire: WireResponse = serde_json::from_str(body).map_err(|e| BackendError::Malformed(e.to_string()))?;
    let mut sections: Vec<SummarySection> = Vec::with_capacity(wire.sections.len());
    for ws in wire.sections {
        if sections.iter().any(|s| s.key == ws.key) {
            return Err(BackendError::Malformed(format!("section {} appears twice", ws.key)));
        }
        let statements = ws
            .statements
            .into_iter()
            .map(|s| SummaryStatement {
                kind: s.kind.unwrap_or(if s.evidence_ids.is_empty() {
                    StatementKind::MissingData
                } else {
                    StatementKind::Fact
                }),
                text: s.text,
                section: ws.key,
                evidence_refs: s.evidence_ids,
                numeric_claims: s.numeric_claims,
                temporal_claims: s.temporal_claims,
            })
            .collect();
        sections.push(SummarySection {
            key: ws.key,
            statements,
        });
    }
    sections.sort_by_key(|s| s.key);
    Ok(sections)
}

/// Sends the package to the hosted backend and validates the answer.
///
/// A response that fails any grounding check is discarded: the template
/// summary is returned instead, with the violations and the reason in its
/// metadata. Transport failures and undecodable responses are errors; see
/// [`summarize_with_fallback`] for the variant that never fails.
pub async fn summarize_via_backend(
    ccp: &ClinicalContextPackage,
    backend: &HostedBackend,
    prompt: &GuardrailPrompt,
    options: &SummaryOptions,
) -> Result<SummaryDocument, BackendError> {
    let request = BackendRequest {
        instructions: &prompt.text,
        model: &backend.model,
        ccp,
    };
    let body = tokio::time::timeout(backend.timeout, backend.transport.send(&request))
        .await
        .map_err(|_| BackendError::Timeout(backend.timeout))??;
    let sections = parse_backend_response(&body)?;
    let doc = SummaryDocument::new(
        patient_header(ccp),
        sections,
        options.disclaimer.clone(),
        ccp.fingerprint(),
        backend.kind(),
        ccp.built_at(),
    )
    .map_err(|e| BackendError::Malformed(e.to_string()))?;

    let violations = check_statements(&doc, ccp, &GroundingPolicy::default());
    if violations.is_empty() {
        return Ok(doc);
    }
    tracing::warn!(
        count = violations.len(),
        "hosted summary failed grounding, using templates"
    );
    let mut fallback = summarize_deterministic_with(ccp, options);
    fallback.metadata.fallback_reason = Some("hosted summary failed grounding validation".into());
    fallback.metadata.violations = violations;
    Ok(fallback)
}

/// Like [`summarize_via_backend`], but backend failures also fall back to
/// the template summary.
pub async fn summarize_with_fallback(
    ccp: &ClinicalContextPackage,
    backend: &HostedBackend,
    prompt: &GuardrailPrompt,
    options: &SummaryOptions,
) -> SummaryDocument {
    match summarize_via_backend(ccp, backend, prompt, options).await {
        Ok(doc) => doc,
        Err(e) => {
            tracing::warn!(error = %e, "hosted backend failed, using templates");
            let mut doc = summarize_deterministic_with(ccp, options);
            doc.metadata.fallback_reason = Some(format!("hosted backend failed: {e}"));
            doc
        }
    }
}
