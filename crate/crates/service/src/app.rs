// Helpers short-circuit with a finished `Response` as the error value.
#![allow(clippy::result_large_err)]

use std::collections::HashMap;
use std::io;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use ehrsum_core::fhir_client::{is_valid_fhir_id, Clock, FhirClient};
use ehrsum_core::normalizer::ClinicalContextPackage;
use ehrsum_core::pipeline::build_package;
use ehrsum_core::settings::{BackendChoice, QaSettings, RetentionMode, Role, Settings};
use ehrsum_core::summarizer::{
    answer_question, summarize_deterministic_with, summarize_with_fallback, GroundedAnswer, GuardrailPrompt,
    HostedBackend, RenderMode, SummaryDocument, SummaryOptions,
};

use crate::audit::{
    patient_ref_hash, AuditAction, AuditEvent, AuditOutcome, AuditSink, JsonlAuditSink, MemoryAuditSink,
};
use crate::limiter::RateLimiter;
use crate::store::{ArtifactStore, ArtifactTimestamps, StoredArtifact};

pub const ARTIFACT_HEADER: &str = "x-artifact-id";
pub const PATIENT_UNAVAILABLE: &str = "Patient record unavailable from source";

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot open {what}: {source}")]
    Io {
        what: &'static str,
        #[source]
        source: io::Error,
    },
}

#[derive(Clone)]
struct AppState {
    client: FhirClient,
    keys: Arc<HashMap<String, (String, Role)>>,
    limiter: Arc<RateLimiter>,
    audit: Arc<dyn AuditSink>,
    store: Option<ArtifactStore>,
    salt: Arc<str>,
    hosted: Option<HostedBackend>,
    default_backend: BackendChoice,
    prompt: Arc<GuardrailPrompt>,
    qa: Arc<QaSettings>,
    clock: Clock,
}

/// A configured service, ready to be turned into a router.
pub struct Service {
    state: AppState,
}

impl Service {
    /// Builds the service from validated settings. The audit sink and the
    /// artifact store are opened here.
    pub fn new(settings: &Settings, client: FhirClient) -> Result<Self, ServiceError> {
        settings.validate().map_err(|e| ServiceError::Config(e.to_string()))?;
        let audit: Arc<dyn AuditSink> = match &settings.audit.path {
            Some(p) => Arc::new(JsonlAuditSink::open(p).map_err(|source| ServiceError::Io {
                what: "audit log",
                source,
            })?),
            None => Arc::new(MemoryAuditSink::new()),
        };
        let store = match (settings.retention.mode, &settings.retention.store_path) {
            (RetentionMode::SummaryOnly, Some(p)) => {
                Some(ArtifactStore::open(p).map_err(|source| ServiceError::Io {
                    what: "summary store",
                    source,
                })?)
            }
            _ => None,
        };
        let hosted = match (settings.backend.kind, &settings.backend.url) {
            (BackendChoice::Hosted, Some(url)) => Some(
                HostedBackend::http(url.clone(), settings.backend.model.clone().unwrap_or_default())
                    .map_err(|e| ServiceError::Config(e.to_string()))?,
            ),
            _ => None,
        };
        let keys = settings
            .api_keys
            .iter()
            .map(|k| (k.key.clone(), (k.label.clone(), k.role)))
            .collect();
        Ok(Self {
            state: AppState {
                client,
                keys: Arc::new(keys),
                limiter: Arc::new(RateLimiter::new(settings.rate_limit.per_minute)),
                audit,
                store,
                salt: settings.audit.salt.as_str().into(),
                hosted,
                default_backend: settings.backend.kind,
                prompt: Arc::new(GuardrailPrompt::default()),
                qa: Arc::new(settings.qa.clone()),
                clock: Arc::new(Utc::now),
            },
        })
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.state.clock = clock;
        self
    }

    pub fn with_audit_sink(mut self, sink: Arc<dyn AuditSink>) -> Self {
        self.state.audit = sink;
        self
    }

    pub fn with_hosted_backend(mut self, backend: HostedBackend) -> Self {
        self.state.hosted = Some(backend);
        self
    }

    pub fn audit_sink(&self) -> Arc<dyn AuditSink> {
        self.state.audit.clone()
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/health", get(health))
            .route("/summarize", post(summarize))
            .route("/ask", post(ask))
            .route("/summary/{id}", get(fetch_summary))
            .route("/audit", get(read_audit))
            .with_state(self.state.clone())
    }
}

/// A service listening on a socket.
pub struct RunningService {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    handle: JoinHandle<io::Result<()>>,
}

impl RunningService {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting connections and waits for in-flight requests.
    pub async fn stop(mut self) -> io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.handle.await.map_err(io::Error::other)?
    }
}

pub async fn start(service: &Service, addr: &str) -> io::Result<RunningService> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let app = service.router();
    let (tx, rx) = oneshot::channel::<()>();
    let handle = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    Ok(RunningService {
        addr,
        shutdown: Some(tx),
        handle,
    })
}

// ---- responses ----

fn fail(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn internal(context: &str, err: impl std::fmt::Display) -> Response {
    let reference = uuid::Uuid::new_v4().to_string();
    tracing::error!(%reference, error = %err, "{context}");
    (
        StatusCode::INTERNAL_SERVER_ERROR,
        Json(json!({ "error": "Internal error", "reference": reference })),
    )
        .into_response()
}

fn json_body(status: StatusCode, body: String) -> Response {
    let mut resp = (status, body).into_response();
    resp.headers_mut()
        .insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
    resp
}

#[derive(Serialize)]
struct HealthBody {
    status: &'static str,
    version: &'static str,
}

async fn health() -> Json<HealthBody> {
    Json(HealthBody {
        status: "ok",
        version: env!("CARGO_PKG_VERSION"),
    })
}

// ---- access control ----

struct Caller {
    label: String,
}

impl AppState {
    fn now(&self) -> DateTime<Utc> {
        (self.clock)()
    }

    fn record(&self, actor: &str, action: AuditAction, patient: Option<&str>, outcome: AuditOutcome) {
        self.record_hashed(actor, action, patient.map(|p| patient_ref_hash(&self.salt, p)), outcome)
    }

    fn record_hashed(&self, actor: &str, action: AuditAction, hash: Option<String>, outcome: AuditOutcome) {
        let event = AuditEvent {
            event_id: uuid::Uuid::new_v4().to_string(),
            at: self.now(),
            actor: actor.to_string(),
            action,
            patient_ref_hash: hash,
            outcome,
        };
        if let Err(e) = self.audit.append(&event) {
            tracing::error!(error = %e, "audit append failed");
        }
    }

    /// 401, then 403, then 429. Denials are audited here.
    fn authorize(&self, headers: &HeaderMap, action: AuditAction, admin_only: bool) -> Result<Caller, Response> {
        let key = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::trim);
        let Some((label, role)) = key.and_then(|k| self.keys.get(k)) else {
            self.record("anonymous", action, None, AuditOutcome::Denied);
            return Err(fail(StatusCode::UNAUTHORIZED, "Missing or unknown API key"));
        };
        if admin_only && *role != Role::Administrator {
            self.record(label, action, None, AuditOutcome::Denied);
            return Err(fail(StatusCode::FORBIDDEN, "This action requires an administrator key"));
        }
        if !self.limiter.try_acquire(label, self.now()) {
            self.record(label, action, None, AuditOutcome::Denied);
            return Err(fail(
                StatusCode::TOO_MANY_REQUESTS,
                "Rate limit exceeded, try again shortly",
            ));
        }
        Ok(Caller { label: label.clone() })
    }

    /// Retrieval and packaging. The raw records never leave this call.
    async fn package(&self, patient_id: &str) -> Result<ClinicalContextPackage, Response> {
        match build_package(&self.client, patient_id).await {
            Ok(ccp) => Ok(ccp),
            Err(e) if e.is_patient_unavailable() => Err(fail(StatusCode::BAD_GATEWAY, PATIENT_UNAVAILABLE)),
            Err(e) => Err(internal("pipeline failed", e)),
        }
    }
}

fn parse<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, Response> {
    serde_json::from_slice(body).map_err(|e| {
        let reason = e.to_string();
        let reason = reason.split(" at line ").next().unwrap_or_default();
        fail(StatusCode::BAD_REQUEST, format!("Invalid request body: {reason}"))
    })
}

fn check_patient_id(id: &str) -> Result<(), Response> {
    if is_valid_fhir_id(id) {
        Ok(())
    } else {
        Err(fail(StatusCode::BAD_REQUEST, "patient_id is not a valid FHIR id"))
    }
}

// ---- handlers ----

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SummarizeRequest {
    patient_id: String,
    #[serde(default)]
    backend: Option<BackendChoice>,
    #[serde(default)]
    render_mode: Option<String>,
}

async fn summarize(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Response {
    let caller = match state.authorize(&headers, AuditAction::Summarize, false) {
        Ok(c) => c,
        Err(resp) => return resp,
    };
    let (resp, patient, outcome) = summarize_inner(&state, &body).await;
    state.record(&caller.label, AuditAction::Summarize, patient.as_deref(), outcome);
    resp
}

async fn summarize_inner(state: &AppState, body: &Bytes) -> (Response, Option<String>, AuditOutcome) {
    let req: SummarizeRequest = match parse(body) {
        Ok(r) => r,
        Err(resp) => return (resp, None, AuditOutcome::Error),
    };
    if let Err(resp) = check_patient_id(&req.patient_id) {
        return (resp, None, AuditOutcome::Error);
    }
    let patient = Some(req.patient_id.clone());
    let mode = match req.render_mode.as_deref().map(str::parse::<RenderMode>).transpose() {
        Ok(m) => m.unwrap_or_default(),
        Err(e) => {
            return (
                fail(StatusCode::BAD_REQUEST, e.to_string()),
                patient,
                AuditOutcome::Error,
            )
        }
    };
    let choice = req.backend.unwrap_or(state.default_backend);
    if choice == BackendChoice::Hosted && state.hosted.is_none() {
        return (
            fail(StatusCode::BAD_REQUEST, "Hosted backend is not configured"),
            patient,
            AuditOutcome::Error,
        );
    }
    let ccp = match state.package(&req.patient_id).await {
        Ok(c) => c,
        Err(resp) => return (resp, patient, AuditOutcome::Error),
    };
    let options = SummaryOptions::with_mode(mode);
    let doc = match (&state.hosted, choice) {
        (Some(backend), BackendChoice::Hosted) => summarize_with_fallback(&ccp, backend, &state.prompt, &options).await,
        _ => summarize_deterministic_with(&ccp, &options),
    };
    drop(ccp);

    let body = doc.to_json();
    let mut resp = json_body(StatusCode::OK, body);
    if let Some(store) = &state.store {
        match persist(state, store, &req.patient_id, doc) {
            Ok(id) => {
                resp.headers_mut().insert(
                    ARTIFACT_HEADER,
                    HeaderValue::from_str(&id).expect("uuid is a valid header"),
                );
            }
            Err(e) => return (internal("artifact write failed", e), patient, AuditOutcome::Error),
        }
    }
    (resp, patient, AuditOutcome::Ok)
}

fn persist(state: &AppState, store: &ArtifactStore, patient_id: &str, doc: SummaryDocument) -> io::Result<String> {
    let artifact_id = uuid::Uuid::new_v4().to_string();
    let artifact = StoredArtifact {
        artifact_id: artifact_id.clone(),
        patient_ref_hash: patient_ref_hash(&state.salt, patient_id),
        timestamps: ArtifactTimestamps {
            generated_at: doc.generated_at,
            stored_at: state.now(),
        },
        backend: doc.backend.clone(),
        summary: doc,
    };
    store.put(&artifact)?;
    Ok(artifact_id)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AskRequest {
    patient_id: String,
    question: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvidenceLink {
    pub evidence_id: String,
    pub source_url: String,
}

/// `/ask` response: the answer plus the disclaimer and links to the cited
/// source resources.
#[derive(Debug, Serialize, Deserialize)]
pub struct AskResponse {
    #[serde(flatten)]
    pub answer: GroundedAnswer,
    pub disclaimer: String,
    pub sources: Vec<EvidenceLink>,
}

async fn ask(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Response {
    let caller = match state.authorize(&headers, AuditAction::Ask, false) {
        Ok(c) => c,
        Err(resp) => return resp,
    };
    let (resp, patient, outcome) = ask_inner(&state, &body).await;
    state.record(&caller.label, AuditAction::Ask, patient.as_deref(), outcome);
    resp
}

async fn ask_inner(state: &AppState, body: &Bytes) -> (Response, Option<String>, AuditOutcome) {
    if !state.qa.enabled {
        return (
            fail(StatusCode::NOT_FOUND, "Follow-up questions are disabled"),
            None,
            AuditOutcome::Error,
        );
    }
    let req: AskRequest = match parse(body) {
        Ok(r) => r,
        Err(resp) => return (resp, None, AuditOutcome::Error),
    };
    if let Err(resp) = check_patient_id(&req.patient_id) {
        return (resp, None, AuditOutcome::Error);
    }
    let patient = Some(req.patient_id.clone());
    // rebuilt on every question; nothing is cached between requests
    let ccp = match state.package(&req.patient_id).await {
        Ok(c) => c,
        Err(resp) => return (resp, patient, AuditOutcome::Error),
    };
    let answer = answer_question(&ccp, &req.question);
    let sources = answer
        .evidence_refs
        .iter()
        .filter_map(|id| ccp.item(id))
        .map(|i| EvidenceLink {
            evidence_id: i.evidence_id.clone(),
            source_url: i.source_url.clone(),
        })
        .collect();
    let resp = AskResponse {
        answer,
        disclaimer: state.qa.disclaimer_text.clone(),
        sources,
    };
    ((StatusCode::OK, Json(resp)).into_response(), patient, AuditOutcome::Ok)
}

async fn fetch_summary(State(state): State<AppState>, headers: HeaderMap, Path(id): Path<String>) -> Response {
    let caller = match state.authorize(&headers, AuditAction::FetchSummary, false) {
        Ok(c) => c,
        Err(resp) => return resp,
    };
    let Some(store) = &state.store else {
        state.record(&caller.label, AuditAction::FetchSummary, None, AuditOutcome::Error);
        return fail(StatusCode::NOT_FOUND, "Summaries are not retained by this deployment");
    };
    match store.get(&id) {
        Ok(Some(artifact)) => {
            state.record_hashed(
                &caller.label,
                AuditAction::FetchSummary,
                Some(artifact.patient_ref_hash.clone()),
                AuditOutcome::Ok,
            );
            json_body(StatusCode::OK, artifact.summary.to_json())
        }
        Ok(None) => {
            state.record(&caller.label, AuditAction::FetchSummary, None, AuditOutcome::Error);
            fail(StatusCode::NOT_FOUND, "No summary with that id")
        }
        Err(e) => {
            state.record(&caller.label, AuditAction::FetchSummary, None, AuditOutcome::Error);
            internal("artifact read failed", e)
        }
    }
}

async fn read_audit(State(state): State<AppState>, headers: HeaderMap) -> Response {
    let caller = match state.authorize(&headers, AuditAction::ReadAudit, true) {
        Ok(c) => c,
        Err(resp) => return resp,
    };
    let events = state.audit.events();
    let outcome = if events.is_ok() {
        AuditOutcome::Ok
    } else {
        AuditOutcome::Error
    };
    state.record(&caller.label, AuditAction::ReadAudit, None, outcome);
    match events {
        Ok(list) => (StatusCode::OK, Json(list)).into_response(),
        Err(e) => internal("audit read failed", e),
    }
}
