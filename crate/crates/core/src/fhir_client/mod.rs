//! Patient-scoped retrieval of the targeted FHIR R4 resource set.
//!
//! Every resource type is fetched independently. HTTP-level failures are
//! recorded in a [`ResourceTypeStatus`] instead of being raised, so a server
//! that lacks `Device?patient=` (or is flaky on one type) only narrows the
//! summary. The only fatal condition is a failed `Patient` read.

mod bundle;
mod config;
mod source;

use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use bundle::{check_resource, parse_resource, parse_search_page, BundleError, SearchPage};
pub use config::{
    ConfigError, EndpointConfig, DEFAULT_MAX_PAGES, DEFAULT_PARALLELISM, DEFAULT_RETRY_BACKOFF_MS, DEFAULT_TIMEOUT_MS,
};
pub use source::{FhirSource, HttpSource, SourceResponse, TransportError, FHIR_JSON};

use crate::resource::ResourceType;

/// Page size requested on every search.
pub const SEARCH_PAGE_SIZE: u32 = 100;
/// Retries after the first attempt for 5xx and timeouts.
pub const MAX_RETRIES: u32 = 1;

/// One retrieved resource plus where and when it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawResourceRecord {
    pub resource_type: ResourceType,
    pub source_id: String,
    pub payload: Value,
    pub source_url: String,
    pub retrieved_at: DateTime<Utc>,
}

impl RawResourceRecord {
    /// Wraps a payload, taking type and id from the payload itself.
    pub fn new(
        resource_type: ResourceType,
        payload: Value,
        source_url: impl Into<String>,
        retrieved_at: DateTime<Utc>,
    ) -> Result<Self, BundleError> {
        check_resource(&payload, resource_type)?;
        let source_id = payload["id"].as_str().unwrap_or_default().to_string();
        Ok(Self {
            resource_type,
            source_id,
            payload,
            source_url: source_url.into(),
            retrieved_at,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FetchState {
    Ok,
    Absent,
    Unsupported,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceTypeStatus {
    pub resource_type: ResourceType,
    pub state: FetchState,
    pub record_count: usize,
    pub pages_fetched: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl ResourceTypeStatus {
    fn new(resource_type: ResourceType, state: FetchState) -> Self {
        Self {
            resource_type,
            state,
            record_count: 0,
            pages_fetched: 0,
            detail: None,
        }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }

    /// True when the type could not be retrieved at all or only in part.
    pub fn is_unavailable(&self) -> bool {
        matches!(self.state, FetchState::Unsupported | FetchState::Error)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub patient_id: String,
    pub statuses: Vec<ResourceTypeStatus>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

impl RetrievalReport {
    pub fn status(&self, rt: ResourceType) -> Option<&ResourceTypeStatus> {
        self.statuses.iter().find(|s| s.resource_type == rt)
    }

    /// One status per resource type, in canonical order.
    pub fn is_total(&self) -> bool {
        self.statuses.len() == ResourceType::ALL.len()
            && self
                .statuses
                .iter()
                .zip(ResourceType::ALL)
                .all(|(s, rt)| s.resource_type == rt)
    }
}

/// Records and report from a completed retrieval.
#[derive(Debug, Clone)]
pub struct Retrieval {
    pub records: Vec<RawResourceRecord>,
    pub report: RetrievalReport,
}

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("invalid patient id `{0}`")]
    InvalidPatientId(String),
    #[error("invalid endpoint configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("patient record unavailable from source")]
    PatientUnavailable { report: Box<RetrievalReport> },
}

/// FHIR ids: 1–64 characters from `[A-Za-z0-9-.]`.
pub fn is_valid_fhir_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'.')
}

enum Attempt {
    Response(SourceResponse),
    Timeout,
    Transport(String),
}

impl Attempt {
    fn describe(&self) -> String {
        match self {
            Attempt::Response(r) => format!("HTTP {}", r.status),
            Attempt::Timeout => "request timed out".into(),
            Attempt::Transport(e) => e.clone(),
        }
    }
}

/// Source of the timestamps written into records and reports.
pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

/// Retrieval client bound to one endpoint.
#[derive(Clone)]
pub struct FhirClient {
    config: EndpointConfig,
    source: Arc<dyn FhirSource>,
    clock: Clock,
}

impl std::fmt::Debug for FhirClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FhirClient")
            .field("base_url", &self.config.base_url)
            .finish_non_exhaustive()
    }
}

impl FhirClient {
    pub fn new(config: EndpointConfig, source: Arc<dyn FhirSource>) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self {
            config,
            source,
            clock: Arc::new(Utc::now),
        })
    }

    /// Replaces the wall clock, e.g. with a fixed instant for reproducible
    /// packages.
    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    /// Client that talks HTTP(S) to `config.base_url`.
    pub fn http(config: EndpointConfig) -> Result<Self, RetrievalError> {
        config.validate()?;
        let source = HttpSource::new(&config).map_err(|e| {
            RetrievalError::Config(ConfigError::InvalidBaseUrl {
                url: config.base_url.clone(),
                reason: e.to_string(),
            })
        })?;
        Ok(Self {
            config,
            source: Arc::new(source),
            clock: Arc::new(Utc::now),
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    async fn get_once(&self, url: &str) -> Attempt {
        let timeout = Duration::from_millis(self.config.timeout_ms);
        match tokio::time::timeout(timeout, self.source.get(url)).await {
            Err(_) | Ok(Err(TransportError::Timeout)) => Attempt::Timeout,
            Ok(Err(TransportError::Connect(e))) => Attempt::Transport(e),
            Ok(Ok(resp)) => Attempt::Response(resp),
        }
    }

    async fn get_with_retry(&self, url: &str) -> Attempt {
        let mut attempt = 0;
        loop {
            let outcome = self.get_once(url).await;
            let retryable = match &outcome {
                Attempt::Response(r) => r.status >= 500,
                Attempt::Timeout | Attempt::Transport(_) => true,
            };
            if !retryable || attempt >= MAX_RETRIES {
                return outcome;
            }
            let delay = self.config.retry_backoff_ms.saturating_mul(1 << attempt);
            tracing::debug!(url, attempt, delay, "retrying FHIR request");
            tokio::time::sleep(Duration::from_millis(delay)).await;
            attempt += 1;
        }
    }

    /// Fetches every resource of one type for a patient.
    ///
    /// `Patient` is a direct read; all other types are a patient-scoped
    /// search whose `next` links are followed up to `max_pages`.
    pub async fn fetch_resource_type(
        &self,
        patient_id: &str,
        rt: ResourceType,
    ) -> Result<(Vec<RawResourceRecord>, ResourceTypeStatus), RetrievalError> {
        if !is_valid_fhir_id(patient_id) {
            return Err(RetrievalError::InvalidPatientId(patient_id.to_string()));
        }
        if rt == ResourceType::Patient {
            Ok(self.read_patient(patient_id).await)
        } else {
            Ok(self.search(patient_id, rt).await)
        }
    }

    async fn read_patient(&self, patient_id: &str) -> (Vec<RawResourceRecord>, ResourceTypeStatus) {
        let rt = ResourceType::Patient;
        let url = format!("{}/Patient/{}", self.config.base(), patient_id);
        let resp = match self.get_with_retry(&url).await {
            Attempt::Response(resp) => resp,
            other => {
                return (
                    vec![],
                    ResourceTypeStatus::new(rt, FetchState::Error).with_detail(other.describe()),
                )
            }
        };
        match resp.status {
            200..=299 => {}
            404 | 410 => {
                return (
                    vec![],
                    ResourceTypeStatus::new(rt, FetchState::Absent).with_detail(format!("HTTP {}", resp.status)),
                )
            }
            400..=499 => {
                return (
                    vec![],
                    ResourceTypeStatus::new(rt, FetchState::Unsupported).with_detail(format!("HTTP {}", resp.status)),
                )
            }
            _ => {
                return (
                    vec![],
                    ResourceTypeStatus::new(rt, FetchState::Error).with_detail(format!("HTTP {}", resp.status)),
                )
            }
        }
        let mut status = ResourceTypeStatus::new(rt, FetchState::Ok);
        status.pages_fetched = 1;
        let record = parse_resource(&resp.body, rt)
            .and_then(|payload| RawResourceRecord::new(rt, payload, url.clone(), (self.clock)()));
        match record {
            Ok(record) if record.source_id == patient_id => {
                status.record_count = 1;
                (vec![record], status)
            }
            Ok(record) => {
                status.state = FetchState::Error;
                status.detail = Some(format!("server returned Patient/{}", record.source_id));
                (vec![], status)
            }
            Err(e) => {
                status.state = FetchState::Error;
                status.detail = Some(format!("malformed Patient resource: {e}"));
                (vec![], status)
            }
        }
    }

    async fn search(&self, patient_id: &str, rt: ResourceType) -> (Vec<RawResourceRecord>, ResourceTypeStatus) {
        let mut url = format!(
            "{}/{}?patient={}&_count={}",
            self.config.base(),
            rt.as_str(),
            patient_id,
            SEARCH_PAGE_SIZE
        );
        let mut records = Vec::new();
        let mut status = ResourceTypeStatus::new(rt, FetchState::Ok);
        let mut skipped = 0usize;

        loop {
            let first = status.pages_fetched == 0;
            let resp = match self.get_with_retry(&url).await {
                Attempt::Response(resp) => resp,
                other => {
                    status.state = FetchState::Error;
                    status.detail = Some(page_detail(status.pages_fetched, &other.describe()));
                    break;
                }
            };
            if !(200..300).contains(&resp.status) {
                status.state = match resp.status {
                    404 | 410 if first => FetchState::Absent,
                    400..=499 if first => FetchState::Unsupported,
                    _ => FetchState::Error,
                };
                status.detail = Some(page_detail(status.pages_fetched, &format!("HTTP {}", resp.status)));
                break;
            }
            let page = match parse_search_page(&resp.body, rt) {
                Ok(page) => page,
                Err(e) => {
                    status.state = FetchState::Error;
                    status.detail = Some(page_detail(status.pages_fetched, &format!("malformed Bundle: {e}")));
                    break;
                }
            };
            status.pages_fetched += 1;
            skipped += page.skipped;
            let now = (self.clock)();
            for payload in page.resources {
                let entry_url = format!(
                    "{}/{}/{}",
                    self.config.base(),
                    rt.as_str(),
                    payload["id"].as_str().unwrap_or_default()
                );
                match RawResourceRecord::new(rt, payload, entry_url, now) {
                    Ok(record) => records.push(record),
                    Err(_) => skipped += 1,
                }
            }
            match page.next {
                Some(_) if status.pages_fetched >= self.config.max_pages => {
                    status.detail = Some(format!("truncated after {} pages (max_pages)", self.config.max_pages));
                    break;
                }
                Some(next) => url = next,
                None => break,
            }
        }

        if status.state == FetchState::Absent || status.state == FetchState::Unsupported {
            records.clear();
        }
        status.record_count = records.len();
        if skipped > 0 {
            let note = format!("{skipped} entries skipped");
            status.detail = Some(match status.detail.take() {
                Some(d) => format!("{d}; {note}"),
                None => note,
            });
        }
        (records, status)
    }

    /// Retrieves the full targeted set for one patient.
    ///
    /// The Patient read runs first and anchors everything else; if it fails
    /// the call returns [`RetrievalError::PatientUnavailable`]. The other
    /// sixteen types are fetched with up to `parallelism` in flight and
    /// merged back in canonical order.
    pub async fn retrieve_patient_context(&self, patient_id: &str) -> Result<Retrieval, RetrievalError> {
        if !is_valid_fhir_id(patient_id) {
            return Err(RetrievalError::InvalidPatientId(patient_id.to_string()));
        }
        let started_at = (self.clock)();
        let (patient_records, patient_status) = self.read_patient(patient_id).await;

        if patient_status.state != FetchState::Ok || patient_records.is_empty() {
            let mut statuses = vec![patient_status];
            statuses.extend(ResourceType::ALL[1..].iter().map(|&rt| {
                ResourceTypeStatus::new(rt, FetchState::Error).with_detail("not requested: patient record unavailable")
            }));
            let report = RetrievalReport {
                patient_id: patient_id.to_string(),
                statuses,
                started_at,
                finished_at: (self.clock)().max(started_at),
            };
            return Err(RetrievalError::PatientUnavailable {
                report: Box::new(report),
            });
        }

        let mut fetched: Vec<(ResourceType, Vec<RawResourceRecord>, ResourceTypeStatus)> =
            stream::iter(ResourceType::ALL[1..].iter().copied())
                .map(|rt| async move {
                    let (records, status) = self.search(patient_id, rt).await;
                    (rt, records, status)
                })
                .buffer_unordered(self.config.parallelism)
                .collect()
                .await;
        fetched.sort_by_key(|(rt, _, _)| *rt);

        let mut records = patient_records;
        let mut statuses = vec![patient_status];
        for (_, mut recs, status) in fetched {
            records.append(&mut recs);
            statuses.push(status);
        }
        let report = RetrievalReport {
            patient_id: patient_id.to_string(),
            statuses,
            started_at,
            finished_at: (self.clock)().max(started_at),
        };
        debug_assert!(report.is_total());
        Ok(Retrieval { records, report })
    }
}

fn page_detail(pages_done: u32, what: &str) -> String {
    if pages_done == 0 {
        what.to_string()
    } else {
        format!("{what} on page {}", pages_done + 1)
    }
}

#[cfg(test)]
mod tests;
