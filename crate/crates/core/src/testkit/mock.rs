//! In-process FHIR server double speaking the same URLs as a real endpoint.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use async_trait::async_trait;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use url::Url;

use super::generator::SyntheticBundleSet;
use super::profile::VariabilityProfile;
use crate::fhir_client::{FhirSource, SourceResponse, TransportError};
use crate::resource::ResourceType;

pub const MOCK_PAGE_SIZE: usize = 2;
pub const MOCK_BASE: &str = "http://mock.fhir.local/r4";

/// What a search for a type with no data returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingType {
    /// 200 with an empty searchset.
    EmptySearchset,
    /// 404, as servers that do not host the type answer.
    NotFound,
}

/// Serves generated patients with paging, unsupported searches and
/// seeded transient 5xx.
///
/// Only the path and query of a URL are looked at, so the same source can
/// sit behind any base URL, including a loopback listener.
#[derive(Debug)]
pub struct MockFhirSource {
    patients: HashMap<String, BTreeMap<ResourceType, Vec<Value>>>,
    unsupported: BTreeSet<ResourceType>,
    missing: MissingType,
    flaky_rate: f64,
    seed: u64,
    page_size: usize,
    attempts: Mutex<HashMap<String, u32>>,
    hits: AtomicUsize,
    injected: AtomicUsize,
}

/// Builds the mock for a set of patients under one profile's server quirks.
pub fn mock_source(bundles: Vec<SyntheticBundleSet>, profile: &VariabilityProfile) -> MockFhirSource {
    MockFhirSource::new(bundles)
        .with_unsupported(profile.unsupported_searches.clone())
        .with_flaky(profile.flaky_5xx_rate, profile.seed)
}

impl MockFhirSource {
    pub fn new(bundles: Vec<SyntheticBundleSet>) -> Self {
        Self::from_patients(bundles.into_iter().map(|b| (b.patient_id, b.resources)).collect())
    }

    /// Raw resources per patient id, e.g. read back from a fixture directory.
    pub fn from_patients(patients: HashMap<String, BTreeMap<ResourceType, Vec<Value>>>) -> Self {
        Self {
            patients,
            unsupported: BTreeSet::new(),
            missing: MissingType::EmptySearchset,
            flaky_rate: 0.0,
            seed: 0,
            page_size: MOCK_PAGE_SIZE,
            attempts: Mutex::new(HashMap::new()),
            hits: AtomicUsize::new(0),
            injected: AtomicUsize::new(0),
        }
    }

    pub fn with_unsupported(mut self, types: BTreeSet<ResourceType>) -> Self {
        self.unsupported = types;
        self
    }

    pub fn with_missing(mut self, missing: MissingType) -> Self {
        self.missing = missing;
        self
    }

    pub fn with_flaky(mut self, rate: f64, seed: u64) -> Self {
        self.flaky_rate = rate;
        self.seed = seed;
        self
    }

    pub fn with_page_size(mut self, page_size: usize) -> Self {
        self.page_size = page_size.max(1);
        self
    }

    /// Requests answered so far.
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    /// 5xx responses injected so far.
    pub fn injected_errors(&self) -> usize {
        self.injected.load(Ordering::Relaxed)
    }

    /// Decided by a hash of (seed, url, attempt), so runs repeat exactly
    /// whatever order concurrent requests arrive in.
    fn should_fail(&self, url: &str) -> bool {
        if self.flaky_rate <= 0.0 {
            return false;
        }
        let attempt = {
            let mut map = self.attempts.lock().expect("attempt map");
            let n = map.entry(url.to_string()).or_insert(0);
            *n += 1;
            *n
        };
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(url.as_bytes());
        h.update(attempt.to_le_bytes());
        let digest = h.finalize();
        let draw = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes")) as f64 / u64::MAX as f64;
        draw < self.flaky_rate
    }

    fn respond(&self, url: &Url) -> SourceResponse {
        let segments: Vec<&str> = url
            .path_segments()
            .map(|s| s.filter(|x| !x.is_empty()).collect())
            .unwrap_or_default();
        let query: HashMap<String, String> = url.query_pairs().into_owned().collect();
        let (type_name, read_id) = match segments.as_slice() {
            [.., t, id] if *t == "Patient" => (*t, Some(*id)),
            [.., t] => (*t, None),
            [] => return outcome(404, "not-found", "no resource type in path"),
        };
        let Ok(rt) = type_name.parse::<ResourceType>() else {
            return outcome(404, "not-found", "unknown resource type");
        };

        if let Some(id) = read_id {
            return match self
                .patients
                .get(id)
                .and_then(|p| p.get(&ResourceType::Patient))
                .and_then(|l| l.first())
            {
                Some(p) => SourceResponse::new(200, p.to_string()),
                None => outcome(404, "not-found", "no such patient"),
            };
        }
        if self.unsupported.contains(&rt) {
            return outcome(400, "not-supported", "search by patient is not supported for this type");
        }
        let Some(patient) = query.get("patient") else {
            return outcome(400, "required", "patient parameter required");
        };
        let list = self.patients.get(patient.as_str()).and_then(|p| p.get(&rt));
        let list: &[Value] = match (list, self.missing) {
            (Some(l), _) => l,
            (None, MissingType::EmptySearchset) => &[],
            (None, MissingType::NotFound) => return outcome(404, "not-found", "type not hosted"),
        };
        let page: usize = query.get("_page").and_then(|p| p.parse().ok()).unwrap_or(1).max(1);
        let start = (page - 1) * self.page_size;
        let entries: Vec<Value> = list
            .iter()
            .skip(start)
            .take(self.page_size)
            .map(|r| {
                json!({
                    "fullUrl": format!("{}/{}", r["resourceType"].as_str().unwrap_or_default(), r["id"].as_str().unwrap_or_default()),
                    "resource": r,
                    "search": {"mode": "match"},
                })
            })
            .collect();
        let mut links = vec![json!({"relation": "self", "url": url.as_str()})];
        if start + self.page_size < list.len() {
            let mut next = url.clone();
            next.query_pairs_mut()
                .clear()
                .append_pair("patient", patient)
                .append_pair("_count", &self.page_size.to_string())
                .append_pair("_page", &(page + 1).to_string());
            links.push(json!({"relation": "next", "url": next.as_str()}));
        }
        let bundle = json!({
            "resourceType": "Bundle", "type": "searchset", "total": list.len(),
            "link": links, "entry": entries,
        });
        SourceResponse::new(200, bundle.to_string())
    }
}

fn outcome(status: u16, code: &str, text: &str) -> SourceResponse {
    let body = json!({
        "resourceType": "OperationOutcome",
        "issue": [{"severity": "error", "code": code, "diagnostics": text}],
    });
    SourceResponse::new(status, body.to_string())
}

#[async_trait]
impl FhirSource for MockFhirSource {
    async fn get(&self, url: &str) -> Result<SourceResponse, TransportError> {
        self.hits.fetch_add(1, Ordering::Relaxed);
        let parsed = Url::parse(url).map_err(|e| TransportError::Connect(e.to_string()))?;
        if self.should_fail(url) {
            self.injected.fetch_add(1, Ordering::Relaxed);
            return Ok(outcome(503, "transient", "injected failure"));
        }
        Ok(self.respond(&parsed))
    }
}
