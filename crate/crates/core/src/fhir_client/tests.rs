use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde_json::json;

use super::*;

const BASE: &str = "http://fhir.test/r4";

/// Serves canned responses per URL; a URL with several responses yields
/// them in order and then repeats the last.
#[derive(Default)]
struct Scripted {
    routes: Mutex<HashMap<String, Vec<Result<SourceResponse, TransportError>>>>,
    delay_ms: HashMap<String, u64>,
    hits: AtomicUsize,
}

impl Scripted {
    fn on(self, url: &str, responses: Vec<Result<SourceResponse, TransportError>>) -> Self {
        self.routes.lock().unwrap().insert(url.to_string(), responses);
        self
    }
}

#[async_trait::async_trait]
impl FhirSource for Scripted {
    async fn get(&self, url: &str) -> Result<SourceResponse, TransportError> {
        self.hits.fetch_add(1, Ordering::SeqCst);
        if let Some(ms) = self.delay_ms.get(url) {
            tokio::time::sleep(Duration::from_millis(*ms)).await;
        }
        let mut routes = self.routes.lock().unwrap();
        match routes.get_mut(url) {
            Some(queue) if queue.len() > 1 => queue.remove(0),
            Some(queue) => queue[0].clone(),
            None => Ok(SourceResponse::new(404, "{}")),
        }
    }
}

fn search_url(rt: &str) -> String {
    format!("{BASE}/{rt}?patient=p1&_count=100")
}

fn page(rt: &str, ids: &[&str], next: Option<&str>) -> Result<SourceResponse, TransportError> {
    let entries: Vec<_> = ids
        .iter()
        .map(|id| json!({"resource": {"resourceType": rt, "id": id}}))
        .collect();
    let mut link = vec![];
    if let Some(n) = next {
        link.push(json!({"relation": "next", "url": n}));
    }
    Ok(SourceResponse::new(
        200,
        json!({"resourceType": "Bundle", "type": "searchset", "link": link, "entry": entries}).to_string(),
    ))
}

fn patient() -> Result<SourceResponse, TransportError> {
    Ok(SourceResponse::new(
        200,
        json!({"resourceType": "Patient", "id": "p1"}).to_string(),
    ))
}

fn client(source: Scripted) -> FhirClient {
    client_with(source, EndpointConfig::new(BASE).with_retry_backoff_ms(1))
}

fn client_with(source: Scripted, config: EndpointConfig) -> FhirClient {
    FhirClient::new(config, Arc::new(source)).unwrap()
}

#[tokio::test]
async fn follows_next_links_across_pages() {
    let next = format!("{BASE}/Condition?patient=p1&_count=100&page=2");
    let source = Scripted::default()
        .on(
            &search_url("Condition"),
            vec![page("Condition", &["c1", "c2", "c3"], Some(&next))],
        )
        .on(&next, vec![page("Condition", &["c4", "c5"], None)]);
    let (records, status) = client(source)
        .fetch_resource_type("p1", ResourceType::Condition)
        .await
        .unwrap();
    assert_eq!(records.len(), 5);
    assert_eq!(status.state, FetchState::Ok);
    assert_eq!(status.record_count, 5);
    assert_eq!(status.pages_fetched, 2);
    assert_eq!(records[3].source_id, "c4");
    assert_eq!(records[3].source_url, format!("{BASE}/Condition/c4"));
}

#[tokio::test]
async fn empty_searchset_is_ok_with_zero_records() {
    let source = Scripted::default().on(&search_url("Immunization"), vec![page("Immunization", &[], None)]);
    let (records, status) = client(source)
        .fetch_resource_type("p1", ResourceType::Immunization)
        .await
        .unwrap();
    assert!(records.is_empty());
    assert_eq!(status.state, FetchState::Ok);
    assert_eq!(status.pages_fetched, 1);
}

#[tokio::test]
async fn http_400_on_search_is_unsupported_and_404_is_absent() {
    let source = Scripted::default()
        .on(&search_url("Device"), vec![Ok(SourceResponse::new(400, "{}"))])
        .on(&search_url("Goal"), vec![Ok(SourceResponse::new(404, "{}"))]);
    let client = client(source);
    let (_, device) = client.fetch_resource_type("p1", ResourceType::Device).await.unwrap();
    assert_eq!(device.state, FetchState::Unsupported);
    assert_eq!(device.detail.as_deref(), Some("HTTP 400"));
    let (_, goal) = client.fetch_resource_type("p1", ResourceType::Goal).await.unwrap();
    assert_eq!(goal.state, FetchState::Absent);
    assert_eq!(goal.record_count, 0);
}

#[tokio::test]
async fn one_retry_recovers_from_transient_5xx() {
    let source = Scripted::default().on(
        &search_url("Flag"),
        vec![Ok(SourceResponse::new(503, "")), page("Flag", &["f1"], None)],
    );
    let (records, status) = client(source)
        .fetch_resource_type("p1", ResourceType::Flag)
        .await
        .unwrap();
    assert_eq!(status.state, FetchState::Ok);
    assert_eq!(records.len(), 1);
}

#[tokio::test]
async fn persistent_5xx_is_error_after_exactly_one_retry() {
    let source = Scripted::default().on(&search_url("Flag"), vec![Ok(SourceResponse::new(500, ""))]);
    let source = Arc::new(source);
    let client = FhirClient::new(EndpointConfig::new(BASE).with_retry_backoff_ms(1), source.clone()).unwrap();
    let (_, status) = client.fetch_resource_type("p1", ResourceType::Flag).await.unwrap();
    assert_eq!(status.state, FetchState::Error);
    assert_eq!(source.hits.load(Ordering::SeqCst), 2);
}

#[tokio::test]
async fn timeout_is_error() {
    let mut source = Scripted::default().on(&search_url("Goal"), vec![page("Goal", &["g1"], None)]);
    source.delay_ms.insert(search_url("Goal"), 500);
    let config = EndpointConfig::new(BASE).with_timeout_ms(20).with_retry_backoff_ms(1);
    let (_, status) = client_with(source, config)
        .fetch_resource_type("p1", ResourceType::Goal)
        .await
        .unwrap();
    assert_eq!(status.state, FetchState::Error);
    assert_eq!(status.detail.as_deref(), Some("request timed out"));
}

#[tokio::test]
async fn failure_mid_pagination_keeps_parsed_records() {
    let next = format!("{BASE}/Procedure?page=2");
    let source = Scripted::default()
        .on(
            &search_url("Procedure"),
            vec![page("Procedure", &["x1", "x2"], Some(&next))],
        )
        .on(&next, vec![Ok(SourceResponse::new(400, ""))]);
    let (records, status) = client(source)
        .fetch_resource_type("p1", ResourceType::Procedure)
        .await
        .unwrap();
    assert_eq!(status.state, FetchState::Error);
    assert_eq!(status.record_count, 2);
    assert_eq!(records.len(), 2);
    assert_eq!(status.pages_fetched, 1);
    assert_eq!(status.detail.as_deref(), Some("HTTP 400 on page 2"));
}

#[tokio::test]
async fn max_pages_truncates_and_says_so() {
    let p2 = format!("{BASE}/Observation?page=2");
    let p3 = format!("{BASE}/Observation?page=3");
    let source = Scripted::default()
        .on(
            &search_url("Observation"),
            vec![page("Observation", &["o1"], Some(&p2))],
        )
        .on(&p2, vec![page("Observation", &["o2"], Some(&p3))])
        .on(&p3, vec![page("Observation", &["o3"], None)]);
    let config = EndpointConfig::new(BASE).with_max_pages(2);
    let (records, status) = client_with(source, config)
        .fetch_resource_type("p1", ResourceType::Observation)
        .await
        .unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(status.pages_fetched, 2);
    assert_eq!(status.state, FetchState::Ok);
    assert!(status.detail.unwrap().contains("truncated"));
}

#[tokio::test]
async fn malformed_bundle_is_error() {
    let source = Scripted::default().on(&search_url("Goal"), vec![Ok(SourceResponse::new(200, "<html>"))]);
    let (_, status) = client(source)
        .fetch_resource_type("p1", ResourceType::Goal)
        .await
        .unwrap();
    assert_eq!(status.state, FetchState::Error);
}

#[tokio::test]
async fn rejects_unsafe_patient_ids() {
    let client = client(Scripted::default());
    for bad in ["", "../Patient", "p1&_count=1", "a b", &"x".repeat(65)] {
        assert!(matches!(
            client.fetch_resource_type(bad, ResourceType::Condition).await,
            Err(RetrievalError::InvalidPatientId(_))
        ));
    }
}

#[tokio::test]
async fn patient_plus_condition_only_server_still_succeeds() {
    let source = Scripted::default()
        .on(&format!("{BASE}/Patient/p1"), vec![patient()])
        .on(&search_url("Condition"), vec![page("Condition", &["c1"], None)])
        .on(&search_url("Device"), vec![Ok(SourceResponse::new(400, ""))]);
    let retrieval = client(source).retrieve_patient_context("p1").await.unwrap();
    let report = &retrieval.report;
    assert!(report.is_total());
    assert_eq!(retrieval.records.len(), 2);
    assert_eq!(retrieval.records[0].resource_type, ResourceType::Patient);
    let others: Vec<_> = report
        .statuses
        .iter()
        .filter(|s| !matches!(s.resource_type, ResourceType::Patient | ResourceType::Condition))
        .collect();
    assert_eq!(others.len(), 15);
    assert!(others
        .iter()
        .all(|s| matches!(s.state, FetchState::Absent | FetchState::Unsupported)));
    assert!(report.finished_at >= report.started_at);
}

#[tokio::test]
async fn unreachable_patient_aborts_with_report() {
    let source = Scripted::default().on(
        &format!("{BASE}/Patient/p1"),
        vec![Err(TransportError::Connect("connection refused".into()))],
    );
    match client(source).retrieve_patient_context("p1").await {
        Err(RetrievalError::PatientUnavailable { report }) => {
            assert!(report.is_total());
            assert_eq!(report.statuses[0].state, FetchState::Error);
        }
        other => panic!("expected PatientUnavailable, got {other:?}"),
    }
}

#[tokio::test]
async fn patient_read_returning_a_different_id_is_rejected() {
    let source = Scripted::default().on(
        &format!("{BASE}/Patient/p1"),
        vec![Ok(SourceResponse::new(
            200,
            json!({"resourceType": "Patient", "id": "p2"}).to_string(),
        ))],
    );
    assert!(matches!(
        client(source).retrieve_patient_context("p1").await,
        Err(RetrievalError::PatientUnavailable { .. })
    ));
}

#[test]
fn record_invariants_are_checked() {
    let now = Utc::now();
    let ok = RawResourceRecord::new(ResourceType::Goal, json!({"resourceType": "Goal", "id": "g"}), "u", now);
    assert_eq!(ok.unwrap().source_id, "g");
    assert!(RawResourceRecord::new(ResourceType::Goal, json!({"resourceType": "Flag", "id": "g"}), "u", now).is_err());
    assert!(RawResourceRecord::new(ResourceType::Goal, json!({"resourceType": "Goal"}), "u", now).is_err());
}
