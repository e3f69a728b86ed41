use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use chrono::{TimeZone, Utc};
use serde_json::{json, Value};

use super::*;
use crate::fhir_client::{FetchState, RawResourceRecord, ResourceTypeStatus, RetrievalReport};
use crate::normalizer::{build_context_package, ClinicalContextPackage};
use crate::resource::{ResourceType, SectionKey};

fn rec(rt: ResourceType, payload: Value) -> RawResourceRecord {
    let at = Utc.with_ymd_and_hms(2024, 7, 1, 0, 0, 0).unwrap();
    RawResourceRecord::new(rt, payload, format!("http://fhir.test/{rt}"), at).unwrap()
}

fn report(overrides: &[(ResourceType, FetchState)]) -> RetrievalReport {
    let at = Utc.with_ymd_and_hms(2024, 7, 1, 0, 0, 0).unwrap();
    RetrievalReport {
        patient_id: "p1".into(),
        statuses: ResourceType::ALL
            .iter()
            .map(|&rt| ResourceTypeStatus {
                resource_type: rt,
                state: overrides
                    .iter()
                    .find(|(t, _)| *t == rt)
                    .map_or(FetchState::Ok, |(_, s)| *s),
                record_count: 0,
                pages_fetched: 1,
                detail: None,
            })
            .collect(),
        started_at: at,
        finished_at: at,
    }
}

fn patient() -> RawResourceRecord {
    rec(
        ResourceType::Patient,
        json!({"resourceType": "Patient", "id": "p1", "name": [{"given": ["Ana"], "family": "Silva"}],
               "gender": "female", "birthDate": "1961-03-09"}),
    )
}

fn hba1c(id: &str, date: &str, value: f64) -> RawResourceRecord {
    rec(
        ResourceType::Observation,
        json!({"resourceType": "Observation", "id": id, "status": "final",
               "code": {"coding": [{"system": "http://loinc.org", "code": "4548-4", "display": "Hemoglobin A1c"}]},
               "effectiveDateTime": date, "valueQuantity": {"value": value, "unit": "%"}}),
    )
}

fn chart() -> ClinicalContextPackage {
    let records = vec![
        patient(),
        hba1c("jan", "2024-01-15", 8.1),
        hba1c("jun", "2024-06-15", 7.2),
        rec(
            ResourceType::AllergyIntolerance,
            json!({"resourceType": "AllergyIntolerance", "id": "al1", "criticality": "high",
                   "clinicalStatus": {"coding": [{"code": "active"}]},
                   "code": {"coding": [{"system": "http://snomed.info/sct", "code": "91936005", "display": "Allergy to penicillin"}]}}),
        ),
        rec(
            ResourceType::MedicationRequest,
            json!({"resourceType": "MedicationRequest", "id": "m1", "status": "active", "intent": "order",
                   "authoredOn": "2024-02-01",
                   "medicationCodeableConcept": {"coding": [{"system": "rxnorm", "code": "860975", "display": "Metformin 500 MG Oral Tablet"}]},
                   "dosageInstruction": [{"text": "1 tablet twice daily"}]}),
        ),
        rec(
            ResourceType::CarePlan,
            json!({"resourceType": "CarePlan", "id": "cp1", "status": "active", "intent": "plan",
                   "title": "Recommended diabetic diet"}),
        ),
    ];
    build_context_package(&records, &report(&[(ResourceType::Device, FetchState::Unsupported)])).unwrap()
}

fn empty_chart() -> ClinicalContextPackage {
    build_context_package(&[patient()], &report(&[])).unwrap()
}

fn texts(doc: &SummaryDocument, key: SectionKey) -> Vec<String> {
    doc.section(key)
        .map(|s| s.statements.iter().map(|st| st.text.clone()).collect())
        .unwrap_or_default()
}

#[test]
fn templates_cover_each_section_state() {
    let doc = summarize_deterministic(&chart(), RenderMode::NoticeEmpty);
    assert_eq!(texts(&doc, SectionKey::Immunizations), ["No immunizations available"]);
    assert_eq!(texts(&doc, SectionKey::Devices), ["Devices unavailable from source"]);
    assert_eq!(
        texts(&doc, SectionKey::Medications),
        ["Metformin 500 MG Oral Tablet, active, 1 tablet twice daily — 2024-02-01"]
    );
    assert_eq!(
        texts(&doc, SectionKey::AllergiesAndIntolerances),
        ["Allergy to penicillin, active, criticality high"]
    );
    assert_eq!(doc.patient_header, "Ana Silva (female, born 1961-03-09)");
    assert_eq!(doc.sections().len(), 16);

    let omit = summarize_deterministic(&chart(), RenderMode::OmitEmpty);
    assert!(omit.section(SectionKey::Immunizations).is_none());
    assert!(omit.section(SectionKey::Devices).is_some());
}

#[test]
fn trend_statement_cites_both_points() {
    let ccp = chart();
    let doc = summarize_deterministic(&ccp, RenderMode::NoticeEmpty);
    let trend = doc
        .statements()
        .map(|(_, st)| st)
        .find(|st| st.kind == StatementKind::Trend)
        .unwrap();
    assert_eq!(trend.evidence_refs, ["Observation/jun", "Observation/jan"]);
    assert_eq!(
        trend.text,
        "Hemoglobin A1c: 7.2 % on 2024-06-15 (falling from 8.1 % on 2024-01-15)"
    );
    assert_eq!(trend.temporal_claims[0].role, TemporalRole::Latest);
}

#[test]
fn empty_chart_omit_mode_keeps_only_demographics() {
    let doc = summarize_deterministic(&empty_chart(), RenderMode::OmitEmpty);
    let keys: Vec<_> = doc.sections().iter().map(|s| s.key).collect();
    assert_eq!(keys, [SectionKey::PatientInformation]);
}

#[test]
fn deterministic_output_is_stable_and_grounded() {
    let ccp = chart();
    let a = summarize_deterministic(&ccp, RenderMode::NoticeEmpty);
    let b = summarize_deterministic(&ccp, RenderMode::NoticeEmpty);
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(render_text(&a), render_text(&b));
    assert_eq!(a.generated_at, ccp.built_at());
    assert_eq!(validate_grounding(&a, &ccp).unwrap(), vec![]);
    assert_eq!(
        validate_grounding(
            &summarize_deterministic(&empty_chart(), RenderMode::NoticeEmpty),
            &empty_chart()
        )
        .unwrap(),
        vec![]
    );
}

#[test]
fn json_round_trip_and_order_check() {
    let doc = summarize_deterministic(&chart(), RenderMode::NoticeEmpty);
    let back = SummaryDocument::from_json(&doc.to_json()).unwrap();
    assert_eq!(back, doc);

    let mut v: Value = serde_json::from_str(&doc.to_json()).unwrap();
    v["sections"].as_array_mut().unwrap().swap(0, 1);
    assert!(SummaryDocument::from_json(&v.to_string()).is_err());
    let v: Value = serde_json::from_str(&doc.to_json()).unwrap();
    assert_eq!(v["backend"], json!({"kind": "Deterministic"}));
    assert!(v.get("metadata").is_none());
}

fn push(doc: &mut SummaryDocument, key: SectionKey, text: &str, refs: &[&str]) {
    doc.section_mut_or_insert(key).push(SummaryStatement {
        text: text.into(),
        section: key,
        kind: StatementKind::Fact,
        evidence_refs: refs.iter().map(|s| s.to_string()).collect(),
        numeric_claims: vec![],
        temporal_claims: vec![],
    });
}

fn categories(doc: &SummaryDocument, ccp: &ClinicalContextPackage) -> Vec<ViolationCategory> {
    validate_grounding(doc, ccp)
        .unwrap()
        .into_iter()
        .map(|v| v.category)
        .collect()
}

#[test]
fn value_mismatch_in_text_and_claims() {
    let ccp = chart();
    let mut doc = summarize_deterministic(&ccp, RenderMode::NoticeEmpty);
    push(
        &mut doc,
        SectionKey::LaboratoryAndVitalSigns,
        "Hemoglobin A1c 9.9%",
        &["Observation/jun"],
    );
    assert_eq!(categories(&doc, &ccp), [ViolationCategory::ValueMismatch]);

    let mut doc = summarize_deterministic(&ccp, RenderMode::NoticeEmpty);
    let labs = doc.statements_mut(SectionKey::LaboratoryAndVitalSigns).unwrap();
    labs[0].numeric_claims[0].value = "7.3".into();
    let found = validate_grounding(&doc, &ccp).unwrap();
    assert_eq!(found.len(), 1);
    assert_eq!(found[0].category, ViolationCategory::ValueMismatch);
    assert_eq!(found[0].statement.section, SectionKey::LaboratoryAndVitalSigns);

    // trailing zeros are the same number
    let mut doc = summarize_deterministic(&ccp, RenderMode::NoticeEmpty);
    doc.statements_mut(SectionKey::LaboratoryAndVitalSigns).unwrap()[0].numeric_claims[0].value = "7.20".into();
    assert_eq!(categories(&doc, &ccp), []);
}

#[test]
fn unresolved_and_misfiled_citations() {
    let ccp = chart();
    let mut doc = summarize_deterministic(&ccp, RenderMode::NoticeEmpty);
    push(&mut doc, SectionKey::Conditions, "Type 2 diabetes", &["Condition/999"]);
    assert_eq!(categories(&doc, &ccp), [ViolationCategory::UnresolvedEvidence]);

    let mut doc = summarize_deterministic(&ccp, RenderMode::NoticeEmpty);
    push(
        &mut doc,
        SectionKey::Conditions,
        "Metformin 500 MG",
        &["MedicationRequest/m1"],
    );
    assert!(categories(&doc, &ccp).contains(&ViolationCategory::UnresolvedEvidence));

    let mut doc = summarize_deterministic(&ccp, RenderMode::NoticeEmpty);
    push(&mut doc, SectionKey::Conditions, "Something", &[]);
    assert_eq!(categories(&doc, &ccp), [ViolationCategory::UnresolvedEvidence]);
}

#[test]
fn recommendation_language_but_not_in_quoted_evidence() {
    let ccp = chart();
    let mut doc = summarize_deterministic(&ccp, RenderMode::NoticeEmpty);
    push(
        &mut doc,
        SectionKey::LaboratoryAndVitalSigns,
        "Hemoglobin A1c 7.2; recommend starting insulin",
        &["Observation/jun"],
    );
    assert_eq!(categories(&doc, &ccp), [ViolationCategory::RecommendationLanguage]);

    // the deterministic care plan line quotes "Recommended diabetic diet"
    let doc = summarize_deterministic(&ccp, RenderMode::NoticeEmpty);
    assert!(texts(&doc, SectionKey::CarePlans)[0].starts_with("Recommended diabetic diet"));
    assert_eq!(categories(&doc, &ccp), []);
}

#[test]
fn foreign_content_and_false_missing_notices() {
    let ccp = chart();
    let mut doc = summarize_deterministic(&ccp, RenderMode::NoticeEmpty);
    push(
        &mut doc,
        SectionKey::Medications,
        "Insulin glargine nightly",
        &["MedicationRequest/m1"],
    );
    assert_eq!(categories(&doc, &ccp), [ViolationCategory::ForeignContent]);

    let mut doc = summarize_deterministic(&ccp, RenderMode::NoticeEmpty);
    doc.statements_mut(SectionKey::Medications)
        .unwrap()
        .push(SummaryStatement::missing(
            SectionKey::Medications,
            "No medications available".into(),
        ));
    assert_eq!(categories(&doc, &ccp), [ViolationCategory::ForeignContent]);
}

#[test]
fn fingerprint_mismatch_is_an_error() {
    let doc = summarize_deterministic(&chart(), RenderMode::NoticeEmpty);
    assert!(matches!(
        validate_grounding(&doc, &empty_chart()),
        Err(GroundingError::FingerprintMismatch { .. })
    ));
}

#[test]
fn most_recent_hba1c() {
    let ccp = chart();
    let a = answer_question(&ccp, "What is the most recent HbA1c?");
    assert!(!a.refused);
    assert_eq!(a.evidence_refs, ["Observation/jun"]);
    assert!(a.text.contains("7.2"));

    let all = answer_question(&ccp, "a1c values");
    assert_eq!(all.evidence_refs, ["Observation/jun", "Observation/jan"]);
    for id in &all.evidence_refs {
        assert!(!matched_terms("a1c values", ccp.item(id).unwrap()).is_empty());
    }
}

#[test]
fn refusals() {
    let ccp = chart();
    let a = answer_question(&ccp, "current anticoagulant");
    assert!(a.refused && a.evidence_refs.is_empty());
    assert_eq!(a.text, REFUSAL_TEXT);
    assert!(answer_question(&empty_chart(), "most recent HbA1c").refused);
    assert!(answer_question(&ccp, "   ").refused);
    assert_eq!(
        answer_question(&ccp, "allergies").evidence_refs,
        ["AllergyIntolerance/al1"]
    );
}

#[test]
fn text_rendering_lists_sections_and_disclaimer() {
    let doc = summarize_deterministic(&chart(), RenderMode::NoticeEmpty);
    let text = render_text(&doc);
    let positions: Vec<usize> = SectionKey::ALL
        .iter()
        .map(|k| text.find(&format!("== {} ==", k.label())).unwrap())
        .collect();
    assert!(positions.windows(2).all(|w| w[0] < w[1]));
    assert!(
        text.contains("Metformin 500 MG Oral Tablet, active, 1 tablet twice daily — 2024-02-01 [MedicationRequest/m1]")
    );
    assert!(text.trim_end().ends_with(DEFAULT_DISCLAIMER));
    let md = render_markdown(&doc);
    assert!(md.starts_with("# Ana Silva"));
    assert!(md.contains("## Immunizations\n\n- _No immunizations available_"));
}

// ---- hosted backend ----

struct Canned(Result<String, BackendError>, Duration);

#[async_trait]
impl BackendTransport for Canned {
    async fn send(&self, _request: &BackendRequest<'_>) -> Result<String, BackendError> {
        tokio::time::sleep(self.1).await;
        self.0.clone()
    }
}

fn hosted(body: Value) -> HostedBackend {
    HostedBackend::new(
        "http://llm.test/v1",
        "stub-1",
        Arc::new(Canned(Ok(body.to_string()), Duration::ZERO)),
    )
    .unwrap()
}

fn hosted_body(lab_text: &str, lab_refs: &[&str], value: &str) -> Value {
    json!({"sections": [
        {"key": "PatientInformation", "statements": [{"text": "Ana Silva, female", "evidence_ids": ["Patient/p1"]}]},
        {"key": "LaboratoryAndVitalSigns", "statements": [
            {"text": lab_text, "evidence_ids": lab_refs,
             "numeric_claims": [{"value": value, "unit": "%", "evidence_id": "Observation/jun"}]}]},
        {"key": "Immunizations", "statements": [{"text": "No immunizations available", "evidence_ids": []}]}
    ]})
}

#[tokio::test]
async fn grounded_hosted_output_is_kept() {
    let ccp = chart();
    let backend = hosted(hosted_body("Latest Hemoglobin A1c 7.2%", &["Observation/jun"], "7.2"));
    let doc = summarize_via_backend(&ccp, &backend, &GuardrailPrompt::default(), &SummaryOptions::default())
        .await
        .unwrap();
    assert_eq!(doc.backend, backend.kind());
    assert_eq!(doc.statement_count(), 3);
    assert_eq!(validate_grounding(&doc, &ccp).unwrap(), vec![]);
}

#[tokio::test]
async fn guardrail_violations_fall_back() {
    let ccp = chart();
    let cases = [
        (
            hosted_body("Hemoglobin A1c 7.2%", &["Observation/missing"], "7.2"),
            ViolationCategory::UnresolvedEvidence,
        ),
        (
            hosted_body("Hemoglobin A1c 9.9%", &["Observation/jun"], "9.9"),
            ViolationCategory::ValueMismatch,
        ),
        (
            hosted_body(
                "Hemoglobin A1c 7.2%. recommend starting insulin",
                &["Observation/jun"],
                "7.2",
            ),
            ViolationCategory::RecommendationLanguage,
        ),
    ];
    for (body, category) in cases {
        let doc = summarize_via_backend(
            &ccp,
            &hosted(body),
            &GuardrailPrompt::default(),
            &SummaryOptions::default(),
        )
        .await
        .unwrap();
        assert_eq!(doc.backend, BackendKind::Deterministic);
        assert!(doc.metadata.fallback_reason.is_some());
        let cats: Vec<_> = doc.metadata.violations.iter().map(|v| v.category).collect();
        assert!(cats.contains(&category), "{category:?} not in {cats:?}");
        let mut plain = doc.clone();
        plain.metadata = DocumentMetadata::default();
        assert_eq!(plain, summarize_deterministic(&ccp, RenderMode::NoticeEmpty));
    }
}

#[tokio::test]
async fn transport_failures_are_typed() {
    let ccp = chart();
    let opts = SummaryOptions::default();
    let prompt = GuardrailPrompt::default();

    let malformed =
        HostedBackend::new("http://x", "m", Arc::new(Canned(Ok("not json".into()), Duration::ZERO))).unwrap();
    assert!(matches!(
        summarize_via_backend(&ccp, &malformed, &prompt, &opts).await,
        Err(BackendError::Malformed(_))
    ));

    let slow = HostedBackend::new(
        "http://x",
        "m",
        Arc::new(Canned(Ok("{}".into()), Duration::from_secs(5))),
    )
    .unwrap()
    .with_timeout(Duration::from_millis(20));
    assert!(matches!(
        summarize_via_backend(&ccp, &slow, &prompt, &opts).await,
        Err(BackendError::Timeout(_))
    ));

    let down = HostedBackend::new(
        "http://x",
        "m",
        Arc::new(Canned(Err(BackendError::Unreachable("refused".into())), Duration::ZERO)),
    )
    .unwrap();
    let doc = summarize_with_fallback(&ccp, &down, &prompt, &opts).await;
    assert_eq!(doc.backend, BackendKind::Deterministic);
    assert!(doc.metadata.fallback_reason.unwrap().contains("refused"));

    assert!(HostedBackend::new(" ", "m", Arc::new(Canned(Ok(String::new()), Duration::ZERO))).is_err());
}

#[test]
fn backend_response_parsing() {
    let body = json!({"sections": [
        {"key": "Medications", "statements": []},
        {"key": "Conditions", "statements": [{"text": "x", "evidence_ids": ["Condition/1"], "kind": "Fact"}]}
    ]});
    let sections = parse_backend_response(&body.to_string()).unwrap();
    assert_eq!(sections[0].key, SectionKey::Conditions);
    assert_eq!(sections[0].statements[0].section, SectionKey::Conditions);

    for bad in [
        json!({"sections": [{"key": "Nope", "statements": []}]}),
        json!({"sections": [{"key": "Goals", "statements": []}, {"key": "Goals", "statements": []}]}),
        json!({"sections": [{"key": "Goals", "statements": [{"text": 1}]}]}),
        json!({"other": []}),
    ] {
        assert!(parse_backend_response(&bad.to_string()).is_err(), "{bad}");
    }
}
