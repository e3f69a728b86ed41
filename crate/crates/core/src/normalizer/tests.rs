use std::collections::BTreeMap;

use chrono::{DateTime, Duration, TimeZone, Utc};
use proptest::prelude::*;
use serde_json::{json, Value};

use super::*;
use crate::fhir_client::{FetchState, ResourceTypeStatus};

fn at() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 6, 1, 12, 0, 0).unwrap()
}

fn rec(rt: ResourceType, payload: Value) -> RawResourceRecord {
    RawResourceRecord::new(rt, payload, format!("http://fhir.test/{rt}"), at()).unwrap()
}

fn patient() -> RawResourceRecord {
    rec(
        ResourceType::Patient,
        json!({"resourceType": "Patient", "id": "p1", "name": [{"text": "Ana Silva"}], "gender": "female"}),
    )
}

fn report(overrides: &[(ResourceType, FetchState)]) -> RetrievalReport {
    RetrievalReport {
        patient_id: "p1".into(),
        statuses: ResourceType::ALL
            .iter()
            .map(|&rt| {
                let state = overrides
                    .iter()
                    .find(|(t, _)| *t == rt)
                    .map_or(FetchState::Ok, |(_, s)| *s);
                ResourceTypeStatus {
                    resource_type: rt,
                    state,
                    record_count: 0,
                    pages_fetched: 1,
                    detail: None,
                }
            })
            .collect(),
        started_at: at(),
        finished_at: at() + Duration::seconds(2),
    }
}

fn hba1c(id: &str, date: &str, value: f64) -> RawResourceRecord {
    rec(
        ResourceType::Observation,
        json!({"resourceType": "Observation", "id": id, "status": "final",
               "code": {"coding": [{"system": "http://loinc.org", "code": "4548-4", "display": "HbA1c"}]},
               "effectiveDateTime": date, "valueQuantity": {"value": value, "unit": "%"}}),
    )
}

#[test]
fn only_patient_gives_empty_sections() {
    let ccp = build_context_package(&[patient()], &report(&[])).unwrap();
    assert_eq!(ccp.sections().len(), 16);
    assert_eq!(
        ccp.section(SectionKey::PatientInformation).state,
        SectionState::Populated
    );
    for s in &ccp.sections()[1..] {
        assert_eq!(s.state, SectionState::Empty, "{}", s.key);
    }
    assert_eq!(ccp.patient().display, "Ana Silva");
    assert_eq!(ccp.built_at(), at() + Duration::seconds(2));
}

#[test]
fn unsupported_type_makes_its_section_unavailable() {
    let r = report(&[
        (ResourceType::Immunization, FetchState::Unsupported),
        (ResourceType::Goal, FetchState::Absent),
    ]);
    let ccp = build_context_package(&[patient()], &r).unwrap();
    assert_eq!(ccp.section(SectionKey::Immunizations).state, SectionState::Unavailable);
    assert_eq!(ccp.section(SectionKey::Goals).state, SectionState::Empty);
}

#[test]
fn partial_error_with_items_is_still_populated() {
    let r = report(&[(ResourceType::Observation, FetchState::Error)]);
    let ccp = build_context_package(&[patient(), hba1c("o1", "2024-01-01", 7.0)], &r).unwrap();
    assert_eq!(
        ccp.section(SectionKey::LaboratoryAndVitalSigns).state,
        SectionState::Populated
    );
}

#[test]
fn missing_anchor() {
    assert_eq!(
        build_context_package(&[hba1c("o1", "2024-01-01", 7.0)], &report(&[])),
        Err(BuildError::MissingAnchor)
    );
}

#[test]
fn sections_sorted_newest_first_with_undated_last() {
    let cond = |id: &str, onset: Option<&str>| {
        let mut p = json!({"resourceType": "Condition", "id": id, "code": {"text": id}});
        if let Some(o) = onset {
            p["onsetDateTime"] = json!(o);
        }
        rec(ResourceType::Condition, p)
    };
    let records = vec![
        patient(),
        cond("u1", None),
        cond("old", Some("2010")),
        cond("u2", None),
        cond("new", Some("2022-05-01")),
    ];
    let ccp = build_context_package(&records, &report(&[])).unwrap();
    let ids: Vec<_> = ccp
        .section(SectionKey::Conditions)
        .items
        .iter()
        .map(|i| i.evidence_id.as_str())
        .collect();
    assert_eq!(ids, ["Condition/new", "Condition/old", "Condition/u1", "Condition/u2"]);
}

#[test]
fn trends_and_lookup() {
    let records = vec![
        patient(),
        hba1c("jan", "2024-01-15", 8.1),
        hba1c("jun", "2024-06-15", 7.2),
    ];
    let ccp = build_context_package(&records, &report(&[])).unwrap();
    assert_eq!(ccp.trends().len(), 1);
    assert_eq!(ccp.trends()[0].direction, Direction::Falling);
    assert_eq!(ccp.item("Observation/jun").unwrap().attr("value"), Some("7.2"));
    assert!(ccp.item("Observation/none").is_none());
}

#[test]
fn repeated_ids_get_suffixes() {
    let records = vec![
        patient(),
        hba1c("o1", "2024-01-15", 8.1),
        hba1c("o1", "2024-02-15", 8.0),
        hba1c("o1", "2024-03-15", 7.9),
    ];
    let ccp = build_context_package(&records, &report(&[])).unwrap();
    let mut ids: Vec<_> = ccp.evidence_ids().into_iter().collect();
    ids.sort();
    assert_eq!(
        ids,
        ["Observation/o1", "Observation/o1#2", "Observation/o1#3", "Patient/p1"]
    );
}

#[test]
fn compositions_are_metadata_and_bad_records_are_counted() {
    let mut broken = hba1c("x", "2024-01-01", 1.0);
    broken.payload.as_object_mut().unwrap().remove("id");
    let records = vec![
        patient(),
        rec(
            ResourceType::Composition,
            json!({"resourceType": "Composition", "id": "k1", "title": "Discharge summary",
                   "section": [{"title": "Hospital course"}]}),
        ),
        broken,
    ];
    let ccp = build_context_package(&records, &report(&[])).unwrap();
    assert_eq!(ccp.metadata().compositions.len(), 1);
    assert_eq!(ccp.metadata().compositions[0].section_titles, ["Hospital course"]);
    assert_eq!(ccp.metadata().skipped_records, 1);
    assert_eq!(ccp.warnings().len(), 1);
    assert_eq!(ccp.items().count(), 1);
}

#[test]
fn json_round_trip_and_determinism() {
    let records = vec![
        patient(),
        hba1c("jan", "2024-01-15", 8.1),
        hba1c("jun", "2024-06-15", 7.2),
    ];
    let a = build_context_package(&records, &report(&[])).unwrap();
    let b = build_context_package(&records, &report(&[])).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.fingerprint(), b.fingerprint());
    let back = ClinicalContextPackage::from_json(&a.to_json()).unwrap();
    assert_eq!(back, a);
    assert_eq!(back.fingerprint(), a.fingerprint());
}

#[test]
fn from_json_rejects_broken_packages() {
    let ccp = build_context_package(&[patient(), hba1c("a", "2024-01-01", 1.0)], &report(&[])).unwrap();
    let good: Value = serde_json::from_str(&ccp.to_json()).unwrap();

    let mut v = good.clone();
    v["sections"].as_array_mut().unwrap().swap(2, 3);
    assert!(matches!(
        ClinicalContextPackage::from_json(&v.to_string()),
        Err(PackageError::Json(_))
    ));

    let mut v = good.clone();
    v["sections"][5]["state"] = json!("Empty");
    assert!(ClinicalContextPackage::from_json(&v.to_string()).is_err());

    let mut v = good.clone();
    v["schema_version"] = json!("other/9");
    assert!(ClinicalContextPackage::from_json(&v.to_string()).is_err());

    let mut v = good;
    let dup = v["sections"][5]["items"][0].clone();
    v["sections"][5]["items"].as_array_mut().unwrap().push(dup);
    assert!(ClinicalContextPackage::from_json(&v.to_string()).is_err());
}

// ---- dedup against a brute-force oracle ----

fn arb_item() -> impl Strategy<Value = EvidenceItem> {
    (
        0u8..3,  // code, 0 = uncoded
        0i64..4, // day offset
        0i64..3, // hour
        0u8..2,  // status
        0u8..2,  // value
    )
        .prop_map(|(code, day, hour, status, value)| EvidenceItem {
            evidence_id: String::new(),
            resource_type: ResourceType::MedicationRequest,
            section: SectionKey::Medications,
            display: "x".into(),
            codes: if code == 0 {
                vec![]
            } else {
                vec![Coding {
                    system: "rx".into(),
                    code: code.to_string(),
                    display: None,
                }]
            },
            effective_at: (day < 3).then(|| at() + Duration::days(day) + Duration::hours(hour)),
            status: Some(["active", "stopped"][status as usize].to_string()),
            attributes: BTreeMap::from([("dose".to_string(), format!("{value} mg"))]),
            duplicate_count: 1,
            source_url: String::new(),
        })
}

/// Pairwise comparison of the key fields, grouped by union-find.
fn oracle(items: &[EvidenceItem]) -> BTreeMap<String, u32> {
    let same = |a: &EvidenceItem, b: &EvidenceItem| {
        !a.codes.is_empty()
            && !b.codes.is_empty()
            && a.codes[0].system == b.codes[0].system
            && a.codes[0].code == b.codes[0].code
            && a.effective_at.map(|t| t.format("%F").to_string()) == b.effective_at.map(|t| t.format("%F").to_string())
            && a.status == b.status
            && a.attributes.get("dose") == b.attributes.get("dose")
    };
    let n = items.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        if p[x] != x {
            let r = find(p, p[x]);
            p[x] = r;
        }
        p[x]
    }
    for i in 0..n {
        for j in 0..i {
            if same(&items[i], &items[j]) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    groups
        .values()
        .map(|members| {
            // latest timestamp, earliest index on ties
            let survivor = *members
                .iter()
                .max_by(|&&a, &&b| items[a].effective_at.cmp(&items[b].effective_at).then(b.cmp(&a)))
                .unwrap();
            (items[survivor].evidence_id.clone(), members.len() as u32)
        })
        .collect()
}

proptest! {
    #[test]
    fn dedup_matches_group_by_oracle(raw in proptest::collection::vec(arb_item(), 0..24)) {
        let items: Vec<EvidenceItem> = raw
            .into_iter()
            .enumerate()
            .map(|(i, mut it)| { it.evidence_id = format!("MedicationRequest/m{i}"); it })
            .collect();
        let expected = oracle(&items);
        let once = deduplicate(items.clone());
        let got: BTreeMap<String, u32> =
            once.iter().map(|i| (i.evidence_id.clone(), i.duplicate_count)).collect();
        prop_assert_eq!(&got, &expected);
        prop_assert_eq!(once.iter().map(|i| i.duplicate_count).sum::<u32>() as usize, items.len());
        prop_assert_eq!(deduplicate(once.clone()), once);
    }

    #[test]
    fn sorted_sections_are_non_increasing(raw in proptest::collection::vec(arb_item(), 0..24)) {
        let mut items = raw;
        sort_section_items(&mut items);
        let dated: Vec<_> = items.iter().take_while(|i| i.effective_at.is_some()).collect();
        prop_assert!(items[dated.len()..].iter().all(|i| i.effective_at.is_none()));
        prop_assert!(dated.windows(2).all(|w| w[0].effective_at >= w[1].effective_at));
    }
}
