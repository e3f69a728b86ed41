use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::profile::{ProfileError, VariabilityProfile};
use super::vocab::{self, Concept};
use crate::resource::ResourceType;

/// Facts about a numeric series: the value at the newest timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesFact {
    pub code: String,
    pub count: usize,
    pub max_date: DateTime<Utc>,
    pub max_value: f64,
    pub max_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateFact {
    pub code: String,
    pub day: NaiveDate,
    pub ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictFact {
    pub code: String,
    pub at: DateTime<Utc>,
    pub ids: Vec<String>,
    pub values: Vec<f64>,
}

/// Ground truth recorded while generating, for oracle checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub patient_id: String,
    pub seed: u64,
    /// Resources emitted per type.
    pub counts: BTreeMap<ResourceType, usize>,
    /// One entry per Observation code with a unique newest timestamp.
    pub lab_series: Vec<SeriesFact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duplicate_orders: Option<DuplicateFact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conflict: Option<ConflictFact>,
    pub allergy_ids: Vec<String>,
    pub anticoagulant_ids: Vec<String>,
}

impl Manifest {
    pub fn series(&self, code: &str) -> Option<&SeriesFact> {
        self.lab_series.iter().find(|s| s.code == code)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

/// Raw FHIR JSON for one patient plus its manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBundleSet {
    pub patient_id: String,
    pub resources: BTreeMap<ResourceType, Vec<Value>>,
    pub manifest: Manifest,
}

impl SyntheticBundleSet {
    pub fn of_type(&self, rt: ResourceType) -> &[Value] {
        self.resources.get(&rt).map(Vec::as_slice).unwrap_or_default()
    }
}

fn coding(system: &str, (code, display): Concept) -> Value {
    json!({"coding": [{"system": system, "code": code, "display": display}], "text": display})
}

fn instant(at: DateTime<Utc>) -> String {
    at.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

struct Gen {
    rng: ChaCha8Rng,
    clock: DateTime<Utc>,
    patient_ref: Value,
    next_id: BTreeMap<&'static str, usize>,
}

impl Gen {
    /// Every call lands on a later day, so only deliberate duplicates share one.
    fn next_day(&mut self) -> DateTime<Utc> {
        let days = self.rng.random_range(1..=9);
        let minutes = self.rng.random_range(8 * 60..17 * 60);
        let day_start = (self.clock + Duration::days(days))
            .date_naive()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        self.clock = Utc.from_utc_datetime(&day_start) + Duration::minutes(minutes);
        self.clock
    }

    fn id(&mut self, prefix: &'static str) -> String {
        let n = self.next_id.entry(prefix).or_insert(0);
        *n += 1;
        format!("{prefix}-{n}")
    }

    fn pick<T: Copy>(&mut self, list: &[T]) -> T {
        list[self.rng.random_range(0..list.len())]
    }

    /// `k` distinct entries, in random order.
    fn pick_distinct<T: Copy>(&mut self, list: &[T], k: usize) -> Vec<T> {
        let mut idx: Vec<usize> = (0..list.len()).collect();
        idx.shuffle(&mut self.rng);
        idx.into_iter().take(k.min(list.len())).map(|i| list[i]).collect()
    }

    fn count(&mut self, lo: usize, hi: usize) -> usize {
        self.rng.random_range(lo..=hi)
    }

    fn tenths(&mut self, lo: u32, hi: u32) -> f64 {
        f64::from(self.rng.random_range(lo..=hi)) / 10.0
    }
}

/// Builds one synthetic patient. Pure in the profile.
///
/// Panics if the profile is invalid or if the manifest fails its own
/// consistency check, which would be a generator bug.
pub fn generate_patient(profile: &VariabilityProfile) -> SyntheticBundleSet {
    try_generate_patient(profile).expect("valid profile")
}

pub fn try_generate_patient(profile: &VariabilityProfile) -> Result<SyntheticBundleSet, ProfileError> {
    profile.validate()?;
    let patient_id = format!("p{}", profile.seed);
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(profile.seed),
        clock: Utc.with_ymd_and_hms(2012, 1, 1, 0, 0, 0).unwrap(),
        patient_ref: json!({"reference": format!("Patient/{patient_id}")}),
        next_id: BTreeMap::new(),
    };
    let mut resources: BTreeMap<ResourceType, Vec<Value>> = BTreeMap::new();
    let mut manifest = Manifest {
        patient_id: patient_id.clone(),
        seed: profile.seed,
        counts: BTreeMap::new(),
        lab_series: vec![],
        duplicate_orders: None,
        conflict: None,
        allergy_ids: vec![],
        anticoagulant_ids: vec![],
    };

    let given = g.pick(vocab::GIVEN_NAMES);
    let family = g.pick(vocab::FAMILY_NAMES);
    let gender = g.pick(&["female", "male"]);
    let birth = NaiveDate::from_ymd_opt(
        g.rng.random_range(1935..2000),
        g.rng.random_range(1..=12),
        g.rng.random_range(1..=28),
    )
    .unwrap();
    resources.insert(
        ResourceType::Patient,
        vec![json!({
            "resourceType": "Patient", "id": patient_id,
            "name": [{"given": [given], "family": family}],
            "gender": gender, "birthDate": birth.format("%Y-%m-%d").to_string(),
        })],
    );

    for rt in ResourceType::ALL {
        if rt == ResourceType::Patient || !profile.populated_types.contains(&rt) {
            continue;
        }
        let list = match rt {
            ResourceType::Observation => observations(&mut g, profile, &mut manifest),
            ResourceType::MedicationRequest => medications(&mut g, profile, &mut manifest),
            ResourceType::AllergyIntolerance => {
                let list = allergies(&mut g);
                manifest.allergy_ids = ids_of(&list);
                list
            }
            other => simple(&mut g, other, &patient_id),
        };
        resources.insert(rt, list);
    }
    manifest.counts = resources.iter().map(|(rt, v)| (*rt, v.len())).collect();

    let set = SyntheticBundleSet {
        patient_id,
        resources,
        manifest,
    };
    if let Err(e) = verify_manifest(&set) {
        panic!("generator produced an inconsistent manifest: {e}");
    }
    Ok(set)
}

fn ids_of(list: &[Value]) -> Vec<String> {
    list.iter()
        .filter_map(|v| v["id"].as_str().map(str::to_string))
        .collect()
}

fn observation(
    g: &mut Gen,
    (code, display): Concept,
    category: &str,
    at: DateTime<Utc>,
    value: f64,
    unit: &str,
) -> Value {
    let id = g.id("obs");
    json!({
        "resourceType": "Observation", "id": id, "status": "final",
        "category": [{"coding": [{"system": vocab::OBS_CATEGORY, "code": category}]}],
        "code": coding(vocab::LOINC, (code, display)),
        "subject": g.patient_ref,
        "effectiveDateTime": instant(at),
        "valueQuantity": {"value": value, "unit": unit},
    })
}

fn observations(g: &mut Gen, profile: &VariabilityProfile, manifest: &mut Manifest) -> Vec<Value> {
    let mut out = Vec::new();
    let mut series = |out: &mut Vec<Value>,
                      g: &mut Gen,
                      concept: Concept,
                      unit: &str,
                      category: &str,
                      n: usize,
                      lo: u32,
                      hi: u32| {
        let mut last = None;
        for _ in 0..n {
            let at = g.next_day();
            let value = g.tenths(lo, hi);
            let obs = observation(g, concept, category, at, value, unit);
            last = Some((at, value, obs["id"].as_str().unwrap().to_string()));
            out.push(obs);
        }
        if let Some((max_date, max_value, max_id)) = last {
            manifest.lab_series.push(SeriesFact {
                code: concept.0.to_string(),
                count: n,
                max_date,
                max_value,
                max_id,
            });
        }
    };

    series(
        &mut out,
        g,
        vocab::HBA1C,
        "%",
        "laboratory",
        profile.lab_history_length as usize,
        50,
        110,
    );
    for &(concept, unit, category, lo, hi) in vocab::OTHER_OBSERVATIONS {
        let n = g.count(0, 3);
        series(&mut out, g, concept, unit, category, n, lo, hi);
    }
    if profile.conflicting_obs {
        let at = g.next_day();
        let a = observation(g, vocab::GLUCOSE, "laboratory", at, 100.0, "mg/dL");
        let b = observation(g, vocab::GLUCOSE, "laboratory", at, 140.0, "mg/dL");
        manifest.conflict = Some(ConflictFact {
            code: vocab::GLUCOSE.0.to_string(),
            at,
            ids: ids_of(&[a.clone(), b.clone()]),
            values: vec![100.0, 140.0],
        });
        out.push(a);
        out.push(b);
    }
    manifest.lab_series.sort_by(|a, b| a.code.cmp(&b.code));
    out.shuffle(&mut g.rng);
    out
}

fn medication(g: &mut Gen, concept: Concept, status: &str, at: DateTime<Utc>, dose: &str) -> Value {
    let id = g.id("med");
    json!({
        "resourceType": "MedicationRequest", "id": id, "status": status, "intent": "order",
        "medicationCodeableConcept": coding(vocab::RXNORM, concept),
        "subject": g.patient_ref,
        "authoredOn": instant(at),
        "dosageInstruction": [{"text": dose}],
    })
}

fn medications(g: &mut Gen, profile: &VariabilityProfile, manifest: &mut Manifest) -> Vec<Value> {
    let mut out = Vec::new();
    // the first vocabulary entry is reserved for duplicated orders
    let k = g.count(1, 3);
    for concept in g.pick_distinct(&vocab::MEDICATIONS[1..], k) {
        let at = g.next_day();
        let status = if g.rng.random_bool(0.75) { "active" } else { "stopped" };
        let dose = g.pick(vocab::DOSES);
        out.push(medication(g, concept, status, at, dose));
    }
    if profile.duplicate_order_count >= 2 {
        let at = g.next_day();
        let day_start = at.date_naive().and_hms_opt(7, 0, 0).unwrap();
        let mut ids = Vec::new();
        for i in 0..profile.duplicate_order_count {
            let when = Utc.from_utc_datetime(&day_start) + Duration::minutes(i64::from(i) * 20);
            let order = medication(g, vocab::MEDICATIONS[0], "active", when, vocab::DOSES[0]);
            ids.push(order["id"].as_str().unwrap().to_string());
            out.push(order);
        }
        manifest.duplicate_orders = Some(DuplicateFact {
            code: vocab::MEDICATIONS[0].0.to_string(),
            day: at.date_naive(),
            ids,
        });
    }
    let anticoagulants = [vocab::WARFARIN.0, vocab::APIXABAN.0];
    manifest.anticoagulant_ids = out
        .iter()
        .filter(|m| {
            m["medicationCodeableConcept"]["coding"][0]["code"]
                .as_str()
                .is_some_and(|c| anticoagulants.contains(&c))
        })
        .filter_map(|m| m["id"].as_str().map(str::to_string))
        .collect();
    out
}

fn allergies(g: &mut Gen) -> Vec<Value> {
    let k = g.count(1, 2);
    let mut out = Vec::new();
    for concept in g.pick_distinct(vocab::ALLERGIES, k) {
        let id = g.id("alg");
        let at = g.next_day();
        let criticality = g.pick(&["low", "high"]);
        let reaction = g.pick(vocab::REACTIONS);
        out.push(json!({
            "resourceType": "AllergyIntolerance", "id": id,
            "clinicalStatus": {"coding": [{"code": "active"}]},
            "verificationStatus": {"coding": [{"code": "confirmed"}]},
            "code": coding(vocab::SNOMED, concept),
            "patient": g.patient_ref,
            "criticality": criticality,
            "recordedDate": instant(at),
            "reaction": [{"manifestation": [{"coding": [{"display": reaction}], "text": reaction}]}],
        }));
    }
    out
}

/// Types with no seeded ground truth beyond their count.
fn simple(g: &mut Gen, rt: ResourceType, patient_id: &str) -> Vec<Value> {
    let subject = g.patient_ref.clone();
    let n = match rt {
        ResourceType::Condition => g.count(1, 4),
        ResourceType::Encounter => g.count(1, 3),
        ResourceType::Composition | ResourceType::Consent => 1,
        _ => g.count(1, 2),
    };
    let mut out = Vec::with_capacity(n);
    let concepts: Vec<Concept> = match rt {
        ResourceType::Condition => g.pick_distinct(vocab::CONDITIONS, n),
        ResourceType::Procedure => g.pick_distinct(vocab::PROCEDURES, n),
        ResourceType::Immunization => g.pick_distinct(vocab::IMMUNIZATIONS, n),
        ResourceType::DiagnosticReport => g.pick_distinct(vocab::REPORTS, n),
        ResourceType::CarePlan => g.pick_distinct(vocab::CARE_PLANS, n),
        ResourceType::Flag => g.pick_distinct(vocab::FLAGS, n),
        ResourceType::Device => g.pick_distinct(vocab::DEVICES, n),
        ResourceType::FamilyMemberHistory => g.pick_distinct(vocab::CONDITIONS, n),
        ResourceType::Encounter => g.pick_distinct(vocab::ENCOUNTER_TYPES, n),
        _ => vec![("", ""); n],
    };
    for concept in concepts {
        let at = g.next_day();
        let when = instant(at);
        let v = match rt {
            ResourceType::Condition => {
                let status = if g.rng.random_bool(0.7) { "active" } else { "resolved" };
                json!({
                    "resourceType": "Condition", "id": g.id("cond"),
                    "clinicalStatus": {"coding": [{"code": status}]},
                    "verificationStatus": {"coding": [{"code": "confirmed"}]},
                    "category": [{"coding": [{"code": "problem-list-item"}]}],
                    "code": coding(vocab::SNOMED, concept), "subject": subject, "onsetDateTime": when,
                })
            }
            ResourceType::Procedure => json!({
                "resourceType": "Procedure", "id": g.id("proc"), "status": "completed",
                "code": coding(vocab::SNOMED, concept), "subject": subject, "performedDateTime": when,
            }),
            ResourceType::Encounter => {
                let idx = vocab::ENCOUNTER_TYPES.iter().position(|c| *c == concept).unwrap_or(0);
                let (class_code, class_display) = vocab::ENCOUNTER_CLASSES[idx];
                let reason = g.pick(vocab::CONDITIONS);
                let end = instant(at + Duration::hours(if class_code == "IMP" { 72 } else { 1 }));
                json!({
                    "resourceType": "Encounter", "id": g.id("enc"), "status": "finished",
                    "class": {"system": vocab::V3_ACT, "code": class_code, "display": class_display},
                    "type": [coding(vocab::SNOMED, concept)], "subject": subject,
                    "period": {"start": when, "end": end},
                    "reasonCode": [coding(vocab::SNOMED, reason)],
                })
            }
            ResourceType::Immunization => json!({
                "resourceType": "Immunization", "id": g.id("imm"), "status": "completed",
                "vaccineCode": coding(vocab::CVX, concept), "patient": subject, "occurrenceDateTime": when,
            }),
            ResourceType::DiagnosticReport => json!({
                "resourceType": "DiagnosticReport", "id": g.id("rpt"), "status": "final",
                "code": coding(vocab::LOINC, concept), "subject": subject, "effectiveDateTime": when,
                "conclusion": "Within normal limits",
            }),
            ResourceType::CarePlan => json!({
                "resourceType": "CarePlan", "id": g.id("plan"), "status": "active", "intent": "plan",
                "category": [coding(vocab::SNOMED, concept)], "subject": subject, "period": {"start": when},
            }),
            ResourceType::Flag => json!({
                "resourceType": "Flag", "id": g.id("flag"), "status": "active",
                "code": coding(vocab::SNOMED, concept), "subject": subject, "period": {"start": when},
            }),
            ResourceType::Device => json!({
                "resourceType": "Device", "id": g.id("dev"), "status": "active",
                "type": coding(vocab::SNOMED, concept), "patient": subject,
            }),
            ResourceType::FamilyMemberHistory => {
                let rel = g.pick(vocab::RELATIONSHIPS);
                json!({
                    "resourceType": "FamilyMemberHistory", "id": g.id("fmh"), "status": "completed",
                    "patient": subject, "date": when,
                    "relationship": coding("http://terminology.hl7.org/CodeSystem/v3-RoleCode", rel),
                    "condition": [{"code": coding(vocab::SNOMED, concept)}],
                })
            }
            ResourceType::ImagingStudy => {
                let (modality, procedure) = g.pick(vocab::IMAGING);
                json!({
                    "resourceType": "ImagingStudy", "id": g.id("img"), "status": "available",
                    "subject": subject, "started": when,
                    "modality": [{"system": "http://dicom.nema.org/resources/ontology/DCM", "code": modality}],
                    "procedureCode": [coding(vocab::SNOMED, procedure)],
                })
            }
            ResourceType::Goal => {
                let text = g.pick(vocab::GOALS);
                json!({
                    "resourceType": "Goal", "id": g.id("goal"), "lifecycleStatus": "active",
                    "description": {"text": text}, "subject": subject,
                    "startDate": at.format("%Y-%m-%d").to_string(),
                })
            }
            ResourceType::Consent => json!({
                "resourceType": "Consent", "id": g.id("cons"), "status": "active",
                "scope": {"coding": [{"code": "patient-privacy"}], "text": "Privacy Consent"},
                "category": [{"coding": [{"system": vocab::LOINC, "code": "59284-0", "display": "Patient Consent"}]}],
                "patient": subject, "dateTime": when,
            }),
            ResourceType::Composition => json!({
                "resourceType": "Composition", "id": g.id("comp"), "status": "final",
                "type": coding(vocab::LOINC, ("34133-9", "Summary of episode note")),
                "subject": subject, "date": when, "title": format!("Episode summary for {patient_id}"),
                "section": [{"title": "Problems"}, {"title": "Medications"}, {"title": "Results"}],
            }),
            ResourceType::Patient
            | ResourceType::Observation
            | ResourceType::MedicationRequest
            | ResourceType::AllergyIntolerance => {
                unreachable!("generated elsewhere")
            }
        };
        out.push(v);
    }
    out
}

/// Re-derives every manifest fact from the emitted JSON alone.
pub fn verify_manifest(set: &SyntheticBundleSet) -> Result<(), String> {
    let m = &set.manifest;
    for (rt, list) in &set.resources {
        if m.counts.get(rt) != Some(&list.len()) {
            return Err(format!(
                "{rt}: manifest count {:?}, emitted {}",
                m.counts.get(rt),
                list.len()
            ));
        }
        for v in list {
            if v["resourceType"].as_str() != Some(rt.as_str()) {
                return Err(format!("{rt}: resource of type {}", v["resourceType"]));
            }
        }
        let ids: BTreeSet<&str> = list.iter().filter_map(|v| v["id"].as_str()).collect();
        if ids.len() != list.len() {
            return Err(format!("{rt}: ids missing or repeated"));
        }
    }
    if m.counts.len() != set.resources.len() {
        return Err("manifest counts types that were not emitted".into());
    }

    let obs = set.of_type(ResourceType::Observation);
    let code_of = |v: &Value| v["code"]["coding"][0]["code"].as_str().map(str::to_string);
    let when = |v: &Value, key: &str| {
        v[key]
            .as_str()
            .and_then(|s| DateTime::parse_from_rfc3339(s).ok())
            .map(|d| d.with_timezone(&Utc))
    };
    let mut by_code: BTreeMap<String, Vec<(DateTime<Utc>, f64, String)>> = BTreeMap::new();
    for v in obs {
        let (Some(code), Some(at), Some(value)) = (
            code_of(v),
            when(v, "effectiveDateTime"),
            v["valueQuantity"]["value"].as_f64(),
        ) else {
            return Err("observation without code, date or value".into());
        };
        by_code
            .entry(code)
            .or_default()
            .push((at, value, v["id"].as_str().unwrap_or_default().to_string()));
    }
    let conflict_code = m.conflict.as_ref().map(|c| c.code.clone());
    let expected_codes: BTreeSet<&String> = by_code.keys().filter(|c| Some(*c) != conflict_code.as_ref()).collect();
    let manifest_codes: BTreeSet<&String> = m.lab_series.iter().map(|s| &s.code).collect();
    if expected_codes != manifest_codes {
        return Err(format!("series codes {manifest_codes:?} vs emitted {expected_codes:?}"));
    }
    for s in &m.lab_series {
        let points = &by_code[&s.code];
        let newest = points.iter().map(|p| p.0).max().unwrap();
        let at_newest: Vec<_> = points.iter().filter(|p| p.0 == newest).collect();
        if points.len() != s.count || at_newest.len() != 1 {
            return Err(format!("series {}: count or unique maximum wrong", s.code));
        }
        let (at, value, id) = at_newest[0];
        if *at != s.max_date || *value != s.max_value || *id != s.max_id {
            return Err(format!("series {}: newest point differs from manifest", s.code));
        }
    }
    if let Some(c) = &m.conflict {
        let points = by_code.get(&c.code).ok_or("conflict code not emitted")?;
        let values: Vec<f64> = points.iter().filter(|p| p.0 == c.at).map(|p| p.1).collect();
        if points.len() != 2 || values.len() != 2 || values[0] == values[1] {
            return Err("conflict pair malformed".into());
        }
    }

    let meds = set.of_type(ResourceType::MedicationRequest);
    if let Some(d) = &m.duplicate_orders {
        let group: Vec<&Value> = meds
            .iter()
            .filter(|v| v["id"].as_str().is_some_and(|id| d.ids.iter().any(|x| x == id)))
            .collect();
        let same = group.iter().all(|v| {
            v["medicationCodeableConcept"]["coding"][0]["code"].as_str() == Some(d.code.as_str())
                && when(v, "authoredOn").map(|t| t.date_naive()) == Some(d.day)
                && v["status"] == group[0]["status"]
                && v["dosageInstruction"] == group[0]["dosageInstruction"]
        });
        if group.len() != d.ids.len() || !same {
            return Err("duplicate order group does not share one key".into());
        }
        let others = meds
            .iter()
            .filter(|v| v["medicationCodeableConcept"]["coding"][0]["code"].as_str() == Some(d.code.as_str()));
        if others.count() != d.ids.len() {
            return Err("duplicated medication code used outside the group".into());
        }
    }
    let allergy_ids = ids_of(set.of_type(ResourceType::AllergyIntolerance));
    if allergy_ids != m.allergy_ids {
        return Err("allergy ids differ".into());
    }
    Ok(())
}
