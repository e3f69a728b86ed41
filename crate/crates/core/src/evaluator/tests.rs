use std::collections::BTreeSet;

use proptest::prelude::*;

use super::*;
use crate::normalizer::ClinicalContextPackage;
use crate::resource::SectionKey;
use crate::summarizer::{summarize_deterministic, RenderMode, StatementKind, SummaryDocument, SummaryStatement};
use crate::testkit::{package_for, SyntheticBundleSet, VariabilityProfile};

fn block_on<F: std::future::Future>(f: F) -> F::Output {
    tokio::runtime::Builder::new_current_thread()
        .enable_time()
        .build()
        .unwrap()
        .block_on(f)
}

fn baseline(seed: u64) -> (SyntheticBundleSet, ClinicalContextPackage, SummaryDocument) {
    let (set, ccp) = block_on(package_for(&VariabilityProfile::baseline(seed))).unwrap();
    let doc = summarize_deterministic(&ccp, RenderMode::NoticeEmpty);
    (set, ccp, doc)
}

fn coverage_of<'a>(cov: &'a [DomainCoverage], domain: &str) -> &'a DomainCoverage {
    cov.iter().find(|c| c.domain == domain).unwrap()
}

#[test]
fn default_checklist_domains() {
    let list = Checklist::default();
    let labels: Vec<&str> = list.domains.iter().map(|d| d.label.as_str()).collect();
    assert_eq!(
        labels,
        [
            "demographics",
            "active problems",
            "major historical problems",
            "current medications",
            "allergies",
            "anticoagulants",
            "key recent labs and vitals",
            "major procedures",
            "encounter context",
            "preventive care",
        ]
    );
    let safety: Vec<&str> = list
        .domains
        .iter()
        .filter(|d| d.safety_critical)
        .map(|d| d.label.as_str())
        .collect();
    assert_eq!(safety, ["allergies", "anticoagulants"]);
    assert_eq!(Checklist::from_json(&list.to_json()).unwrap(), list);
    assert!(Checklist::from_json(r#"{"domains": []}"#).is_err());
    assert!(Checklist::from_json(
        r#"{"domains": [{"label": "x", "section": "Conditions", "matcher": {"kind": "nope"}}]}"#
    )
    .is_err());
}

#[test]
fn intact_summary_is_clean_and_fully_covered() {
    let (set, ccp, doc) = baseline(21);
    let report = evaluate(&ccp, &doc, &Checklist::default()).unwrap();
    assert!(report.errors.is_empty(), "{:?}", report.errors);
    assert!(report.omission_findings.is_empty());
    assert!(report.overall_pass);
    for c in &report.coverage {
        if let Some(v) = c.coverage {
            assert_eq!(v, 1.0, "{}", c.domain);
        }
    }
    // independent: the generator's own record of allergies
    let allergies = coverage_of(&report.coverage, "allergies");
    assert_eq!(allergies.matched, set.manifest.allergy_ids.len());
    assert!(report.section_completeness.values().all(|v| *v == 1.0));
    assert_eq!(report.section_completeness.len(), 16);
}

#[test]
fn deleting_medications_zeroes_current_meds() {
    let (set, ccp, mut doc) = baseline(22);
    doc.statements_mut(SectionKey::Medications).unwrap().clear();
    let cov = coverage_score(&ccp, &doc, &Checklist::default());
    assert_eq!(coverage_of(&cov, "current medications").coverage, Some(0.0));
    let findings = omission_risk(&ccp, &doc, &Checklist::default());
    let ids: BTreeSet<String> = findings.iter().map(|f| f.evidence_id.clone()).collect();
    let expected: BTreeSet<String> = set
        .manifest
        .anticoagulant_ids
        .iter()
        .map(|i| format!("MedicationRequest/{i}"))
        .collect();
    assert_eq!(ids, expected);
    assert!(findings.iter().all(|f| f.domain == "anticoagulants"));
}

#[test]
fn empty_chart_has_nothing_applicable() {
    let (_, ccp) = block_on(package_for(&VariabilityProfile::empty_chart(23))).unwrap();
    let doc = summarize_deterministic(&ccp, RenderMode::NoticeEmpty);
    let cov = coverage_score(&ccp, &doc, &Checklist::default());
    for c in cov.iter().filter(|c| c.domain != "demographics") {
        assert_eq!(c.coverage, None, "{}", c.domain);
    }
    let report = evaluate(&ccp, &doc, &Checklist::default()).unwrap();
    assert!(report.errors.is_empty());
    assert!(report.overall_pass);
}

#[test]
fn removing_an_allergy_statement_is_one_finding() {
    let (set, ccp, mut doc) = baseline(24);
    let first = format!("AllergyIntolerance/{}", set.manifest.allergy_ids[0]);
    let list = doc.statements_mut(SectionKey::AllergiesAndIntolerances).unwrap();
    list.retain(|st| st.evidence_refs != [first.clone()]);
    let findings = omission_risk(&ccp, &doc, &Checklist::default());
    assert_eq!(
        findings,
        [OmissionFinding {
            domain: "allergies".into(),
            evidence_id: first
        }]
    );
    let report = evaluate(&ccp, &doc, &Checklist::default()).unwrap();
    assert!(!report.overall_pass);
    assert_eq!(report.count(ErrorCategory::Omission), 1);
}

#[test]
fn appended_uncited_statement_is_a_hallucination() {
    let (_, ccp, mut doc) = baseline(25);
    let list = doc.statements_mut(SectionKey::Conditions).unwrap();
    let index = list.len();
    list.push(SummaryStatement {
        text: "Chronic kidney disease stage 4".into(),
        section: SectionKey::Conditions,
        kind: StatementKind::Fact,
        evidence_refs: vec![],
        numeric_claims: vec![],
        temporal_claims: vec![],
    });
    let errors = categorize_errors(&ccp, &doc).unwrap();
    assert_eq!(errors.len(), 1, "{errors:?}");
    assert_eq!(errors[0].category, ErrorCategory::HallucinationInference);
    assert_eq!(
        errors[0].reference,
        ErrorRef::Statement {
            statement: crate::summarizer::StatementRef {
                section: SectionKey::Conditions,
                index
            }
        }
    );
    assert!(!evaluate(&ccp, &doc, &Checklist::default()).unwrap().overall_pass);
}

#[test]
fn wrong_dates_are_temporal_errors() {
    let (_, ccp, mut doc) = baseline(26);
    let list = doc.statements_mut(SectionKey::Conditions).unwrap();
    let st = list.iter_mut().find(|s| !s.temporal_claims.is_empty()).unwrap();
    st.temporal_claims[0].date = st.temporal_claims[0].date.pred_opt().unwrap();
    let errors = categorize_errors(&ccp, &doc).unwrap();
    assert_eq!(errors.len(), 1, "{errors:?}");
    assert_eq!(errors[0].category, ErrorCategory::IncorrectTemporalContext);

    let (_, ccp, mut doc) = baseline(26);
    let list = doc.statements_mut(SectionKey::Procedures).unwrap();
    list[0].text.push_str(" (repeated 1999-02-03)");
    let errors = categorize_errors(&ccp, &doc).unwrap();
    let cats: BTreeSet<_> = errors.iter().map(|e| e.category).collect();
    assert!(cats.contains(&ErrorCategory::IncorrectTemporalContext), "{errors:?}");
}

#[test]
fn recommendations_count_as_inference() {
    let (_, ccp, mut doc) = baseline(27);
    let list = doc.statements_mut(SectionKey::Medications).unwrap();
    list[0].text.push_str("; recommend increasing the dose");
    let errors = categorize_errors(&ccp, &doc).unwrap();
    assert_eq!(errors.len(), 1, "{errors:?}");
    assert_eq!(errors[0].category, ErrorCategory::HallucinationInference);
}

#[test]
fn foreign_fingerprint_is_refused() {
    let (_, ccp, _) = baseline(28);
    let (_, _, other) = baseline(29);
    assert!(evaluate(&ccp, &other, &Checklist::default()).is_err());
}

#[test]
fn every_mutation_kind_is_found_at_its_site() {
    for seed in 0..6u64 {
        let (_, ccp, doc) = baseline(100 + seed);
        for kind in MutationKind::ALL {
            let (bad, m) = apply_mutation(&ccp, &doc, kind, seed).unwrap_or_else(|| panic!("{kind:?} seed {seed}"));
            let errors = categorize_errors(&ccp, &bad).unwrap();
            assert!(m.detected_exactly(&errors), "{}: {errors:#?}", m.description);
        }
    }
}

#[test]
fn mutations_are_seeded() {
    let (_, ccp, doc) = baseline(31);
    for kind in MutationKind::ALL {
        let a = apply_mutation(&ccp, &doc, kind, 5).unwrap();
        let b = apply_mutation(&ccp, &doc, kind, 5).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.0.to_json(), b.0.to_json());
    }
}

#[test]
fn value_change_rewrites_text_and_claim() {
    let (_, ccp, doc) = baseline(32);
    let (bad, m) = apply_mutation(&ccp, &doc, MutationKind::ValueChange, 1).unwrap();
    let MutationSite::Statement { statement } = m.site else {
        panic!()
    };
    let before = doc.statement(statement).unwrap();
    let after = bad.statement(statement).unwrap();
    assert_ne!(before.text, after.text);
    assert_ne!(before.numeric_claims[0].value, after.numeric_claims[0].value);
    assert!(after.text.contains(&after.numeric_claims[0].value));
}

#[test]
fn stress_suite_passes() {
    let report = block_on(run_stress_suite(40));
    assert_eq!(report.cases.len(), 4);
    let names: Vec<&str> = report.cases.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, STRESS_CASES);
    assert!(report.passed, "{}", report.to_table());
    assert!(report.cases.iter().all(|c| c.checks > 0));
    assert!(report.to_table().contains("4/4 cases passed"));
    let back: SuiteReport = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(back, report);
}

#[test]
fn report_json_round_trips() {
    let (_, ccp, doc) = baseline(33);
    let (bad, _) = apply_mutation(&ccp, &doc, MutationKind::SafetyDeletion, 0).unwrap();
    let report = evaluate(&ccp, &bad, &Checklist::default()).unwrap();
    let back: EvaluationReport = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(back, report);
    let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(json["errors"][0]["category"], "Omission");
    assert_eq!(json["errors"][0]["ref"]["kind"], "evidence");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn deterministic_summaries_have_no_errors(seed in 0u64..10_000) {
        let profile = VariabilityProfile::random(seed);
        let (_, ccp) = block_on(package_for(&profile)).unwrap();
        for mode in [RenderMode::NoticeEmpty, RenderMode::OmitEmpty] {
            let doc = summarize_deterministic(&ccp, mode);
            let report = evaluate(&ccp, &doc, &Checklist::default()).unwrap();
            prop_assert!(report.errors.is_empty(), "{:?}", report.errors);
            prop_assert!(report.overall_pass);
        }
    }

    #[test]
    fn deleting_a_statement_never_raises_coverage(seed in 0u64..10_000, pick in any::<prop::sample::Index>()) {
        let profile = VariabilityProfile::random(seed);
        let (_, ccp) = block_on(package_for(&profile)).unwrap();
        let doc = summarize_deterministic(&ccp, RenderMode::NoticeEmpty);
        let refs: Vec<_> = doc.statements().map(|(at, _)| at).collect();
        let at = refs[pick.index(refs.len())];
        let mut smaller = doc.clone();
        smaller.statements_mut(at.section).unwrap().remove(at.index);
        let list = Checklist::default();
        let before = coverage_score(&ccp, &doc, &list);
        let after = coverage_score(&ccp, &smaller, &list);
        for (b, a) in before.iter().zip(&after) {
            prop_assert!(a.cited <= b.cited);
            prop_assert!(a.coverage.unwrap_or(0.0) <= b.coverage.unwrap_or(0.0));
        }
    }

    #[test]
    fn random_mutations_are_detected(seed in 0u64..10_000, kind in prop::sample::select(MutationKind::ALL.to_vec())) {
        let (_, ccp) = block_on(package_for(&VariabilityProfile::baseline(seed))).unwrap();
        let doc = summarize_deterministic(&ccp, RenderMode::NoticeEmpty);
        if let Some((bad, m)) = apply_mutation(&ccp, &doc, kind, seed) {
            let errors = categorize_errors(&ccp, &bad).unwrap();
            prop_assert!(m.detected_exactly(&errors), "{}: {:?}", m.description, errors);
        }
    }
}
