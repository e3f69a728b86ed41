//! The four named hard cases, each run end to end against the mock source.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::checklist::Checklist;
use super::report::{evaluate, ErrorCategory};
use crate::normalizer::{ClinicalContextPackage, SectionState};
use crate::pipeline::build_package;
use crate::resource::{ResourceType, SectionKey};
use crate::summarizer::{
    answer_question, summarize_deterministic, validate_grounding, RenderMode, StatementKind, SummaryDocument,
    TemporalRole,
};
use crate::testkit::{generate_patient, mock_client, mock_source, vocab, SyntheticBundleSet, VariabilityProfile};

pub const MISSING_RESOURCES: &str = "missing resources";
pub const CONFLICTING_OBSERVATIONS: &str = "conflicting observations";
pub const DUPLICATE_ORDERS: &str = "duplicate medication orders";
pub const LONGITUDINAL_LABS: &str = "highly longitudinal lab histories";

pub const STRESS_CASES: [&str; 4] = [
    MISSING_RESOURCES,
    CONFLICTING_OBSERVATIONS,
    DUPLICATE_ORDERS,
    LONGITUDINAL_LABS,
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseResult {
    pub name: String,
    pub profile: String,
    pub passed: bool,
    pub checks: usize,
    pub statements: usize,
    pub evaluation_errors: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub passed: bool,
    pub cases: Vec<CaseResult>,
}

impl SuiteReport {
    pub fn passed_count(&self) -> usize {
        self.cases.iter().filter(|c| c.passed).count()
    }

    pub fn case(&self, name: &str) -> Option<&CaseResult> {
        self.cases.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("suite report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<36} {:<6} {:>6} {:>10} {:>6}",
            "case", "result", "checks", "statements", "errors"
        );
        for c in &self.cases {
            let _ = writeln!(
                out,
                "{:<36} {:<6} {:>6} {:>10} {:>6}",
                c.name,
                if c.passed { "pass" } else { "FAIL" },
                c.checks,
                c.statements,
                c.evaluation_errors
            );
            for f in &c.failures {
                let _ = writeln!(out, "    - {f}");
            }
        }
        let _ = writeln!(
            out,
            "{}/{} cases passed (seed {})",
            self.passed_count(),
            self.cases.len(),
            self.seed
        );
        out
    }
}

struct Checks {
    count: usize,
    failures: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.count += 1;
        if !ok {
            self.failures.push(what());
        }
    }
}

fn profile_for(name: &str, seed: u64) -> (&'static str, VariabilityProfile) {
    let profile = match name {
        MISSING_RESOURCES => "missing-resources",
        CONFLICTING_OBSERVATIONS => "conflicting-observations",
        DUPLICATE_ORDERS => "duplicate-orders",
        _ => "longitudinal",
    };
    (
        profile,
        VariabilityProfile::named(profile, seed).expect("built-in profile"),
    )
}

/// Runs every case concurrently; results come back in [`STRESS_CASES`] order.
pub async fn run_stress_suite(seed: u64) -> SuiteReport {
    let handles: Vec<_> = STRESS_CASES
        .iter()
        .map(|name| (name, tokio::spawn(run_case(name, seed))))
        .collect();
    let mut cases = Vec::new();
    for (name, handle) in handles {
        let result = match handle.await {
            Ok(r) => r,
            Err(e) => CaseResult {
                name: name.to_string(),
                profile: profile_for(name, seed).0.to_string(),
                passed: false,
                checks: 0,
                statements: 0,
                evaluation_errors: 0,
                failures: vec![format!("case crashed: {e}")],
            },
        };
        cases.push(result);
    }
    cases.sort_by_key(|c| STRESS_CASES.iter().position(|n| *n == c.name));
    SuiteReport {
        seed,
        passed: cases.iter().all(|c| c.passed),
        cases,
    }
}

pub async fn run_case(name: &'static str, seed: u64) -> CaseResult {
    let (profile_name, profile) = profile_for(name, seed);
    let mut checks = Checks {
        count: 0,
        failures: Vec::new(),
    };
    let mut statements = 0;
    let mut evaluation_errors = 0;

    let set = generate_patient(&profile);
    let source = Arc::new(mock_source(vec![set.clone()], &profile));
    match build_package(&mock_client(source), &set.patient_id).await {
        Err(e) => checks.check(false, || format!("pipeline failed: {e}")),
        Ok(ccp) => {
            let doc = summarize_deterministic(&ccp, RenderMode::NoticeEmpty);
            statements = doc.statement_count();
            common_checks(&mut checks, &ccp, &doc, &mut evaluation_errors);
            match name {
                MISSING_RESOURCES => missing_checks(&mut checks, &ccp, &doc, &profile),
                CONFLICTING_OBSERVATIONS => conflict_checks(&mut checks, &ccp, &doc, &set),
                DUPLICATE_ORDERS => duplicate_checks(&mut checks, &ccp, &doc, &set),
                _ => longitudinal_checks(&mut checks, &ccp, &doc, &set),
            }
        }
    }
    CaseResult {
        name: name.to_string(),
        profile: profile_name.to_string(),
        passed: checks.failures.is_empty(),
        checks: checks.count,
        statements,
        evaluation_errors,
        failures: checks.failures,
    }
}

fn common_checks(checks: &mut Checks, ccp: &ClinicalContextPackage, doc: &SummaryDocument, errors: &mut usize) {
    match validate_grounding(doc, ccp) {
        Ok(v) => checks.check(v.is_empty(), || format!("{} grounding violations", v.len())),
        Err(e) => checks.check(false, || e.to_string()),
    }
    match evaluate(ccp, doc, &Checklist::default()) {
        Ok(report) => {
            *errors = report.errors.len();
            let invented = report.count(ErrorCategory::HallucinationInference);
            checks.check(invented == 0, || format!("{invented} invented-content errors"));
            checks.check(report.errors.is_empty(), || {
                format!("evaluation errors: {:?}", report.errors)
            });
            checks.check(report.overall_pass, || "evaluation did not pass".into());
        }
        Err(e) => checks.check(false, || e.to_string()),
    }
    for (at, st) in doc.statements() {
        if st.kind != StatementKind::MissingData {
            let resolved = !st.evidence_refs.is_empty() && st.evidence_refs.iter().all(|id| ccp.item(id).is_some());
            checks.check(resolved, || format!("{at} has unresolved citations"));
            let populated = ccp.section(at.section).state == SectionState::Populated;
            checks.check(populated, || format!("{at} states a fact in a section without data"));
        }
    }
}

fn missing_checks(
    checks: &mut Checks,
    ccp: &ClinicalContextPackage,
    doc: &SummaryDocument,
    profile: &VariabilityProfile,
) {
    for rt in ResourceType::ALL {
        let Some(key) = rt.section() else { continue };
        if profile.populated_types.contains(&rt) {
            continue;
        }
        let unsupported = profile.unsupported_searches.contains(&rt);
        let want = if unsupported {
            SectionState::Unavailable
        } else {
            SectionState::Empty
        };
        let state = ccp.section(key).state;
        checks.check(state == want, || format!("{key} is {state:?}, expected {want:?}"));
        let notices: Vec<&str> = doc
            .section(key)
            .map(|s| s.statements.iter().map(|st| st.text.as_str()).collect())
            .unwrap_or_default();
        let only_notice = doc
            .section(key)
            .is_some_and(|s| s.statements.len() == 1 && s.statements[0].kind == StatementKind::MissingData);
        checks.check(only_notice, || {
            format!("{key} should carry a single missing-data notice")
        });
        if unsupported {
            checks.check(notices.iter().any(|t| t.contains("unavailable from source")), || {
                format!("{key} notice does not say the source could not provide it")
            });
        }
    }
}

fn conflict_checks(checks: &mut Checks, ccp: &ClinicalContextPackage, doc: &SummaryDocument, set: &SyntheticBundleSet) {
    let Some(conflict) = &set.manifest.conflict else {
        checks.check(false, || "profile produced no conflicting pair".into());
        return;
    };
    let mut citing = Vec::new();
    for id in &conflict.ids {
        let id = format!("Observation/{id}");
        checks.check(ccp.item(&id).is_some(), || format!("{id} was not retained"));
        let fact = doc
            .statements()
            .find(|(_, st)| st.kind == StatementKind::Fact && st.evidence_refs == [id.clone()])
            .map(|(at, _)| at);
        checks.check(fact.is_some(), || format!("no fact statement cites {id}"));
        citing.extend(fact);
    }
    citing.dedup();
    checks.check(citing.len() == conflict.ids.len(), || {
        "conflicting values share a statement".into()
    });
}

fn duplicate_checks(
    checks: &mut Checks,
    ccp: &ClinicalContextPackage,
    doc: &SummaryDocument,
    set: &SyntheticBundleSet,
) {
    let Some(dup) = &set.manifest.duplicate_orders else {
        checks.check(false, || "profile produced no duplicate orders".into());
        return;
    };
    let items: Vec<_> = ccp
        .section(SectionKey::Medications)
        .items
        .iter()
        .filter(|i| i.primary_code().is_some_and(|c| c.code == dup.code))
        .collect();
    checks.check(items.len() == 1, || {
        format!("{} medication items for one order", items.len())
    });
    let Some(item) = items.first() else { return };
    let n = dup.ids.len();
    checks.check(item.duplicate_count as usize == n, || {
        format!("duplicate_count {} but {n} orders were issued", item.duplicate_count)
    });
    let stmts: Vec<_> = doc
        .statements()
        .filter(|(_, st)| st.evidence_refs.contains(&item.evidence_id))
        .collect();
    checks.check(stmts.len() == 1, || {
        format!("{} statements cite the collapsed order", stmts.len())
    });
    let surfaced = stmts
        .iter()
        .any(|(_, st)| st.text.contains(&format!("(recorded {n} times)")));
    checks.check(surfaced, || "duplicate count is not surfaced".into());
}

fn longitudinal_checks(
    checks: &mut Checks,
    ccp: &ClinicalContextPackage,
    doc: &SummaryDocument,
    set: &SyntheticBundleSet,
) {
    let Some(series) = set.manifest.series(vocab::HBA1C.0) else {
        checks.check(false, || "profile produced no HbA1c series".into());
        return;
    };
    let retrieved = ccp
        .section(SectionKey::LaboratoryAndVitalSigns)
        .items
        .iter()
        .filter(|i| i.primary_code().is_some_and(|c| c.code == series.code))
        .count();
    checks.check(retrieved == series.count, || {
        format!("{retrieved} of {} values retrieved", series.count)
    });
    let want = format!("Observation/{}", series.max_id);
    let Some(trend) = ccp.trends().iter().find(|t| t.code.code == series.code) else {
        checks.check(false, || "no trend for the series".into());
        return;
    };
    checks.check(trend.latest_evidence_id == want, || {
        format!(
            "trend latest is {} but the newest value is {want}",
            trend.latest_evidence_id
        )
    });
    checks.check(
        trend.latest.value == series.max_value && trend.latest.at == series.max_date,
        || "trend latest value or date differs from the newest emission".into(),
    );
    let cited_as_latest = doc.statements().any(|(_, st)| {
        st.kind == StatementKind::Trend
            && st
                .temporal_claims
                .iter()
                .any(|c| c.role == TemporalRole::Latest && c.evidence_id == want)
    });
    checks.check(cited_as_latest, || format!("no trend statement cites {want} as latest"));
    let answer = answer_question(ccp, "What is the most recent HbA1c?");
    checks.check(answer.evidence_refs == [want.clone()], || {
        format!("most-recent question cited {:?}", answer.evidence_refs)
    });
}
