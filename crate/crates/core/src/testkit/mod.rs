//! Synthetic patients and an in-process FHIR server for tests, fixtures and
//! the stress suite.

mod fixtures;
mod generator;
#[cfg(feature = "loopback")]
mod loopback;
mod mock;
mod profile;
mod stub_backend;
pub mod vocab;

use std::sync::Arc;

use chrono::{DateTime, TimeZone, Utc};

pub use fixtures::{export_fixtures, fixture_source, load_fixture_dir, FixtureError, FIXTURE_PAGE_SIZE, MANIFEST_FILE};
pub use generator::{
    generate_patient, try_generate_patient, verify_manifest, ConflictFact, DuplicateFact, Manifest, SeriesFact,
    SyntheticBundleSet,
};
#[cfg(feature = "loopback")]
pub use loopback::{serve_loopback, LoopbackServer};
pub use mock::{mock_source, MissingType, MockFhirSource, MOCK_BASE, MOCK_PAGE_SIZE};
pub use profile::{ProfileError, VariabilityProfile, PROFILE_NAMES};
pub use stub_backend::{stub_hosted, to_wire, StubBackend, StubBehavior, STUB_ENDPOINT, STUB_MODEL};

use crate::fhir_client::{Clock, EndpointConfig, FhirClient, FhirSource};
use crate::normalizer::ClinicalContextPackage;
use crate::pipeline::{build_package, PipelineError};

/// The instant every testkit client reports, so packages are reproducible.
pub fn fixed_instant() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 1, 1, 12, 0, 0).unwrap()
}

pub fn fixed_clock() -> Clock {
    Arc::new(fixed_instant)
}

/// Page cap for testkit clients. The mock pages at two entries, so the
/// longitudinal profile needs far more than the production default.
pub const MOCK_MAX_PAGES: u32 = 500;

/// A client for [`MOCK_BASE`] with a fixed clock and a 1 ms retry backoff.
pub fn mock_client(source: Arc<dyn FhirSource>) -> FhirClient {
    let config = EndpointConfig::new(MOCK_BASE)
        .with_retry_backoff_ms(1)
        .with_max_pages(MOCK_MAX_PAGES);
    FhirClient::new(config, source)
        .expect("mock config is valid")
        .with_clock(fixed_clock())
}

/// Generates a patient for `profile`, serves it through the mock and builds
/// its package.
pub async fn package_for(
    profile: &VariabilityProfile,
) -> Result<(SyntheticBundleSet, ClinicalContextPackage), PipelineError> {
    let set = generate_patient(profile);
    let source = Arc::new(mock_source(vec![set.clone()], profile));
    let ccp = build_package(&mock_client(source), &set.patient_id).await?;
    Ok((set, ccp))
}
