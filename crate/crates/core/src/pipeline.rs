//! Retrieval followed by package construction.

use crate::fhir_client::{FhirClient, RetrievalError, RetrievalReport};
use crate::normalizer::{build_context_package, BuildError, ClinicalContextPackage};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Build(#[from] BuildError),
}

impl PipelineError {
    /// True when the patient record itself could not be obtained.
    pub fn is_patient_unavailable(&self) -> bool {
        matches!(
            self,
            PipelineError::Retrieval(RetrievalError::PatientUnavailable { .. })
                | PipelineError::Build(BuildError::MissingAnchor)
        )
    }

    pub fn report(&self) -> Option<&RetrievalReport> {
        match self {
            PipelineError::Retrieval(RetrievalError::PatientUnavailable { report }) => Some(report),
            _ => None,
        }
    }
}

/// Retrieves one patient and builds its context package. The raw records
/// are dropped before this returns.
pub async fn build_package(client: &FhirClient, patient_id: &str) -> Result<ClinicalContextPackage, PipelineError> {
    let retrieval = client.retrieve_patient_context(patient_id).await?;
    Ok(build_context_package(&retrieval.records, &retrieval.report)?)
}
