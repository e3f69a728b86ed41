//! The closed set of FHIR resource types retrieved per patient and the
//! summary sections they feed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// FHIR R4 resource types queried for a patient, in retrieval order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ResourceType {
    Patient,
    Consent,
    Condition,
    Observation,
    MedicationRequest,
    Procedure,
    Encounter,
    FamilyMemberHistory,
    DiagnosticReport,
    Immunization,
    AllergyIntolerance,
    CarePlan,
    ImagingStudy,
    Goal,
    Composition,
    Flag,
    Device,
}

impl ResourceType {
    pub const ALL: [ResourceType; 17] = [
        ResourceType::Patient,
        ResourceType::Consent,
        ResourceType::Condition,
        ResourceType::Observation,
        ResourceType::MedicationRequest,
        ResourceType::Procedure,
        ResourceType::Encounter,
        ResourceType::FamilyMemberHistory,
        ResourceType::DiagnosticReport,
        ResourceType::Immunization,
        ResourceType::AllergyIntolerance,
        ResourceType::CarePlan,
        ResourceType::ImagingStudy,
        ResourceType::Goal,
        ResourceType::Composition,
        ResourceType::Flag,
        ResourceType::Device,
    ];

    /// The exact FHIR type name.
    pub fn as_str(self) -> &'static str {
        match self {
            ResourceType::Patient => "Patient",
            ResourceType::Consent => "Consent",
            ResourceType::Condition => "Condition",
            ResourceType::Observation => "Observation",
            ResourceType::MedicationRequest => "MedicationRequest",
            ResourceType::Procedure => "Procedure",
            ResourceType::Encounter => "Encounter",
            ResourceType::FamilyMemberHistory => "FamilyMemberHistory",
            ResourceType::DiagnosticReport => "DiagnosticReport",
            ResourceType::Immunization => "Immunization",
            ResourceType::AllergyIntolerance => "AllergyIntolerance",
            ResourceType::CarePlan => "CarePlan",
            ResourceType::ImagingStudy => "ImagingStudy",
            ResourceType::Goal => "Goal",
            ResourceType::Composition => "Composition",
            ResourceType::Flag => "Flag",
            ResourceType::Device => "Device",
        }
    }

    /// Section this type is rendered under. `None` only for Composition,
    /// which is kept as document scaffolding rather than clinical content.
    pub fn section(self) -> Option<SectionKey> {
        let key = match self {
            ResourceType::Patient => SectionKey::PatientInformation,
            ResourceType::Flag => SectionKey::AlertsAndFlags,
            ResourceType::AllergyIntolerance => SectionKey::AllergiesAndIntolerances,
            ResourceType::Condition => SectionKey::Conditions,
            ResourceType::MedicationRequest => SectionKey::Medications,
            ResourceType::Observation => SectionKey::LaboratoryAndVitalSigns,
            ResourceType::Procedure => SectionKey::Procedures,
            ResourceType::Encounter => SectionKey::Encounters,
            ResourceType::DiagnosticReport => SectionKey::DiagnosticReports,
            ResourceType::ImagingStudy => SectionKey::ImagingStudies,
            ResourceType::Immunization => SectionKey::Immunizations,
            ResourceType::FamilyMemberHistory => SectionKey::FamilyHistory,
            ResourceType::CarePlan => SectionKey::CarePlans,
            ResourceType::Goal => SectionKey::Goals,
            ResourceType::Device => SectionKey::Devices,
            ResourceType::Consent => SectionKey::Consent,
            ResourceType::Composition => return None,
        };
        Some(key)
    }
}

impl fmt::Display for ResourceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown FHIR resource type `{0}`")]
pub struct UnknownResourceType(pub String);

impl FromStr for ResourceType {
    type Err = UnknownResourceType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ResourceType::ALL
            .into_iter()
            .find(|rt| rt.as_str() == s)
            .ok_or_else(|| UnknownResourceType(s.to_string()))
    }
}

/// Summary sections in rendering order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SectionKey {
    PatientInformation,
    AlertsAndFlags,
    AllergiesAndIntolerances,
    Conditions,
    Medications,
    LaboratoryAndVitalSigns,
    Procedures,
    Encounters,
    DiagnosticReports,
    ImagingStudies,
    Immunizations,
    FamilyHistory,
    CarePlans,
    Goals,
    Devices,
    Consent,
}

impl SectionKey {
    pub const ALL: [SectionKey; 16] = [
        SectionKey::PatientInformation,
        SectionKey::AlertsAndFlags,
        SectionKey::AllergiesAndIntolerances,
        SectionKey::Conditions,
        SectionKey::Medications,
        SectionKey::LaboratoryAndVitalSigns,
        SectionKey::Procedures,
        SectionKey::Encounters,
        SectionKey::DiagnosticReports,
        SectionKey::ImagingStudies,
        SectionKey::Immunizations,
        SectionKey::FamilyHistory,
        SectionKey::CarePlans,
        SectionKey::Goals,
        SectionKey::Devices,
        SectionKey::Consent,
    ];

    /// Human-readable header.
    pub fn label(self) -> &'static str {
        match self {
            SectionKey::PatientInformation => "Patient Information",
            SectionKey::AlertsAndFlags => "Alerts and Flags",
            SectionKey::AllergiesAndIntolerances => "Allergies and Intolerances",
            SectionKey::Conditions => "Conditions",
            SectionKey::Medications => "Medications",
            SectionKey::LaboratoryAndVitalSigns => "Laboratory and Vital Signs",
            SectionKey::Procedures => "Procedures",
            SectionKey::Encounters => "Encounters",
            SectionKey::DiagnosticReports => "Diagnostic Reports",
            SectionKey::ImagingStudies => "Imaging Studies",
            SectionKey::Immunizations => "Immunizations",
            SectionKey::FamilyHistory => "Family History",
            SectionKey::CarePlans => "Care Plans",
            SectionKey::Goals => "Goals",
            SectionKey::Devices => "Devices",
            SectionKey::Consent => "Consent",
        }
    }

    /// The resource type whose retrieval status decides whether an empty
    /// section is merely empty or unavailable.
    pub fn backing_type(self) -> ResourceType {
        ResourceType::ALL
            .into_iter()
            .find(|rt| rt.section() == Some(self))
            .expect("every section has a backing resource type")
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SectionKey::PatientInformation => "PatientInformation",
            SectionKey::AlertsAndFlags => "AlertsAndFlags",
            SectionKey::AllergiesAndIntolerances => "AllergiesAndIntolerances",
            SectionKey::Conditions => "Conditions",
            SectionKey::Medications => "Medications",
            SectionKey::LaboratoryAndVitalSigns => "LaboratoryAndVitalSigns",
            SectionKey::Procedures => "Procedures",
            SectionKey::Encounters => "Encounters",
            SectionKey::DiagnosticReports => "DiagnosticReports",
            SectionKey::ImagingStudies => "ImagingStudies",
            SectionKey::Immunizations => "Immunizations",
            SectionKey::FamilyHistory => "FamilyHistory",
            SectionKey::CarePlans => "CarePlans",
            SectionKey::Goals => "Goals",
            SectionKey::Devices => "Devices",
            SectionKey::Consent => "Consent",
        }
    }
}

impl fmt::Display for SectionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown summary section `{0}`")]
pub struct UnknownSection(pub String);

impl FromStr for SectionKey {
    type Err = UnknownSection;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SectionKey::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownSection(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resource_type_names_round_trip() {
        for rt in ResourceType::ALL {
            assert_eq!(rt.as_str().parse::<ResourceType>().unwrap(), rt);
            let json = serde_json::to_string(&rt).unwrap();
            assert_eq!(json, format!("\"{}\"", rt.as_str()));
        }
        assert!("Medication".parse::<ResourceType>().is_err());
        assert!("patient".parse::<ResourceType>().is_err());
    }

    #[test]
    fn every_type_but_composition_maps_to_one_section() {
        let mut seen = std::collections::BTreeSet::new();
        for rt in ResourceType::ALL {
            match rt.section() {
                Some(key) => assert!(seen.insert(key), "{key} mapped twice"),
                None => assert_eq!(rt, ResourceType::Composition),
            }
        }
        assert_eq!(seen.len(), SectionKey::ALL.len());
    }

    #[test]
    fn section_order_is_declaration_order() {
        let mut sorted = SectionKey::ALL;
        sorted.sort();
        assert_eq!(sorted, SectionKey::ALL);
        for key in SectionKey::ALL {
            assert_eq!(key.backing_type().section(), Some(key));
            assert_eq!(key.as_str().parse::<SectionKey>().unwrap(), key);
        }
    }
}
