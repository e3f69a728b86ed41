//! Small fixed code lists the generator draws from.

pub const SNOMED: &str = "http://snomed.info/sct";
pub const LOINC: &str = "http://loinc.org";
pub const RXNORM: &str = "http://www.nlm.nih.gov/research/umls/rxnorm";
pub const CVX: &str = "http://hl7.org/fhir/sid/cvx";
pub const V3_ACT: &str = "http://terminology.hl7.org/CodeSystem/v3-ActCode";
pub const OBS_CATEGORY: &str = "http://terminology.hl7.org/CodeSystem/observation-category";

/// (code, display)
pub type Concept = (&'static str, &'static str);

pub const CONDITIONS: &[Concept] = &[
    ("44054006", "Type 2 diabetes mellitus"),
    ("38341003", "Hypertensive disorder"),
    ("55822004", "Hyperlipidemia"),
    ("49436004", "Atrial fibrillation"),
    ("195967001", "Asthma"),
    ("233604007", "Pneumonia"),
];

pub const HBA1C: Concept = ("4548-4", "Hemoglobin A1c/Hemoglobin.total in Blood");
pub const GLUCOSE: Concept = ("2339-0", "Glucose [Mass/volume] in Blood");
pub const CREATININE: Concept = ("2160-0", "Creatinine [Mass/volume] in Serum or Plasma");
pub const SYSTOLIC: Concept = ("8480-6", "Systolic blood pressure");
pub const HEART_RATE: Concept = ("8867-4", "Heart rate");

/// Lab and vital codes other than HbA1c: (concept, unit, category, low, high) with values in tenths.
pub const OTHER_OBSERVATIONS: &[(Concept, &str, &str, u32, u32)] = &[
    (CREATININE, "mg/dL", "laboratory", 6, 14),
    (SYSTOLIC, "mm[Hg]", "vital-signs", 1050, 1600),
    (HEART_RATE, "/min", "vital-signs", 550, 1000),
];

pub const WARFARIN: Concept = ("855332", "Warfarin Sodium 5 MG Oral Tablet");
pub const APIXABAN: Concept = ("1364430", "apixaban 5 MG Oral Tablet");

pub const MEDICATIONS: &[Concept] = &[
    ("197361", "Amlodipine 5 MG Oral Tablet"),
    ("860975", "Metformin hydrochloride 500 MG Oral Tablet"),
    ("314231", "Simvastatin 10 MG Oral Tablet"),
    WARFARIN,
    APIXABAN,
    ("310798", "Hydrochlorothiazide 25 MG Oral Tablet"),
];

pub const DOSES: &[&str] = &["1 tablet daily", "1 tablet twice daily", "1 tablet at bedtime"];

pub const ALLERGIES: &[Concept] = &[
    ("91936005", "Allergy to penicillin"),
    ("300916003", "Latex allergy"),
    ("91935009", "Allergy to peanuts"),
];

pub const REACTIONS: &[&str] = &["Hives", "Anaphylaxis", "Rash"];

pub const PROCEDURES: &[Concept] = &[
    ("73761001", "Colonoscopy"),
    ("80146002", "Appendectomy"),
    ("232717009", "Coronary artery bypass grafting"),
];

pub const ENCOUNTER_CLASSES: &[Concept] = &[
    ("AMB", "ambulatory"),
    ("IMP", "inpatient encounter"),
    ("EMER", "emergency"),
];

pub const ENCOUNTER_TYPES: &[Concept] = &[
    ("185349003", "Encounter for check up"),
    ("32485007", "Hospital admission"),
    ("50849002", "Emergency room admission"),
];

pub const IMMUNIZATIONS: &[Concept] = &[
    ("140", "Influenza, seasonal, injectable"),
    ("133", "Pneumococcal conjugate PCV 13"),
    ("115", "Tdap"),
];

pub const REPORTS: &[Concept] = &[
    ("58410-2", "CBC panel - Blood by Automated count"),
    ("24323-8", "Comprehensive metabolic panel"),
];

pub const IMAGING: &[(&str, Concept)] = &[
    ("CT", ("77477000", "Computerized axial tomography")),
    ("DX", ("168537006", "Plain chest X-ray")),
];

pub const CARE_PLANS: &[Concept] = &[
    ("698360004", "Diabetes self management plan"),
    ("736285004", "Hyperlipidemia clinical management plan"),
];

pub const GOALS: &[&str] = &["Hemoglobin A1c below 7.0", "Systolic blood pressure below 140"];

pub const FLAGS: &[Concept] = &[("390952000", "Dementia"), ("15188001", "Hearing loss")];

pub const DEVICES: &[Concept] = &[
    ("468063009", "Coated femoral stem prosthesis"),
    ("702127004", "Insulin infusion pump"),
];

pub const RELATIONSHIPS: &[Concept] = &[("FTH", "father"), ("MTH", "mother"), ("SIS", "sister")];

pub const GIVEN_NAMES: &[&str] = &["Ana", "Ben", "Chioma", "Dmitri", "Elif", "Farah", "Goran", "Hana"];
pub const FAMILY_NAMES: &[&str] = &["Silva", "Okafor", "Novak", "Tanaka", "Haddad", "Lindqvist"];
