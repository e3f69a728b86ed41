//! Clinical timestamps from heterogeneous FHIR date fields.

use chrono::{DateTime, NaiveDate, NaiveDateTime, TimeZone, Utc};
use serde_json::Value;

use crate::fhir_client::RawResourceRecord;
use crate::resource::ResourceType;

/// Parses a FHIR `date`, `dateTime` or `instant`.
///
/// Partial dates (`YYYY`, `YYYY-MM`) and plain dates map to the first
/// instant of the period in UTC. A time without an offset is read as UTC.
pub fn parse_fhir_datetime(raw: &str) -> Option<DateTime<Utc>> {
    let s = raw.trim();
    if s.len() < 4 || !s.is_ascii() {
        return None;
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.with_timezone(&Utc));
    }
    if s.contains('T') {
        let naive = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f")
            .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M"))
            .ok()?;
        return Some(Utc.from_utc_datetime(&naive));
    }
    let date = match s.len() {
        4 => {
            let year: i32 = digits(s)?;
            NaiveDate::from_ymd_opt(year, 1, 1)?
        }
        7 if s.as_bytes()[4] == b'-' => {
            let year: i32 = digits(&s[..4])?;
            let month: u32 = digits(&s[5..])?;
            NaiveDate::from_ymd_opt(year, month, 1)?
        }
        10 => NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()?,
        _ => return None,
    };
    Some(Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0)?))
}

fn digits<T: std::str::FromStr>(s: &str) -> Option<T> {
    if s.bytes().all(|b| b.is_ascii_digit()) {
        s.parse().ok()
    } else {
        None
    }
}

/// Date fields consulted for each resource type, most specific first.
pub fn timestamp_precedence(rt: ResourceType) -> &'static [&'static str] {
    match rt {
        ResourceType::Observation => &["effectiveDateTime", "effectivePeriod.start", "issued"],
        ResourceType::Condition => &["onsetDateTime", "recordedDate"],
        ResourceType::MedicationRequest => &["authoredOn"],
        ResourceType::Encounter => &["period.start"],
        ResourceType::Procedure => &["performedDateTime", "performedPeriod.start"],
        ResourceType::DiagnosticReport => &["effectiveDateTime", "issued"],
        ResourceType::Immunization => &["occurrenceDateTime"],
        ResourceType::AllergyIntolerance => &["onsetDateTime", "recordedDate"],
        ResourceType::Flag => &["period.start"],
        ResourceType::FamilyMemberHistory => &["date"],
        ResourceType::CarePlan => &["period.start", "created"],
        ResourceType::ImagingStudy => &["started"],
        ResourceType::Goal => &["startDate", "statusDate"],
        ResourceType::Consent => &["dateTime"],
        ResourceType::Composition => &["date"],
        ResourceType::Patient | ResourceType::Device => &[],
    }
}

/// Looks up a dotted path such as `effectivePeriod.start`.
pub(crate) fn lookup<'a>(value: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(value, |v, key| v.get(key))
}

/// Outcome of timestamp extraction, including fields that were present but
/// could not be parsed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExtractedTimestamp {
    pub at: Option<DateTime<Utc>>,
    pub unparseable: Vec<(String, String)>,
}

/// First parseable date along the type's precedence chain.
pub fn extract_timestamp_detailed(record: &RawResourceRecord) -> ExtractedTimestamp {
    let mut out = ExtractedTimestamp::default();
    for path in timestamp_precedence(record.resource_type) {
        let Some(raw) = lookup(&record.payload, path) else {
            continue;
        };
        let parsed = raw.as_str().and_then(parse_fhir_datetime);
        match parsed {
            Some(at) => {
                out.at = Some(at);
                break;
            }
            None => out.unparseable.push((path.to_string(), truncate(&raw.to_string(), 40))),
        }
    }
    out
}

pub fn extract_timestamp(record: &RawResourceRecord) -> Option<DateTime<Utc>> {
    extract_timestamp_detailed(record).at
}

fn truncate(s: &str, max: usize) -> String {
    s.chars().take(max).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn record(rt: ResourceType, payload: Value) -> RawResourceRecord {
        RawResourceRecord::new(rt, payload, "http://x", Utc::now()).unwrap()
    }

    fn utc(s: &str) -> DateTime<Utc> {
        DateTime::parse_from_rfc3339(s).unwrap().with_timezone(&Utc)
    }

    #[test]
    fn partial_dates_start_their_period() {
        assert_eq!(parse_fhir_datetime("2019"), Some(utc("2019-01-01T00:00:00Z")));
        assert_eq!(parse_fhir_datetime("2019-07"), Some(utc("2019-07-01T00:00:00Z")));
        assert_eq!(parse_fhir_datetime("2019-07-04"), Some(utc("2019-07-04T00:00:00Z")));
    }

    #[test]
    fn offsets_convert_to_utc() {
        assert_eq!(
            parse_fhir_datetime("2021-03-01T10:30:00+02:00"),
            Some(utc("2021-03-01T08:30:00Z"))
        );
        assert_eq!(
            parse_fhir_datetime("2021-03-01T10:30:00.123Z"),
            Some(utc("2021-03-01T10:30:00.123Z"))
        );
        assert_eq!(
            parse_fhir_datetime("2021-03-01T10:30:00"),
            Some(utc("2021-03-01T10:30:00Z"))
        );
    }

    #[test]
    fn garbage_is_none() {
        for s in [
            "",
            "19",
            "2019-13",
            "2019-02-30",
            "yesterday",
            "2019-1",
            "20190101",
            "२०१९",
            "-2019",
        ] {
            assert_eq!(parse_fhir_datetime(s), None, "{s}");
        }
    }

    #[test]
    fn observation_prefers_effective_over_issued() {
        let r = record(
            ResourceType::Observation,
            json!({"resourceType": "Observation", "id": "o1",
                   "effectiveDateTime": "2023-05-01T08:00:00Z", "issued": "2023-05-02T09:00:00Z"}),
        );
        assert_eq!(extract_timestamp(&r), Some(utc("2023-05-01T08:00:00Z")));

        let r = record(
            ResourceType::Observation,
            json!({"resourceType": "Observation", "id": "o1",
                   "effectivePeriod": {"start": "2023-04-01"}, "issued": "2023-05-02T09:00:00Z"}),
        );
        assert_eq!(extract_timestamp(&r), Some(utc("2023-04-01T00:00:00Z")));
    }

    #[test]
    fn condition_onset_year_only() {
        let r = record(
            ResourceType::Condition,
            json!({"resourceType": "Condition", "id": "c1", "onsetDateTime": "2019", "recordedDate": "2020-02-02"}),
        );
        assert_eq!(extract_timestamp(&r), Some(utc("2019-01-01T00:00:00Z")));
    }

    #[test]
    fn no_date_fields_is_absent() {
        let r = record(ResourceType::Procedure, json!({"resourceType": "Procedure", "id": "x"}));
        assert_eq!(extract_timestamp(&r), None);
        let r = record(
            ResourceType::Device,
            json!({"resourceType": "Device", "id": "d", "manufactureDate": "2001"}),
        );
        assert_eq!(extract_timestamp(&r), None);
    }

    #[test]
    fn unparseable_field_falls_through_and_is_reported() {
        let r = record(
            ResourceType::Condition,
            json!({"resourceType": "Condition", "id": "c1", "onsetDateTime": "last spring", "recordedDate": "2020-02-02"}),
        );
        let got = extract_timestamp_detailed(&r);
        assert_eq!(got.at, Some(utc("2020-02-02T00:00:00Z")));
        assert_eq!(got.unparseable.len(), 1);
        assert_eq!(got.unparseable[0].0, "onsetDateTime");

        let r = record(
            ResourceType::Encounter,
            json!({"resourceType": "Encounter", "id": "e", "period": {"start": 17}}),
        );
        let got = extract_timestamp_detailed(&r);
        assert_eq!(got.at, None);
        assert_eq!(got.unparseable.len(), 1);
    }
}
