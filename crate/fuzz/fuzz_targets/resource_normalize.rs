#![no_main]

use chrono::{TimeZone, Utc};
use ehrsum_core::fhir_client::{parse_resource, RawResourceRecord};
use ehrsum_core::normalizer::{extract_timestamp, normalize_record};
use ehrsum_core::resource::ResourceType;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&pick, rest)) = data.split_first() else {
        return;
    };
    let rt = ResourceType::ALL[pick as usize % ResourceType::ALL.len()];
    let Ok(body) = std::str::from_utf8(rest) else { return };
    let Ok(payload) = parse_resource(body, rt) else { return };
    let at = Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap();
    let Ok(record) = RawResourceRecord::new(rt, payload, "http://fuzz.local/r4", at) else {
        return;
    };
    let _ = extract_timestamp(&record);
    let _ = normalize_record(&record);
});
