#![no_main]

use ehrsum_core::normalizer::parse_fhir_datetime;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = parse_fhir_datetime(s);
    }
});
