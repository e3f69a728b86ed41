#![no_main]

use ehrsum_core::normalizer::ClinicalContextPackage;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(ccp) = ClinicalContextPackage::from_json(s) {
        let again = ClinicalContextPackage::from_json(&ccp.to_json()).expect("round trip");
        assert_eq!(again.fingerprint(), ccp.fingerprint());
    }
});
