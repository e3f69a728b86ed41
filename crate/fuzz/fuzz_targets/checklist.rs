#![no_main]

use ehrsum_core::evaluator::Checklist;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(list) = Checklist::from_json(s) {
        assert!(!list.domains.is_empty());
        Checklist::from_json(&list.to_json()).expect("round trip");
    }
});
