#![no_main]

use ehrsum_core::summarizer::parse_backend_response;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = parse_backend_response(s);
    }
});
