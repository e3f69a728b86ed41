#![no_main]

use ehrsum_core::summarizer::{render_markdown, render_text, SummaryDocument};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(doc) = SummaryDocument::from_json(s) {
        let _ = render_text(&doc);
        let _ = render_markdown(&doc);
        let again = SummaryDocument::from_json(&doc.to_json()).expect("round trip");
        assert_eq!(again, doc);
    }
});
