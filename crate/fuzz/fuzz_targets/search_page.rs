#![no_main]

use ehrsum_core::fhir_client::parse_search_page;
use ehrsum_core::resource::ResourceType;
use libfuzzer_sys::fuzz_target;

// first byte picks the expected type
fuzz_target!(|data: &[u8]| {
    let Some((&pick, rest)) = data.split_first() else {
        return;
    };
    let rt = ResourceType::ALL[pick as usize % ResourceType::ALL.len()];
    if let Ok(body) = std::str::from_utf8(rest) {
        if let Ok(page) = parse_search_page(body, rt) {
            for r in &page.resources {
                assert_eq!(r["resourceType"].as_str(), Some(rt.as_str()));
            }
        }
    }
});
