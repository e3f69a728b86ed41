#![no_main]

use ehrsum_core::settings::Settings;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(settings) = Settings::from_toml(s) {
        let _ = settings.validate();
        let _ = settings.endpoint();
    }
});
