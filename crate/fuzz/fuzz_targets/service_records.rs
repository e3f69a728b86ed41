#![no_main]

use ehrsum_service::audit::AuditEvent;
use ehrsum_service::store::StoredArtifact;
use libfuzzer_sys::fuzz_target;

// audit log lines and stored artifacts are read back from disk
fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    for line in s.lines() {
        let _ = serde_json::from_str::<AuditEvent>(line);
    }
    let _ = serde_json::from_str::<StoredArtifact>(s);
});
