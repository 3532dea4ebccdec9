#![no_main]
use libfuzzer_sys::fuzz_target;
use lhua::agent::QAgent;
use lhua::harness::PolicyCheckpoint;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cp) = PolicyCheckpoint::from_json(text) {
        let _ = QAgent::from_checkpoint(&cp.agent);
    }
});
