#![no_main]
use libfuzzer_sys::fuzz_target;
use lhua::harness::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = RunConfig::from_json(text) {
        let again = serde_json::to_string(&config).unwrap();
        assert_eq!(RunConfig::from_json(&again).unwrap(), config);
    }
});
