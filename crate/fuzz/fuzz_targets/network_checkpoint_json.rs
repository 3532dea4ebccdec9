#![no_main]
use libfuzzer_sys::fuzz_target;
use lhua::nn::NetworkCheckpoint;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cp) = NetworkCheckpoint::from_json(text) {
        let (net, _) = cp.restore().expect("validated checkpoint restores");
        let out = net.forward(&vec![0.5; net.input_dim()]).expect("input width matches");
        assert!(out.iter().all(|v| v.is_finite()));
    }
});
