#![no_main]
use libfuzzer_sys::fuzz_target;
use lhua::harness::{read_run_csv, write_run_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(curve) = read_run_csv(data) {
        assert!(curve.records.iter().all(|r| (0.0..=1.0).contains(&r.eval_success_rate)));
        let mut buf = Vec::new();
        write_run_csv(&mut buf, &curve).unwrap();
        assert_eq!(read_run_csv(buf.as_slice()).unwrap(), curve);
    }
});
