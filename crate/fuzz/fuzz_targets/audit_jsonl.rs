#![no_main]
use libfuzzer_sys::fuzz_target;
use lhua::hindsight::{read_audit, write_audit};

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = read_audit(data) {
        let mut buf = Vec::new();
        write_audit(&mut buf, &records).unwrap();
        assert_eq!(read_audit(buf.as_slice()).unwrap().len(), records.len());
    }
});
