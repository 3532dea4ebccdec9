#![no_main]
use libfuzzer_sys::fuzz_target;
use lhua::harness::{plot_svg, read_aggregate_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_aggregate_csv(data) {
        let svg = plot_svg(&rows);
        assert!(svg.ends_with("</svg>\n"));
    }
});
