#![no_main]

use aopi_harness::output::summarize_log;
use aopi_harness::read_slots_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_slots_csv(data) {
        for r in &rows {
            assert!((0.0..=1.0).contains(&r.p));
        }
        let _ = summarize_log(&rows, 0.7);
    }
});
