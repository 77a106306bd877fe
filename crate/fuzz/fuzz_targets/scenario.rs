#![no_main]

use aopi_harness::parse_scenario;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    // Anything the parser accepts must already be a valid scenario.
    if let Ok(spec) = parse_scenario(src) {
        spec.validate().expect("parsed scenario validates");
    }
});
