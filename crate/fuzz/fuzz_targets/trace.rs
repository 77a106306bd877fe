#![no_main]

use aopi_harness::{read_trace, write_trace};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(trace) = read_trace(data) else {
        return;
    };
    for cap in trace.rows.iter().flatten() {
        assert!(cap.bandwidth.is_finite() && cap.bandwidth >= 0.0);
        assert!(cap.compute.is_finite() && cap.compute >= 0.0);
    }
    let mut buf = Vec::new();
    write_trace(&mut buf, &trace).unwrap();
    let again = read_trace(buf.as_slice()).expect("written trace reads back");
    assert_eq!(format!("{:?}", trace.rows), format!("{:?}", again.rows));
});
