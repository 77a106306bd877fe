#![no_main]

use aopi_core::sim::{read_frame_log, write_frame_log};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok((records, policy)) = read_frame_log(data) else {
        return;
    };
    let mut buf = Vec::new();
    write_frame_log(&mut buf, &records, policy).unwrap();
    let (again, p) = read_frame_log(buf.as_slice()).expect("written log reads back");
    assert_eq!(p, policy);
    assert_eq!(format!("{records:?}"), format!("{again:?}"));
});
