#![no_main]

use libfuzzer_sys::fuzz_target;
use wgmix::overlap::read_measured;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = read_measured(data) {
        assert!(table.values().all(|v| v.is_finite()));
    }
});
