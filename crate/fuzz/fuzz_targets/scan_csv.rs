#![no_main]

use libfuzzer_sys::fuzz_target;
use wgmix::identify::{detect_band_centers, MeasuredScan};

fuzz_target!(|data: &[u8]| {
    if let Ok(scan) = MeasuredScan::from_csv(data) {
        let lo = scan.samples.first().map(|s| s.0);
        let hi = scan.samples.last().map(|s| s.0);
        for c in detect_band_centers(&scan, 0.05).unwrap_or_default() {
            assert!(c >= lo.unwrap() && c <= hi.unwrap());
        }
    }
});
