#![no_main]

use libfuzzer_sys::fuzz_target;
use wgmix::profile::read_profile;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = read_profile(data) {
        assert!(t.x_um.len() == t.y_um.len() && t.y_um.len() == t.n.len());
    }
});
