#![no_main]

use libfuzzer_sys::fuzz_target;
use wgmix::label::{ModeLabel, Polarization, Triplet};
use wgmix::material::CrystalAxis;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let _ = s.parse::<Polarization>();
    let _ = s.parse::<CrystalAxis>();
    if let Ok(l) = s.parse::<ModeLabel>() {
        assert_eq!(l.to_string().parse::<ModeLabel>().unwrap(), l);
    }
    if let Ok(t) = s.parse::<Triplet>() {
        assert_eq!(t.to_string().parse::<Triplet>().unwrap(), t);
    }
});
