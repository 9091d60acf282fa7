#![no_main]

use libfuzzer_sys::fuzz_target;
use wgmix::dispersion::GeometricCorrections;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(c) = GeometricCorrections::from_toml_str(s) {
        let text = c.to_toml_string();
        let back = GeometricCorrections::from_toml_str(&text).expect("written corrections reload");
        assert_eq!(back.to_toml_string(), text);
    }
});
