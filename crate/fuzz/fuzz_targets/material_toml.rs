#![no_main]

use libfuzzer_sys::fuzz_target;
use wgmix::material::{Materials, SellmeierModel};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(m) = SellmeierModel::from_toml_str(s) {
        let _ = SellmeierModel::from_toml_str(&m.to_toml_string()).expect("written material reloads");
        if let Ok(mats) = Materials::new(m, Default::default()) {
            let _ = mats.bulk_index(wgmix::label::Polarization::V, 800.0);
        }
    }
});
