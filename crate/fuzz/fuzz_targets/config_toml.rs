#![no_main]

use libfuzzer_sys::fuzz_target;
use wgmix::config::Config;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = Config::from_toml_str(s) {
        let back = Config::from_toml_str(&cfg.to_toml_string()).expect("written config reloads");
        assert_eq!(back.to_toml_string(), cfg.to_toml_string());
    }
});
