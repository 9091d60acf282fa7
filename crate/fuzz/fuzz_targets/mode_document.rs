#![no_main]

use libfuzzer_sys::fuzz_target;
use wgmix::modes::{parse_mode_document, ModeDocument};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(mode) = parse_mode_document(s) {
        let text = serde_json::to_string(&ModeDocument::from(&mode)).unwrap();
        let back = parse_mode_document(&text).expect("written document reloads");
        assert_eq!(back.dominant, mode.dominant);
    }
});
