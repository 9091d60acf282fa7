#![no_main]

use libfuzzer_sys::fuzz_target;
use wgmix::identify::parse_candidates;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(list) = parse_candidates(s) {
        let text: String = list.iter().map(|t| format!("{t}\n")).collect();
        assert_eq!(parse_candidates(&text).unwrap(), list);
    }
});
