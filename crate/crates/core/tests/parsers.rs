use proptest::prelude::*;
use wgmix::config::Config;
use wgmix::dispersion::GeometricCorrections;
use wgmix::identify::{detect_band_centers, parse_candidates, MeasuredScan};
use wgmix::label::{ModeLabel, Triplet};
use wgmix::material::SellmeierModel;
use wgmix::modes::{parse_mode_document, ModeDocument};
use wgmix::overlap::read_measured;
use wgmix::profile::read_profile;

const CONFIG: &str = include_str!("../../../fuzz/corpus/config_toml/default.toml");
const CORRECTIONS: &str = include_str!("../../../fuzz/corpus/corrections_toml/prior.toml");
const MATERIAL: &str = include_str!("../../../fuzz/corpus/material_toml/ktp.toml");
const PROFILE: &str = include_str!("../../../fuzz/corpus/profile_csv/coarse.csv");
const SCAN: &str = include_str!("../../../fuzz/corpus/scan_csv/fundamental.csv");
const CANDIDATES: &str = include_str!("../../../fuzz/corpus/candidates/list.txt");
const MEASURED: &str = include_str!("../../../fuzz/corpus/measured_csv/table.csv");
const MODE: &str = include_str!("../../../fuzz/corpus/mode_document/slab.json");

/// Seed with a few bytes overwritten, inserted or cut.
fn mutate(seed: &'static str) -> impl Strategy<Value = Vec<u8>> {
    let n = seed.len();
    prop::collection::vec((0..n, any::<u8>(), 0u8..3), 1..6).prop_map(move |edits| {
        let mut b = seed.as_bytes().to_vec();
        for (pos, byte, kind) in edits {
            let pos = pos.min(b.len().saturating_sub(1));
            match kind {
                0 if !b.is_empty() => b[pos] = byte,
                1 => b.insert(pos, byte),
                _ => b.truncate(pos),
            }
        }
        b
    })
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn seeds_parse() {
    Config::from_toml_str(CONFIG).unwrap();
    GeometricCorrections::from_toml_str(CORRECTIONS).unwrap();
    SellmeierModel::from_toml_str(MATERIAL).unwrap();
    read_profile(PROFILE.as_bytes()).unwrap();
    let scan = MeasuredScan::from_csv(SCAN.as_bytes()).unwrap();
    assert_eq!(detect_band_centers(&scan, 0.05).unwrap().len(), 1);
    assert_eq!(parse_candidates(CANDIDATES).unwrap().len(), 3);
    assert_eq!(read_measured(MEASURED.as_bytes()).unwrap().len(), 2);
    assert!(parse_mode_document(MODE).unwrap().normalized);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn labels_round_trip(s in "[0-9]{1,3}[VHSx]([+>][0-9]{2}[VHS]){0,3}") {
        if let Ok(l) = s.parse::<ModeLabel>() {
            prop_assert_eq!(l.to_string().parse::<ModeLabel>().unwrap(), l);
        }
        if let Ok(t) = s.parse::<Triplet>() {
            prop_assert_eq!(t.to_string().parse::<Triplet>().unwrap(), t);
        }
    }

    #[test]
    fn toml_documents_never_panic(c in mutate(CONFIG), k in mutate(CORRECTIONS), m in mutate(MATERIAL)) {
        if let Ok(cfg) = Config::from_toml_str(&text(&c)) {
            let back = Config::from_toml_str(&cfg.to_toml_string()).unwrap();
            prop_assert_eq!(back.to_toml_string(), cfg.to_toml_string());
        }
        if let Ok(corr) = GeometricCorrections::from_toml_str(&text(&k)) {
            let t = corr.to_toml_string();
            prop_assert_eq!(GeometricCorrections::from_toml_str(&t).unwrap().to_toml_string(), t);
        }
        if let Ok(mat) = SellmeierModel::from_toml_str(&text(&m)) {
            SellmeierModel::from_toml_str(&mat.to_toml_string()).unwrap();
        }
    }

    #[test]
    fn tables_never_panic(p in mutate(PROFILE), s in mutate(SCAN), c in mutate(CANDIDATES), m in mutate(MEASURED)) {
        if let Ok(t) = read_profile(p.as_slice()) {
            prop_assert!(t.x_um.len() == t.n.len());
        }
        if let Ok(scan) = MeasuredScan::from_csv(s.as_slice()) {
            let (lo, hi) = (scan.samples[0].0, scan.samples[scan.samples.len() - 1].0);
            for x in detect_band_centers(&scan, 0.05).unwrap_or_default() {
                prop_assert!(x >= lo && x <= hi);
            }
        }
        let _ = parse_candidates(&text(&c));
        if let Ok(t) = read_measured(m.as_slice()) {
            prop_assert!(t.values().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn mode_documents_never_panic(d in mutate(MODE)) {
        if let Ok(mode) = parse_mode_document(&text(&d)) {
            let back = parse_mode_document(&serde_json::to_string(&ModeDocument::from(&mode)).unwrap()).unwrap();
            prop_assert_eq!(back.dominant, mode.dominant);
        }
    }
}
