#![allow(dead_code)]

use wgmix::dispersion::{GeometricCorrections, ModelIndex};
use wgmix::identify::{synthetic_scan, MeasuredScan};
use wgmix::label::{ModeLabel, Triplet};
use wgmix::material::Materials;
use wgmix::phase_matching::{degenerate_wavelength, fit_poling_period, ScanWindow, WavelengthGrid};

pub const WINDOW: [f64; 2] = [792.0, 815.0];
pub const LENGTH_MM: f64 = 4.8;
pub const ANCHOR_NM: f64 = 799.6;

/// Default-waveguide corrections solved at 799.6 / 399.8 nm, frozen.
pub const PRIOR: [(&str, f64); 12] = [
    ("00V", 0.004337),
    ("01V", 0.000833),
    ("10V", 0.000680),
    ("00H", 0.002052),
    ("00S", 0.004482),
    ("10S", 0.003146),
    ("01S", 0.002408),
    ("11S", 0.001192),
    ("20S", 0.001075),
    ("02S", 0.001009),
    ("03S", 0.000154),
    ("12S", 0.000027),
];

/// The hidden truth differs from the prior by up to 1e-4, which moves
/// bands by a few tenths of a nanometre.
pub const PERTURBATION: [(&str, f64); 10] = [
    ("00V", -1.0e-4),
    ("00H", 0.5e-4),
    ("00S", 0.5e-4),
    ("01V", 1.0e-4),
    ("10V", 0.5e-4),
    ("01S", -0.8e-4),
    ("02S", 1.0e-4),
    ("03S", -1.0e-4),
    ("10S", -0.5e-4),
    ("11S", 0.8e-4),
];

/// Ten excited bands. 20S is left out: its bands lie within 0.25 nm of the
/// 02S bands and cannot be told apart by position.
pub const BANDS: [&str; 10] = [
    "00V+00H>00S",
    "00V+00H>01S",
    "00V+00H>02S",
    "00V+00H>03S",
    "01V+00H>00S",
    "01V+00H>01S",
    "01V+00H>02S",
    "01V+00H>03S",
    "10V+00H>10S",
    "10V+00H>11S",
];

/// Differences fixed by the band positions. The 10V family only enters as
/// `dn(10V) - 2 dn(10S)` and `dn(10V) - 2 dn(11S)`, so only `11S - 10S` is
/// observable there.
pub const OBSERVABLE: [(&str, &str); 5] =
    [("01V", "00V"), ("01S", "00S"), ("02S", "00S"), ("03S", "00S"), ("11S", "10S")];

pub fn label(s: &str) -> ModeLabel {
    s.parse().unwrap()
}

pub fn triplet(s: &str) -> Triplet {
    s.parse().unwrap()
}

pub fn prior() -> GeometricCorrections {
    GeometricCorrections::from_values(WINDOW, PRIOR.iter().map(|(l, v)| (label(l), *v)))
}

pub fn hidden() -> GeometricCorrections {
    let mut c = prior();
    for (l, d) in PERTURBATION {
        let base = c.delta_n(label(l)).unwrap();
        c.insert(label(l), base + d, 0.0);
    }
    c
}

pub fn candidates() -> Vec<Triplet> {
    BANDS.iter().map(|s| triplet(s)).collect()
}

pub struct Synthetic {
    pub period_um: f64,
    pub centers: Vec<(Triplet, f64)>,
    pub scans: Vec<MeasuredScan>,
}

/// One scan per band, 0.2 nm sampling, amplitudes between 0.4 and 1.
pub fn synthesize(noise: f64, seed: u64) -> Synthetic {
    let mats = Materials::ktp();
    let model = ModelIndex::new(mats, hidden());
    let period_um = fit_poling_period(&model, &Triplet::fundamental(), ANCHOR_NM).unwrap();
    let mut centers = Vec::new();
    let mut scans = Vec::new();
    for (k, b) in BANDS.iter().enumerate() {
        let t = triplet(b);
        let c = degenerate_wavelength(&model, &t, period_um, &ScanWindow::default()).unwrap().nearest(800.0).unwrap();
        let start = ((c - 4.0) / 0.2).floor() * 0.2;
        let grid = WavelengthGrid::new(start, start + 8.0, 0.2).unwrap();
        let amplitude = 1.0 - 0.06 * k as f64;
        scans.push(synthetic_scan(&model, &t, period_um, LENGTH_MM, grid, amplitude, noise, seed + k as u64).unwrap());
        centers.push((t, c));
    }
    Synthetic { period_um, centers, scans }
}
