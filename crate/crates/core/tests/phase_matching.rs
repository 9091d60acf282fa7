use std::f64::consts::PI;

use proptest::prelude::*;
use wgmix::dispersion::{GeometricCorrections, IndexProvider, ModelIndex};
use wgmix::error::{Error, Result};
use wgmix::label::{ModeLabel, Polarization, Triplet};
use wgmix::material::{AxisMapping, CrystalAxis, Materials, SellmeierModel};
use wgmix::phase_matching::*;

fn t(s: &str) -> Triplet {
    s.parse().unwrap()
}

fn bulk_ktp() -> ModelIndex {
    let c =
        GeometricCorrections::from_values([760.0, 860.0], Polarization::ALL.map(|p| (ModeLabel::fundamental(p), 0.0)));
    ModelIndex::new(Materials::ktp(), c)
}

fn constant(n: f64) -> ModelIndex {
    let m = Materials::new(SellmeierModel::constant(n, [300.0, 2000.0]).unwrap(), AxisMapping::default()).unwrap();
    let c =
        GeometricCorrections::from_values([760.0, 860.0], Polarization::ALL.map(|p| (ModeLabel::fundamental(p), 0.0)));
    ModelIndex::new(m, c)
}

/// `n = a + b lambda_um` per polarization.
struct Linear {
    a: [f64; 3],
    b: [f64; 3],
}

impl IndexProvider for Linear {
    fn effective_index(&self, label: ModeLabel, lambda_nm: f64) -> Result<f64> {
        let k = label.pol as usize;
        Ok(self.a[k] + self.b[k] * lambda_nm * 1e-3)
    }
}

#[test]
fn dispersionless_limits() {
    let p = constant(1.8);
    let tr = Triplet::fundamental();
    for (lv, lh) in [(780.0, 800.0), (800.0, 800.0), (850.0, 770.0)] {
        assert!(phase_mismatch(&p, &tr, lv, lh, f64::INFINITY).unwrap().abs() < 1e-13);
        let db = phase_mismatch(&p, &tr, lv, lh, 10.0).unwrap();
        assert!((db + 2.0 * PI / 10.0).abs() < 1e-13);
    }
    assert_eq!(
        degenerate_wavelength(&p, &tr, f64::INFINITY, &ScanWindow::default()).unwrap(),
        DegenerateRoots::Everywhere
    );
    assert!(matches!(fit_poling_period(&p, &tr, 800.0), Err(Error::PolingSign { .. })));
}

#[test]
fn fitted_period_phase_matches_bulk_ktp() {
    let p = bulk_ktp();
    let tr = Triplet::fundamental();
    let period = fit_poling_period(&p, &tr, 800.0).unwrap();
    assert!(period > 5.0 && period < 15.0, "{period}");
    assert!(phase_mismatch(&p, &tr, 800.0, 800.0, period).unwrap().abs() <= 1e-10);
    let roots = degenerate_wavelength(&p, &tr, period, &ScanWindow::default()).unwrap();
    let DegenerateRoots::Roots(r) = roots else { panic!() };
    assert_eq!(r.len(), 1);
    assert!((r[0] - 800.0).abs() <= 1e-6, "{}", r[0]);
    assert!(phase_mismatch(&p, &tr, r[0], r[0], period).unwrap().abs() <= ROOT_TOL);
}

#[test]
fn linear_toy_model_root_is_closed_form() {
    // dbeta(l, l) / 2pi = (2 a_S - a_V - a_H) / l + (b_S - b_V - b_H) - 1 / period
    let p = Linear { a: [1.80, 1.75, 1.86], b: [-0.02, -0.015, -0.06] };
    let period = 9.0;
    let [av, ah, as_] = p.a;
    let [bv, bh, bs] = p.b;
    let want_um = (2.0 * as_ - av - ah) / (1.0 / period - bs + bv + bh);
    let got = degenerate_wavelength(
        &p,
        &Triplet::fundamental(),
        period,
        &ScanWindow { lo_nm: 300.0, hi_nm: 3000.0, step_nm: 0.5 },
    )
    .unwrap()
    .nearest(want_um * 1e3)
    .unwrap();
    assert!((got - want_um * 1e3).abs() < 1e-9, "{got} vs {}", want_um * 1e3);
}

#[test]
fn no_root_reports_endpoints() {
    let p = bulk_ktp();
    let err = degenerate_wavelength(&p, &Triplet::fundamental(), 3.0, &ScanWindow::default()).unwrap_err();
    let Error::NoRoot { lo_nm, hi_nm, f_lo, f_hi } = err else { panic!("{err}") };
    assert_eq!((lo_nm, hi_nm), (760.0, 860.0));
    assert!(f_lo.is_finite() && f_hi.is_finite() && f_lo.signum() == f_hi.signum());
}

#[test]
fn larger_sum_frequency_correction_shortens_period() {
    let mut last = f64::INFINITY;
    for dn in [0.0, 0.001, 0.002, 0.004] {
        let c = GeometricCorrections::from_values(
            [792.0, 815.0],
            [
                (ModeLabel::fundamental(Polarization::V), 0.003),
                (ModeLabel::fundamental(Polarization::H), 0.002),
                (ModeLabel::fundamental(Polarization::S), dn),
            ],
        );
        let p = ModelIndex::new(Materials::ktp(), c);
        let period = fit_poling_period(&p, &Triplet::fundamental(), 800.0).unwrap();
        assert!(period < last);
        last = period;
    }
}

#[test]
fn out_of_range_sum_frequency_is_an_error() {
    let p = bulk_ktp();
    // l_S = 350 nm is below the 380 nm validity edge
    let err = phase_mismatch(&p, &Triplet::fundamental(), 700.0, 700.0, 9.3).unwrap_err();
    assert!(matches!(err, Error::OutOfRange { .. }));
}

#[test]
fn band_map_cells_match_pointwise_evaluation() {
    let p = bulk_ktp();
    let tr = Triplet::fundamental();
    let period = fit_poling_period(&p, &tr, 800.0).unwrap();
    let gv = WavelengthGrid::new(790.0, 810.0, 0.2).unwrap();
    let gh = WavelengthGrid::new(790.0, 810.0, 0.2).unwrap();
    let map = band_map(&p, &tr, period, 4.8, gv, gh).unwrap();
    assert_eq!(map.masked_cells(), 0);
    let mut seed = 12345u64;
    for _ in 0..50 {
        seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let iv = (seed >> 33) as usize % gv.len();
        let ih = (seed >> 13) as usize % gh.len();
        let db = phase_mismatch(&p, &tr, gv.point(iv), gh.point(ih), period).unwrap();
        assert_eq!(map.at(iv, ih).unwrap(), band_intensity(db, 4.8));
        assert!(map.at(iv, ih).unwrap() >= 0.0);
    }
    // the diagonal is the degenerate cross section, bit for bit
    let cs = cross_section(&p, &tr, period, 4.8, gv);
    for (k, (l, v)) in cs.iter().enumerate() {
        assert_eq!(*l, gv.point(k));
        assert_eq!(*v, map.at(k, k));
    }
    let centre = gv.len() / 2;
    assert!((map.at(centre, centre).unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn band_map_masks_out_of_range_cells() {
    let p = bulk_ktp();
    let tr = Triplet::fundamental();
    let gv = WavelengthGrid::new(700.0, 800.0, 20.0).unwrap();
    let map = band_map(&p, &tr, 9.3, 4.8, gv, gv).unwrap();
    // l_S < 380 nm when both fundamentals are short
    assert!(map.at(0, 0).is_none());
    assert!(map.at(5, 5).is_some());
    assert!(map.masked_cells() > 0 && map.masked_cells() < 36);
    let mut out = Vec::new();
    map.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("lambda_V_nm,lambda_H_nm,intensity\n700,700,\n"));
    assert_eq!(text.lines().count(), 37);
}

#[test]
fn band_width_scales_inversely_with_length() {
    let p = bulk_ktp();
    let tr = Triplet::fundamental();
    let period = fit_poling_period(&p, &tr, 800.0).unwrap();
    let short = degenerate_fwhm(&p, &tr, period, 4.8, 800.0).unwrap();
    let long = degenerate_fwhm(&p, &tr, period, 9.6, 800.0).unwrap();
    assert!((short / long - 2.0).abs() / 2.0 < 0.05, "{short} {long}");
    // half maximum of sinc^2 sits at x = 1.391557...; dbeta is nearly linear in l
    let x_half = 1.391_557_377_5;
    let d = 1e-3;
    let slope = (phase_mismatch(&p, &tr, 800.0 + d, 800.0 + d, period).unwrap()
        - phase_mismatch(&p, &tr, 800.0 - d, 800.0 - d, period).unwrap())
        / (2.0 * d);
    let linear = 2.0 * 2.0 * x_half / (4800.0 * slope.abs());
    assert!((short - linear).abs() / linear < 1e-3, "{short} vs {linear}");
}

#[test]
fn slopes() {
    // identical V and H dispersion: exchange symmetry gives -1 at degeneracy
    let p = Linear { a: [1.8, 1.8, 1.86], b: [-0.02, -0.02, -0.06] };
    let tr = Triplet::fundamental();
    let period = fit_poling_period(&p, &tr, 800.0).unwrap();
    let s = band_slope(&p, &tr, period, 800.0, 800.0).unwrap();
    assert!((s + 1.0).abs() < 1e-9, "{s}");

    let k = bulk_ktp();
    let period = fit_poling_period(&k, &tr, 800.0).unwrap();
    let s = band_slope(&k, &tr, period, 800.0, 800.0).unwrap();
    let ng_v = Materials::ktp().group_index(Polarization::V, 800.0).unwrap();
    let ng_h = Materials::ktp().group_index(Polarization::H, 800.0).unwrap();
    assert!(ng_v != ng_h);
    assert!((s + 1.0).abs() > 1e-3, "{s}");
    // stepping H instead of V gives the reciprocal
    let f = |lv: f64, lh: f64| phase_mismatch(&k, &tr, lv, lh, period).unwrap();
    let d = SLOPE_STEP_NM;
    let dv = (f(800.0 + d, 800.0) - f(800.0 - d, 800.0)) / (2.0 * d);
    let dh = (f(800.0, 800.0 + d) - f(800.0, 800.0 - d)) / (2.0 * d);
    let s_hv = -dh / dv;
    assert!((s_hv * s - 1.0).abs() < 1e-12);
    assert!(band_slope(&k, &tr, period, 800.0, 805.0).is_err());
}

#[test]
fn band_point_lies_on_band() {
    let p = bulk_ktp();
    let tr = Triplet::fundamental();
    let period = fit_poling_period(&p, &tr, 800.0).unwrap();
    let lh = band_point(&p, &tr, period, 802.0, 780.0, 820.0).unwrap();
    assert!(phase_mismatch(&p, &tr, 802.0, lh, period).unwrap().abs() <= ROOT_TOL);
    assert!(lh < 800.0);
}

/// Bulk KTP on chosen axes plus per-label corrections.
struct AxisIndex {
    axes: [CrystalAxis; 3],
    corrections: GeometricCorrections,
}

impl IndexProvider for AxisIndex {
    fn effective_index(&self, label: ModeLabel, lambda_nm: f64) -> Result<f64> {
        let n = SellmeierModel::ktp().refractive_index(self.axes[label.pol as usize], lambda_nm)?;
        Ok(n + self.corrections.delta_n(label)?)
    }
}

#[test]
fn exchange_symmetry() {
    let l = |s: &str| -> ModeLabel { s.parse().unwrap() };
    let c =
        GeometricCorrections::from_values([792.0, 815.0], [(l("01V"), 0.003), (l("00H"), 0.002), (l("00S"), 0.004)]);
    let swapped =
        GeometricCorrections::from_values([792.0, 815.0], [(l("00V"), 0.002), (l("01H"), 0.003), (l("00S"), 0.004)]);
    let a = AxisIndex { axes: [CrystalAxis::Z, CrystalAxis::Y, CrystalAxis::Y], corrections: c };
    let b = AxisIndex { axes: [CrystalAxis::Y, CrystalAxis::Z, CrystalAxis::Y], corrections: swapped };
    for (lv, lh) in [(795.0, 805.0), (800.0, 800.0), (812.0, 793.0)] {
        let x = phase_mismatch(&a, &t("01V+00H>00S"), lv, lh, 9.3).unwrap();
        let y = phase_mismatch(&b, &t("00V+01H>00S"), lh, lv, 9.3).unwrap();
        assert!((x - y).abs() < 1e-13, "{x} {y}");
    }
}

#[test]
fn smoothing_preserves_flat_maps_and_masks() {
    let p = constant(1.8);
    let tr = Triplet::fundamental();
    let g = WavelengthGrid::new(790.0, 800.0, 0.2).unwrap();
    let map = band_map(&p, &tr, f64::INFINITY, 4.8, g, g).unwrap();
    let smooth = smooth_map(&map, 0.6);
    for v in smooth.intensity.iter().flatten() {
        assert!((v - 1.0).abs() < 1e-12);
    }
    assert_eq!(smooth_map(&map, 0.0), map);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn period_round_trip(lambda in 792.0f64..815.0, dv in 0.0f64..0.01, dh in 0.0f64..0.01, ds in 0.0f64..0.01) {
        let c = GeometricCorrections::from_values(
            [792.0, 815.0],
            [(ModeLabel::fundamental(Polarization::V), dv), (ModeLabel::fundamental(Polarization::H), dh), (ModeLabel::fundamental(Polarization::S), ds)],
        );
        let p = ModelIndex::new(Materials::ktp(), c);
        let tr = Triplet::fundamental();
        let period = fit_poling_period(&p, &tr, lambda).unwrap();
        let got = degenerate_wavelength(&p, &tr, period, &ScanWindow::default()).unwrap().nearest(lambda).unwrap();
        prop_assert!((got - lambda).abs() <= 1e-6, "{} vs {}", got, lambda);
    }
}
