//! Down-conversion view of the same bands: pump envelope, joint spectral
//! intensity and spectral isolation of the pump-mode bands.

use serde::{Deserialize, Serialize};

use crate::dispersion::IndexProvider;
use crate::error::{Error, Result};
use crate::label::Triplet;
use crate::material::sum_frequency_wavelength;
use crate::phase_matching::{
    band_map, degenerate_fwhm, degenerate_wavelength, phase_mismatch, BandMap, BandMapMeta, ScanWindow, WavelengthGrid,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_GUARD_NM: f64 = 0.5;

/// Gaussian pump, intensity FWHM in sum-frequency wavelength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpSpec {
    pub center_nm: f64,
    pub fwhm_nm: f64,
}

impl Default for PumpSpec {
    fn default() -> Self {
        PumpSpec { center_nm: 399.8, fwhm_nm: 1.0 }
    }
}

impl PumpSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.center_nm > 0.0 && self.center_nm.is_finite()) {
            return Err(Error::Validation(format!("pump center must be > 0, got {} nm", self.center_nm)));
        }
        if !(self.fwhm_nm > 0.0 && self.fwhm_nm.is_finite()) {
            return Err(Error::Validation(format!("pump FWHM must be > 0, got {} nm", self.fwhm_nm)));
        }
        Ok(())
    }
}

/// `exp(-4 ln 2 (l_S - l_p)^2 / FWHM^2)` with `1/l_S = 1/l_V + 1/l_H`.
pub fn pump_envelope(pump: &PumpSpec, lambda_v_nm: f64, lambda_h_nm: f64) -> f64 {
    let ls = sum_frequency_wavelength(lambda_v_nm, lambda_h_nm);
    let d = (ls - pump.center_nm) / pump.fwhm_nm;
    (-4.0 * std::f64::consts::LN_2 * d * d).exp()
}

/// Cellwise `efficiency * sinc^2(dbeta L / 2) * pump` over the plane.
/// `efficiency` is relative to the reference triplet (1 for the reference).
#[allow(clippy::too_many_arguments)]
pub fn jsi(
    p: &dyn IndexProvider,
    t: &Triplet,
    period_um: f64,
    length_mm: f64,
    pump: &PumpSpec,
    efficiency: f64,
    lambda_v: WavelengthGrid,
    lambda_h: WavelengthGrid,
) -> Result<BandMap> {
    pump.validate()?;
    if !(efficiency >= 0.0 && efficiency.is_finite()) {
        return Err(Error::Validation(format!("relative efficiency must be >= 0, got {efficiency}")));
    }
    let mut map = band_map(p, t, period_um, length_mm, lambda_v, lambda_h)?;
    let vs = lambda_v.points();
    for (ih, lh) in lambda_h.points().into_iter().enumerate() {
        for (iv, lv) in vs.iter().enumerate() {
            if let Some(v) = map.intensity[ih * vs.len() + iv].as_mut() {
                *v *= efficiency * pump_envelope(pump, *lv, lh);
            }
        }
    }
    Ok(map)
}

/// Largest cell of a map as `(lambda_V, lambda_H, value)`; first in row
/// order on ties. `None` for an empty or all-masked map.
pub fn map_peak(map: &BandMap) -> Option<(f64, f64, f64)> {
    let nv = map.lambda_v.len();
    let mut best: Option<(usize, f64)> = None;
    for (k, v) in map.intensity.iter().enumerate() {
        if let Some(v) = *v {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((k, v));
            }
        }
    }
    best.map(|(k, v)| (map.lambda_v.point(k % nv), map.lambda_h.point(k / nv), v))
}

/// Point where the phase-matching center line crosses the pump center line
/// `1/l_V + 1/l_H = 1/l_p`, searched within `half_span_nm` of degeneracy.
pub fn pump_intersection(
    p: &dyn IndexProvider,
    t: &Triplet,
    period_um: f64,
    pump: &PumpSpec,
    half_span_nm: f64,
) -> Result<(f64, f64)> {
    pump.validate()?;
    let deg = 2.0 * pump.center_nm;
    let partner = |lv: f64| 1.0 / (1.0 / pump.center_nm - 1.0 / lv);
    let f = |lv: f64| phase_mismatch(p, t, lv, partner(lv), period_um);
    let n = 400;
    let (lo, hi) = (deg - half_span_nm, deg + half_span_nm);
    let xs: Vec<f64> = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
    let mut best: Option<(f64, f64)> = None;
    for w in xs.windows(2) {
        let (fa, fb) = (f(w[0])?, f(w[1])?);
        if fa == 0.0 || (fa < 0.0) != (fb < 0.0) {
            let (mut a, mut b, mut fa) = (w[0], w[1], fa);
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                let fm = f(m)?;
                if (fm < 0.0) == (fa < 0.0) {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            let x = 0.5 * (a + b);
            if best.is_none_or(|(bx, _)| (x - deg).abs() < (bx - deg).abs()) {
                best = Some((x, partner(x)));
            }
        }
    }
    best.ok_or(Error::NoRoot { lo_nm: lo, hi_nm: hi, f_lo: f(lo)?, f_hi: f(hi)? })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandEntry {
    pub triplet: Triplet,
    pub center_nm: f64,
    pub fwhm_nm: f64,
    /// Distance to the closest other band, `None` when alone.
    pub nearest_nm: Option<f64>,
    pub isolated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Separation {
    pub a: Triplet,
    pub b: Triplet,
    pub separation_nm: f64,
    /// `separation > (FWHM_a + FWHM_b) / 2 + guard`.
    pub resolved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationReport {
    pub schema_version: u32,
    pub pump_mode: String,
    pub period_um: f64,
    pub length_mm: f64,
    pub guard_nm: f64,
    pub bands: Vec<BandEntry>,
    pub separations: Vec<Separation>,
}

impl SeparationReport {
    pub fn entry(&self, t: &Triplet) -> Option<&BandEntry> {
        self.bands.iter().find(|b| b.triplet == *t)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Degenerate centers, widths and pairwise separations of bands sharing one
/// sum-frequency mode. Centers are the roots nearest `near_nm`.
pub fn band_separation_report(
    p: &dyn IndexProvider,
    triplets: &[Triplet],
    period_um: f64,
    length_mm: f64,
    guard_nm: f64,
    window: &ScanWindow,
    near_nm: f64,
) -> Result<SeparationReport> {
    let first =
        triplets.first().ok_or_else(|| Error::Validation("separation report needs at least one triplet".into()))?;
    if let Some(t) = triplets.iter().find(|t| t.s != first.s) {
        return Err(Error::Validation(format!("{t} does not share the pump mode {}", first.s)));
    }
    if !(guard_nm >= 0.0) {
        return Err(Error::Validation(format!("guard must be >= 0, got {guard_nm} nm")));
    }
    let mut bands = Vec::with_capacity(triplets.len());
    for t in triplets {
        let center_nm =
            degenerate_wavelength(p, t, period_um, window)?.nearest(near_nm).ok_or(Error::DegenerateRoot)?;
        let fwhm_nm = degenerate_fwhm(p, t, period_um, length_mm, center_nm)?;
        bands.push(BandEntry { triplet: *t, center_nm, fwhm_nm, nearest_nm: None, isolated: true });
    }
    let mut separations = Vec::new();
    for i in 0..bands.len() {
        for j in i + 1..bands.len() {
            let separation_nm = (bands[j].center_nm - bands[i].center_nm).abs();
            let resolved = separation_nm > 0.5 * (bands[i].fwhm_nm + bands[j].fwhm_nm) + guard_nm;
            for k in [i, j] {
                let b = &mut bands[k];
                b.nearest_nm = Some(b.nearest_nm.map_or(separation_nm, |n| n.min(separation_nm)));
                b.isolated &= resolved;
            }
            separations.push(Separation { a: bands[i].triplet, b: bands[j].triplet, separation_nm, resolved });
        }
    }
    Ok(SeparationReport {
        schema_version: SCHEMA_VERSION,
        pump_mode: first.s.to_string(),
        period_um,
        length_mm,
        guard_nm,
        bands,
        separations,
    })
}

/// Sidecar of a JSI grid export.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JsiMeta {
    pub schema_version: u32,
    pub pump: PumpSpec,
    pub efficiency: f64,
    pub map: BandMapMeta,
}

impl JsiMeta {
    pub fn new(map: &BandMap, pump: PumpSpec, efficiency: f64) -> Self {
        JsiMeta {
            schema_version: SCHEMA_VERSION,
            pump,
            efficiency,
            map: map.meta("relative efficiency x sinc^2 x pump envelope"),
        }
    }
}
