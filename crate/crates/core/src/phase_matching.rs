//! Quasi-phase-matching condition and sum-frequency band maps.
//!
//! ```text
//! dbeta = 2 pi [ n_S(l_S)/l_S - n_V(l_V)/l_V - n_H(l_H)/l_H ] - 2 pi / period
//! 1/l_S = 1/l_V + 1/l_H
//! ```
//!
//! Wavelengths enter in micrometres, so `dbeta` is in rad/um.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::IndexProvider;
use crate::error::{Error, Result};
use crate::label::Triplet;
use crate::material::sum_frequency_wavelength;

/// Phase mismatch below which a scan sample counts as a root.
pub const ROOT_TOL: f64 = 1e-12;
/// Step of the central differences in [`band_slope`] (nm).
pub const SLOPE_STEP_NM: f64 = 0.01;
/// Largest `|dbeta|` (rad/um) accepted as "on the band" by [`band_slope`].
pub const ON_BAND_TOL: f64 = 1e-6;

/// `n_S/l_S - n_V/l_V - n_H/l_H` in 1/um.
pub fn index_bracket(p: &dyn IndexProvider, t: &Triplet, lambda_v_nm: f64, lambda_h_nm: f64) -> Result<f64> {
    let lambda_s_nm = sum_frequency_wavelength(lambda_v_nm, lambda_h_nm);
    let n_v = p.effective_index(t.v, lambda_v_nm)?;
    let n_h = p.effective_index(t.h, lambda_h_nm)?;
    let n_s = p.effective_index(t.s, lambda_s_nm)?;
    Ok(n_s / (lambda_s_nm * 1e-3) - n_v / (lambda_v_nm * 1e-3) - n_h / (lambda_h_nm * 1e-3))
}

/// `dbeta` in rad/um. `period_um` may be infinite (no grating).
pub fn phase_mismatch(
    p: &dyn IndexProvider,
    t: &Triplet,
    lambda_v_nm: f64,
    lambda_h_nm: f64,
    period_um: f64,
) -> Result<f64> {
    Ok(2.0 * PI * index_bracket(p, t, lambda_v_nm, lambda_h_nm)? - 2.0 * PI / period_um)
}

/// Period that phase-matches `t` at the degenerate point `lambda_nm`.
pub fn fit_poling_period(p: &dyn IndexProvider, t: &Triplet, lambda_nm: f64) -> Result<f64> {
    let bracket = index_bracket(p, t, lambda_nm, lambda_nm)?;
    if !(bracket > 0.0) {
        return Err(Error::PolingSign { bracket });
    }
    Ok(1.0 / bracket)
}

#[derive(Debug, Clone, PartialEq)]
pub enum DegenerateRoots {
    /// Sorted roots on the window.
    Roots(Vec<f64>),
    /// `dbeta` vanishes on the whole window; nothing to refine.
    Everywhere,
}

impl DegenerateRoots {
    /// The single root, or the one nearest `near` when there are several.
    pub fn nearest(&self, near: f64) -> Option<f64> {
        match self {
            DegenerateRoots::Roots(r) => r.iter().copied().min_by(|a, b| (a - near).abs().total_cmp(&(b - near).abs())),
            DegenerateRoots::Everywhere => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanWindow {
    pub lo_nm: f64,
    pub hi_nm: f64,
    /// Bracketing step (nm).
    pub step_nm: f64,
}

impl Default for ScanWindow {
    fn default() -> Self {
        ScanWindow { lo_nm: 760.0, hi_nm: 860.0, step_nm: 0.5 }
    }
}

/// Roots of `dbeta(l, l) = 0` on `window`.
pub fn degenerate_wavelength(
    p: &dyn IndexProvider,
    t: &Triplet,
    period_um: f64,
    window: &ScanWindow,
) -> Result<DegenerateRoots> {
    let f = |l: f64| phase_mismatch(p, t, l, l, period_um);
    let grid = WavelengthGrid::new(window.lo_nm, window.hi_nm, window.step_nm)?;
    let xs = grid.points();
    let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect::<Result<_>>()?;
    if fs.iter().all(|v| v.abs() <= ROOT_TOL) {
        return Ok(DegenerateRoots::Everywhere);
    }
    let mut roots = Vec::new();
    for k in 0..xs.len() {
        if fs[k] == 0.0 {
            roots.push(xs[k]);
            continue;
        }
        if k + 1 < xs.len() && fs[k + 1] != 0.0 && (fs[k] < 0.0) != (fs[k + 1] < 0.0) {
            roots.push(refine_root(&f, xs[k], xs[k + 1], fs[k], fs[k + 1])?);
        }
    }
    if roots.is_empty() {
        return Err(Error::NoRoot { lo_nm: xs[0], hi_nm: *xs.last().unwrap(), f_lo: fs[0], f_hi: *fs.last().unwrap() });
    }
    Ok(DegenerateRoots::Roots(roots))
}

/// Illinois regula falsi on a sign-changing bracket.
fn refine_root(f: &dyn Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64) -> Result<f64> {
    let mut side = 0;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let c = if c > a.min(b) && c < a.max(b) { c } else { 0.5 * (a + b) };
        let fc = f(c)?;
        if fc.abs() <= ROOT_TOL || fc == 0.0 {
            return Ok(c);
        }
        if (fc < 0.0) == (fb < 0.0) {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
        if (b - a).abs() <= 4.0 * f64::EPSILON * a.abs().max(b.abs()) {
            break;
        }
    }
    // bracket collapsed to adjacent floats; take the smaller residual
    let (fa, fb) = (f(a)?, f(b)?);
    Ok(if fa.abs() <= fb.abs() { a } else { b })
}

/// Uniform wavelength grid; points are `start + k step`, end included when
/// it falls on the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavelengthGrid {
    pub start_nm: f64,
    pub stop_nm: f64,
    pub step_nm: f64,
}

impl WavelengthGrid {
    pub fn new(start_nm: f64, stop_nm: f64, step_nm: f64) -> Result<Self> {
        if !(start_nm.is_finite() && stop_nm.is_finite() && step_nm > 0.0 && stop_nm >= start_nm) {
            return Err(Error::Validation(format!(
                "wavelength grid {start_nm}..{stop_nm} step {step_nm} is not increasing"
            )));
        }
        if (stop_nm - start_nm) / step_nm > 1e7 {
            return Err(Error::Validation("wavelength grid has more than 1e7 points".into()));
        }
        Ok(WavelengthGrid { start_nm, stop_nm, step_nm })
    }

    pub fn len(&self) -> usize {
        ((self.stop_nm - self.start_nm) / self.step_nm + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, k: usize) -> f64 {
        self.start_nm + k as f64 * self.step_nm
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }
}

/// `(sin x / x)^2`.
pub fn sinc2(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let s = x.sin() / x;
        s * s
    }
}

/// Relative sum-frequency intensity `sinc^2(dbeta L / 2)`.
pub fn band_intensity(dbeta: f64, length_mm: f64) -> f64 {
    sinc2(0.5 * dbeta * length_mm * 1e3)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandMap {
    pub triplet: Triplet,
    pub period_um: f64,
    pub length_mm: f64,
    pub lambda_v: WavelengthGrid,
    pub lambda_h: WavelengthGrid,
    /// `intensity[ih * nv + iv]`; `None` where an index fell out of range.
    pub intensity: Vec<Option<f64>>,
}

impl BandMap {
    pub fn at(&self, iv: usize, ih: usize) -> Option<f64> {
        self.intensity[ih * self.lambda_v.len() + iv]
    }

    pub fn masked_cells(&self) -> usize {
        self.intensity.iter().filter(|v| v.is_none()).count()
    }

    /// Peak-normalized copy (unchanged when the map is all zero).
    pub fn normalized(&self) -> BandMap {
        let peak = self.intensity.iter().flatten().copied().fold(0.0, f64::max);
        let mut out = self.clone();
        if peak > 0.0 {
            for v in out.intensity.iter_mut().flatten() {
                *v /= peak;
            }
        }
        out
    }
}

/// Intensity of `t` over the `(lambda_V, lambda_H)` plane, rows in parallel.
pub fn band_map(
    p: &dyn IndexProvider,
    t: &Triplet,
    period_um: f64,
    length_mm: f64,
    lambda_v: WavelengthGrid,
    lambda_h: WavelengthGrid,
) -> Result<BandMap> {
    if !(length_mm > 0.0) {
        return Err(Error::Validation("waveguide length must be positive".into()));
    }
    let vs = lambda_v.points();
    let rows: Vec<Vec<Option<f64>>> = lambda_h
        .points()
        .par_iter()
        .map(|&lh| {
            vs.iter()
                .map(|&lv| match phase_mismatch(p, t, lv, lh, period_um) {
                    Ok(db) => Some(band_intensity(db, length_mm)),
                    Err(e) => {
                        log::trace!("masked ({lv}, {lh}): {e}");
                        None
                    }
                })
                .collect()
        })
        .collect();
    Ok(BandMap {
        triplet: *t,
        period_um,
        length_mm,
        lambda_v,
        lambda_h,
        intensity: rows.into_iter().flatten().collect(),
    })
}

/// Intensity along the degenerate diagonal `lambda_V = lambda_H`.
pub fn cross_section(
    p: &dyn IndexProvider,
    t: &Triplet,
    period_um: f64,
    length_mm: f64,
    grid: WavelengthGrid,
) -> Vec<(f64, Option<f64>)> {
    grid.points()
        .into_iter()
        .map(|l| {
            let v = phase_mismatch(p, t, l, l, period_um).ok().map(|db| band_intensity(db, length_mm));
            (l, v)
        })
        .collect()
}

/// Full width at half maximum of the degenerate band along the diagonal,
/// around the root `center_nm`.
pub fn degenerate_fwhm(
    p: &dyn IndexProvider,
    t: &Triplet,
    period_um: f64,
    length_mm: f64,
    center_nm: f64,
) -> Result<f64> {
    let g = |l: f64| -> Result<f64> { Ok(band_intensity(phase_mismatch(p, t, l, l, period_um)?, length_mm) - 0.5) };
    if g(center_nm)? <= 0.0 {
        return Err(Error::Validation(format!("{center_nm} nm is not on the band of {t}")));
    }
    let mut edges = [0.0; 2];
    for (k, dir) in [-1.0f64, 1.0].into_iter().enumerate() {
        let mut step = 1e-3;
        let mut inner = center_nm;
        let mut outer = center_nm + dir * step;
        let mut found = false;
        for _ in 0..80 {
            if g(outer)? < 0.0 {
                found = true;
                break;
            }
            inner = outer;
            step *= 1.5;
            outer = center_nm + dir * step;
        }
        if !found {
            return Err(Error::Validation(format!("band of {t} does not fall to half maximum")));
        }
        for _ in 0..100 {
            let mid = 0.5 * (inner + outer);
            if g(mid)? >= 0.0 {
                inner = mid;
            } else {
                outer = mid;
            }
        }
        edges[k] = 0.5 * (inner + outer);
    }
    Ok(edges[1] - edges[0])
}

/// Local band slope `d lambda_H / d lambda_V` at an on-band point.
pub fn band_slope(
    p: &dyn IndexProvider,
    t: &Triplet,
    period_um: f64,
    lambda_v_nm: f64,
    lambda_h_nm: f64,
) -> Result<f64> {
    let f = |lv: f64, lh: f64| phase_mismatch(p, t, lv, lh, period_um);
    let at = f(lambda_v_nm, lambda_h_nm)?;
    if at.abs() > ON_BAND_TOL {
        return Err(Error::Validation(format!(
            "({lambda_v_nm}, {lambda_h_nm}) nm is off the band (dbeta = {at:e} rad/um)"
        )));
    }
    let d = SLOPE_STEP_NM;
    let dv = (f(lambda_v_nm + d, lambda_h_nm)? - f(lambda_v_nm - d, lambda_h_nm)?) / (2.0 * d);
    let dh = (f(lambda_v_nm, lambda_h_nm + d)? - f(lambda_v_nm, lambda_h_nm - d)?) / (2.0 * d);
    if dh.abs() <= 1e-14 * dv.abs().max(1.0) {
        return Err(Error::VerticalBand(lambda_v_nm));
    }
    Ok(-dv / dh)
}

/// `lambda_H` on the band of `t` at fixed `lambda_V`, searched on
/// `[lo_nm, hi_nm]`.
pub fn band_point(
    p: &dyn IndexProvider,
    t: &Triplet,
    period_um: f64,
    lambda_v_nm: f64,
    lo_nm: f64,
    hi_nm: f64,
) -> Result<f64> {
    let f = |lh: f64| phase_mismatch(p, t, lambda_v_nm, lh, period_um);
    let (fa, fb) = (f(lo_nm)?, f(hi_nm)?);
    if fa == 0.0 {
        return Ok(lo_nm);
    }
    if fb == 0.0 {
        return Ok(hi_nm);
    }
    if (fa < 0.0) == (fb < 0.0) {
        return Err(Error::NoRoot { lo_nm, hi_nm, f_lo: fa, f_hi: fb });
    }
    refine_root(&f, lo_nm, hi_nm, fa, fb)
}

/// Separable Gaussian blur of a map with the given FWHM (nm) along both
/// axes. Masked cells stay masked and do not contribute.
pub fn smooth_map(map: &BandMap, fwhm_nm: f64) -> BandMap {
    if !(fwhm_nm > 0.0) {
        return map.clone();
    }
    let sigma = fwhm_nm / (8.0 * std::f64::consts::LN_2).sqrt();
    let kernel = |step: f64| -> Vec<f64> {
        let half = (4.0 * sigma / step).ceil() as i64;
        (-half..=half).map(|k| (-0.5 * (k as f64 * step / sigma).powi(2)).exp()).collect()
    };
    let (nv, nh) = (map.lambda_v.len(), map.lambda_h.len());
    let blur = |data: &[Option<f64>], along_v: bool, kern: &[f64]| -> Vec<Option<f64>> {
        let half = (kern.len() / 2) as i64;
        let mut out = vec![None; data.len()];
        for ih in 0..nh {
            for iv in 0..nv {
                let here = ih * nv + iv;
                if data[here].is_none() {
                    continue;
                }
                let (mut acc, mut wsum) = (0.0, 0.0);
                for (k, w) in kern.iter().enumerate() {
                    let off = k as i64 - half;
                    let (v, h) = if along_v { (iv as i64 + off, ih as i64) } else { (iv as i64, ih as i64 + off) };
                    if v < 0 || h < 0 || v >= nv as i64 || h >= nh as i64 {
                        continue;
                    }
                    if let Some(x) = data[h as usize * nv + v as usize] {
                        acc += w * x;
                        wsum += w;
                    }
                }
                out[here] = Some(acc / wsum);
            }
        }
        out
    };
    let once = blur(&map.intensity, true, &kernel(map.lambda_v.step_nm));
    let twice = blur(&once, false, &kernel(map.lambda_h.step_nm));
    BandMap { intensity: twice, ..map.clone() }
}

/// Sidecar describing a band-map CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandMapMeta {
    pub schema_version: u32,
    pub triplet: Triplet,
    pub period_um: f64,
    pub length_mm: f64,
    pub lambda_v: WavelengthGrid,
    pub lambda_h: WavelengthGrid,
    pub masked_cells: usize,
    pub normalization: String,
    pub columns: Vec<String>,
}

impl BandMap {
    pub fn meta(&self, normalization: &str) -> BandMapMeta {
        BandMapMeta {
            schema_version: 1,
            triplet: self.triplet,
            period_um: self.period_um,
            length_mm: self.length_mm,
            lambda_v: self.lambda_v,
            lambda_h: self.lambda_h,
            masked_cells: self.masked_cells(),
            normalization: normalization.to_string(),
            columns: vec!["lambda_V_nm".into(), "lambda_H_nm".into(), "intensity".into()],
        }
    }

    /// CSV rows `lambda_V_nm,lambda_H_nm,intensity`, `lambda_V` fastest;
    /// masked cells have an empty intensity.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Validation(format!("csv write: {e}"));
        w.write_record(["lambda_V_nm", "lambda_H_nm", "intensity"]).map_err(err)?;
        let vs = self.lambda_v.points();
        for (ih, lh) in self.lambda_h.points().into_iter().enumerate() {
            for (iv, lv) in vs.iter().enumerate() {
                let cell = self.at(iv, ih).map(|v| v.to_string()).unwrap_or_default();
                w.write_record([lv.to_string(), lh.to_string(), cell]).map_err(err)?;
            }
        }
        w.flush().map_err(|e| Error::Validation(format!("csv write: {e}")))
    }
}

/// Two-column CSV `lambda_nm,intensity`.
pub fn write_cross_section<W: Write>(rows: &[(f64, Option<f64>)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Validation(format!("csv write: {e}"));
    w.write_record(["lambda_nm", "intensity"]).map_err(err)?;
    for (l, v) in rows {
        w.write_record([l.to_string(), v.map(|x| x.to_string()).unwrap_or_default()]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Validation(format!("csv write: {e}")))
}
