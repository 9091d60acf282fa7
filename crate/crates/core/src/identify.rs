//! Band identification from measured degenerate scans: peak picking,
//! triplet assignment and the fit of correction differences.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dispersion::{GeometricCorrections, IndexProvider, ModelIndex};
use crate::error::{Error, Result};
use crate::label::{ModeLabel, Polarization, Slot, Triplet};
use crate::material::Materials;
use crate::phase_matching::{
    band_intensity, degenerate_wavelength, fit_poling_period, phase_mismatch, ScanWindow, WavelengthGrid,
};

pub const SCHEMA_VERSION: u32 = 1;
/// Consistency threshold between measured and predicted centers (nm).
pub const FLAG_NM: f64 = 0.2;
pub const DEFAULT_PROMINENCE: f64 = 0.05;

/// One degenerate scan: `(lambda_nm, intensity)` samples plus free-text metadata.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasuredScan {
    pub samples: Vec<(f64, f64)>,
    pub description: String,
    pub date: Option<String>,
}

impl MeasuredScan {
    pub fn new(samples: Vec<(f64, f64)>, description: impl Into<String>, date: Option<String>) -> Result<Self> {
        for (k, &(l, v)) in samples.iter().enumerate() {
            if !l.is_finite() || !v.is_finite() {
                return Err(Error::Validation(format!("scan sample {k} is not finite")));
            }
            if v < 0.0 {
                return Err(Error::Validation(format!("scan sample {k} has negative intensity {v}")));
            }
            if k > 0 && l <= samples[k - 1].0 {
                return Err(Error::Validation(format!("scan wavelengths must increase strictly (sample {k})")));
            }
        }
        Ok(MeasuredScan { samples, description: description.into(), date })
    }

    /// CSV with a `lambda_nm,intensity` header. Leading `# description: ...`
    /// and `# date: ...` lines carry the metadata.
    pub fn from_csv<R: Read>(input: R) -> Result<Self> {
        let mut text = String::new();
        let mut input = input;
        input.read_to_string(&mut text).map_err(|e| Error::Parse(format!("scan: {e}")))?;
        let mut description = String::new();
        let mut date = None;
        for line in text.lines().take_while(|l| l.trim_start().starts_with('#')) {
            let body = line.trim_start().trim_start_matches('#').trim();
            if let Some(v) = body.strip_prefix("description:") {
                description = v.trim().to_string();
            } else if let Some(v) = body.strip_prefix("date:") {
                date = Some(v.trim().to_string());
            }
        }
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| Error::Parse(format!("scan: {e}")))?.clone();
        if headers.len() != 2 || &headers[0] != "lambda_nm" || &headers[1] != "intensity" {
            return Err(Error::Parse(format!(
                "scan header must be `lambda_nm,intensity`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut samples = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Parse(format!("scan: {e}")))?;
            let field = |k: usize| -> Result<f64> {
                rec[k].parse::<f64>().map_err(|_| Error::Parse(format!("scan: bad number `{}`", &rec[k])))
            };
            samples.push((field(0)?, field(1)?));
        }
        MeasuredScan::new(samples, description, date)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut scan = Self::from_csv(f)?;
        if scan.description.is_empty() {
            scan.description = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        }
        Ok(scan)
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = format!("# description: {}\n", self.description);
        if let Some(d) = &self.date {
            s.push_str(&format!("# date: {d}\n"));
        }
        s.push_str("lambda_nm,intensity\n");
        for (l, v) in &self.samples {
            s.push_str(&format!("{l},{v}\n"));
        }
        s
    }
}

/// One triplet per line; blank lines and `#` comments are skipped.
/// Duplicates are rejected.
pub fn parse_candidates(text: &str) -> Result<Vec<Triplet>> {
    let mut out: Vec<Triplet> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let t: Triplet = body.parse().map_err(|e| Error::Parse(format!("candidates line {}: {e}", k + 1)))?;
        if out.contains(&t) {
            return Err(Error::Parse(format!("candidates line {}: duplicate {t}", k + 1)));
        }
        out.push(t);
    }
    Ok(out)
}

/// Vertex of the parabola through three points.
fn parabola_vertex((x0, y0): (f64, f64), (x1, y1): (f64, f64), (x2, y2): (f64, f64)) -> f64 {
    let d0 = (y1 - y0) / (x1 - x0);
    let d1 = (y2 - y1) / (x2 - x1);
    let curv = (d1 - d0) / (x2 - x0);
    if !(curv < 0.0) {
        return x1;
    }
    let x = 0.5 * (x0 + x1) - d0 / (2.0 * curv);
    x.clamp(x0, x2)
}

/// Local maxima whose prominence reaches `min_prominence` times the global
/// maximum, refined by a three-point parabola. Sorted by wavelength.
pub fn detect_band_centers(scan: &MeasuredScan, min_prominence: f64) -> Result<Vec<f64>> {
    let s = &scan.samples;
    if s.len() < 3 {
        return Err(Error::Validation(format!("band detection needs at least 3 samples, got {}", s.len())));
    }
    if !(min_prominence >= 0.0) {
        return Err(Error::Validation("prominence threshold must be >= 0".into()));
    }
    let y: Vec<f64> = s.iter().map(|p| p.1).collect();
    let top = y.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return Ok(Vec::new());
    }
    let mut centers = Vec::new();
    let mut i = 1;
    while i + 1 < y.len() {
        if !(y[i] > y[i - 1]) {
            i += 1;
            continue;
        }
        // plateau: extend over equal samples
        let mut j = i;
        while j + 1 < y.len() && y[j + 1] == y[i] {
            j += 1;
        }
        if j + 1 == y.len() || y[j + 1] > y[i] {
            i = j + 1;
            continue;
        }
        let peak = y[i];
        let mut left = peak;
        for k in (0..i).rev() {
            if y[k] > peak {
                break;
            }
            left = left.min(y[k]);
        }
        let mut right = peak;
        for &v in &y[j + 1..] {
            if v > peak {
                break;
            }
            right = right.min(v);
        }
        let prominence = peak - left.max(right);
        if prominence >= min_prominence * top && prominence > 0.0 {
            let c = if i == j { parabola_vertex(s[i - 1], s[i], s[i + 1]) } else { 0.5 * (s[i].0 + s[j].0) };
            centers.push(c);
        }
        i = j + 1;
    }
    Ok(centers)
}

/// Wavevector part `2 pi [n_S/l_S - n_V/l - n_H/l]` of the mismatch at the
/// degenerate point, in rad/um.
fn wavevector_sum(p: &dyn IndexProvider, t: &Triplet, lambda_nm: f64) -> Result<f64> {
    phase_mismatch(p, t, lambda_nm, lambda_nm, f64::INFINITY)
}

/// `d (wavevector sum) / d (delta n)` of a slot at the degenerate point.
fn slot_coefficient(pol: Polarization, lambda_nm: f64) -> f64 {
    let l_um = lambda_nm * 1e-3;
    match pol {
        Polarization::S => 4.0 * PI / l_um,
        Polarization::V | Polarization::H => -2.0 * PI / l_um,
    }
}

fn slot_pol(slot: Slot) -> Polarization {
    match slot {
        Slot::V => Polarization::V,
        Slot::H => Polarization::H,
        Slot::S => Polarization::S,
    }
}

/// Difference `dn(b) - dn(a)` of the one mode in which triplets `a` and `b`
/// differ, such that both bands sit at their measured centers under a
/// common period. The remaining corrections are taken from `corrections`.
pub fn correction_difference(
    materials: &Materials,
    corrections: &GeometricCorrections,
    a: &Triplet,
    center_a_nm: f64,
    b: &Triplet,
    center_b_nm: f64,
) -> Result<(Slot, f64)> {
    let slot =
        a.differing_slot(b).ok_or_else(|| Error::Contract(format!("{a} and {b} must differ in exactly one mode")))?;
    let (la, lb) = (a.label(slot), b.label(slot));
    let mut c = corrections.clone();
    c.insert(lb, corrections.delta_n(la)?, 0.0);
    let model = ModelIndex::new(materials.clone(), c);
    let ka = wavevector_sum(&model, a, center_a_nm)?;
    let kb = wavevector_sum(&model, b, center_b_nm)?;
    Ok((slot, -(kb - ka) / slot_coefficient(slot_pol(slot), center_b_nm)))
}

/// Apply [`correction_difference`] to each pair in turn, so later pairs may
/// build on labels fixed by earlier ones.
pub fn fit_correction_differences(
    materials: &Materials,
    corrections: &GeometricCorrections,
    pairs: &[(Triplet, f64, Triplet, f64)],
) -> Result<GeometricCorrections> {
    let mut c = corrections.clone();
    for (a, ca, b, cb) in pairs {
        let (slot, d) = correction_difference(materials, &c, a, *ca, b, *cb)?;
        let base = c.delta_n(a.label(slot))?;
        c.insert(b.label(slot), base + d, 0.0);
    }
    Ok(c)
}

/// Fix the identification gauge: `dn(00V) = delta_n_ref`, with sum-frequency
/// corrections moved by half the shift so that no band center moves.
pub fn apply_gauge(corrections: &GeometricCorrections, delta_n_ref: f64) -> Result<GeometricCorrections> {
    let shift = delta_n_ref - corrections.delta_n(ModeLabel::fundamental(Polarization::V))?;
    Ok(corrections.shifted(Polarization::V, shift).shifted(Polarization::S, 0.5 * shift))
}

/// Least-squares update of the corrections and the period from assigned
/// bands. The anchor's three modes stay fixed; every other label appearing
/// in `bands` and the grating wavenumber are free. Underdetermined
/// directions keep their previous values.
pub fn fit_corrections(
    materials: &Materials,
    corrections: &GeometricCorrections,
    period_um: f64,
    anchor: &Triplet,
    bands: &[(Triplet, f64)],
) -> Result<(GeometricCorrections, f64)> {
    let fixed: BTreeSet<ModeLabel> = anchor.labels().into_iter().collect();
    let free: Vec<ModeLabel> = bands
        .iter()
        .flat_map(|(t, _)| t.labels())
        .filter(|l| !fixed.contains(l))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let col: BTreeMap<ModeLabel, usize> = free.iter().enumerate().map(|(k, &l)| (l, k)).collect();
    let n = free.len() + 1;
    let model = ModelIndex::new(materials.clone(), corrections.clone());
    let mut a = DMatrix::zeros(bands.len(), n);
    let mut rhs = DVector::zeros(bands.len());
    for (r, (t, center)) in bands.iter().enumerate() {
        rhs[r] = -phase_mismatch(&model, t, *center, *center, period_um)?;
        for l in t.labels() {
            if let Some(&k) = col.get(&l) {
                a[(r, k)] += slot_coefficient(l.pol, *center);
            }
        }
        a[(r, n - 1)] = -1.0;
    }
    let svd = a.svd(true, true);
    let tol = 1e-10 * svd.singular_values.max();
    let x = svd.solve(&rhs, tol).map_err(|e| Error::Contract(format!("correction fit: {e}")))?;
    let mut out = corrections.clone();
    for (&l, &k) in &col {
        let base = corrections.delta_n(l).unwrap_or(0.0);
        out.insert(l, base + x[k], 0.0);
    }
    let k_grating = 2.0 * PI / period_um + x[n - 1];
    if !(k_grating > 0.0) {
        return Err(Error::PolingSign { bracket: k_grating / (2.0 * PI) });
    }
    Ok((out, 2.0 * PI / k_grating))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandAssignment {
    pub center_nm: f64,
    pub triplet: Triplet,
    pub predicted_nm: f64,
    pub residual_nm: f64,
    pub flagged: bool,
    /// Corrections of the V, H and S modes used for the prediction.
    pub delta_n: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assignment {
    pub bands: Vec<BandAssignment>,
    /// Centers left without a candidate (impure excitation).
    pub unassigned_nm: Vec<f64>,
}

impl Assignment {
    pub fn max_residual(&self) -> f64 {
        self.bands.iter().map(|b| b.residual_nm).fold(0.0, f64::max)
    }

    pub fn flagged(&self) -> usize {
        self.bands.iter().filter(|b| b.flagged).count()
    }

    fn cost(&self) -> (usize, f64) {
        (self.flagged(), self.bands.iter().map(|b| b.residual_nm).sum())
    }
}

/// Degenerate center of each candidate under the model, the root nearest
/// the window middle; `None` when the candidate has no root there.
pub fn predict_centers(
    p: &dyn IndexProvider,
    candidates: &[Triplet],
    period_um: f64,
    window: &ScanWindow,
) -> Vec<Option<f64>> {
    let mid = 0.5 * (window.lo_nm + window.hi_nm);
    candidates
        .iter()
        .map(|t| degenerate_wavelength(p, t, period_um, window).ok().and_then(|r| r.nearest(mid)))
        .collect()
}

/// Minimum-cost assignment of rows to distinct columns; needs
/// `rows <= cols`. Returns the column of each row.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

/// Cost for a candidate without a prediction; never chosen over a real one.
const NO_PREDICTION: f64 = 1e9;

/// Optimal one-to-one matching of measured centers to predicted centers,
/// minimizing the total `|center - prediction|`.
pub fn match_centers(centers: &[f64], predicted: &[Option<f64>]) -> Vec<Option<usize>> {
    let cost = |c: usize, t: usize| predicted[t].map(|p| (centers[c] - p).abs()).unwrap_or(NO_PREDICTION);
    let mut out = vec![None; centers.len()];
    if centers.is_empty() || predicted.is_empty() {
        return out;
    }
    if centers.len() <= predicted.len() {
        let m: Vec<Vec<f64>> = (0..centers.len()).map(|c| (0..predicted.len()).map(|t| cost(c, t)).collect()).collect();
        for (c, t) in hungarian(&m).into_iter().enumerate() {
            out[c] = Some(t);
        }
    } else {
        let m: Vec<Vec<f64>> = (0..predicted.len()).map(|t| (0..centers.len()).map(|c| cost(c, t)).collect()).collect();
        for (t, c) in hungarian(&m).into_iter().enumerate() {
            out[c] = Some(t);
        }
    }
    for slot in out.iter_mut() {
        if slot.is_some_and(|t| predicted[t].is_none()) {
            *slot = None;
        }
    }
    out
}

/// Predict every candidate and assign the measured centers to them.
pub fn assign_triplets(
    materials: &Materials,
    centers: &[f64],
    candidates: &[Triplet],
    corrections: &GeometricCorrections,
    period_um: f64,
    window: &ScanWindow,
) -> Result<Assignment> {
    for t in candidates {
        for l in t.labels() {
            corrections.delta_n(l)?;
        }
    }
    let model = ModelIndex::new(materials.clone(), corrections.clone());
    let predicted = predict_centers(&model, candidates, period_um, window);
    let matched = match_centers(centers, &predicted);
    let mut bands = Vec::new();
    let mut unassigned_nm = Vec::new();
    for (c, m) in matched.into_iter().enumerate() {
        match m {
            Some(t) => {
                let triplet = candidates[t];
                let predicted_nm = predicted[t].unwrap();
                let residual_nm = (centers[c] - predicted_nm).abs();
                let dn = |l: ModeLabel| corrections.delta_n(l).unwrap();
                bands.push(BandAssignment {
                    center_nm: centers[c],
                    triplet,
                    predicted_nm,
                    residual_nm,
                    flagged: residual_nm > FLAG_NM,
                    delta_n: [dn(triplet.v), dn(triplet.h), dn(triplet.s)],
                });
            }
            None => unassigned_nm.push(centers[c]),
        }
    }
    Ok(Assignment { bands, unassigned_nm })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gauge {
    pub anchor: Triplet,
    pub delta_n_ref: f64,
}

impl Default for Gauge {
    fn default() -> Self {
        Gauge { anchor: Triplet::fundamental(), delta_n_ref: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentifyOptions {
    pub min_prominence: f64,
    pub window: ScanWindow,
    pub max_iterations: usize,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        IdentifyOptions { min_prominence: DEFAULT_PROMINENCE, window: ScanWindow::default(), max_iterations: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentificationReport {
    pub schema_version: u32,
    pub anchor: Triplet,
    pub anchor_center_nm: f64,
    pub period_um: f64,
    pub length_mm: f64,
    pub iterations: usize,
    pub max_residual_nm: f64,
    pub flagged: usize,
    pub bands: Vec<BandAssignment>,
    pub unassigned_nm: Vec<f64>,
    #[serde(skip)]
    pub corrections: GeometricCorrections,
}

impl IdentificationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// A detected center and the scan it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectedCenter {
    pub center_nm: f64,
    pub scan: usize,
}

/// Detected centers of all scans, merged and sorted by wavelength.
pub fn scan_centers(scans: &[MeasuredScan], min_prominence: f64) -> Result<Vec<DetectedCenter>> {
    let per: Vec<Vec<f64>> = scans.par_iter().map(|s| detect_band_centers(s, min_prominence)).collect::<Result<_>>()?;
    let mut all: Vec<DetectedCenter> = per
        .into_iter()
        .enumerate()
        .flat_map(|(scan, cs)| cs.into_iter().map(move |center_nm| DetectedCenter { center_nm, scan }))
        .collect();
    all.sort_by(|a, b| a.center_nm.total_cmp(&b.center_nm).then(a.scan.cmp(&b.scan)));
    Ok(all)
}

/// Re-estimate a band center by a least-squares fit of the model band shape
/// `A sinc^2(slope (lambda - c) L / 2)` to the main-lobe samples around `near_nm`.
pub fn refine_center(
    scan: &MeasuredScan,
    p: &dyn IndexProvider,
    t: &Triplet,
    period_um: f64,
    length_mm: f64,
    near_nm: f64,
) -> Result<f64> {
    let h = 0.01;
    let slope = (phase_mismatch(p, t, near_nm + h, near_nm + h, period_um)?
        - phase_mismatch(p, t, near_nm - h, near_nm - h, period_um)?)
        / (2.0 * h);
    if !(slope.abs() > 0.0) {
        return Ok(near_nm);
    }
    // first zeros of the main lobe
    let half_lobe = 2.0 * PI / (slope.abs() * length_mm * 1e3);
    let span = half_lobe.min(1.0);
    let pts: Vec<(f64, f64)> =
        scan.samples.iter().copied().filter(|(l, _)| (l - near_nm).abs() <= span + half_lobe).collect();
    if pts.len() < 3 {
        return Ok(near_nm);
    }
    let sse = |c: f64| {
        let (mut ym, mut mm) = (0.0, 0.0);
        for &(l, y) in &pts {
            let m = band_intensity(slope * (l - c), length_mm);
            ym += y * m;
            mm += m * m;
        }
        if mm == 0.0 {
            f64::INFINITY
        } else {
            -ym * ym / mm
        }
    };
    // golden section on [near - span, near + span]
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (near_nm - span, near_nm + span);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (sse(x1), sse(x2));
    for _ in 0..80 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = sse(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = sse(x2);
        }
    }
    Ok(0.5 * (a + b))
}

/// Full identification. Each detected center is tried as the anchor band
/// (period calibrated on it); the best-scoring hypothesis is then refined by
/// alternating shape refinement of the assigned centers, a least-squares
/// fit, and reassignment until the labels settle.
pub fn identify(
    materials: &Materials,
    prior: &GeometricCorrections,
    gauge: &Gauge,
    candidates: &[Triplet],
    scans: &[MeasuredScan],
    length_mm: f64,
    opts: &IdentifyOptions,
) -> Result<IdentificationReport> {
    if !candidates.contains(&gauge.anchor) {
        return Err(Error::Validation(format!("anchor {} is not among the candidates", gauge.anchor)));
    }
    if !(length_mm > 0.0) {
        return Err(Error::Validation(format!("sample length must be > 0, got {length_mm} mm")));
    }
    let detected = scan_centers(scans, opts.min_prominence)?;
    if detected.is_empty() {
        return Err(Error::Validation("no band centers found in the scans".into()));
    }
    let raw: Vec<f64> = detected.iter().map(|d| d.center_nm).collect();
    let start = apply_gauge(prior, gauge.delta_n_ref)?;
    let model = ModelIndex::new(materials.clone(), start.clone());

    let hypotheses: Vec<(usize, f64, Assignment)> = raw
        .par_iter()
        .enumerate()
        .filter_map(|(k, &c)| {
            let period = fit_poling_period(&model, &gauge.anchor, c).ok()?;
            let a = assign_triplets(materials, &raw, candidates, &start, period, &opts.window).ok()?;
            a.bands.iter().any(|b| b.triplet == gauge.anchor && b.center_nm == c).then_some((k, period, a))
        })
        .collect();
    let (_, mut period, mut assignment) = hypotheses
        .into_iter()
        .min_by(|x, y| {
            let (fx, sx) = x.2.cost();
            let (fy, sy) = y.2.cost();
            fx.cmp(&fy).then(sx.total_cmp(&sy)).then(x.0.cmp(&y.0))
        })
        .ok_or_else(|| Error::Validation(format!("no center can be the anchor band {}", gauge.anchor)))?;

    let mut corrections = start;
    let mut centers = raw.clone();
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let current = ModelIndex::new(materials.clone(), corrections.clone());
        let labels: BTreeMap<u64, Triplet> =
            assignment.bands.iter().map(|b| (b.center_nm.to_bits(), b.triplet)).collect();
        let refined: Vec<f64> = centers
            .par_iter()
            .enumerate()
            .map(|(k, &c)| match labels.get(&c.to_bits()) {
                Some(t) => refine_center(&scans[detected[k].scan], &current, t, period, length_mm, raw[k]),
                None => Ok(raw[k]),
            })
            .collect::<Result<_>>()?;
        let bands: Vec<(Triplet, f64)> =
            centers.iter().zip(&refined).filter_map(|(c, r)| labels.get(&c.to_bits()).map(|t| (*t, *r))).collect();
        let (c, p) = fit_corrections(materials, &corrections, period, &gauge.anchor, &bands)?;
        let next = assign_triplets(materials, &refined, candidates, &c, p, &opts.window)?;
        let same = next.bands.iter().map(|b| b.triplet).eq(assignment.bands.iter().map(|b| b.triplet))
            && next.unassigned_nm.len() == assignment.unassigned_nm.len();
        let settled = same && refined == centers;
        corrections = c;
        period = p;
        assignment = next;
        centers = refined;
        if settled || (same && iterations > 2) {
            break;
        }
    }
    let anchor_center_nm = assignment
        .bands
        .iter()
        .find(|b| b.triplet == gauge.anchor)
        .map(|b| b.center_nm)
        .ok_or_else(|| Error::Validation(format!("anchor {} lost its band during refinement", gauge.anchor)))?;
    Ok(IdentificationReport {
        schema_version: SCHEMA_VERSION,
        anchor: gauge.anchor,
        anchor_center_nm,
        period_um: period,
        length_mm,
        iterations,
        max_residual_nm: assignment.max_residual(),
        flagged: assignment.flagged(),
        unassigned_nm: assignment.unassigned_nm,
        bands: assignment.bands,
        corrections,
    })
}

/// Forward model of one degenerate scan: `amplitude * sinc^2` of the band
/// of `t` sampled on `grid`, plus uniform noise of at most `noise` times the
/// amplitude, clipped at zero.
#[allow(clippy::too_many_arguments)]
pub fn synthetic_scan(
    p: &dyn IndexProvider,
    t: &Triplet,
    period_um: f64,
    length_mm: f64,
    grid: WavelengthGrid,
    amplitude: f64,
    noise: f64,
    seed: u64,
) -> Result<MeasuredScan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = grid
        .points()
        .into_iter()
        .map(|l| {
            let clean = amplitude * band_intensity(phase_mismatch(p, t, l, l, period_um)?, length_mm);
            let n = if noise > 0.0 { rng.random_range(-noise..=noise) * amplitude } else { 0.0 };
            Ok((l, (clean + n).max(0.0)))
        })
        .collect::<Result<Vec<_>>>()?;
    MeasuredScan::new(samples, format!("synthetic {t}"), None)
}
