//! Effective indices per mode: `n_eff(lambda) = n_bulk(lambda) + dn` with a
//! constant geometric correction `dn`, or straight from the mode solver.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{ModeLabel, Polarization};
use crate::material::Materials;
use crate::modes::{solve_waveguide, ModeField, SolverOptions};
use crate::profile::WaveguideSpec;

/// Anything that can answer "what is `n_eff` of this mode at this wavelength".
pub trait IndexProvider: Sync {
    fn effective_index(&self, label: ModeLabel, lambda_nm: f64) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub delta_n: f64,
    /// `max |n_eff - n_bulk - delta_n|` over the window; 0 for hand-set values.
    pub residual: f64,
    /// Wavelengths the correction was evaluated at (nm). Sum-frequency
    /// labels carry the half-wavelength window.
    pub window_nm: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GeometricCorrections {
    /// Fundamental wavelength window (nm).
    pub window_nm: [f64; 2],
    pub entries: BTreeMap<ModeLabel, Correction>,
}

#[derive(Serialize, Deserialize)]
struct CorrectionsDoc {
    schema_version: u32,
    window_nm: [f64; 2],
    #[serde(default)]
    mode: Vec<ModeEntry>,
}

#[derive(Serialize, Deserialize)]
struct ModeEntry {
    label: ModeLabel,
    delta_n: f64,
    residual: f64,
    window_nm: [f64; 2],
}

impl GeometricCorrections {
    pub fn new(window_nm: [f64; 2]) -> Self {
        GeometricCorrections { window_nm, entries: BTreeMap::new() }
    }

    /// Hand-set corrections with zero residual over `window_nm`; S labels get
    /// the half-wavelength window.
    pub fn from_values(window_nm: [f64; 2], values: impl IntoIterator<Item = (ModeLabel, f64)>) -> Self {
        let mut c = Self::new(window_nm);
        for (label, delta_n) in values {
            c.insert(label, delta_n, 0.0);
        }
        c
    }

    pub fn insert(&mut self, label: ModeLabel, delta_n: f64, residual: f64) {
        let window_nm = if label.pol == Polarization::S {
            [0.5 * self.window_nm[0], 0.5 * self.window_nm[1]]
        } else {
            self.window_nm
        };
        self.entries.insert(label, Correction { delta_n, residual, window_nm });
    }

    pub fn delta_n(&self, label: ModeLabel) -> Result<f64> {
        self.entries.get(&label).map(|c| c.delta_n).ok_or(Error::UnknownLabel(label))
    }

    pub fn labels(&self, pol: Polarization) -> impl Iterator<Item = ModeLabel> + '_ {
        self.entries.keys().copied().filter(move |l| l.pol == pol)
    }

    /// Add `offset` to every correction of `pol`.
    pub fn shifted(&self, pol: Polarization, offset: f64) -> Self {
        let mut out = self.clone();
        for (label, c) in out.entries.iter_mut() {
            if label.pol == pol {
                c.delta_n += offset;
            }
        }
        out
    }

    pub fn validate(&self, materials: &Materials) -> Result<()> {
        let [lo, hi] = self.window_nm;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Validation(format!("corrections window [{lo}, {hi}] nm is not an interval")));
        }
        for (label, c) in &self.entries {
            if !c.delta_n.is_finite() {
                return Err(Error::Validation(format!("{label}: correction is not finite")));
            }
            if !(c.residual >= 0.0) {
                return Err(Error::Validation(format!("{label}: residual must be >= 0")));
            }
            let [vlo, vhi] = materials.validity_nm(label.pol);
            if c.window_nm[0] < vlo || c.window_nm[1] > vhi {
                return Err(Error::Validation(format!(
                    "{label}: window [{}, {}] nm leaves the material range [{vlo}, {vhi}] nm",
                    c.window_nm[0], c.window_nm[1]
                )));
            }
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        let doc = CorrectionsDoc {
            schema_version: 1,
            window_nm: self.window_nm,
            mode: self
                .entries
                .iter()
                .map(|(label, c)| ModeEntry {
                    label: *label,
                    delta_n: c.delta_n,
                    residual: c.residual,
                    window_nm: c.window_nm,
                })
                .collect(),
        };
        toml::to_string(&doc).expect("corrections serialize")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let doc: CorrectionsDoc = toml::from_str(text).map_err(|e| Error::Parse(format!("corrections: {e}")))?;
        if doc.schema_version != 1 {
            return Err(Error::Parse(format!("corrections: unsupported schema_version {}", doc.schema_version)));
        }
        let mut out = GeometricCorrections::new(doc.window_nm);
        for e in doc.mode {
            if !e.delta_n.is_finite() || !(e.residual >= 0.0) {
                return Err(Error::Parse(format!("corrections: bad values for {}", e.label)));
            }
            if out.entries.contains_key(&e.label) {
                return Err(Error::Parse(format!("corrections: {} listed twice", e.label)));
            }
            out.entries
                .insert(e.label, Correction { delta_n: e.delta_n, residual: e.residual, window_nm: e.window_nm });
        }
        Ok(out)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

/// `n_bulk(lambda) + dn(label)`.
#[derive(Debug, Clone)]
pub struct ModelIndex {
    pub materials: Materials,
    pub corrections: GeometricCorrections,
}

impl ModelIndex {
    pub fn new(materials: Materials, corrections: GeometricCorrections) -> Self {
        ModelIndex { materials, corrections }
    }
}

impl IndexProvider for ModelIndex {
    fn effective_index(&self, label: ModeLabel, lambda_nm: f64) -> Result<f64> {
        let dn = self.corrections.delta_n(label)?;
        Ok(self.materials.bulk_index(label.pol, lambda_nm)? + dn)
    }
}

type ModeCache = HashMap<(Polarization, u64), Vec<(ModeLabel, f64)>>;

/// Effective indices from repeated mode solves, cached per wavelength.
pub struct NumericIndex {
    pub spec: WaveguideSpec,
    pub materials: Materials,
    pub options: SolverOptions,
    /// Modes requested per solve.
    pub mode_count: usize,
    cache: Mutex<ModeCache>,
}

impl NumericIndex {
    pub fn new(spec: WaveguideSpec, materials: Materials, options: SolverOptions, mode_count: usize) -> Self {
        NumericIndex { spec, materials, options, mode_count, cache: Mutex::new(HashMap::new()) }
    }
}

impl IndexProvider for NumericIndex {
    fn effective_index(&self, label: ModeLabel, lambda_nm: f64) -> Result<f64> {
        let key = (label.pol, lambda_nm.to_bits());
        let cached = self.cache.lock().unwrap().get(&key).cloned();
        let found = match cached {
            Some(found) => found,
            None => {
                let sol =
                    solve_waveguide(&self.spec, &self.materials, label.pol, lambda_nm, self.mode_count, &self.options)?;
                let found: Vec<(ModeLabel, f64)> = sol.modes.iter().map(|m| (m.label, m.n_eff)).collect();
                self.cache.lock().unwrap().insert(key, found.clone());
                found
            }
        };
        found
            .iter()
            .find(|(l, _)| *l == label)
            .map(|(_, n)| *n)
            .ok_or(Error::Tracking { label, wavelength_nm: lambda_nm })
    }
}

/// Overlap below which tracking falls back to the node-count label.
const TRACK_OVERLAP: f64 = 0.5;

/// Per-label `dn` as the mean of `n_eff - n_bulk` over `lambda_grid`, with the
/// largest deviation from that mean as residual.
///
/// V and H labels are solved at the grid wavelengths, S labels at half of
/// them. Each label is followed from one wavelength to the next by maximal
/// field overlap.
pub fn extract_corrections(
    spec: &WaveguideSpec,
    materials: &Materials,
    labels: &[ModeLabel],
    lambda_grid: &[f64],
    mode_count: usize,
    options: &SolverOptions,
) -> Result<GeometricCorrections> {
    if lambda_grid.is_empty() || labels.is_empty() {
        return Err(Error::Validation("need at least one label and one wavelength".into()));
    }
    if lambda_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Validation("wavelength grid must increase strictly".into()));
    }
    let window = [lambda_grid[0], *lambda_grid.last().unwrap()];
    let mut out = GeometricCorrections::new(window);
    for pol in Polarization::ALL {
        let wanted: Vec<ModeLabel> = labels.iter().copied().filter(|l| l.pol == pol).collect();
        if wanted.is_empty() {
            continue;
        }
        let scale = if pol == Polarization::S { 0.5 } else { 1.0 };
        let solves: Vec<(f64, Vec<ModeField>)> = lambda_grid
            .par_iter()
            .map(|&l| {
                let lambda = l * scale;
                solve_waveguide(spec, materials, pol, lambda, mode_count, options).map(|s| (lambda, s.modes))
            })
            .collect::<Result<_>>()?;
        for label in wanted {
            let track = track_label(label, &solves)?;
            let offsets: Vec<f64> = track
                .iter()
                .zip(&solves)
                .map(|(n, (lambda, _))| materials.bulk_index(pol, *lambda).map(|b| n - b))
                .collect::<Result<_>>()?;
            let mean = offsets.iter().sum::<f64>() / offsets.len() as f64;
            let residual = offsets.iter().map(|d| (d - mean).abs()).fold(0.0, f64::max);
            out.insert(label, mean, residual);
        }
        check_ordering(&out, pol);
    }
    Ok(out)
}

fn track_label(label: ModeLabel, solves: &[(f64, Vec<ModeField>)]) -> Result<Vec<f64>> {
    let mut track = Vec::with_capacity(solves.len());
    let mut prev: Option<&ModeField> = None;
    for (lambda, modes) in solves {
        let by_overlap = prev.and_then(|p| {
            modes
                .iter()
                .map(|m| (m, dominant_overlap(p, m)))
                .filter(|(_, o)| *o >= TRACK_OVERLAP)
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(m, _)| m)
        });
        let mode = by_overlap
            .or_else(|| modes.iter().find(|m| m.label == label))
            .ok_or(Error::Tracking { label, wavelength_nm: *lambda })?;
        if mode.label != label {
            log::debug!("{label} tracked onto a mode classified {} at {lambda} nm", mode.label);
        }
        track.push(mode.n_eff);
        prev = Some(mode);
    }
    Ok(track)
}

/// `|<a, b>|` of the dominant components, both normalized to unit norm.
fn dominant_overlap(a: &ModeField, b: &ModeField) -> f64 {
    if a.geometry != b.geometry {
        return 0.0;
    }
    let dot: f64 = a.dominant.iter().zip(&b.dominant).map(|(p, q)| p * q).sum();
    let na: f64 = a.dominant.iter().map(|p| p * p).sum();
    let nb: f64 = b.dominant.iter().map(|p| p * p).sum();
    (dot / (na * nb).sqrt()).abs()
}

fn check_ordering(c: &GeometricCorrections, pol: Polarization) {
    if let Ok(fund) = c.delta_n(ModeLabel::fundamental(pol)) {
        for label in c.labels(pol) {
            let dn = c.entries[&label].delta_n;
            if label != ModeLabel::fundamental(pol) && dn >= fund {
                log::warn!("{label} has a correction {dn:.6} not below the fundamental's {fund:.6}");
            }
        }
    }
}
