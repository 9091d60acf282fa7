//! Full-vector finite-difference mode solver.
//!
//! Unknowns are the transverse electric field components `Ex` (along the
//! surface) and `Ey` (into the depth) on the lattice nodes of an
//! [`IndexGrid`]. With `eps = n^2` the discretized operator is
//!
//! ```text
//! d/dx[(1/eps) d/dx(eps Ex)] + d2Ex/dy2 + k0^2 eps Ex + d/dx[(1/eps) d/dy(eps Ey)] - d2Ey/dxdy = beta^2 Ex
//! d/dy[(1/eps) d/dy(eps Ey)] + d2Ey/dx2 + k0^2 eps Ey + d/dy[(1/eps) d/dx(eps Ex)] - d2Ex/dydx = beta^2 Ey
//! ```
//!
//! with half-node permittivities taken as arithmetic means. Eigenpairs near
//! `(k0 n_max)^2` are found by shift-invert Arnoldi.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::eigen::{eigs_near, ArnoldiOptions};
use crate::error::{Error, Result};
use crate::label::{ModeLabel, Polarization};
use crate::material::Materials;
use crate::profile::{index_profile, GridGeometry, IndexGrid, WaveguideSpec};
use crate::sparse::{grid_dissection, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LateralBoundary {
    /// Field vanishes on the box edges `x = +-X`.
    #[default]
    ZeroField,
    /// The lattice wraps along `x`; the first and last columns are neighbours.
    Periodic,
}

#[derive(Debug, Clone, Default)]
pub struct SolverOptions {
    pub lateral: LateralBoundary,
    pub arnoldi: ArnoldiOptions,
}

/// Energy fraction below which a mode is reported as strongly hybrid.
const HYBRID_WARNING: f64 = 0.9;
/// Relative amplitude below which samples are ignored when counting nodes.
const NODE_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ModeField {
    pub label: ModeLabel,
    pub wavelength_nm: f64,
    pub n_eff: f64,
    pub geometry: GridGeometry,
    /// `Ey` for vertically polarized modes, `Ex` otherwise.
    pub dominant: Vec<f64>,
    pub minor: Vec<f64>,
    /// True when `dominant` holds `Ey`.
    pub vertical: bool,
    pub normalized: bool,
}

impl ModeField {
    /// Discrete `sum (|dominant|^2 + |minor|^2) dA`.
    pub fn energy(&self) -> f64 {
        let s: f64 = self.dominant.iter().zip(&self.minor).map(|(d, m)| d * d + m * m).sum();
        s * self.geometry.cell_area()
    }

    /// Share of the field energy carried by the dominant component.
    pub fn dominant_fraction(&self) -> f64 {
        let d: f64 = self.dominant.iter().map(|v| v * v).sum();
        let m: f64 = self.minor.iter().map(|v| v * v).sum();
        if d + m == 0.0 {
            0.0
        } else {
            d / (d + m)
        }
    }

    /// Discrete inner product of the full transverse fields.
    pub fn inner(&self, other: &ModeField) -> Result<f64> {
        if self.geometry != other.geometry {
            return Err(Error::GridMismatch);
        }
        let (ax, ay) = self.components();
        let (bx, by) = other.components();
        let s: f64 = ax.iter().zip(bx).map(|(p, q)| p * q).chain(ay.iter().zip(by).map(|(p, q)| p * q)).sum();
        Ok(s * self.geometry.cell_area())
    }

    /// `(Ex, Ey)`.
    pub fn components(&self) -> (&[f64], &[f64]) {
        if self.vertical {
            (&self.minor, &self.dominant)
        } else {
            (&self.dominant, &self.minor)
        }
    }

    pub fn check_normalized(&self) -> Result<()> {
        if self.normalized && (self.energy() - 1.0).abs() <= 1e-10 {
            Ok(())
        } else {
            Err(Error::NotNormalized(self.label))
        }
    }
}

/// Outcome of a solve: the guided modes found plus human-readable notes.
#[derive(Debug, Clone, Default)]
pub struct ModeSolution {
    pub modes: Vec<ModeField>,
    pub notes: Vec<String>,
}

struct Lattice {
    geometry: GridGeometry,
    periodic: bool,
    /// first unknown column and row
    i0: usize,
    j0: usize,
    mx: usize,
    my: usize,
}

impl Lattice {
    fn new(geometry: GridGeometry, lateral: LateralBoundary) -> Result<Self> {
        let periodic = lateral == LateralBoundary::Periodic;
        let (i0, mx) = if periodic { (0, geometry.nx) } else { (1, geometry.nx.saturating_sub(2)) };
        let my = geometry.ny.saturating_sub(2);
        if mx == 0 || my == 0 {
            return Err(Error::Validation("grid has no interior nodes".into()));
        }
        Ok(Lattice { geometry, periodic, i0, j0: 1, mx, my })
    }

    fn unknowns(&self) -> usize {
        2 * self.mx * self.my
    }

    /// Variable index of component `c` (0 = Ex, 1 = Ey) at grid node `(i, j)`,
    /// or `None` on a zero-field edge.
    fn var(&self, i: i64, j: i64, c: usize) -> Option<usize> {
        let nx = self.geometry.nx as i64;
        let i = if self.periodic { i.rem_euclid(nx) } else { i };
        let (li, lj) = (i - self.i0 as i64, j - self.j0 as i64);
        if li < 0 || lj < 0 || li >= self.mx as i64 || lj >= self.my as i64 {
            return None;
        }
        Some((lj as usize * self.mx + li as usize) * 2 + c)
    }

    /// Grid node for an unknown lattice index.
    fn node(&self, k: usize) -> (usize, usize) {
        (self.i0 + k % self.mx, self.j0 + k / self.mx)
    }
}

/// Row on the superstrate interface `y = 0` when the grid has rows above
/// it. Nodes there see half superstrate and half crystal.
fn surface_row(grid: &IndexGrid) -> Option<usize> {
    let g = &grid.geometry;
    if g.jy0 >= 0 || g.jy0 + g.ny as i64 <= 1 {
        return None;
    }
    Some((-g.jy0) as usize)
}

fn assemble(grid: &IndexGrid, lat: &Lattice, k0: f64) -> CsrMatrix {
    let g = &grid.geometry;
    let nx = g.nx as i64;
    let surface = surface_row(grid).map(|j| j as i64);
    let raw = |i: i64, j: i64| -> f64 {
        let i = if lat.periodic { i.rem_euclid(nx) } else { i };
        let v = grid.values[g.idx(i as usize, j as usize)];
        v * v
    };
    // surface nodes: arithmetic mean for the tangential component,
    // harmonic mean for the normal one
    let eps = |i: i64, j: i64| -> f64 {
        let v = raw(i, j);
        if Some(j) == surface {
            0.5 * (raw(i, j - 1) + v)
        } else {
            v
        }
    };
    let eps_n = |i: i64, j: i64| -> f64 {
        let v = raw(i, j);
        if Some(j) == surface {
            let a = raw(i, j - 1);
            2.0 * v * a / (v + a)
        } else {
            v
        }
    };
    // permittivity half way between rows j and j + 1
    let eps_half_y = |i: i64, j: i64| -> f64 {
        if Some(j + 1) == surface {
            raw(i, j)
        } else {
            0.5 * (raw(i, j) + raw(i, j + 1))
        }
    };
    let (hx2, hy2, hxy4) = (g.hx * g.hx, g.hy * g.hy, 4.0 * g.hx * g.hy);
    let k02 = k0 * k0;
    let mut e: Vec<(usize, usize, f64)> = Vec::with_capacity(lat.unknowns() * 11);

    for k in 0..lat.mx * lat.my {
        let (i, j) = lat.node(k);
        let (i, j) = (i as i64, j as i64);
        let ex = lat.var(i, j, 0).unwrap();
        let ey = lat.var(i, j, 1).unwrap();
        let e0 = eps(i, j);
        let (exp_, exm) = (eps(i + 1, j), eps(i - 1, j));
        let (eyp, eym) = (eps(i, j + 1), eps(i, j - 1));
        let (ax_p, ax_m) = (0.5 * (e0 + exp_), 0.5 * (e0 + exm));
        let (ay_p, ay_m) = (eps_half_y(i, j), eps_half_y(i, j - 1));
        let n0 = eps_n(i, j);
        let mut push = |row: usize, col: Option<usize>, v: f64| {
            if let Some(c) = col {
                if v != 0.0 || c == row {
                    e.push((row, c, v));
                }
            }
        };

        // Ex row: Pxx
        push(ex, Some(ex), -e0 * (1.0 / ax_p + 1.0 / ax_m) / hx2 - 2.0 / hy2 + k02 * e0);
        push(ex, lat.var(i + 1, j, 0), exp_ / ax_p / hx2);
        push(ex, lat.var(i - 1, j, 0), exm / ax_m / hx2);
        push(ex, lat.var(i, j + 1, 0), 1.0 / hy2);
        push(ex, lat.var(i, j - 1, 0), 1.0 / hy2);
        // Ex row: Pxy
        push(ex, lat.var(i + 1, j + 1, 1), (eps(i + 1, j + 1) / exp_ - 1.0) / hxy4);
        push(ex, lat.var(i + 1, j - 1, 1), -(eps(i + 1, j - 1) / exp_ - 1.0) / hxy4);
        push(ex, lat.var(i - 1, j + 1, 1), -(eps(i - 1, j + 1) / exm - 1.0) / hxy4);
        push(ex, lat.var(i - 1, j - 1, 1), (eps(i - 1, j - 1) / exm - 1.0) / hxy4);

        // Ey row: Pyy
        push(ey, Some(ey), -n0 * (1.0 / ay_p + 1.0 / ay_m) / hy2 - 2.0 / hx2 + k02 * n0);
        push(ey, lat.var(i, j + 1, 1), eps_n(i, j + 1) / ay_p / hy2);
        push(ey, lat.var(i, j - 1, 1), eps_n(i, j - 1) / ay_m / hy2);
        push(ey, lat.var(i + 1, j, 1), 1.0 / hx2);
        push(ey, lat.var(i - 1, j, 1), 1.0 / hx2);
        // Ey row: Pyx
        push(ey, lat.var(i + 1, j + 1, 0), (eps(i + 1, j + 1) / eyp - 1.0) / hxy4);
        push(ey, lat.var(i - 1, j + 1, 0), -(eps(i - 1, j + 1) / eyp - 1.0) / hxy4);
        push(ey, lat.var(i + 1, j - 1, 0), -(eps(i + 1, j - 1) / eym - 1.0) / hxy4);
        push(ey, lat.var(i - 1, j - 1, 0), (eps(i - 1, j - 1) / eym - 1.0) / hxy4);
    }
    CsrMatrix::from_triplets(lat.unknowns(), e)
}

/// Guided modes of `grid` on the polarization branch of `pol`.
///
/// `vertical` selects the branch whose dominant component is `Ey`.
/// Returns up to `count` modes sorted by decreasing effective index.
pub fn solve_modes(
    grid: &IndexGrid,
    pol: Polarization,
    vertical: bool,
    count: usize,
    opts: &SolverOptions,
) -> Result<ModeSolution> {
    if count == 0 {
        return Err(Error::Validation("mode count must be at least 1".into()));
    }
    let lat = Lattice::new(grid.geometry, opts.lateral)?;
    let k0 = 2.0 * std::f64::consts::PI / (grid.wavelength_nm * 1e-3);
    let a = assemble(grid, &lat, k0);
    let tree = grid_dissection(lat.mx, lat.my, 2, lat.periodic);
    let n_max = grid.max();
    let sigma = (k0 * n_max).powi(2);
    let floor = (k0 * grid.cladding_index).powi(2);

    let mut notes = Vec::new();
    let mut nev = 2 * count + 4;
    let mut kept = Vec::new();
    for attempt in 0..3 {
        let pairs = eigs_near(&a, sigma, nev, floor, &tree, &opts.arnoldi)?;
        let guided_total = pairs.len();
        kept = pairs
            .into_iter()
            .map(|p| (p.value.sqrt() / k0, p.vector))
            .filter(|(n_eff, _)| *n_eff > grid.cladding_index)
            .filter_map(|(n_eff, v)| {
                let mode = build_field(grid, &lat, pol, n_eff, &v);
                (mode.vertical == vertical).then_some(mode)
            })
            .collect::<Vec<_>>();
        if kept.len() >= count || guided_total < nev || attempt == 2 {
            break;
        }
        nev *= 2;
    }

    if kept.is_empty() {
        notes.push(format!(
            "no guided {pol} mode: every effective index is at or below the cladding index {:.6}",
            grid.cladding_index
        ));
    }
    let mut modes: Vec<ModeField> = Vec::with_capacity(kept.len());
    for mut mode in kept {
        mode.label = classify_mode(&mode)?;
        let frac = mode.dominant_fraction();
        if frac < HYBRID_WARNING {
            log::warn!("mode {} carries only {:.1}% in its dominant component", mode.label, 100.0 * frac);
            notes.push(format!("{} is strongly hybrid ({:.1}% dominant)", mode.label, 100.0 * frac));
        }
        if modes.iter().any(|m| m.label == mode.label) {
            notes.push(format!("dropped a second mode labelled {} (n_eff {:.7})", mode.label, mode.n_eff));
            continue;
        }
        modes.push(mode);
    }
    modes.sort_by(|p, q| q.n_eff.total_cmp(&p.n_eff));
    modes.truncate(count);
    Ok(ModeSolution { modes, notes })
}

/// Build the index grid for `spec` and solve for the modes of `pol`.
pub fn solve_waveguide(
    spec: &WaveguideSpec,
    materials: &Materials,
    pol: Polarization,
    wavelength_nm: f64,
    count: usize,
    opts: &SolverOptions,
) -> Result<ModeSolution> {
    let grid = index_profile(spec, materials, pol, wavelength_nm)?;
    solve_modes(&grid, pol, materials.axes.is_vertical(pol), count, opts)
}

fn build_field(grid: &IndexGrid, lat: &Lattice, pol: Polarization, n_eff: f64, v: &[f64]) -> ModeField {
    let g = grid.geometry;
    let mut ex = vec![0.0; g.len()];
    let mut ey = vec![0.0; g.len()];
    for k in 0..lat.mx * lat.my {
        let (i, j) = lat.node(k);
        ex[g.idx(i, j)] = v[2 * k];
        ey[g.idx(i, j)] = v[2 * k + 1];
    }
    let sx: f64 = ex.iter().map(|a| a * a).sum();
    let sy: f64 = ey.iter().map(|a| a * a).sum();
    let vertical = sy > sx;
    let (mut dominant, mut minor) = if vertical { (ey, ex) } else { (ex, ey) };
    let scale = ((sx + sy) * g.cell_area()).sqrt();
    // peak of the dominant component positive; mirror-image lobes tie, so
    // take the first sample within a relative 1e-6 of the largest magnitude
    let amax = dominant.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let peak = dominant.iter().copied().find(|v| v.abs() >= amax * (1.0 - 1e-6)).unwrap_or(0.0);
    let s = if peak < 0.0 { -1.0 / scale } else { 1.0 / scale };
    dominant.iter_mut().for_each(|a| *a *= s);
    minor.iter_mut().for_each(|a| *a *= s);
    ModeField {
        label: ModeLabel::fundamental(pol),
        wavelength_nm: grid.wavelength_nm,
        n_eff,
        geometry: g,
        dominant,
        minor,
        vertical,
        normalized: true,
    }
}

fn count_sign_changes(samples: impl Iterator<Item = f64>, threshold: f64) -> u32 {
    let mut last: Option<bool> = None;
    let mut changes = 0;
    for v in samples.filter(|v| v.abs() > threshold) {
        let pos = v > 0.0;
        if let Some(prev) = last {
            if prev != pos {
                changes += 1;
            }
        }
        last = Some(pos);
    }
    changes
}

/// Node counts of the dominant component along cuts through the intensity
/// centroid. A cut that runs along a nodal line (its largest sample below a
/// tenth of the peak) is moved to pass through the peak instead.
pub fn classify_mode(mode: &ModeField) -> Result<ModeLabel> {
    let g = mode.geometry;
    let u = &mode.dominant;
    let (mut peak_k, mut peak) = (0, 0.0f64);
    for (k, v) in u.iter().enumerate() {
        if v.abs() > peak {
            peak = v.abs();
            peak_k = k;
        }
    }
    if peak == 0.0 || !peak.is_finite() {
        return Err(Error::DegenerateField);
    }
    let (mut w, mut wx, mut wy) = (0.0, 0.0, 0.0);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.idx(i, j);
            let p = u[k] * u[k] + mode.minor.get(k).map_or(0.0, |m| m * m);
            w += p;
            wx += p * g.x(i);
            wy += p * g.y(j);
        }
    }
    let (ic, jc) = (g.nearest_i(wx / w), g.nearest_j(wy / w));
    let (ip, jp) = (peak_k % g.nx, peak_k / g.nx);
    let threshold = NODE_THRESHOLD * peak;

    let row_max = |j: usize| (0..g.nx).map(|i| u[g.idx(i, j)].abs()).fold(0.0, f64::max);
    let col_max = |i: usize| (0..g.ny).map(|j| u[g.idx(i, j)].abs()).fold(0.0, f64::max);
    let row = if row_max(jc) >= 0.1 * peak { jc } else { jp };
    let col = if col_max(ic) >= 0.1 * peak { ic } else { ip };
    let i_nodes = count_sign_changes((0..g.nx).map(|i| u[g.idx(i, row)]), threshold);
    let j_nodes = count_sign_changes((0..g.ny).map(|j| u[g.idx(col, j)]), threshold);
    Ok(ModeLabel::new(i_nodes, j_nodes, mode.label.pol))
}

/// `|dominant|^2 + |minor|^2` per node, scaled to a peak of 1.
pub fn mode_intensity_image(mode: &ModeField) -> Vec<f64> {
    let mut img: Vec<f64> = mode.dominant.iter().zip(&mode.minor).map(|(d, m)| d * d + m * m).collect();
    let peak = img.iter().copied().fold(0.0, f64::max);
    if peak > 0.0 {
        img.iter_mut().for_each(|v| *v /= peak);
    }
    img
}

/// Serialized mode: fields row-major, rows of constant `y`, `x` fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeDocument {
    pub schema_version: u32,
    pub label: ModeLabel,
    pub wavelength_nm: f64,
    pub n_eff: f64,
    pub geometry: GridGeometry,
    pub ordering: String,
    pub dominant_component: String,
    pub dominant: Vec<f64>,
    pub minor: Vec<f64>,
}

pub const MODE_ORDERING: &str = "row-major; rows of constant y from top to bottom; x increasing within a row";

impl From<&ModeField> for ModeDocument {
    fn from(m: &ModeField) -> Self {
        ModeDocument {
            schema_version: 1,
            label: m.label,
            wavelength_nm: m.wavelength_nm,
            n_eff: m.n_eff,
            geometry: m.geometry,
            ordering: MODE_ORDERING.to_string(),
            dominant_component: if m.vertical { "Ey" } else { "Ex" }.to_string(),
            dominant: m.dominant.clone(),
            minor: m.minor.clone(),
        }
    }
}

impl ModeDocument {
    pub fn into_mode(self) -> Result<ModeField> {
        if self.schema_version != 1 {
            return Err(Error::Parse(format!("mode document: unsupported schema_version {}", self.schema_version)));
        }
        let n = self.geometry.nx.checked_mul(self.geometry.ny);
        if n != Some(self.dominant.len()) || self.dominant.len() != self.minor.len() {
            return Err(Error::Parse("mode document: field length does not match geometry".into()));
        }
        if !(self.geometry.hx > 0.0 && self.geometry.hy > 0.0) {
            return Err(Error::Parse("mode document: grid steps must be positive".into()));
        }
        let vertical = match self.dominant_component.as_str() {
            "Ey" => true,
            "Ex" => false,
            other => return Err(Error::Parse(format!("mode document: unknown component `{other}`"))),
        };
        let mut mode = ModeField {
            label: self.label,
            wavelength_nm: self.wavelength_nm,
            n_eff: self.n_eff,
            geometry: self.geometry,
            dominant: self.dominant,
            minor: self.minor,
            vertical,
            normalized: false,
        };
        mode.normalized = (mode.energy() - 1.0).abs() <= 1e-10;
        Ok(mode)
    }
}

pub fn parse_mode_document(text: &str) -> Result<ModeField> {
    let doc: ModeDocument = serde_json::from_str(text).map_err(|e| Error::Parse(format!("mode document: {e}")))?;
    doc.into_mode()
}

/// 8-bit binary PGM of a peak-normalized image, top row first.
pub fn write_pgm<W: Write>(geometry: &GridGeometry, image: &[f64], mut out: W) -> std::io::Result<()> {
    write!(out, "P5\n{} {}\n255\n", geometry.nx, geometry.ny)?;
    let bytes: Vec<u8> = image.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    out.write_all(&bytes)
}

/// CSV `x_um,y_um,intensity`.
pub fn write_image_csv<W: Write>(geometry: &GridGeometry, image: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Validation(format!("csv write: {e}"));
    w.write_record(["x_um", "y_um", "intensity"]).map_err(err)?;
    for j in 0..geometry.ny {
        for i in 0..geometry.nx {
            w.write_record([
                geometry.x(i).to_string(),
                geometry.y(j).to_string(),
                image[geometry.idx(i, j)].to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::Validation(format!("csv write: {e}")))
}
