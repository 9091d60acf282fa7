//! Transverse refractive-index distribution of the ion-exchanged guide.
//!
//! Coordinates: `x` runs along the top surface and is centred on the guide,
//! `y` is depth into the crystal. Air fills `y < 0`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Polarization;
use crate::material::{CrystalAxis, Materials};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum LateralProfile {
    /// `g = 1` for `|x| <= w/2`, 0 outside.
    Step,
    /// Error-function edges of width `edge_um` on both sides.
    SmoothedStep { edge_um: f64 },
    /// `g = 1` across the whole box (planar guide).
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepthProfile {
    /// `h(y) = erfc(y / d)`.
    Erfc,
    /// `h(y) = 1` for `y <= d`, 0 below.
    Step,
}

/// Surface index increase per crystal axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexIncrease {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl IndexIncrease {
    pub fn uniform(dn: f64) -> Self {
        IndexIncrease { x: dn, y: dn, z: dn }
    }

    pub fn get(&self, axis: CrystalAxis) -> f64 {
        match axis {
            CrystalAxis::X => self.x,
            CrystalAxis::Y => self.y,
            CrystalAxis::Z => self.z,
        }
    }
}

fn default_depth_profile() -> DepthProfile {
    DepthProfile::Erfc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveguideSpec {
    pub width_um: f64,
    pub depth_um: f64,
    pub delta_n: IndexIncrease,
    pub lateral: LateralProfile,
    #[serde(default = "default_depth_profile")]
    pub depth_profile: DepthProfile,
    pub poling_period_um: f64,
    pub length_mm: f64,
    /// Box half-width `X`: the box spans `[-X, X]`.
    pub half_width_um: f64,
    /// Box depth `Y` below the surface.
    pub box_depth_um: f64,
    /// Thickness of the air layer kept above the surface.
    pub air_um: f64,
    pub hx_um: f64,
    pub hy_um: f64,
}

impl Default for WaveguideSpec {
    fn default() -> Self {
        WaveguideSpec {
            width_um: 4.0,
            depth_um: 6.0,
            delta_n: IndexIncrease { x: 0.005, y: 0.008, z: 0.012 },
            lateral: LateralProfile::Step,
            depth_profile: DepthProfile::Erfc,
            poling_period_um: 9.3,
            length_mm: 4.8,
            half_width_um: 8.0,
            box_depth_um: 18.0,
            air_um: 1.0,
            hx_um: 0.1,
            hy_um: 0.1,
        }
    }
}

/// Number of whole steps in `span`, or an error if `span` is not a multiple.
fn whole_steps(span: f64, step: f64, what: &str) -> Result<usize> {
    let k = span / step;
    let r = k.round();
    if (k - r).abs() > 1e-6 || r < 1.0 {
        return Err(Error::Validation(format!(
            "{what} ({span} um) must be a whole multiple of the grid step {step} um"
        )));
    }
    Ok(r as usize)
}

impl WaveguideSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("width_um", self.width_um),
            ("depth_um", self.depth_um),
            ("poling_period_um", self.poling_period_um),
            ("length_mm", self.length_mm),
            ("half_width_um", self.half_width_um),
            ("box_depth_um", self.box_depth_um),
            ("air_um", self.air_um),
            ("hx_um", self.hx_um),
            ("hy_um", self.hy_um),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("{name} must be positive, got {v}")));
            }
        }
        for (axis, dn) in [("x", self.delta_n.x), ("y", self.delta_n.y), ("z", self.delta_n.z)] {
            if !(dn >= 0.0 && dn.is_finite()) {
                return Err(Error::Validation(format!("delta_n.{axis} must be >= 0, got {dn}")));
            }
        }
        if let LateralProfile::SmoothedStep { edge_um } = self.lateral {
            if !(edge_um > 0.0 && edge_um.is_finite()) {
                return Err(Error::Validation(format!("edge_um must be positive, got {edge_um}")));
            }
        }
        whole_steps(self.half_width_um, self.hx_um, "half_width_um")?;
        whole_steps(self.box_depth_um, self.hy_um, "box_depth_um")?;
        whole_steps(self.air_um, self.hy_um, "air_um")?;
        if self.half_width_um < self.width_um {
            log::warn!("box half-width {} um is smaller than the guide width {} um", self.half_width_um, self.width_um);
        }
        if self.box_depth_um < 3.0 * self.depth_um {
            log::warn!(
                "box depth {} um is less than three exchange depths ({} um)",
                self.box_depth_um,
                3.0 * self.depth_um
            );
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<GridGeometry> {
        self.validate()?;
        let half = whole_steps(self.half_width_um, self.hx_um, "half_width_um")?;
        let below = whole_steps(self.box_depth_um, self.hy_um, "box_depth_um")?;
        let above = whole_steps(self.air_um, self.hy_um, "air_um")?;
        Ok(GridGeometry {
            hx: self.hx_um,
            hy: self.hy_um,
            nx: 2 * half + 1,
            ny: above + below + 1,
            ix0: -(half as i64),
            jy0: -(above as i64),
        })
    }

    /// Same waveguide with both grid steps divided by `factor`.
    pub fn refined(&self, factor: f64) -> Self {
        WaveguideSpec { hx_um: self.hx_um / factor, hy_um: self.hy_um / factor, ..self.clone() }
    }

    fn lateral_factor(&self, x: f64) -> f64 {
        let half = 0.5 * self.width_um;
        match self.lateral {
            LateralProfile::Step => step(half - x.abs()),
            LateralProfile::SmoothedStep { edge_um } => {
                0.5 * (libm::erf((x + half) / edge_um) - libm::erf((x - half) / edge_um))
            }
            LateralProfile::Uniform => 1.0,
        }
    }

    fn depth_factor(&self, y: f64) -> f64 {
        match self.depth_profile {
            DepthProfile::Erfc => libm::erfc(y / self.depth_um),
            DepthProfile::Step => step(self.depth_um - y),
        }
    }
}

/// Unit step of the signed distance inside an edge; a node on the edge
/// takes the mean of the two sides.
fn step(inside: f64) -> f64 {
    if inside.abs() <= 1e-9 {
        0.5
    } else if inside > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Uniform node lattice. Node `(i, j)` sits at `x = (ix0 + i) hx`,
/// `y = (jy0 + j) hy`; the outermost rows and columns are the box edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub hx: f64,
    pub hy: f64,
    pub nx: usize,
    pub ny: usize,
    pub ix0: i64,
    pub jy0: i64,
}

impl GridGeometry {
    pub fn x(&self, i: usize) -> f64 {
        (self.ix0 + i as i64) as f64 * self.hx
    }

    pub fn y(&self, j: usize) -> f64 {
        (self.jy0 + j as i64) as f64 * self.hy
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major index, rows of constant `y`.
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    /// Column whose `x` is closest to the given coordinate.
    pub fn nearest_i(&self, x: f64) -> usize {
        let k = (x / self.hx).round() as i64 - self.ix0;
        k.clamp(0, self.nx as i64 - 1) as usize
    }

    pub fn nearest_j(&self, y: f64) -> usize {
        let k = (y / self.hy).round() as i64 - self.jy0;
        k.clamp(0, self.ny as i64 - 1) as usize
    }

    /// Whether the lattice is mirror symmetric about `x = 0`.
    pub fn is_x_symmetric(&self) -> bool {
        self.ix0 * 2 + self.nx as i64 - 1 == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexGrid {
    pub geometry: GridGeometry,
    pub values: Vec<f64>,
    pub axis: CrystalAxis,
    pub wavelength_nm: f64,
    /// Index of the unmodified crystal at this wavelength.
    pub cladding_index: f64,
}

impl IndexGrid {
    pub fn from_fn(
        geometry: GridGeometry,
        axis: CrystalAxis,
        wavelength_nm: f64,
        cladding_index: f64,
        f: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let mut values = Vec::with_capacity(geometry.len());
        for j in 0..geometry.ny {
            for i in 0..geometry.nx {
                values.push(f(geometry.x(i), geometry.y(j)));
            }
        }
        IndexGrid { geometry, values, axis, wavelength_nm, cladding_index }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.geometry.idx(i, j)]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Build `n(x, y)` for the field `pol` at `wavelength_nm`.
pub fn index_profile(
    spec: &WaveguideSpec,
    materials: &Materials,
    pol: Polarization,
    wavelength_nm: f64,
) -> Result<IndexGrid> {
    let geometry = spec.geometry()?;
    let axis = materials.axes.axis(pol);
    let bulk = materials.model.refractive_index(axis, wavelength_nm)?;
    let dn = spec.delta_n.get(axis);
    // separable profile: tabulate the two factors once
    let gx: Vec<f64> = (0..geometry.nx).map(|i| spec.lateral_factor(geometry.x(i))).collect();
    let hy: Vec<f64> = (0..geometry.ny).map(|j| spec.depth_factor(geometry.y(j))).collect();
    let mut values = Vec::with_capacity(geometry.len());
    for (j, h) in hy.iter().enumerate() {
        let y = geometry.y(j);
        for g in &gx {
            values.push(if y < 0.0 { 1.0 } else { bulk + dn * g * h });
        }
    }
    Ok(IndexGrid { geometry, values, axis, wavelength_nm, cladding_index: bulk })
}

/// Write `x_um,y_um,n` rows, one per node, in row-major order.
pub fn render_profile<W: Write>(grid: &IndexGrid, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let g = &grid.geometry;
    let err = |e: csv::Error| Error::Validation(format!("csv write: {e}"));
    w.write_record(["x_um", "y_um", "n"]).map_err(err)?;
    for j in 0..g.ny {
        for i in 0..g.nx {
            w.write_record([g.x(i).to_string(), g.y(j).to_string(), grid.at(i, j).to_string()]).map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::Validation(format!("csv write: {e}")))?;
    Ok(())
}

/// Parsed profile dump: node coordinates and values in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileTable {
    pub x_um: Vec<f64>,
    pub y_um: Vec<f64>,
    pub n: Vec<f64>,
}

pub fn read_profile<R: Read>(input: R) -> Result<ProfileTable> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = r.headers().map_err(|e| Error::Parse(format!("profile csv: {e}")))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["x_um", "y_um", "n"] {
        return Err(Error::Parse("profile csv: expected header x_um,y_um,n".into()));
    }
    let mut t = ProfileTable { x_um: Vec::new(), y_um: Vec::new(), n: Vec::new() };
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Parse(format!("profile csv: {e}")))?;
        if rec.len() != 3 {
            return Err(Error::Parse("profile csv: expected 3 columns".into()));
        }
        let num = |k: usize| -> Result<f64> {
            let v: f64 = rec[k].parse().map_err(|_| Error::Parse(format!("profile csv: bad number `{}`", &rec[k])))?;
            if !v.is_finite() {
                return Err(Error::Parse("profile csv: non-finite value".into()));
            }
            Ok(v)
        };
        t.x_um.push(num(0)?);
        t.y_um.push(num(1)?);
        t.n.push(num(2)?);
    }
    Ok(t)
}
