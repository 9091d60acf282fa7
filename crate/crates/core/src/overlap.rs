//! Transverse overlap of mode triplets and the normalized efficiency table.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::label::{ModeLabel, Polarization, Triplet};
use crate::material::Materials;
use crate::modes::{solve_waveguide, ModeField, SolverOptions};
use crate::profile::{GridGeometry, WaveguideSpec};

/// Signed overlap and its magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Overlap {
    pub signed: f64,
    pub magnitude: f64,
}

fn trapezoid_weight(g: &GridGeometry, i: usize, j: usize) -> f64 {
    let wx = if i == 0 || i + 1 == g.nx { 0.5 } else { 1.0 };
    let wy = if j == 0 || j + 1 == g.ny { 0.5 } else { 1.0 };
    wx * wy
}

/// `O = integral of u_V u_H u_S dA` over the dominant components.
pub fn overlap_integral(v: &ModeField, h: &ModeField, s: &ModeField) -> Result<Overlap> {
    for m in [v, h, s] {
        if m.check_normalized().is_err() {
            return Err(Error::Contract(format!("overlap of mode {} needs a normalized field", m.label)));
        }
    }
    if v.geometry != h.geometry || v.geometry != s.geometry {
        return Err(Error::GridMismatch);
    }
    let g = v.geometry;
    let mut sum = 0.0;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.idx(i, j);
            sum += trapezoid_weight(&g, i, j) * v.dominant[k] * h.dominant[k] * s.dominant[k];
        }
    }
    let signed = sum * g.cell_area();
    Ok(Overlap { signed, magnitude: signed.abs() })
}

/// Normalized fields for a set of labels, all on one grid.
#[derive(Debug, Clone, Default)]
pub struct ModeBank {
    pub modes: BTreeMap<ModeLabel, ModeField>,
}

impl ModeBank {
    pub fn from_modes(modes: impl IntoIterator<Item = ModeField>) -> Self {
        ModeBank { modes: modes.into_iter().map(|m| (m.label, m)).collect() }
    }

    pub fn get(&self, label: ModeLabel) -> Result<&ModeField> {
        self.modes.get(&label).ok_or(Error::UnknownLabel(label))
    }

    /// Solve every mode needed by `triplets`: fundamentals at `lambda_nm`,
    /// sum-frequency modes at `lambda_nm / 2`.
    pub fn solve(
        spec: &WaveguideSpec,
        materials: &Materials,
        triplets: &[Triplet],
        lambda_nm: f64,
        opts: &SolverOptions,
    ) -> Result<Self> {
        let mut wanted: BTreeMap<Polarization, Vec<ModeLabel>> = BTreeMap::new();
        for t in triplets {
            for l in t.labels() {
                let e = wanted.entry(l.pol).or_default();
                if !e.contains(&l) {
                    e.push(l);
                }
            }
        }
        let solved: Vec<Result<Vec<ModeField>>> = wanted
            .par_iter()
            .map(|(&pol, labels)| {
                let lambda = if pol == Polarization::S { 0.5 * lambda_nm } else { lambda_nm };
                let rank = labels.iter().map(|l| (l.i + 1) * (l.j + 1)).max().unwrap_or(1) as usize;
                let count = (labels.len() + 4).max(rank + 2);
                let sol = solve_waveguide(spec, materials, pol, lambda, count, opts)?;
                labels
                    .iter()
                    .map(|&l| {
                        sol.modes
                            .iter()
                            .find(|m| m.label == l)
                            .cloned()
                            .ok_or(Error::Tracking { label: l, wavelength_nm: lambda })
                    })
                    .collect()
            })
            .collect();
        let mut bank = ModeBank::default();
        for r in solved {
            for m in r? {
                bank.modes.insert(m.label, m);
            }
        }
        Ok(bank)
    }

    pub fn overlap(&self, t: &Triplet) -> Result<Overlap> {
        overlap_integral(self.get(t.v)?, self.get(t.h)?, self.get(t.s)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencyRow {
    pub triplet: Triplet,
    pub degenerate_wavelength_nm: f64,
    pub overlap: f64,
    /// `100 |O|^2 / |O_ref|^2`.
    pub calculated_eff: f64,
    pub measured_eff: Option<f64>,
}

/// Rows sorted by degenerate wavelength, normalized to the fundamental
/// triplet. `entries` holds `(triplet, overlap, degenerate wavelength)`.
pub fn efficiency_table(
    entries: &[(Triplet, Overlap, f64)],
    measured: &BTreeMap<Triplet, f64>,
) -> Result<Vec<EfficiencyRow>> {
    let reference = entries.iter().find(|(t, _, _)| *t == Triplet::fundamental()).ok_or_else(|| {
        Error::Contract(format!("efficiency table needs the reference triplet {}", Triplet::fundamental()))
    })?;
    let o_ref = reference.1.magnitude;
    if o_ref == 0.0 {
        return Err(Error::ZeroReference);
    }
    let mut rows: Vec<EfficiencyRow> = entries
        .iter()
        .map(|(t, o, lambda)| EfficiencyRow {
            triplet: *t,
            degenerate_wavelength_nm: *lambda,
            overlap: o.signed,
            calculated_eff: if *t == Triplet::fundamental() { 100.0 } else { 100.0 * (o.magnitude / o_ref).powi(2) },
            measured_eff: measured.get(t).copied(),
        })
        .collect();
    rows.sort_by(|a, b| {
        a.degenerate_wavelength_nm.total_cmp(&b.degenerate_wavelength_nm).then(a.triplet.cmp(&b.triplet))
    });
    for r in &rows {
        if r.calculated_eff > 100.0 {
            log::warn!("{} exceeds the reference efficiency ({:.3})", r.triplet, r.calculated_eff);
        }
    }
    Ok(rows)
}

/// Measured efficiencies, CSV `triplet,measured_eff`.
pub fn read_measured<R: std::io::Read>(input: R) -> Result<BTreeMap<Triplet, f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(input);
    let headers = rdr.headers().map_err(|e| Error::Parse(format!("measured table: {e}")))?.clone();
    if headers.len() != 2 || &headers[0] != "triplet" || &headers[1] != "measured_eff" {
        return Err(Error::Parse("measured table header must be `triplet,measured_eff`".into()));
    }
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(format!("measured table: {e}")))?;
        let t: Triplet = rec[0].parse()?;
        let v: f64 = rec[1].parse().map_err(|_| Error::Parse(format!("measured table: bad number `{}`", &rec[1])))?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Validation(format!("measured efficiency of {t} must be finite and >= 0")));
        }
        if out.insert(t, v).is_some() {
            return Err(Error::Parse(format!("measured table: duplicate {t}")));
        }
    }
    Ok(out)
}

pub fn write_efficiency_csv<W: Write>(rows: &[EfficiencyRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Validation(format!("csv: {e}"));
    w.write_record(["triplet", "degenerate_wavelength_nm", "calculated_eff", "measured_eff"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.triplet.to_string(),
            format!("{}", r.degenerate_wavelength_nm),
            format!("{}", r.calculated_eff),
            r.measured_eff.map(|m| m.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<efficiency table>", e))?;
    Ok(())
}
