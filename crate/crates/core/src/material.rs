//! Bulk chromatic dispersion of the nonlinear crystal.
//!
//! Coefficient sets are loaded from a TOML document (see `data/ktp.toml` for
//! the layout). Each principal axis carries
//!
//! ```text
//! n^2(lambda) = a + sum_k term_k(lambda)          lambda in um
//! ```
//!
//! with `pole` terms `b / (lambda^2 - c)`, `sellmeier` terms
//! `b lambda^2 / (lambda^2 - c)` and `ir` terms `-b lambda^2`. All public
//! wavelengths are vacuum wavelengths in nm.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Bound, Error, Result};
use crate::label::Polarization;

/// Speed of light in vacuum, m/s (exact).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Angular frequency in rad/s for a vacuum wavelength in nm.
pub fn angular_frequency(wavelength_nm: f64) -> f64 {
    2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / (wavelength_nm * 1e-9)
}

/// Vacuum wavelength in nm of the sum frequency of two fields.
pub fn sum_frequency_wavelength(lambda_a_nm: f64, lambda_b_nm: f64) -> f64 {
    1.0 / (1.0 / lambda_a_nm + 1.0 / lambda_b_nm)
}

const KTP_DATA: &str = include_str!("../data/ktp.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrystalAxis {
    X,
    Y,
    Z,
}

impl fmt::Display for CrystalAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CrystalAxis::X => "x",
            CrystalAxis::Y => "y",
            CrystalAxis::Z => "z",
        })
    }
}

impl FromStr for CrystalAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "x" | "X" => Ok(CrystalAxis::X),
            "y" | "Y" => Ok(CrystalAxis::Y),
            "z" | "Z" => Ok(CrystalAxis::Z),
            other => Err(Error::Parse(format!("unknown crystal axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Term {
    Pole { b: f64, c: f64 },
    Sellmeier { b: f64, c: f64 },
    Ir { b: f64 },
}

impl Term {
    /// Contribution to n^2 and its derivative with respect to lambda (um).
    fn eval(&self, l: f64) -> (f64, f64) {
        let l2 = l * l;
        match *self {
            Term::Pole { b, c } => {
                let den = l2 - c;
                (b / den, -2.0 * l * b / (den * den))
            }
            Term::Sellmeier { b, c } => {
                let den = l2 - c;
                (b * l2 / den, -2.0 * l * b * c / (den * den))
            }
            Term::Ir { b } => (-b * l2, -2.0 * b * l),
        }
    }

    fn pole_um2(&self) -> Option<f64> {
        match *self {
            Term::Pole { c, .. } | Term::Sellmeier { c, .. } => Some(c),
            Term::Ir { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisDispersion {
    pub id: CrystalAxis,
    pub a: f64,
    /// Validity window in nm, `[min, max]`.
    pub range_nm: [f64; 2],
    #[serde(default)]
    pub terms: Vec<Term>,
}

impl AxisDispersion {
    fn n_squared(&self, lambda_um: f64) -> (f64, f64) {
        self.terms.iter().fold((self.a, 0.0), |(v, d), t| {
            let (tv, td) = t.eval(lambda_um);
            (v + tv, d + td)
        })
    }

    fn validate(&self) -> Result<()> {
        let [lo, hi] = self.range_nm;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
            return Err(Error::Validation(format!(
                "axis {}: validity range [{lo}, {hi}] nm must satisfy 0 < min < max",
                self.id
            )));
        }
        let coeffs_finite = self.a.is_finite()
            && self.terms.iter().all(|t| match *t {
                Term::Pole { b, c } | Term::Sellmeier { b, c } => b.is_finite() && c.is_finite(),
                Term::Ir { b } => b.is_finite(),
            });
        if !coeffs_finite {
            return Err(Error::Validation(format!("axis {}: non-finite coefficient", self.id)));
        }
        let (l2lo, l2hi) = ((lo * 1e-3).powi(2), (hi * 1e-3).powi(2));
        if let Some(c) = self.terms.iter().filter_map(Term::pole_um2).find(|c| *c >= l2lo && *c <= l2hi) {
            return Err(Error::Validation(format!(
                "axis {}: resonance at {:.1} nm lies inside the validity range",
                self.id,
                c.sqrt() * 1e3
            )));
        }
        const SAMPLES: usize = 256;
        for k in 0..=SAMPLES {
            let l = lo + (hi - lo) * k as f64 / SAMPLES as f64;
            let (n2, _) = self.n_squared(l * 1e-3);
            if !(n2.is_finite() && n2 > 1.0) {
                return Err(Error::Validation(format!(
                    "axis {}: n^2 = {n2} at {l} nm; index must be real and > 1",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MaterialDoc {
    schema_version: u32,
    #[serde(default)]
    name: String,
    axis: Vec<AxisDispersion>,
}

/// Sellmeier-type dispersion for the three principal axes of a crystal.
#[derive(Debug, Clone, PartialEq)]
pub struct SellmeierModel {
    name: String,
    axes: [AxisDispersion; 3],
}

impl SellmeierModel {
    /// The bundled KTP coefficient set.
    pub fn ktp() -> Self {
        Self::from_toml_str(KTP_DATA).expect("bundled KTP data is valid")
    }

    /// A dispersionless material with the same index on every axis.
    pub fn constant(n: f64, range_nm: [f64; 2]) -> Result<Self> {
        let axis = |id| AxisDispersion { id, a: n * n, range_nm, terms: Vec::new() };
        Self::from_axes("constant", vec![axis(CrystalAxis::X), axis(CrystalAxis::Y), axis(CrystalAxis::Z)])
    }

    pub fn from_axes(name: &str, axes: Vec<AxisDispersion>) -> Result<Self> {
        let mut slots: [Option<AxisDispersion>; 3] = [None, None, None];
        for ax in axes {
            ax.validate()?;
            let k = axis_slot(ax.id);
            if slots[k].is_some() {
                return Err(Error::Validation(format!("axis {} defined twice", ax.id)));
            }
            slots[k] = Some(ax);
        }
        let [x, y, z] = slots;
        match (x, y, z) {
            (Some(x), Some(y), Some(z)) => Ok(SellmeierModel { name: name.to_string(), axes: [x, y, z] }),
            _ => Err(Error::Validation("coefficients required for all of x, y, z".into())),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let doc: MaterialDoc = toml::from_str(text).map_err(|e| Error::Parse(format!("material file: {e}")))?;
        if doc.schema_version != 1 {
            return Err(Error::Parse(format!("material file: unsupported schema_version {}", doc.schema_version)));
        }
        Self::from_axes(&doc.name, doc.axis)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        let doc = MaterialDoc { schema_version: 1, name: self.name.clone(), axis: self.axes.to_vec() };
        toml::to_string(&doc).expect("material document serializes")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn axis(&self, axis: CrystalAxis) -> &AxisDispersion {
        &self.axes[axis_slot(axis)]
    }

    pub fn validity_nm(&self, axis: CrystalAxis) -> [f64; 2] {
        self.axis(axis).range_nm
    }

    fn check_range(&self, axis: CrystalAxis, lambda_nm: f64, strict: bool) -> Result<()> {
        let [lo, hi] = self.axis(axis).range_nm;
        let what = || format!("{} axis {axis}", self.name);
        let below = if strict { lambda_nm <= lo } else { lambda_nm < lo };
        let above = if strict { lambda_nm >= hi } else { lambda_nm > hi };
        if below || lambda_nm.is_nan() {
            return Err(Error::OutOfRange {
                what: what(),
                wavelength_nm: lambda_nm,
                bound: Bound::Lower,
                limit_nm: lo,
            });
        }
        if above {
            return Err(Error::OutOfRange {
                what: what(),
                wavelength_nm: lambda_nm,
                bound: Bound::Upper,
                limit_nm: hi,
            });
        }
        Ok(())
    }

    /// Bulk refractive index along `axis` at vacuum wavelength `lambda_nm`.
    pub fn refractive_index(&self, axis: CrystalAxis, lambda_nm: f64) -> Result<f64> {
        self.check_range(axis, lambda_nm, false)?;
        Ok(self.axis(axis).n_squared(lambda_nm * 1e-3).0.sqrt())
    }

    /// `dn/dlambda` in 1/nm, from the analytic derivative of the formula.
    pub fn dn_dlambda(&self, axis: CrystalAxis, lambda_nm: f64) -> Result<f64> {
        self.check_range(axis, lambda_nm, false)?;
        let (n2, dn2) = self.axis(axis).n_squared(lambda_nm * 1e-3);
        // dn2 is per um
        Ok(dn2 / (2.0 * n2.sqrt()) * 1e-3)
    }

    /// Group index `n - lambda dn/dlambda`.
    pub fn group_index(&self, axis: CrystalAxis, lambda_nm: f64) -> Result<f64> {
        self.check_range(axis, lambda_nm, true)?;
        let n = self.refractive_index(axis, lambda_nm)?;
        Ok(n - lambda_nm * self.dn_dlambda(axis, lambda_nm)?)
    }

    /// Group index from a central difference of `refractive_index`.
    pub fn group_index_fd(&self, axis: CrystalAxis, lambda_nm: f64, step_nm: f64) -> Result<f64> {
        self.check_range(axis, lambda_nm, true)?;
        let n = self.refractive_index(axis, lambda_nm)?;
        let hi = self.refractive_index(axis, lambda_nm + step_nm)?;
        let lo = self.refractive_index(axis, lambda_nm - step_nm)?;
        Ok(n - lambda_nm * (hi - lo) / (2.0 * step_nm))
    }
}

fn axis_slot(axis: CrystalAxis) -> usize {
    match axis {
        CrystalAxis::X => 0,
        CrystalAxis::Y => 1,
        CrystalAxis::Z => 2,
    }
}

/// Which crystal axis each field is polarized along, and which axis is
/// normal to the top surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisMapping {
    pub v: CrystalAxis,
    pub h: CrystalAxis,
    pub s: CrystalAxis,
    pub surface_normal: CrystalAxis,
}

impl Default for AxisMapping {
    /// z-cut crystal, `z + y -> y` interaction.
    fn default() -> Self {
        AxisMapping { v: CrystalAxis::Z, h: CrystalAxis::Y, s: CrystalAxis::Y, surface_normal: CrystalAxis::Z }
    }
}

impl AxisMapping {
    pub fn axis(&self, pol: Polarization) -> CrystalAxis {
        match pol {
            Polarization::V => self.v,
            Polarization::H => self.h,
            Polarization::S => self.s,
        }
    }

    /// True when `pol` is polarized perpendicular to the top surface.
    pub fn is_vertical(&self, pol: Polarization) -> bool {
        self.axis(pol) == self.surface_normal
    }

    pub fn validate(&self) -> Result<()> {
        if self.v != self.surface_normal {
            return Err(Error::Validation(format!(
                "V must map to the surface-normal axis {}, got {}",
                self.surface_normal, self.v
            )));
        }
        if self.h == self.surface_normal {
            return Err(Error::Validation(format!("H must lie in the surface plane, got the normal axis {}", self.h)));
        }
        Ok(())
    }
}

/// A crystal together with the polarization-to-axis assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Materials {
    pub model: SellmeierModel,
    pub axes: AxisMapping,
}

impl Materials {
    pub fn new(model: SellmeierModel, axes: AxisMapping) -> Result<Self> {
        axes.validate()?;
        Ok(Materials { model, axes })
    }

    pub fn ktp() -> Self {
        Materials { model: SellmeierModel::ktp(), axes: AxisMapping::default() }
    }

    pub fn bulk_index(&self, pol: Polarization, lambda_nm: f64) -> Result<f64> {
        self.model.refractive_index(self.axes.axis(pol), lambda_nm)
    }

    pub fn group_index(&self, pol: Polarization, lambda_nm: f64) -> Result<f64> {
        self.model.group_index(self.axes.axis(pol), lambda_nm)
    }

    pub fn validity_nm(&self, pol: Polarization) -> [f64; 2] {
        self.model.validity_nm(self.axes.axis(pol))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent evaluation of the published KTP formula, coefficients
    /// typed in separately from the data file.
    fn ktp_oracle(axis: CrystalAxis, lambda_nm: f64) -> f64 {
        let (a, b1, c1, b2, c2) = match axis {
            CrystalAxis::X => (3.29100, 0.04140, 0.03978, 9.35522, 31.45571),
            CrystalAxis::Y => (3.45018, 0.04341, 0.04597, 16.98825, 39.43799),
            CrystalAxis::Z => (4.59423, 0.06206, 0.04763, 110.80672, 86.12171),
        };
        let l2 = (lambda_nm / 1000.0).powi(2);
        (a + b1 / (l2 - c1) + b2 / (l2 - c2)).sqrt()
    }

    #[test]
    fn constant_material_is_dispersionless() {
        let m = SellmeierModel::constant(1.5, [300.0, 2000.0]).unwrap();
        for ax in [CrystalAxis::X, CrystalAxis::Y, CrystalAxis::Z] {
            assert_eq!(m.refractive_index(ax, 800.0).unwrap(), 1.5);
            assert_eq!(m.group_index(ax, 800.0).unwrap(), 1.5);
            assert_eq!(m.group_index(ax, 1234.5).unwrap(), m.refractive_index(ax, 1234.5).unwrap());
        }
    }

    #[test]
    fn ktp_z_matches_oracle() {
        let m = SellmeierModel::ktp();
        // frozen from the oracle: 1.8446499069821531
        let n = m.refractive_index(CrystalAxis::Z, 800.0).unwrap();
        assert!((n - ktp_oracle(CrystalAxis::Z, 800.0)).abs() < 1e-14);
        assert!((n - 1.844_649_906_982_153).abs() < 1e-12);
        assert!(m.refractive_index(CrystalAxis::Z, 400.0).unwrap() > n);
        for ax in [CrystalAxis::X, CrystalAxis::Y, CrystalAxis::Z] {
            for l in [400.0, 633.0, 805.0, 1550.0] {
                let d = m.refractive_index(ax, l).unwrap() - ktp_oracle(ax, l);
                assert!(d.abs() < 1e-14, "{ax} {l}: {d}");
            }
        }
    }

    #[test]
    fn group_index_exceeds_phase_index_at_800() {
        let m = SellmeierModel::ktp();
        for ax in [CrystalAxis::X, CrystalAxis::Y, CrystalAxis::Z] {
            let n = ktp_oracle(ax, 800.0);
            let h = 1e-3;
            let oracle_ng = n - 800.0 * (ktp_oracle(ax, 800.0 + h) - ktp_oracle(ax, 800.0 - h)) / (2.0 * h);
            let ng = m.group_index(ax, 800.0).unwrap();
            assert!(ng > n);
            assert!((ng - oracle_ng).abs() < 1e-7);
        }
    }

    #[test]
    fn analytic_and_fd_group_index_agree() {
        let m = SellmeierModel::ktp();
        for ax in [CrystalAxis::X, CrystalAxis::Y, CrystalAxis::Z] {
            let a = m.group_index(ax, 805.0).unwrap();
            let f = m.group_index_fd(ax, 805.0, 0.01).unwrap();
            assert!(((a - f) / a).abs() < 1e-8, "{ax}: {a} vs {f}");
        }
    }

    #[test]
    fn range_errors_name_the_bound() {
        let m = SellmeierModel::ktp();
        match m.refractive_index(CrystalAxis::Y, 200.0) {
            Err(Error::OutOfRange { bound: Bound::Lower, limit_nm, .. }) => assert_eq!(limit_nm, 380.0),
            other => panic!("{other:?}"),
        }
        match m.refractive_index(CrystalAxis::Y, 5000.0) {
            Err(Error::OutOfRange { bound: Bound::Upper, .. }) => {}
            other => panic!("{other:?}"),
        }
        // the boundary itself is valid for n but not for the group index
        assert!(m.refractive_index(CrystalAxis::Y, 380.0).is_ok());
        assert!(matches!(m.group_index(CrystalAxis::Y, 380.0), Err(Error::OutOfRange { .. })));
        assert!(m.refractive_index(CrystalAxis::Y, f64::NAN).is_err());
    }

    #[test]
    fn normal_dispersion_on_measurement_window() {
        let m = SellmeierModel::ktp();
        for ax in [CrystalAxis::X, CrystalAxis::Y, CrystalAxis::Z] {
            let mut prev = f64::INFINITY;
            for k in 0..=115 {
                let l = 792.0 + 0.2 * k as f64;
                let n = m.refractive_index(ax, l).unwrap();
                assert!(n.is_finite() && n > 1.0);
                assert!(n < prev);
                prev = n;
            }
        }
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(SellmeierModel::from_toml_str("schema_version = 2\naxis = []").is_err());
        let missing = r#"
schema_version = 1
[[axis]]
id = "x"
a = 2.0
range_nm = [400.0, 900.0]
"#;
        assert!(SellmeierModel::from_toml_str(missing).is_err());
        let resonance = KTP_DATA.replace("c = 0.03978", "c = 0.36");
        assert!(matches!(SellmeierModel::from_toml_str(&resonance), Err(Error::Validation(_))));
        let inverted = KTP_DATA.replacen("range_nm = [380.0, 3540.0]", "range_nm = [900.0, 800.0]", 1);
        assert!(SellmeierModel::from_toml_str(&inverted).is_err());
    }

    #[test]
    fn document_round_trips() {
        let m = SellmeierModel::ktp();
        let back = SellmeierModel::from_toml_str(&m.to_toml_string()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn axis_mapping_checks_polarizations() {
        assert!(AxisMapping::default().validate().is_ok());
        let bad = AxisMapping { v: CrystalAxis::Y, ..AxisMapping::default() };
        assert!(bad.validate().is_err());
        let m = AxisMapping::default();
        assert!(m.is_vertical(Polarization::V));
        assert!(!m.is_vertical(Polarization::H));
        assert!(!m.is_vertical(Polarization::S));
    }
}
