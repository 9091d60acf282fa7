//! The run configuration: one TOML document describing material, guide,
//! solver, gauge and pump.
//!
//! ```toml
//! schema_version = 1
//! material = "builtin:ktp"          # or a path to a Sellmeier TOML file
//!
//! [waveguide]
//! width_um = 4.0
//! delta_n = { x = 0.005, y = 0.008, z = 0.012 }
//!
//! [gauge]
//! anchor = "00V+00H>00S"
//! anchor_nm = 799.6
//!
//! [corrections]
//! path = "corrections.toml"         # relative to this file
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dispersion::{extract_corrections, GeometricCorrections, ModelIndex};
use crate::error::{Error, Result};
use crate::identify::Gauge;
use crate::label::{ModeLabel, Triplet};
use crate::material::{AxisMapping, Materials, SellmeierModel};
use crate::modes::{LateralBoundary, SolverOptions};
use crate::phase_matching::{fit_poling_period, ScanWindow, WavelengthGrid};
use crate::profile::WaveguideSpec;
use crate::spdc::PumpSpec;

pub const SCHEMA_VERSION: u32 = 1;
pub const BUILTIN_KTP: &str = "builtin:ktp";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub lateral: LateralBoundary,
    /// Modes kept per polarization when tracking labels.
    pub mode_count: usize,
    pub tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { lateral: LateralBoundary::ZeroField, mode_count: 8, tolerance: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaugeConfig {
    pub anchor: Triplet,
    /// Degenerate wavelength the anchor band is calibrated to (nm).
    pub anchor_nm: f64,
    pub delta_n_ref: f64,
    /// Use the period that puts the anchor at `anchor_nm` instead of the
    /// nominal `waveguide.poling_period_um`.
    pub calibrate_period: bool,
}

impl Default for GaugeConfig {
    fn default() -> Self {
        GaugeConfig { anchor: Triplet::fundamental(), anchor_nm: 799.6, delta_n_ref: 0.0, calibrate_period: true }
    }
}

fn default_labels() -> Vec<ModeLabel> {
    ["00V", "01V", "10V", "00H", "00S", "10S", "01S", "11S", "20S", "02S", "03S"]
        .iter()
        .map(|s| s.parse().expect("valid label"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectionsConfig {
    /// Precomputed corrections; extracted with the mode solver when absent.
    pub path: Option<PathBuf>,
    pub window_nm: [f64; 2],
    /// Wavelengths sampled across the window during extraction.
    pub samples: usize,
    pub labels: Vec<ModeLabel>,
}

impl Default for CorrectionsConfig {
    fn default() -> Self {
        CorrectionsConfig { path: None, window_nm: [792.0, 815.0], samples: 2, labels: default_labels() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    pub material: String,
    pub axes: AxisMapping,
    pub waveguide: WaveguideSpec,
    pub solver: SolverConfig,
    pub gauge: GaugeConfig,
    pub corrections: CorrectionsConfig,
    pub pump: PumpSpec,
    pub scan: ScanWindow,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            schema_version: SCHEMA_VERSION,
            material: BUILTIN_KTP.into(),
            axes: AxisMapping::default(),
            waveguide: WaveguideSpec::default(),
            solver: SolverConfig::default(),
            gauge: GaugeConfig::default(),
            corrections: CorrectionsConfig::default(),
            pump: PumpSpec::default(),
            scan: ScanWindow::default(),
            base_dir: PathBuf::new(),
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!("config: unsupported schema_version {}", self.schema_version)));
        }
        self.axes.validate()?;
        self.waveguide.validate()?;
        self.pump.validate()?;
        if self.solver.mode_count == 0 {
            return Err(Error::Validation("solver.mode_count must be >= 1".into()));
        }
        if !(self.solver.tolerance > 0.0) {
            return Err(Error::Validation("solver.tolerance must be > 0".into()));
        }
        if !(self.gauge.anchor_nm > 0.0 && self.gauge.anchor_nm.is_finite()) {
            return Err(Error::Validation("gauge.anchor_nm must be > 0".into()));
        }
        let [lo, hi] = self.corrections.window_nm;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Validation(format!("corrections.window_nm [{lo}, {hi}] is not an interval")));
        }
        if self.corrections.samples == 0 {
            return Err(Error::Validation("corrections.samples must be >= 1".into()));
        }
        WavelengthGrid::new(self.scan.lo_nm, self.scan.hi_nm, self.scan.step_nm)?;
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn materials(&self) -> Result<Materials> {
        let model = if self.material == BUILTIN_KTP {
            SellmeierModel::ktp()
        } else {
            SellmeierModel::from_path(&self.resolve(Path::new(&self.material)))?
        };
        Materials::new(model, self.axes)
    }

    pub fn solver_options(&self) -> SolverOptions {
        let mut opts = SolverOptions { lateral: self.solver.lateral, ..Default::default() };
        opts.arnoldi.tol = self.solver.tolerance;
        opts
    }

    pub fn gauge(&self) -> Gauge {
        Gauge { anchor: self.gauge.anchor, delta_n_ref: self.gauge.delta_n_ref }
    }

    /// Wavelengths the corrections are extracted at.
    pub fn extraction_grid(&self) -> Vec<f64> {
        let [lo, hi] = self.corrections.window_nm;
        let n = self.corrections.samples;
        if n == 1 || lo == hi {
            return vec![0.5 * (lo + hi)];
        }
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
    }

    /// Corrections from `corrections.path`, or extracted with the solver.
    pub fn corrections(&self, materials: &Materials) -> Result<GeometricCorrections> {
        match &self.corrections.path {
            Some(p) => {
                let c = GeometricCorrections::from_path(&self.resolve(p))?;
                c.validate(materials)?;
                Ok(c)
            }
            None => self.extract(materials),
        }
    }

    pub fn extract(&self, materials: &Materials) -> Result<GeometricCorrections> {
        log::info!("extracting corrections for {} labels with the mode solver", self.corrections.labels.len());
        extract_corrections(
            &self.waveguide,
            materials,
            &self.corrections.labels,
            &self.extraction_grid(),
            self.solver.mode_count,
            &self.solver_options(),
        )
    }

    /// Poling period in use: calibrated on the anchor, or the nominal one.
    pub fn period(&self, model: &ModelIndex) -> Result<f64> {
        if self.gauge.calibrate_period {
            fit_poling_period(model, &self.gauge.anchor, self.gauge.anchor_nm)
        } else {
            Ok(self.waveguide.poling_period_um)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        let cfg = Config::from_toml_str("schema_version = 1\n").unwrap();
        assert_eq!(cfg, Config::default());
        let again = Config::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn partial_tables_and_errors() {
        let cfg = Config::from_toml_str(
            "schema_version = 1\n[waveguide]\nwidth_um = 5.0\n[solver]\nlateral = \"periodic\"\n[gauge]\nanchor = \"01V+00H>00S\"\n",
        )
        .unwrap();
        assert_eq!(cfg.waveguide.width_um, 5.0);
        assert_eq!(cfg.waveguide.depth_um, 6.0);
        assert_eq!(cfg.solver.lateral, LateralBoundary::Periodic);
        assert_eq!(cfg.gauge.anchor.to_string(), "01V+00H>00S");

        for bad in [
            "schema_version = 2\n",
            "schema_version = 1\nunknown = 3\n",
            "schema_version = 1\n[waveguide]\nwidth = 5.0\n",
            "schema_version = 1\n[gauge]\nanchor = \"00V+00V>00S\"\n",
            "schema_version = 1\n[pump]\ncenter_nm = 399.8\nfwhm_nm = 0.0\n",
            "schema_version = 1\n[axes]\nv = \"y\"\nh = \"y\"\ns = \"y\"\nsurface_normal = \"z\"\n",
            "schema_version = 1\n[solver]\nmode_count = 0\n",
        ] {
            let e = Config::from_toml_str(bad).unwrap_err();
            assert!(e.is_validation(), "{bad}: {e}");
        }
    }

    #[test]
    fn extraction_grid_spans_the_window() {
        let mut cfg = Config::default();
        assert_eq!(cfg.extraction_grid(), vec![792.0, 815.0]);
        cfg.corrections.samples = 3;
        assert_eq!(cfg.extraction_grid(), vec![792.0, 803.5, 815.0]);
        cfg.corrections.samples = 1;
        assert_eq!(cfg.extraction_grid(), vec![803.5]);
    }
}
