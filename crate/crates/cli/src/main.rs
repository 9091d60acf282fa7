use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use wgmix::config::Config;
use wgmix::dispersion::{GeometricCorrections, ModelIndex};
use wgmix::error::Error;
use wgmix::identify::{identify, parse_candidates, IdentifyOptions, MeasuredScan, DEFAULT_PROMINENCE};
use wgmix::label::{Polarization, Triplet};
use wgmix::material::Materials;
use wgmix::modes::{mode_intensity_image, solve_waveguide, write_pgm, ModeDocument};
use wgmix::overlap::{efficiency_table, read_measured, write_efficiency_csv, ModeBank};
use wgmix::phase_matching::{
    band_map, cross_section, degenerate_fwhm, degenerate_wavelength, write_cross_section, WavelengthGrid,
};
use wgmix::spdc::{band_separation_report, jsi, map_peak, JsiMeta, DEFAULT_GUARD_NM};

#[derive(Parser)]
#[command(name = "wgmix", version, about = "Intermodal three-wave mixing in channel waveguides")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the guided modes of one polarization.
    SolveModes {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        wavelength: f64,
        #[arg(long)]
        pol: Polarization,
        #[arg(long, default_value_t = 4)]
        count: usize,
        /// Output directory for mode documents and images.
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract geometric corrections with the mode solver.
    Extract {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sum-frequency band map over the (lambda_V, lambda_H) plane.
    BandMap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        triplet: Triplet,
        #[arg(long, value_parser = parse_range)]
        range_v: WavelengthGrid,
        #[arg(long, value_parser = parse_range)]
        range_h: WavelengthGrid,
        #[arg(long)]
        out: PathBuf,
    },
    /// Intensity along the degenerate diagonal.
    DegenerateScan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        triplet: Triplet,
        #[arg(long, value_parser = parse_range)]
        range: WavelengthGrid,
        #[arg(long)]
        out: PathBuf,
    },
    /// Degenerate band centers and widths of a list of triplets.
    BandCenters {
        #[command(flatten)]
        common: Common,
        /// File with one triplet per line.
        #[arg(long)]
        triplets: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign measured band centers to triplets and fit corrections.
    Identify {
        #[command(flatten)]
        common: Common,
        /// Directory of scan CSV files.
        #[arg(long)]
        scans: PathBuf,
        /// File with one candidate triplet per line.
        #[arg(long)]
        candidates: PathBuf,
        /// Anchor triplet; defaults to the configured gauge anchor.
        #[arg(long)]
        anchor: Option<Triplet>,
        #[arg(long, default_value_t = DEFAULT_PROMINENCE)]
        min_prominence: f64,
        /// Report path; fitted corrections go next to it.
        #[arg(long)]
        out: PathBuf,
        /// Exit 0 even when a residual exceeds the threshold.
        #[arg(long)]
        allow_flagged: bool,
    },
    /// Relative sum-frequency efficiencies from mode overlaps.
    OverlapTable {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        triplets: PathBuf,
        /// Optional CSV `triplet,measured_eff`.
        #[arg(long)]
        measured: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Joint spectral intensity of down-converted pairs.
    Jsi {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        triplet: Triplet,
        #[arg(long, value_parser = parse_range)]
        range_v: WavelengthGrid,
        #[arg(long, value_parser = parse_range)]
        range_h: WavelengthGrid,
        /// Efficiency relative to the reference triplet; computed from mode
        /// overlaps when omitted.
        #[arg(long)]
        efficiency: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Spectral separation of the bands pumped in one sum-frequency mode.
    SeparationReport {
        #[command(flatten)]
        common: Common,
        /// Triplets to compare; all V + H combinations of the known
        /// corrections pumping `--pump-mode` when omitted.
        #[arg(long)]
        triplets: Option<PathBuf>,
        #[arg(long, default_value = "00S")]
        pump_mode: wgmix::label::ModeLabel,
        #[arg(long, default_value_t = DEFAULT_GUARD_NM)]
        guard: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_range(s: &str) -> Result<WavelengthGrid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |p: &str| p.trim().parse::<f64>().map_err(|_| format!("bad number `{p}` in range `{s}`"));
    let (a, b, step) = match parts.as_slice() {
        [a, b] => (num(a)?, num(b)?, 0.2),
        [a, b, c] => (num(a)?, num(b)?, num(c)?),
        _ => return Err(format!("range `{s}` must be start:stop[:step]")),
    };
    WavelengthGrid::new(a, b, step).map_err(|e| e.to_string())
}

enum Failure {
    Lib(Error),
    Flagged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type Outcome = Result<(), Failure>;

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::io(path, e)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn read_text(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

struct Context {
    config: Config,
    materials: Materials,
}

impl Context {
    fn load(common: &Common) -> Result<Self, Error> {
        let config = match &common.config {
            Some(p) => Config::from_path(p)?,
            None => Config::default(),
        };
        let materials = config.materials()?;
        Ok(Context { config, materials })
    }

    fn model(&self) -> Result<(ModelIndex, f64), Error> {
        let corrections = self.config.corrections(&self.materials)?;
        let model = ModelIndex::new(self.materials.clone(), corrections);
        let period = self.config.period(&model)?;
        Ok((model, period))
    }

    fn center(&self, model: &ModelIndex, t: &Triplet, period: f64) -> Result<f64, Error> {
        degenerate_wavelength(model, t, period, &self.config.scan)?
            .nearest(self.config.gauge.anchor_nm)
            .ok_or(Error::DegenerateRoot)
    }
}

fn solve_modes_cmd(common: &Common, wavelength: f64, pol: Polarization, count: usize, out: &Path) -> Outcome {
    let ctx = Context::load(common)?;
    let sol =
        solve_waveguide(&ctx.config.waveguide, &ctx.materials, pol, wavelength, count, &ctx.config.solver_options())?;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let mut summary = String::from("label,n_eff,dominant_fraction\n");
    for m in &sol.modes {
        let doc = ModeDocument::from(m);
        write_file(&out.join(format!("{}.json", m.label)), &json(&doc))?;
        let mut pgm = Vec::new();
        write_pgm(&m.geometry, &mode_intensity_image(m), &mut pgm).map_err(|e| io_err(out, e))?;
        write_file(&out.join(format!("{}.pgm", m.label)), &pgm)?;
        summary.push_str(&format!("{},{},{}\n", m.label, m.n_eff, m.dominant_fraction()));
    }
    write_file(&out.join("summary.csv"), summary.as_bytes())?;
    for note in &sol.notes {
        eprintln!("note: {note}");
    }
    if sol.modes.is_empty() {
        println!("no guided modes for {pol} at {wavelength} nm");
    } else {
        println!("{:<6} {:>12}", "label", "n_eff");
        for m in &sol.modes {
            println!("{:<6} {:>12.8}", m.label.to_string(), m.n_eff);
        }
    }
    Ok(())
}

fn extract_cmd(common: &Common, out: &Path) -> Outcome {
    let ctx = Context::load(common)?;
    let c = ctx.config.extract(&ctx.materials)?;
    write_file(out, c.to_toml_string().as_bytes())?;
    for (label, e) in &c.entries {
        println!("{label} dn={:.6e} residual={:.2e}", e.delta_n, e.residual);
    }
    Ok(())
}

fn band_map_cmd(common: &Common, t: &Triplet, rv: WavelengthGrid, rh: WavelengthGrid, out: &Path) -> Outcome {
    let ctx = Context::load(common)?;
    let (model, period) = ctx.model()?;
    let map = band_map(&model, t, period, ctx.config.waveguide.length_mm, rv, rh)?;
    let mut buf = Vec::new();
    map.write_csv(&mut buf)?;
    write_file(out, &buf)?;
    write_file(&sidecar(out), &json(&map.meta("sinc^2, peak 1 on the band")))?;
    println!("{t}: {} x {} cells, period {period} um", rv.len(), rh.len());
    Ok(())
}

fn degenerate_scan_cmd(common: &Common, t: &Triplet, range: WavelengthGrid, out: &Path) -> Outcome {
    let ctx = Context::load(common)?;
    let (model, period) = ctx.model()?;
    let rows = cross_section(&model, t, period, ctx.config.waveguide.length_mm, range);
    let mut buf = Vec::new();
    write_cross_section(&rows, &mut buf)?;
    write_file(out, &buf)?;
    match ctx.center(&model, t, period) {
        Ok(c) => println!("{t}: degenerate center {c:.4} nm"),
        Err(e) => eprintln!("note: {t}: {e}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct CenterRow {
    triplet: Triplet,
    degenerate_wavelength_nm: f64,
    fwhm_nm: f64,
}

fn band_centers_cmd(common: &Common, triplets: &Path, out: &Path) -> Outcome {
    let ctx = Context::load(common)?;
    let list = parse_candidates(&read_text(triplets)?)?;
    if list.is_empty() {
        return Err(Error::Validation("no triplets given".into()).into());
    }
    let (model, period) = ctx.model()?;
    let mut rows = Vec::new();
    for t in &list {
        let c = ctx.center(&model, t, period)?;
        let fwhm = degenerate_fwhm(&model, t, period, ctx.config.waveguide.length_mm, c)?;
        rows.push(CenterRow { triplet: *t, degenerate_wavelength_nm: c, fwhm_nm: fwhm });
    }
    rows.sort_by(|a, b| a.degenerate_wavelength_nm.total_cmp(&b.degenerate_wavelength_nm));
    let mut text = String::from("triplet,degenerate_wavelength_nm,fwhm_nm\n");
    for r in &rows {
        text.push_str(&format!("{},{},{}\n", r.triplet, r.degenerate_wavelength_nm, r.fwhm_nm));
        println!("{:<14} {:>10.4} nm  fwhm {:.4} nm", r.triplet.to_string(), r.degenerate_wavelength_nm, r.fwhm_nm);
    }
    write_file(out, text.as_bytes())?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn identify_cmd(
    common: &Common,
    scans_dir: &Path,
    candidates: &Path,
    anchor: Option<Triplet>,
    min_prominence: f64,
    out: &Path,
    allow_flagged: bool,
) -> Outcome {
    let ctx = Context::load(common)?;
    let mut files: Vec<PathBuf> = fs::read_dir(scans_dir)
        .map_err(|e| io_err(scans_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Validation(format!("no scan files (*.csv) in {}", scans_dir.display())).into());
    }
    let scans: Vec<MeasuredScan> = files.iter().map(|p| MeasuredScan::from_path(p)).collect::<Result<_, _>>()?;
    let list = parse_candidates(&read_text(candidates)?)?;
    let prior = ctx.config.corrections(&ctx.materials)?;
    let mut gauge = ctx.config.gauge();
    if let Some(a) = anchor {
        gauge.anchor = a;
    }
    let opts = IdentifyOptions { min_prominence, window: ctx.config.scan, ..Default::default() };
    let report = identify(&ctx.materials, &prior, &gauge, &list, &scans, ctx.config.waveguide.length_mm, &opts)?;
    write_file(out, report.to_json().as_bytes())?;
    write_file(&out.with_extension("corrections.toml"), report.corrections.to_toml_string().as_bytes())?;
    println!("{:<14} {:>10} {:>10} {:>9}", "triplet", "center", "predicted", "residual");
    for b in &report.bands {
        println!(
            "{:<14} {:>10.3} {:>10.3} {:>9.4}{}",
            b.triplet.to_string(),
            b.center_nm,
            b.predicted_nm,
            b.residual_nm,
            if b.flagged { "  FLAGGED" } else { "" }
        );
    }
    for c in &report.unassigned_nm {
        println!("unassigned center {c:.3} nm");
    }
    println!("period {:.6} um, max residual {:.4} nm", report.period_um, report.max_residual_nm);
    if report.flagged > 0 && !allow_flagged {
        return Err(Failure::Flagged(format!(
            "{} band(s) deviate from the prediction by more than 0.2 nm",
            report.flagged
        )));
    }
    Ok(())
}

fn overlap_rows(
    ctx: &Context,
    list: &[Triplet],
    model: &ModelIndex,
    period: f64,
) -> Result<Vec<(Triplet, wgmix::overlap::Overlap, f64)>, Error> {
    let bank = ModeBank::solve(
        &ctx.config.waveguide,
        &ctx.materials,
        list,
        ctx.config.gauge.anchor_nm,
        &ctx.config.solver_options(),
    )?;
    list.iter().map(|t| Ok((*t, bank.overlap(t)?, ctx.center(model, t, period)?))).collect()
}

fn overlap_table_cmd(common: &Common, triplets: &Path, measured: Option<&Path>, out: &Path) -> Outcome {
    let ctx = Context::load(common)?;
    let list = parse_candidates(&read_text(triplets)?)?;
    let measured = match measured {
        Some(p) => read_measured(fs::File::open(p).map_err(|e| io_err(p, e))?)?,
        None => Default::default(),
    };
    let (model, period) = ctx.model()?;
    let entries = overlap_rows(&ctx, &list, &model, period)?;
    let rows = efficiency_table(&entries, &measured)?;
    let mut buf = Vec::new();
    write_efficiency_csv(&rows, &mut buf)?;
    write_file(out, &buf)?;
    for r in &rows {
        println!("{:<14} {:>10.3} nm {:>9.3}", r.triplet.to_string(), r.degenerate_wavelength_nm, r.calculated_eff);
    }
    Ok(())
}

fn jsi_cmd(
    common: &Common,
    t: &Triplet,
    rv: WavelengthGrid,
    rh: WavelengthGrid,
    efficiency: Option<f64>,
    out: &Path,
) -> Outcome {
    let ctx = Context::load(common)?;
    let (model, period) = ctx.model()?;
    let eff = match efficiency {
        Some(e) => e,
        None => {
            let list = if *t == Triplet::fundamental() { vec![*t] } else { vec![Triplet::fundamental(), *t] };
            let entries = overlap_rows(&ctx, &list, &model, period)?;
            let rows = efficiency_table(&entries, &Default::default())?;
            rows.iter().find(|r| r.triplet == *t).map(|r| r.calculated_eff / 100.0).unwrap_or(0.0)
        }
    };
    let map = jsi(&model, t, period, ctx.config.waveguide.length_mm, &ctx.config.pump, eff, rv, rh)?;
    let mut buf = Vec::new();
    map.write_csv(&mut buf)?;
    write_file(out, &buf)?;
    write_file(&sidecar(out), &json(&JsiMeta::new(&map, ctx.config.pump, eff)))?;
    match map_peak(&map) {
        Some((lv, lh, v)) if v > 0.0 => println!("{t}: peak {v:.4e} at ({lv}, {lh}) nm"),
        _ => println!("{t}: JSI vanishes on the grid"),
    }
    Ok(())
}

fn separation_cmd(
    common: &Common,
    triplets: Option<&Path>,
    pump_mode: wgmix::label::ModeLabel,
    guard: f64,
    out: &Path,
) -> Outcome {
    let ctx = Context::load(common)?;
    if pump_mode.pol != Polarization::S {
        return Err(Error::Validation(format!("pump mode must be a sum-frequency mode, got {pump_mode}")).into());
    }
    let corrections: GeometricCorrections = ctx.config.corrections(&ctx.materials)?;
    let list = match triplets {
        Some(p) => parse_candidates(&read_text(p)?)?,
        None => {
            let mut v = Vec::new();
            for a in corrections.labels(Polarization::V) {
                for b in corrections.labels(Polarization::H) {
                    v.push(Triplet::new(a, b, pump_mode)?);
                }
            }
            v
        }
    };
    corrections.delta_n(pump_mode)?;
    let model = ModelIndex::new(ctx.materials.clone(), corrections);
    let period = ctx.config.period(&model)?;
    let report = band_separation_report(
        &model,
        &list,
        period,
        ctx.config.waveguide.length_mm,
        guard,
        &ctx.config.scan,
        ctx.config.gauge.anchor_nm,
    )?;
    write_file(out, report.to_json().as_bytes())?;
    for b in &report.bands {
        println!(
            "{:<14} {:>10.3} nm  fwhm {:.3}  nearest {}  {}",
            b.triplet.to_string(),
            b.center_nm,
            b.fwhm_nm,
            b.nearest_nm.map(|n| format!("{n:.3} nm")).unwrap_or_else(|| "-".into()),
            if b.isolated { "isolated" } else { "overlapping" }
        );
    }
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::SolveModes { common, wavelength, pol, count, out } => {
            solve_modes_cmd(common, *wavelength, *pol, *count, out)
        }
        Command::Extract { common, out } => extract_cmd(common, out),
        Command::BandMap { common, triplet, range_v, range_h, out } => {
            band_map_cmd(common, triplet, *range_v, *range_h, out)
        }
        Command::DegenerateScan { common, triplet, range, out } => degenerate_scan_cmd(common, triplet, *range, out),
        Command::BandCenters { common, triplets, out } => band_centers_cmd(common, triplets, out),
        Command::Identify { common, scans, candidates, anchor, min_prominence, out, allow_flagged } => {
            identify_cmd(common, scans, candidates, *anchor, *min_prominence, out, *allow_flagged)
        }
        Command::OverlapTable { common, triplets, measured, out } => {
            overlap_table_cmd(common, triplets, measured.as_deref(), out)
        }
        Command::Jsi { common, triplet, range_v, range_h, efficiency, out } => {
            jsi_cmd(common, triplet, *range_v, *range_h, *efficiency, out)
        }
        Command::SeparationReport { common, triplets, pump_mode, guard, out } => {
            separation_cmd(common, triplets.as_deref(), *pump_mode, *guard, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Flagged(msg)) => {
            eprintln!("flagged: {msg}");
            ExitCode::from(4)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
