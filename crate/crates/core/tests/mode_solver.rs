use wgmix::label::{ModeLabel, Polarization};
use wgmix::material::{CrystalAxis, Materials};
use wgmix::modes::{solve_modes, solve_waveguide, LateralBoundary, ModeField, SolverOptions};
use wgmix::profile::{index_profile, GridGeometry, IndexGrid, IndexIncrease, WaveguideSpec};

const N_CORE: f64 = 1.85;
const N_CLAD: f64 = 1.84;

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Fundamental even mode of a symmetric slab of thickness `t`; `tm` weights
/// the cladding decay by the permittivity ratio.
fn slab_oracle(lambda_nm: f64, t: f64, tm: bool) -> f64 {
    let k0 = 2.0 * std::f64::consts::PI / (lambda_nm * 1e-3);
    let ratio = if tm { (N_CORE / N_CLAD).powi(2) } else { 1.0 };
    let f = |ne: f64| {
        let kappa = k0 * (N_CORE * N_CORE - ne * ne).sqrt();
        let gamma = k0 * (ne * ne - N_CLAD * N_CLAD).sqrt();
        kappa * (kappa * t / 2.0).tan() - ratio * gamma
    };
    // first branch of tan: kappa t / 2 < pi / 2
    let half = k0 * t / 2.0;
    let lo = (N_CORE * N_CORE - (std::f64::consts::FRAC_PI_2 / half).powi(2)).sqrt().max(N_CLAD);
    bisect(f, lo + 1e-15, N_CORE - 1e-15)
}

/// Slab centred in a 16 um deep box with its faces half way between rows.
fn slab_grid(lambda_nm: f64, h: f64, t: f64) -> IndexGrid {
    let depth = 16.0;
    let ny = (depth / h).round() as usize + 1;
    let geometry = GridGeometry { hx: h, hy: h, nx: 4, ny, ix0: 0, jy0: 0 };
    let centre = 0.5 * depth + 0.5 * h;
    IndexGrid::from_fn(geometry, CrystalAxis::Y, lambda_nm, N_CLAD, |_, y| {
        if (y - centre).abs() < t / 2.0 {
            N_CORE
        } else {
            N_CLAD
        }
    })
}

fn periodic() -> SolverOptions {
    SolverOptions { lateral: LateralBoundary::Periodic, ..Default::default() }
}

#[test]
fn slab_matches_dispersion_relation() {
    for lambda in [400.0, 800.0, 1200.0] {
        for (tm, pol) in [(false, Polarization::H), (true, Polarization::V)] {
            let want = slab_oracle(lambda, 4.0, tm);
            let sol = solve_modes(&slab_grid(lambda, 0.1, 4.0), pol, tm, 1, &periodic()).unwrap();
            let got = sol.modes[0].n_eff;
            assert!((got - want).abs() < 1e-4, "{lambda} tm={tm}: {got} vs {want}");
            assert_eq!(sol.modes[0].label, ModeLabel::fundamental(pol));
        }
    }
}

#[test]
fn slab_error_falls_fourfold_per_halving() {
    for tm in [false, true] {
        let want = slab_oracle(800.0, 4.0, tm);
        let err: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&h| {
                let sol = solve_modes(&slab_grid(800.0, h, 4.0), Polarization::V, tm, 1, &periodic()).unwrap();
                sol.modes[0].n_eff - want
            })
            .collect();
        for w in err.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.8..4.2).contains(&ratio), "tm={tm} {err:?}");
        }
    }
}

fn weighted_inner(grid: &IndexGrid, a: &ModeField, b: &ModeField, weight: bool) -> f64 {
    let (ax, ay) = a.components();
    let (bx, by) = b.components();
    let w = |k: usize| if weight { grid.values[k].powi(2) } else { 1.0 };
    let dot = |p: &[f64], q: &[f64], r: &[f64], s: &[f64]| -> f64 {
        (0..p.len()).map(|k| w(k) * (p[k] * q[k] + r[k] * s[k])).sum()
    };
    dot(ax, bx, ay, by) / (dot(ax, ax, ay, ay) * dot(bx, bx, by, by)).sqrt()
}

#[test]
fn slab_modes_are_orthogonal() {
    // thick slab: several guided modes of each family
    let grid = slab_grid(800.0, 0.1, 10.0);
    let te = solve_modes(&grid, Polarization::H, false, 4, &periodic()).unwrap();
    let tm = solve_modes(&grid, Polarization::V, true, 4, &periodic()).unwrap();
    assert!(te.modes.len() >= 3 && tm.modes.len() >= 3);
    for (set, weight) in [(&te.modes, false), (&tm.modes, true)] {
        for a in 0..set.len() {
            assert_eq!(set[a].label.j as usize, a);
            for b in 0..a {
                let ip = weighted_inner(&grid, &set[a], &set[b], weight);
                assert!(ip.abs() < 1e-10, "{} {}: {ip}", set[a].label, set[b].label);
            }
        }
    }
}

#[test]
fn uniform_grid_has_no_guided_mode() {
    let spec = WaveguideSpec {
        delta_n: IndexIncrease::uniform(0.0),
        half_width_um: 5.0,
        box_depth_um: 8.0,
        air_um: 0.5,
        hx_um: 0.25,
        hy_um: 0.25,
        ..Default::default()
    };
    let sol = solve_waveguide(&spec, &Materials::ktp(), Polarization::V, 800.0, 3, &SolverOptions::default()).unwrap();
    assert!(sol.modes.is_empty());
    assert!(sol.notes[0].contains("no guided"));
}

fn coarse_spec() -> WaveguideSpec {
    WaveguideSpec { hx_um: 0.2, hy_um: 0.2, ..Default::default() }
}

fn parity_defect(m: &ModeField) -> f64 {
    let g = m.geometry;
    let (mut even, mut odd) = (0.0, 0.0);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let u = m.dominant[g.idx(i, j)];
            let v = m.dominant[g.idx(g.nx - 1 - i, j)];
            even += (0.5 * (u + v)).powi(2);
            odd += (0.5 * (u - v)).powi(2);
        }
    }
    even.min(odd) / (even + odd)
}

#[test]
fn waveguide_modes_satisfy_invariants() {
    let spec = coarse_spec();
    let mats = Materials::ktp();
    for (pol, lambda) in [(Polarization::V, 800.0), (Polarization::H, 800.0), (Polarization::S, 400.0)] {
        let grid = index_profile(&spec, &mats, pol, lambda).unwrap();
        let sol = solve_waveguide(&spec, &mats, pol, lambda, 4, &SolverOptions::default()).unwrap();
        let modes = &sol.modes;
        assert!(!modes.is_empty(), "{pol}");
        assert_eq!(modes[0].label, ModeLabel::fundamental(pol));
        for (k, m) in modes.iter().enumerate() {
            assert!(grid.min() < m.n_eff && m.n_eff < grid.max());
            assert!(m.n_eff > grid.cladding_index);
            m.check_normalized().unwrap();
            assert!(parity_defect(m) < 1e-6, "{}: {}", m.label, parity_defect(m));
            assert_eq!(m.vertical, pol == Polarization::V);
            assert!(m.dominant_fraction() > 0.9);
            if k > 0 {
                assert!(modes[k - 1].n_eff > m.n_eff);
            }
            for other in &modes[..k] {
                assert_ne!(other.label, m.label);
                if other.label.is_x_odd() != m.label.is_x_odd() {
                    assert!(m.inner(other).unwrap().abs() < 1e-6);
                }
            }
        }
    }
}

#[test]
fn zero_field_box_edges() {
    let spec = coarse_spec();
    let sol = solve_waveguide(&spec, &Materials::ktp(), Polarization::H, 800.0, 1, &SolverOptions::default()).unwrap();
    let m = &sol.modes[0];
    let g = m.geometry;
    for i in 0..g.nx {
        assert_eq!(m.dominant[g.idx(i, 0)], 0.0);
        assert_eq!(m.dominant[g.idx(i, g.ny - 1)], 0.0);
    }
    for j in 0..g.ny {
        assert_eq!(m.minor[g.idx(0, j)], 0.0);
        assert_eq!(m.minor[g.idx(g.nx - 1, j)], 0.0);
    }
}

#[test]
fn solves_are_deterministic() {
    let spec = coarse_spec();
    let mats = Materials::ktp();
    let a = solve_waveguide(&spec, &mats, Polarization::V, 805.0, 2, &SolverOptions::default()).unwrap();
    let b = solve_waveguide(&spec, &mats, Polarization::V, 805.0, 2, &SolverOptions::default()).unwrap();
    assert_eq!(a.modes, b.modes);
}

#[test]
fn rejects_zero_count() {
    let grid = slab_grid(800.0, 0.2, 4.0);
    assert!(solve_modes(&grid, Polarization::H, false, 0, &periodic()).is_err());
}
