//! Shift-invert Arnoldi for real, non-symmetric sparse operators.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, MultifrontalLu, SeparatorTree};

#[derive(Debug, Clone)]
pub struct ArnoldiOptions {
    /// Largest Krylov basis before giving up; 0 picks `min(n, 40 nev + 200)`.
    pub max_dim: usize,
    /// Ritz pairs are checked every this many Arnoldi steps.
    pub check_every: usize,
    /// Required `|A v - lambda v|` for unit `v`.
    pub tol: f64,
    pub seed: u64,
}

impl Default for ArnoldiOptions {
    fn default() -> Self {
        ArnoldiOptions { max_dim: 0, check_every: 8, tol: 1e-9, seed: 0x5eed_0fa5 }
    }
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    /// Unit 2-norm.
    pub vector: Vec<f64>,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Real eigenpairs of `a` closest to `sigma` with eigenvalue at least
/// `floor`, at most `nev` of them, sorted by decreasing eigenvalue.
///
/// The Krylov basis of `(A - sigma I)^-1` grows until every wanted pair
/// meets the residual tolerance.
pub fn eigs_near(
    a: &CsrMatrix,
    sigma: f64,
    nev: usize,
    floor: f64,
    tree: &SeparatorTree,
    opts: &ArnoldiOptions,
) -> Result<Vec<EigenPair>> {
    let n = a.dim();
    if n == 0 || nev == 0 {
        return Ok(Vec::new());
    }
    let lu = MultifrontalLu::factor(&a.shifted(sigma), tree)?;
    let max_dim = if opts.max_dim > 0 { opts.max_dim } else { 40 * nev + 200 }.min(n);
    let first_check = (nev + 12).min(max_dim);
    let every = opts.check_every.max(1);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let start: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let s0 = norm(&start);
    let mut basis: Vec<Vec<f64>> = vec![start.into_iter().map(|v| v / s0).collect()];
    let mut h = DMatrix::<f64>::zeros(max_dim + 1, max_dim);
    let mut worst = f64::INFINITY;
    for k in 0..max_dim {
        let mut w = basis[k].clone();
        lu.solve_in_place(&mut w);
        let wn0 = norm(&w);
        // classical Gram-Schmidt, applied twice
        for _ in 0..2 {
            let coeffs: Vec<f64> = basis.iter().map(|v| dot(v, &w)).collect();
            for (c, v) in coeffs.iter().zip(&basis) {
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= c * vi;
                }
            }
            for (i, c) in coeffs.iter().enumerate() {
                h[(i, k)] += c;
            }
        }
        let wn = norm(&w);
        h[(k + 1, k)] = wn;
        let dim = k + 1;
        let invariant = wn <= 1e-14 * wn0 || dim == n;
        if invariant || dim == max_dim || (dim >= first_check && (dim - first_check) % every == 0) {
            let pairs = ritz_pairs(a, &h, &basis[..dim], sigma, nev, floor);
            worst = pairs.iter().map(|p| p.residual).fold(0.0, f64::max);
            if worst <= opts.tol {
                let mut pairs = pairs;
                pairs.sort_by(|p, q| q.value.total_cmp(&p.value));
                return Ok(pairs);
            }
            if invariant {
                break;
            }
        }
        if dim < max_dim {
            basis.push(w.into_iter().map(|v| v / wn).collect());
        }
    }
    Err(Error::NoConvergence { iterations: basis.len(), residual: worst })
}

fn ritz_pairs(
    a: &CsrMatrix,
    h: &DMatrix<f64>,
    basis: &[Vec<f64>],
    sigma: f64,
    nev: usize,
    floor: f64,
) -> Vec<EigenPair> {
    let n = a.dim();
    let dim = basis.len();
    let hm = h.view((0, 0), (dim, dim)).into_owned();
    let schur = nalgebra::Schur::new(hm.clone());
    let mut mus: Vec<f64> = schur
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= 1e-10 * z.norm())
        .map(|z| z.re)
        .filter(|re| *re != 0.0 && sigma + 1.0 / re >= floor)
        .collect();
    mus.sort_by(|p, q| q.abs().total_cmp(&p.abs()));
    mus.truncate(nev);

    let mut pairs = Vec::with_capacity(mus.len());
    let mut ax = vec![0.0; n];
    for mu in mus {
        let y = small_eigvec(&hm, mu);
        let mut x = vec![0.0; n];
        for (c, v) in y.iter().zip(basis) {
            for (xi, vi) in x.iter_mut().zip(v) {
                *xi += c * vi;
            }
        }
        let xn = norm(&x);
        x.iter_mut().for_each(|v| *v /= xn);
        let value = sigma + 1.0 / mu;
        a.matvec(&x, &mut ax);
        let residual = ax.iter().zip(&x).map(|(p, q)| (p - value * q).powi(2)).sum::<f64>().sqrt();
        pairs.push(EigenPair { value, vector: x, residual });
    }
    pairs
}

/// Eigenvector of a small dense matrix for a known real eigenvalue, by
/// inverse iteration.
fn small_eigvec(hm: &DMatrix<f64>, mu: f64) -> Vec<f64> {
    let d = hm.nrows();
    let scale = hm.norm().max(f64::MIN_POSITIVE);
    let mut y = nalgebra::DVector::<f64>::from_fn(d, |i, _| 1.0 / (1.0 + i as f64));
    for perturb in [1e-13, 1e-11, 1e-9] {
        let shifted = hm - DMatrix::<f64>::identity(d, d) * (mu + perturb * scale);
        let lu = shifted.lu();
        let mut ok = true;
        for _ in 0..3 {
            match lu.solve(&y) {
                Some(z) if z.iter().all(|v| v.is_finite()) && z.norm() > 0.0 => {
                    y = &z / z.norm();
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            break;
        }
    }
    y.iter().copied().collect()
}
