use crate::error::{Error, Result};

use super::CsrMatrix;

/// One block of variables in an elimination tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub vars: Vec<usize>,
    pub parent: Option<usize>,
}

/// Assembly tree in postorder: every child precedes its parent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeparatorTree {
    pub nodes: Vec<TreeNode>,
}

struct Front {
    own: Vec<usize>,
    boundary: Vec<usize>,
    /// `f x p`, column-major: unit-lower `L11` and `U11` on top, `L21` below.
    panel: Vec<f64>,
    /// `p x b`, column-major.
    u12: Vec<f64>,
    /// Row interchange applied at elimination step `k`.
    piv: Vec<usize>,
}

/// LU factors of a structurally symmetric sparse matrix, computed front by
/// front along a separator tree. Pivoting is partial and restricted to the
/// fully summed rows of each front.
pub struct MultifrontalLu {
    n: usize,
    fronts: Vec<Front>,
}

impl MultifrontalLu {
    pub fn factor(a: &CsrMatrix, tree: &SeparatorTree) -> Result<Self> {
        let n = a.dim();
        let at = a.transpose();
        let nodes = &tree.nodes;
        let none = usize::MAX;

        let mut owner = vec![none; n];
        for (t, node) in nodes.iter().enumerate() {
            if let Some(p) = node.parent {
                if p <= t || p >= nodes.len() {
                    return Err(Error::Contract(format!("tree node {t} has parent {p}; not postorder")));
                }
            }
            for &v in &node.vars {
                if v >= n || owner[v] != none {
                    return Err(Error::Contract(format!("variable {v} owned twice or out of range")));
                }
                owner[v] = t;
            }
        }
        if owner.contains(&none) {
            return Err(Error::Contract("separator tree does not cover every variable".into()));
        }

        let mut first_desc: Vec<usize> = (0..nodes.len()).collect();
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
        for (t, node) in nodes.iter().enumerate() {
            if let Some(p) = node.parent {
                first_desc[p] = first_desc[p].min(first_desc[t]);
                children[p].push(t);
            }
        }
        let is_ancestor = |anc: usize, t: usize| first_desc[anc] <= t && t < anc;

        let mut fronts: Vec<Front> = Vec::with_capacity(nodes.len());
        let mut updates: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        let mut stamp = vec![none; n];
        let mut local = vec![none; n];

        for (t, node) in nodes.iter().enumerate() {
            // symbolic: ancestor variables this front couples to
            let mut boundary = Vec::new();
            let mut consider = |u: usize, boundary: &mut Vec<usize>| -> Result<()> {
                let o = owner[u];
                if o == t || stamp[u] == t {
                    return Ok(());
                }
                if is_ancestor(o, t) {
                    stamp[u] = t;
                    boundary.push(u);
                    Ok(())
                } else if o < t && first_desc[t] <= o {
                    Ok(())
                } else {
                    Err(Error::Contract(format!(
                        "variables of tree nodes {t} and {o} couple but neither is an ancestor"
                    )))
                }
            };
            for &v in &node.vars {
                for (u, _) in a.row(v).chain(at.row(v)) {
                    consider(u, &mut boundary)?;
                }
            }
            for &c in &children[t] {
                for &u in &fronts[c].boundary {
                    consider(u, &mut boundary)?;
                }
            }
            boundary.sort_unstable();

            let own = node.vars.clone();
            let p = own.len();
            let b = boundary.len();
            let f = p + b;
            for (k, &v) in own.iter().chain(boundary.iter()).enumerate() {
                local[v] = k;
            }

            let mut front = vec![0.0; f * f];
            for (k, &v) in own.iter().enumerate() {
                for (u, val) in a.row(v) {
                    let lu = local[u];
                    if lu != none {
                        front[k + lu * f] += val;
                    }
                }
                for (u, val) in at.row(v) {
                    let lu = local[u];
                    if lu != none && lu >= p {
                        front[lu + k * f] += val;
                    }
                }
            }
            for &c in &children[t] {
                let Some(upd) = updates[c].take() else { continue };
                let cb = &fronts[c].boundary;
                let m = cb.len();
                for (cj, &gj) in cb.iter().enumerate() {
                    let lj = local[gj];
                    for (ci, &gi) in cb.iter().enumerate() {
                        front[local[gi] + lj * f] += upd[ci + cj * m];
                    }
                }
            }

            let piv = partial_factor(&mut front, f, p)?;

            let panel = front[..f * p].to_vec();
            let mut u12 = vec![0.0; p * b];
            let mut update = vec![0.0; b * b];
            for q in 0..b {
                u12[q * p..(q + 1) * p].copy_from_slice(&front[(p + q) * f..(p + q) * f + p]);
                update[q * b..(q + 1) * b].copy_from_slice(&front[(p + q) * f + p..(p + q + 1) * f]);
            }
            if b > 0 {
                updates[t] = Some(update);
            }
            for &v in own.iter().chain(boundary.iter()) {
                local[v] = none;
            }
            fronts.push(Front { own, boundary, panel, u12, piv });
        }
        Ok(MultifrontalLu { n, fronts })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Entries stored in the factors.
    pub fn factor_nnz(&self) -> usize {
        self.fronts.iter().map(|f| f.panel.len() + f.u12.len()).sum()
    }

    /// Overwrite `x` (holding the right-hand side) with the solution.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        let mut y = Vec::new();
        for fr in &self.fronts {
            let p = fr.own.len();
            let f = p + fr.boundary.len();
            y.clear();
            y.extend(fr.own.iter().map(|&v| x[v]));
            for (k, &r) in fr.piv.iter().enumerate() {
                y.swap(k, r);
            }
            for k in 0..p {
                let yk = y[k];
                if yk == 0.0 {
                    continue;
                }
                let col = &fr.panel[k * f..(k + 1) * f];
                for i in k + 1..p {
                    y[i] -= col[i] * yk;
                }
                for (q, &g) in fr.boundary.iter().enumerate() {
                    x[g] -= col[p + q] * yk;
                }
            }
            for (k, &v) in fr.own.iter().enumerate() {
                x[v] = y[k];
            }
        }
        for fr in self.fronts.iter().rev() {
            let p = fr.own.len();
            let f = p + fr.boundary.len();
            y.clear();
            y.extend(fr.own.iter().map(|&v| x[v]));
            for (q, &g) in fr.boundary.iter().enumerate() {
                let xb = x[g];
                if xb == 0.0 {
                    continue;
                }
                let col = &fr.u12[q * p..(q + 1) * p];
                for k in 0..p {
                    y[k] -= col[k] * xb;
                }
            }
            for k in (0..p).rev() {
                let col = &fr.panel[k * f..(k + 1) * f];
                y[k] /= col[k];
                let yk = y[k];
                for i in 0..k {
                    y[i] -= col[i] * yk;
                }
            }
            for (k, &v) in fr.own.iter().enumerate() {
                x[v] = y[k];
            }
        }
    }

    /// Solve with one step of iterative refinement against `a`.
    pub fn solve_refined(&self, a: &CsrMatrix, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        let mut r = vec![0.0; self.n];
        a.matvec(&x, &mut r);
        for (ri, bi) in r.iter_mut().zip(rhs) {
            *ri = bi - *ri;
        }
        self.solve_in_place(&mut r);
        for (xi, di) in x.iter_mut().zip(&r) {
            *xi += di;
        }
        x
    }
}

/// Eliminate the first `p` variables of the `f x f` column-major front and
/// leave the Schur complement in the trailing block.
fn partial_factor(front: &mut [f64], f: usize, p: usize) -> Result<Vec<usize>> {
    let mut piv = Vec::with_capacity(p);
    // panel factorization over the first p columns
    for k in 0..p {
        let col = &front[k * f..(k + 1) * f];
        let (mut r, mut best) = (k, col[k].abs());
        for (i, v) in col.iter().enumerate().take(p).skip(k + 1) {
            if v.abs() > best {
                best = v.abs();
                r = i;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return Err(Error::SingularPivot);
        }
        piv.push(r);
        if r != k {
            for c in 0..f {
                front.swap(k + c * f, r + c * f);
            }
        }
        let d = front[k + k * f];
        for v in &mut front[k * f + k + 1..(k + 1) * f] {
            *v /= d;
        }
        let (head, tail) = front.split_at_mut((k + 1) * f);
        let lcol = &head[k * f..(k + 1) * f];
        for c in 0..(p - k - 1) {
            let dst = &mut tail[c * f..(c + 1) * f];
            let ukc = dst[k];
            if ukc == 0.0 {
                continue;
            }
            for i in k + 1..f {
                dst[i] -= lcol[i] * ukc;
            }
        }
    }
    let b = f - p;
    if b == 0 || p == 0 {
        return Ok(piv);
    }
    // U12 = L11^{-1} F12
    for q in 0..b {
        let (head, tail) = front.split_at_mut((p + q) * f);
        let dst = &mut tail[..p];
        for k in 0..p {
            let v = dst[k];
            if v == 0.0 {
                continue;
            }
            let lcol = &head[k * f..k * f + p];
            for i in k + 1..p {
                dst[i] -= lcol[i] * v;
            }
        }
    }
    // F22 -= L21 U12
    let base = front.as_mut_ptr();
    // SAFETY: the three blocks are disjoint regions of `front`; L21 and U12
    // are only read, F22 is only written.
    unsafe {
        matrixmultiply::dgemm(
            b,
            p,
            b,
            -1.0,
            base.add(p) as *const f64,
            1,
            f as isize,
            base.add(p * f) as *const f64,
            1,
            f as isize,
            1.0,
            base.add(p + p * f),
            1,
            f as isize,
        );
    }
    Ok(piv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::grid_dissection;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Non-symmetric 9-point operator on an `mx x my` lattice, two dofs per node.
    fn test_matrix(mx: usize, my: usize, periodic: bool, seed: u64) -> CsrMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let var = |i: usize, j: usize, c: usize| (j * mx + i) * 2 + c;
        let mut e = Vec::new();
        for j in 0..my {
            for i in 0..mx {
                for c in 0..2 {
                    e.push((var(i, j, c), var(i, j, c), 8.0 + rng.random::<f64>()));
                    e.push((var(i, j, c), var(i, j, 1 - c), rng.random::<f64>() - 0.5));
                    for (di, dj) in [(-1i64, -1i64), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)] {
                        let mut ii = i as i64 + di;
                        let jj = j as i64 + dj;
                        if periodic {
                            ii = ii.rem_euclid(mx as i64);
                        }
                        if ii < 0 || jj < 0 || ii >= mx as i64 || jj >= my as i64 {
                            continue;
                        }
                        for c2 in 0..2 {
                            e.push((var(i, j, c), var(ii as usize, jj as usize, c2), rng.random::<f64>() - 0.6));
                        }
                    }
                }
            }
        }
        CsrMatrix::from_triplets(mx * my * 2, e)
    }

    fn check_solve(a: &CsrMatrix, tree: &SeparatorTree) {
        let lu = MultifrontalLu::factor(a, tree).unwrap();
        let n = a.dim();
        let xs: Vec<f64> = (0..n).map(|k| ((k * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        let mut b = vec![0.0; n];
        a.matvec(&xs, &mut b);
        let mut x = b.clone();
        lu.solve_in_place(&mut x);
        let err = xs.iter().zip(&x).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "max error {err}");
    }

    #[test]
    fn solves_grid_operator() {
        for (mx, my) in [(1, 1), (3, 2), (17, 9), (40, 33)] {
            let a = test_matrix(mx, my, false, 7);
            check_solve(&a, &grid_dissection(mx, my, 2, false));
        }
    }

    #[test]
    fn solves_periodic_grid_operator() {
        for (mx, my) in [(3, 50), (6, 21)] {
            let a = test_matrix(mx, my, true, 11);
            check_solve(&a, &grid_dissection(mx, my, 2, true));
        }
    }

    #[test]
    fn single_front_matches_dense() {
        let a = test_matrix(4, 3, false, 3);
        let n = a.dim();
        let tree = SeparatorTree { nodes: vec![TreeNode { vars: (0..n).collect(), parent: None }] };
        check_solve(&a, &tree);
    }

    #[test]
    fn needs_pivoting() {
        // zero diagonal forces a row interchange
        let a = CsrMatrix::from_triplets(2, vec![(0, 1, 1.0), (1, 0, 2.0), (1, 1, 1.0)]);
        let tree = SeparatorTree { nodes: vec![TreeNode { vars: vec![0, 1], parent: None }] };
        let lu = MultifrontalLu::factor(&a, &tree).unwrap();
        let mut x = vec![3.0, 4.0];
        lu.solve_in_place(&mut x);
        assert!((x[0] - 0.5).abs() < 1e-15 && (x[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_inconsistent_tree() {
        let a = test_matrix(4, 1, false, 1);
        // two siblings that couple directly
        let tree = SeparatorTree {
            nodes: vec![
                TreeNode { vars: vec![0, 1, 2, 3], parent: Some(2) },
                TreeNode { vars: vec![4, 5, 6, 7], parent: Some(2) },
                TreeNode { vars: vec![], parent: None },
            ],
        };
        assert!(matches!(MultifrontalLu::factor(&a, &tree), Err(Error::Contract(_))));
        let singular = CsrMatrix::from_triplets(2, vec![(0, 0, 0.0), (1, 1, 1.0)]);
        let tree = SeparatorTree { nodes: vec![TreeNode { vars: vec![0, 1], parent: None }] };
        assert!(matches!(MultifrontalLu::factor(&singular, &tree), Err(Error::SingularPivot)));
    }
}
