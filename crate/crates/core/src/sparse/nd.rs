use super::{SeparatorTree, TreeNode};

const LEAF_NODES: usize = 64;

/// Geometric nested dissection of an `mx x my` lattice with `dofs`
/// variables per lattice node, numbered `(j * mx + i) * dofs + c`.
///
/// Separators are single lattice lines, which decouple 9-point stencils.
/// With `periodic_x` the lattice wraps along `i`, so only rows are used as
/// separators.
pub fn grid_dissection(mx: usize, my: usize, dofs: usize, periodic_x: bool) -> SeparatorTree {
    let mut tree = SeparatorTree::default();
    let root = dissect(&mut tree, mx, dofs, periodic_x, (0, mx), (0, my));
    if root.is_none() {
        tree.nodes.push(TreeNode { vars: Vec::new(), parent: None });
    }
    tree
}

fn block_vars(mx: usize, dofs: usize, (i0, i1): (usize, usize), (j0, j1): (usize, usize)) -> Vec<usize> {
    let mut vars = Vec::with_capacity((i1 - i0) * (j1 - j0) * dofs);
    for j in j0..j1 {
        for i in i0..i1 {
            for c in 0..dofs {
                vars.push((j * mx + i) * dofs + c);
            }
        }
    }
    vars
}

fn dissect(
    tree: &mut SeparatorTree,
    mx: usize,
    dofs: usize,
    periodic_x: bool,
    xs: (usize, usize),
    ys: (usize, usize),
) -> Option<usize> {
    let (w, h) = (xs.1 - xs.0, ys.1 - ys.0);
    if w == 0 || h == 0 {
        return None;
    }
    if w * h <= LEAF_NODES || (periodic_x && h <= 2) {
        tree.nodes.push(TreeNode { vars: block_vars(mx, dofs, xs, ys), parent: None });
        return Some(tree.nodes.len() - 1);
    }
    let (a, b, sep) = if !periodic_x && w >= h {
        let m = xs.0 + w / 2;
        (
            dissect(tree, mx, dofs, periodic_x, (xs.0, m), ys),
            dissect(tree, mx, dofs, periodic_x, (m + 1, xs.1), ys),
            block_vars(mx, dofs, (m, m + 1), ys),
        )
    } else {
        let m = ys.0 + h / 2;
        (
            dissect(tree, mx, dofs, periodic_x, xs, (ys.0, m)),
            dissect(tree, mx, dofs, periodic_x, xs, (m + 1, ys.1)),
            block_vars(mx, dofs, xs, (m, m + 1)),
        )
    };
    tree.nodes.push(TreeNode { vars: sep, parent: None });
    let me = tree.nodes.len() - 1;
    for child in [a, b].into_iter().flatten() {
        tree.nodes[child].parent = Some(me);
    }
    Some(me)
}
