//! Envelope (skyline) LU factorization for sparse matrices with a symmetric
//! nonzero pattern, after a reverse Cuthill–McKee reordering.
//!
//! No pivoting is performed. The matrices factored here are `I - rho W` with
//! `W` nonnegative, rows summing to at most one and `|rho| < 1`, which are
//! strictly diagonally dominant by rows; that property survives symmetric
//! permutation and guarantees a stable pivot-free LU.

use std::collections::VecDeque;

use crate::error::{GsarError, Result};

/// Reverse Cuthill–McKee ordering of an undirected graph given as sorted
/// adjacency lists. Returns `perm` with `perm[new] = old`.
pub(crate) fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();

    // process components, each from its lowest-degree unvisited vertex
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        let root = pseudo_peripheral(adj, start, &degree);
        visited[root] = true;
        queue.push_back(root);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            next.sort_by_key(|&u| (degree[u], u));
            for u in next {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

/// George–Liu heuristic: repeatedly jump to a low-degree vertex of the last
/// BFS level until the eccentricity stops growing.
fn pseudo_peripheral(adj: &[Vec<usize>], start: usize, degree: &[usize]) -> usize {
    let mut root = start;
    let mut ecc = 0;
    loop {
        let levels = bfs_levels(adj, root);
        let depth = levels.len() - 1;
        let candidate = *levels[depth].iter().min_by_key(|&&v| (degree[v], v)).unwrap();
        if depth <= ecc || candidate == root {
            return root;
        }
        ecc = depth;
        root = candidate;
    }
}

fn bfs_levels(adj: &[Vec<usize>], root: usize) -> Vec<Vec<usize>> {
    let mut seen = vec![false; adj.len()];
    seen[root] = true;
    let mut levels = vec![vec![root]];
    loop {
        let mut next = Vec::new();
        for &v in levels.last().unwrap() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    next.push(u);
                }
            }
        }
        if next.is_empty() {
            return levels;
        }
        levels.push(next);
    }
}

/// `P M Pᵀ = L U` with `L` unit lower triangular, both stored inside the
/// envelope `first[i]..i` of row `i` (for `L`) and column `i` (for `U`).
#[derive(Debug, Clone)]
pub(crate) struct SkylineLu {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    first: Vec<usize>,
    /// Start of row `i` of `L` (strict part) inside `lower`.
    lower_ptr: Vec<usize>,
    lower: Vec<f64>,
    /// Start of column `i` of `U` (diagonal last) inside `upper`.
    upper_ptr: Vec<usize>,
    upper: Vec<f64>,
}

impl SkylineLu {
    /// Factors the matrix whose entries (in original numbering) are given by
    /// `diag` and the off-diagonal triplets. `adj` must cover the symmetric
    /// pattern of the off-diagonal part.
    pub(crate) fn factor(
        diag: &[f64],
        offdiag: impl Iterator<Item = (usize, usize, f64)>,
        adj: &[Vec<usize>],
    ) -> Result<Self> {
        let n = diag.len();
        let perm = reverse_cuthill_mckee(adj);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }

        let mut first: Vec<usize> = (0..n).collect();
        for (new, &old) in perm.iter().enumerate() {
            for &u in &adj[old] {
                let other = inv[u];
                if other < new {
                    first[new] = first[new].min(other);
                }
            }
        }

        let mut lower_ptr = Vec::with_capacity(n + 1);
        let mut upper_ptr = Vec::with_capacity(n + 1);
        let (mut lo, mut up) = (0, 0);
        for (i, &f) in first.iter().enumerate() {
            lower_ptr.push(lo);
            upper_ptr.push(up);
            lo += i - f;
            up += i - f + 1;
        }
        lower_ptr.push(lo);
        upper_ptr.push(up);

        let mut lu = Self {
            n,
            perm,
            first,
            lower_ptr,
            lower: vec![0.0; lo],
            upper_ptr,
            upper: vec![0.0; up],
        };

        // scatter the permuted matrix into the envelope
        for (old, &d) in diag.iter().enumerate() {
            let i = inv[old];
            *lu.u_mut(i, i) = d;
        }
        for (r, c, v) in offdiag {
            let (i, j) = (inv[r], inv[c]);
            if i > j {
                *lu.l_mut(i, j) += v;
            } else {
                *lu.u_mut(i, j) += v;
            }
        }

        for i in 0..n {
            let fi = lu.first[i];
            for j in fi..i {
                let start = fi.max(lu.first[j]);
                let mut l_acc = lu.l(i, j);
                let mut u_acc = lu.u(j, i);
                for m in start..j {
                    l_acc -= lu.l(i, m) * lu.u(m, j);
                    u_acc -= lu.l(j, m) * lu.u(m, i);
                }
                *lu.l_mut(i, j) = l_acc / lu.u(j, j);
                *lu.u_mut(j, i) = u_acc;
            }
            let mut d = lu.u(i, i);
            for m in fi..i {
                d -= lu.l(i, m) * lu.u(m, i);
            }
            if !d.is_finite() || d.abs() < 1e-14 {
                return Err(GsarError::Singular(format!("zero pivot {d:e} at position {i}")));
            }
            *lu.u_mut(i, i) = d;
        }
        Ok(lu)
    }

    #[inline]
    fn l(&self, i: usize, j: usize) -> f64 {
        self.lower[self.lower_ptr[i] + j - self.first[i]]
    }

    #[inline]
    fn l_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.lower[self.lower_ptr[i] + j - self.first[i]]
    }

    /// Entry `(i, j)` of `U` with `i <= j`.
    #[inline]
    fn u(&self, i: usize, j: usize) -> f64 {
        self.upper[self.upper_ptr[j] + i - self.first[j]]
    }

    #[inline]
    fn u_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.upper[self.upper_ptr[j] + i - self.first[j]]
    }

    /// Solves `M x = b` in place.
    pub(crate) fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let row = &self.lower[self.lower_ptr[i]..self.lower_ptr[i + 1]];
            let fi = self.first[i];
            let s: f64 = row.iter().zip(&y[fi..i]).map(|(l, v)| l * v).sum();
            y[i] -= s;
        }
        for j in (0..n).rev() {
            let col = &self.upper[self.upper_ptr[j]..self.upper_ptr[j + 1]];
            let xj = y[j] / col[col.len() - 1];
            y[j] = xj;
            let fj = self.first[j];
            for (v, u) in y[fj..j].iter_mut().zip(col) {
                *v -= u * xj;
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = y[new];
        }
    }

    /// Solves `Mᵀ x = b` in place.
    pub(crate) fn solve_transpose_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let col = &self.upper[self.upper_ptr[i]..self.upper_ptr[i + 1]];
            let fi = self.first[i];
            let (strict, diag) = col.split_at(col.len() - 1);
            let s: f64 = strict.iter().zip(&y[fi..i]).map(|(u, v)| u * v).sum();
            y[i] = (y[i] - s) / diag[0];
        }
        for j in (0..n).rev() {
            let row = &self.lower[self.lower_ptr[j]..self.lower_ptr[j + 1]];
            let xj = y[j];
            let fj = self.first[j];
            for (v, l) in y[fj..j].iter_mut().zip(row) {
                *v -= l * xj;
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = y[new];
        }
    }

    /// Stored entries in the envelope (diagnostic).
    #[cfg(test)]
    fn envelope_size(&self) -> usize {
        self.lower.len() + self.upper.len()
    }
}
