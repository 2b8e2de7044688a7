//! Sparse direct solver used by the chain analysis and the barrier method.
//!
//! Matrices arising here (`I - Q^T` for transient chains, `A B^-1 A^T` Schur
//! complements of flow constraints) are structurally close to symmetric and
//! have small bandwidth after a reverse Cuthill-McKee reordering, so a
//! variable-band (skyline) LU without pivoting is sufficient. Both matrix
//! families are either M-matrices or symmetric positive definite, for which
//! unpivoted elimination is stable.

use std::collections::VecDeque;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is singular (pivot {pivot:e} at row {row})")]
    Singular { row: usize, pivot: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

const PSD_PIVOT_TOL: f64 = 1e-15;
const HUGE_PIVOT: f64 = 1e64;

/// Reverse Cuthill-McKee ordering for a symmetric adjacency structure.
///
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let degree: Vec<usize> = adjacency.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));

    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(adjacency, seed, &degree);
        let mut queue = VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adjacency[v]
                .iter()
                .copied()
                .filter(|&u| !visited[u])
                .collect();
            nbrs.sort_by_key(|&u| (degree[u], u));
            nbrs.dedup();
            for u in nbrs {
                if !visited[u] {
                    visited[u] = true;
                    queue.push_back(u);
                }
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(adjacency: &[Vec<usize>], start: usize) -> (Vec<usize>, usize) {
    let mut level = vec![usize::MAX; adjacency.len()];
    let mut queue = VecDeque::new();
    level[start] = 0;
    queue.push_back(start);
    let mut last = start;
    while let Some(v) = queue.pop_front() {
        last = v;
        for &u in &adjacency[v] {
            if level[u] == usize::MAX {
                level[u] = level[v] + 1;
                queue.push_back(u);
            }
        }
    }
    (level, last)
}

fn pseudo_peripheral(adjacency: &[Vec<usize>], seed: usize, degree: &[usize]) -> usize {
    let mut current = seed;
    let (mut levels, _) = bfs_levels(adjacency, current);
    let mut ecc = levels.iter().filter(|&&l| l != usize::MAX).max().copied().unwrap_or(0);
    for _ in 0..8 {
        let candidate = levels
            .iter()
            .enumerate()
            .filter(|&(_, &l)| l == ecc)
            .min_by_key(|&(v, _)| (degree[v], v))
            .map(|(v, _)| v)
            .unwrap_or(current);
        let (cand_levels, _) = bfs_levels(adjacency, candidate);
        let cand_ecc = cand_levels
            .iter()
            .filter(|&&l| l != usize::MAX)
            .max()
            .copied()
            .unwrap_or(0);
        if cand_ecc <= ecc {
            break;
        }
        current = candidate;
        levels = cand_levels;
        ecc = cand_ecc;
    }
    current
}

/// Symbolic structure of a skyline matrix: permutation and row/column starts.
#[derive(Debug, Clone)]
pub struct ProfileStructure {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// `inv[old] = new`
    inv: Vec<usize>,
    /// first nonzero column (row) of each permuted row (column)
    first: Vec<usize>,
    /// offset of each row's strictly-lower segment in the packed arrays
    offset: Vec<usize>,
}

impl ProfileStructure {
    /// Builds the profile for the structural pattern `entries` (pairs of
    /// original indices). Diagonal entries are implicit.
    pub fn new(n: usize, entries: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for (i, j) in entries {
            if i != j {
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
        }
        for list in adjacency.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }
        let perm = reverse_cuthill_mckee(&adjacency);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (old, list) in adjacency.iter().enumerate() {
            let i = inv[old];
            for &nb in list {
                let j = inv[nb];
                if j < i {
                    first[i] = first[i].min(j);
                }
            }
        }
        let mut offset = Vec::with_capacity(n + 1);
        let mut acc = 0;
        for i in 0..n {
            offset.push(acc);
            acc += i - first[i];
        }
        offset.push(acc);
        ProfileStructure {
            n,
            perm,
            inv,
            first,
            offset,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored off-diagonal entries in each triangle.
    pub fn envelope_size(&self) -> usize {
        self.offset[self.n]
    }

    pub fn zeroed(&self) -> ProfileMatrix<'_> {
        let len = self.envelope_size();
        ProfileMatrix {
            structure: self,
            lower: vec![0.0; len],
            upper: vec![0.0; len],
            diag: vec![0.0; self.n],
        }
    }
}

/// A matrix stored in a [`ProfileStructure`]; factorized in place.
#[derive(Debug, Clone)]
pub struct ProfileMatrix<'a> {
    structure: &'a ProfileStructure,
    /// row-wise strictly lower entries
    lower: Vec<f64>,
    /// column-wise strictly upper entries
    upper: Vec<f64>,
    diag: Vec<f64>,
}

impl<'a> ProfileMatrix<'a> {
    /// Adds `value` at original position `(row, col)`. The position must be
    /// part of the symbolic pattern.
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        let s = self.structure;
        let i = s.inv[row];
        let j = s.inv[col];
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => self.diag[i] += value,
            std::cmp::Ordering::Greater => {
                debug_assert!(j >= s.first[i], "entry outside profile");
                self.lower[s.offset[i] + j - s.first[i]] += value;
            }
            std::cmp::Ordering::Less => {
                debug_assert!(i >= s.first[j], "entry outside profile");
                self.upper[s.offset[j] + i - s.first[j]] += value;
            }
        }
    }

    pub fn clear(&mut self) {
        self.lower.iter_mut().for_each(|v| *v = 0.0);
        self.upper.iter_mut().for_each(|v| *v = 0.0);
        self.diag.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Dense matrix-vector product in original indexing (before factorization).
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let s = self.structure;
        let mut px = vec![0.0; s.n];
        for (new, &old) in s.perm.iter().enumerate() {
            px[new] = x[old];
        }
        let mut out = vec![0.0; s.n];
        for i in 0..s.n {
            out[i] += self.diag[i] * px[i];
            let f = s.first[i];
            let row = &self.lower[s.offset[i]..s.offset[i + 1]];
            let col = &self.upper[s.offset[i]..s.offset[i + 1]];
            for (k, j) in (f..i).enumerate() {
                out[i] += row[k] * px[j];
                out[j] += col[k] * px[i];
            }
        }
        let mut result = vec![0.0; s.n];
        for (new, &old) in s.perm.iter().enumerate() {
            result[old] = out[new];
        }
        result
    }

    /// In-place Doolittle factorization `A = L U` (unit lower `L`).
    pub fn factorize(self) -> Result<ProfileLu<'a>, LinalgError> {
        self.factorize_with(None)
    }

    /// Factorization of a symmetric positive semidefinite matrix with unit
    /// diagonal scale. Pivots below `PSD_PIVOT_TOL` are replaced by a huge
    /// value, which zeroes the matching solution component instead of
    /// amplifying rounding noise along a near-null direction.
    pub fn factorize_semidefinite(self) -> Result<ProfileLu<'a>, LinalgError> {
        self.factorize_with(Some(PSD_PIVOT_TOL))
    }

    fn factorize_with(mut self, replace_below: Option<f64>) -> Result<ProfileLu<'a>, LinalgError> {
        let s = self.structure;
        let n = s.n;
        let mut max_diag: f64 = 0.0;
        for d in &self.diag {
            max_diag = max_diag.max(d.abs());
        }
        let tiny = f64::EPSILON * max_diag.max(f64::MIN_POSITIVE) * 1e-4;
        for i in 0..n {
            let fi = s.first[i];
            let oi = s.offset[i];
            for j in fi..i {
                let fj = s.first[j];
                let oj = s.offset[j];
                let k0 = fi.max(fj);
                // U[j][i] -= sum_k L[j][k] U[k][i]
                let mut acc_u = 0.0;
                let mut acc_l = 0.0;
                if k0 < j {
                    let lj = &self.lower[oj + k0 - fj..oj + j - fj];
                    let ui = &self.upper[oi + k0 - fi..oi + j - fi];
                    let li = &self.lower[oi + k0 - fi..oi + j - fi];
                    let uj = &self.upper[oj + k0 - fj..oj + j - fj];
                    for t in 0..lj.len() {
                        acc_u += lj[t] * ui[t];
                        acc_l += li[t] * uj[t];
                    }
                }
                self.upper[oi + j - fi] -= acc_u;
                let pivot = self.diag[j];
                self.lower[oi + j - fi] = (self.lower[oi + j - fi] - acc_l) / pivot;
            }
            let li = &self.lower[oi..s.offset[i + 1]];
            let ui = &self.upper[oi..s.offset[i + 1]];
            let dot: f64 = li.iter().zip(ui).map(|(a, b)| a * b).sum();
            self.diag[i] -= dot;
            if let Some(tol) = replace_below {
                if self.diag[i].is_finite() && self.diag[i] <= tol * max_diag {
                    self.diag[i] = HUGE_PIVOT;
                }
            }
            if !(self.diag[i].abs() > tiny) || !self.diag[i].is_finite() {
                return Err(LinalgError::Singular {
                    row: s.perm[i],
                    pivot: self.diag[i],
                });
            }
        }
        Ok(ProfileLu { factors: self })
    }

    fn solve_factored(&self, b: &[f64]) -> Vec<f64> {
        let s = self.structure;
        let n = s.n;
        let mut y = vec![0.0; n];
        for (new, &old) in s.perm.iter().enumerate() {
            y[new] = b[old];
        }
        // forward: L y = b
        for i in 0..n {
            let fi = s.first[i];
            let row = &self.lower[s.offset[i]..s.offset[i + 1]];
            let dot: f64 = row.iter().zip(&y[fi..i]).map(|(a, b)| a * b).sum();
            y[i] -= dot;
        }
        // backward: U x = y (column-oriented)
        for i in (0..n).rev() {
            y[i] /= self.diag[i];
            let fi = s.first[i];
            let xi = y[i];
            let col = &self.upper[s.offset[i]..s.offset[i + 1]];
            for (k, v) in col.iter().enumerate() {
                y[fi + k] -= v * xi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in s.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

/// Factorized profile matrix.
#[derive(Debug, Clone)]
pub struct ProfileLu<'a> {
    factors: ProfileMatrix<'a>,
}

impl ProfileLu<'_> {
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let n = self.factors.structure.n;
        if b.len() != n {
            return Err(LinalgError::Dimension {
                expected: n,
                got: b.len(),
            });
        }
        Ok(self.factors.solve_factored(b))
    }
}

/// Compressed sparse row matrix in original indexing.
#[derive(Debug, Clone, Default)]
pub struct CsrMatrix {
    pub rows: usize,
    pub cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn transpose_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                out[c] += v * y[r];
            }
        }
        out
    }
}

/// Solves a square sparse system with one step of iterative refinement.
pub fn solve_sparse(matrix: &CsrMatrix, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if matrix.rows != matrix.cols {
        return Err(LinalgError::Dimension {
            expected: matrix.rows,
            got: matrix.cols,
        });
    }
    let n = matrix.rows;
    let structure = ProfileStructure::new(
        n,
        (0..n).flat_map(|r| matrix.row(r).map(move |(c, _)| (r, c))),
    );
    let mut m = structure.zeroed();
    for r in 0..n {
        for (c, v) in matrix.row(r) {
            m.add(r, c, v);
        }
    }
    let lu = m.factorize()?;
    let mut x = lu.solve(rhs)?;
    let ax = matrix.mul_vec(&x);
    let residual: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let correction = lu.solve(&residual)?;
    for (xi, ci) in x.iter_mut().zip(correction) {
        *xi += ci;
    }
    Ok(x)
}

/// Dense Gaussian elimination with partial pivoting on a row-major `n x n`
/// matrix. Returns the inverse.
pub fn dense_inverse(n: usize, a: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    let scale = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&x, &y| m[x * n + col].abs().total_cmp(&m[y * n + col].abs()))
            .unwrap();
        let pivot = m[pivot_row * n + col];
        if !(pivot.abs() > scale * 1e-300) || !pivot.is_finite() {
            return Err(LinalgError::Singular { row: col, pivot });
        }
        if pivot_row != col {
            for k in 0..n {
                m.swap(col * n + k, pivot_row * n + k);
                inv.swap(col * n + k, pivot_row * n + k);
            }
        }
        let p = m[col * n + col];
        for k in 0..n {
            m[col * n + k] /= p;
            inv[col * n + k] /= p;
        }
        for r in 0..n {
            if r != col {
                let factor = m[r * n + col];
                if factor != 0.0 {
                    for k in 0..n {
                        m[r * n + k] -= factor * m[col * n + k];
                        inv[r * n + k] -= factor * inv[col * n + k];
                    }
                }
            }
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_mul(n: usize, a: &[f64], x: &[f64]) -> Vec<f64> {
        (0..n).map(|i| (0..n).map(|j| a[i * n + j] * x[j]).sum()).collect()
    }

    #[test]
    fn rcm_is_a_permutation() {
        let adj = vec![vec![3], vec![2, 4], vec![1], vec![0], vec![1]];
        let mut p = reverse_cuthill_mckee(&adj);
        p.sort();
        assert_eq!(p, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn solves_path_laplacian() {
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, t);
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let b = a.mul_vec(&x_true);
        let x = solve_sparse(&a, &b).unwrap();
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_is_reported() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(matches!(solve_sparse(&a, &[1.0, 1.0]), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn dense_inverse_matches_identity() {
        let a = [4.0, 1.0, 2.0, 0.5, 3.0, 0.0, 1.0, 1.0, 5.0];
        let inv = dense_inverse(3, &a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn semidefinite_factorization_drops_the_null_direction() {
        let structure = ProfileStructure::new(3, [(0, 1), (1, 2)]);
        let mut m = structure.zeroed();
        for (i, j, v) in [(0, 0, 1.0), (1, 1, 1.0), (0, 1, -1.0), (1, 0, -1.0), (2, 2, 2.0)] {
            m.add(i, j, v);
        }
        assert!(m.clone().factorize().is_err());
        let x = m.factorize_semidefinite().unwrap().solve(&[1.0, -1.0, 4.0]).unwrap();
        // consistent right-hand side is still solved exactly
        assert!((x[0] - x[1] - 1.0).abs() < 1e-12);
        assert!(x.iter().all(|v| v.abs() < 10.0));
        assert!((x[2] - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn random_diagonally_dominant_systems(
            n in 2usize..25,
            seed in proptest::collection::vec(-1.0f64..1.0, 625),
            density in 0.05f64..0.5,
        ) {
            let mut dense = vec![0.0; n * n];
            let mut t = Vec::new();
            for i in 0..n {
                let mut row_sum = 0.0;
                for j in 0..n {
                    let v = seed[(i * n + j) % seed.len()];
                    if i != j && v.abs() < density {
                        dense[i * n + j] = v;
                        row_sum += v.abs();
                        t.push((i, j, v));
                    }
                }
                dense[i * n + i] = row_sum + 1.0;
                t.push((i, i, row_sum + 1.0));
            }
            let a = CsrMatrix::from_triplets(n, n, t);
            let x_true: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 0.1).collect();
            let b = dense_mul(n, &dense, &x_true);
            let x = solve_sparse(&a, &b).unwrap();
            for (u, v) in x.iter().zip(&x_true) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }
    }
}
