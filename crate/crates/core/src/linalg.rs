//! Complex sparse (CSR) operators and dense Hermitian helpers.

use crate::prelude::*;
use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Square complex matrix in compressed sparse row layout.
///
/// Column indices are sorted within each row and explicit zeros are dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

impl CsrMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, indptr: vec![0; dim + 1], indices: Vec::new(), values: Vec::new() }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(&vec![ONE; dim])
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let triplets = diag.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(diag.len(), triplets)
    }

    /// Builds a matrix from `(row, col, value)` entries; duplicates are summed.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; dim + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut rows = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) outside a {dim}x{dim} matrix");
            if let (Some(&lr), Some(&lc)) = (rows.last(), indices.last()) {
                if lr == r && lc == c {
                    *values.last_mut().unwrap() += v;
                    continue;
                }
            }
            rows.push(r);
            indices.push(c);
            values.push(v);
        }
        let mut keep_idx = Vec::with_capacity(indices.len());
        let mut keep_val = Vec::with_capacity(values.len());
        for ((r, c), v) in rows.into_iter().zip(indices).zip(values) {
            if v != ZERO {
                indptr[r + 1] += 1;
                keep_idx.push(c);
                keep_val.push(v);
            }
        }
        for r in 0..dim {
            indptr[r + 1] += indptr[r];
        }
        Self { dim, indptr, indices: keep_idx, values: keep_val }
    }

    pub fn from_dense(m: &DMatrix<C64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "operators must be square");
        let mut t = Vec::new();
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                if m[(r, c)] != ZERO {
                    t.push((r, c, m[(r, c)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), t)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates over stored entries as `(row, col, value)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.indptr[r]..self.indptr[r + 1]).map(move |k| (r, self.indices[k], self.values[k]))
        })
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let row = &self.indices[self.indptr[r]..self.indptr[r + 1]];
        match row.binary_search(&c) {
            Ok(k) => self.values[self.indptr[r] + k],
            Err(_) => ZERO,
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        if s == ZERO {
            return Self::zeros(self.dim);
        }
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &Self, s: C64) -> Self {
        assert_eq!(self.dim, other.dim);
        let t = self.iter().chain(other.iter().map(|(r, c, v)| (r, c, s * v))).collect();
        Self::from_triplets(self.dim, t)
    }

    pub fn adjoint(&self) -> Self {
        let t = self.iter().map(|(r, c, v)| (c, r, v.conj())).collect();
        Self::from_triplets(self.dim, t)
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut acc = vec![ZERO; n];
        let mut mark = vec![usize::MAX; n];
        let mut t = Vec::new();
        for r in 0..n {
            let mut cols = Vec::new();
            for k in self.indptr[r]..self.indptr[r + 1] {
                let (mid, a) = (self.indices[k], self.values[k]);
                for q in other.indptr[mid]..other.indptr[mid + 1] {
                    let c = other.indices[q];
                    if mark[c] != r {
                        mark[c] = r;
                        acc[c] = ZERO;
                        cols.push(c);
                    }
                    acc[c] += a * other.values[q];
                }
            }
            for c in cols {
                t.push((r, c, acc[c]));
            }
        }
        Self::from_triplets(n, t)
    }

    /// `y += s * A x`.
    pub fn matvec_acc(&self, s: C64, x: &[C64], y: &mut [C64]) {
        debug_assert!(x.len() == self.dim && y.len() == self.dim);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut sum = ZERO;
            for k in self.indptr[r]..self.indptr[r + 1] {
                sum += self.values[k] * x[self.indices[k]];
            }
            *yr += s * sum;
        }
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.dim];
        self.matvec_acc(ONE, x, &mut y);
        y
    }

    /// `⟨x|A|x⟩` without normalization.
    pub fn quadratic_form(&self, x: &[C64]) -> C64 {
        let mut s = ZERO;
        for r in 0..self.dim {
            let mut row = ZERO;
            for k in self.indptr[r]..self.indptr[r + 1] {
                row += self.values[k] * x[self.indices[k]];
            }
            s += x[r].conj() * row;
        }
        s
    }

    /// `out += s * A ρ` for a dense column-major ρ.
    pub fn left_mul_acc(&self, s: C64, rho: &DMatrix<C64>, out: &mut DMatrix<C64>) {
        let n = self.dim;
        let src = rho.as_slice();
        let dst = out.as_mut_slice();
        for c in 0..n {
            let col = &src[c * n..(c + 1) * n];
            let ocol = &mut dst[c * n..(c + 1) * n];
            for (r, o) in ocol.iter_mut().enumerate() {
                let mut sum = ZERO;
                for k in self.indptr[r]..self.indptr[r + 1] {
                    sum += self.values[k] * col[self.indices[k]];
                }
                *o += s * sum;
            }
        }
    }

    /// `out += s * ρ A` for a dense column-major ρ.
    pub fn right_mul_acc(&self, s: C64, rho: &DMatrix<C64>, out: &mut DMatrix<C64>) {
        let n = self.dim;
        let src = rho.as_slice();
        let dst = out.as_mut_slice();
        for r in 0..n {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let (c, v) = (self.indices[k], s * self.values[k]);
                let col = &src[r * n..(r + 1) * n];
                let ocol = &mut dst[c * n..(c + 1) * n];
                for (o, x) in ocol.iter_mut().zip(col) {
                    *o += v * x;
                }
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::from_element(self.dim, self.dim, ZERO);
        for (r, c, v) in self.iter() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// `max |A − A†|`.
    pub fn hermitian_defect(&self) -> f64 {
        self.add_scaled(&self.adjoint(), -ONE).max_abs()
    }

    /// Frobenius inner product `Tr(A† B)`.
    pub fn hs_inner(&self, other: &Self) -> C64 {
        self.iter().map(|(r, c, v)| v.conj() * other.get(r, c)).sum()
    }

    /// Induced ∞-norm (max absolute row sum), an upper bound on the spectral norm
    /// for Hermitian matrices.
    pub fn row_norm(&self) -> f64 {
        (0..self.dim)
            .map(|r| self.values[self.indptr[r]..self.indptr[r + 1]].iter().map(|v| v.norm()).sum())
            .fold(0.0, f64::max)
    }

    /// Embeds a single-factor matrix into a tensor product of factors with
    /// sizes `dims`, acting on factor `slot`. Factor 0 is most significant.
    pub fn embed(factor: &Self, dims: &[usize], slot: usize) -> Self {
        let m = dims[slot];
        assert_eq!(factor.dim, m, "factor size does not match slot dimension");
        let before: usize = dims[..slot].iter().product();
        let after: usize = dims[slot + 1..].iter().product();
        let dim = before * m * after;
        let mut t = Vec::with_capacity(factor.nnz() * before * after);
        for pre in 0..before {
            for (i, j, v) in factor.iter() {
                for post in 0..after {
                    let row = (pre * m + i) * after + post;
                    let col = (pre * m + j) * after + post;
                    t.push((row, col, v));
                }
            }
        }
        Self::from_triplets(dim, t)
    }
}

pub fn zeros(dim: usize) -> DMatrix<C64> {
    DMatrix::from_element(dim, dim, ZERO)
}

pub fn trace(m: &DMatrix<C64>) -> C64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.norm()))
}

/// `max |M − M†|`.
pub fn hermitian_defect(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut d: f64 = 0.0;
    for c in 0..n {
        for r in 0..=c {
            d = d.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    d
}

/// Replaces `m` by its Hermitian part, removing rounding asymmetry.
pub fn symmetrize(m: &mut DMatrix<C64>) {
    let n = m.nrows();
    for c in 0..n {
        for r in 0..c {
            let v = 0.5 * (m[(r, c)] + m[(c, r)].conj());
            m[(r, c)] = v;
            m[(c, r)] = v.conj();
        }
        m[(c, c)] = C64::new(m[(c, c)].re, 0.0);
    }
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let mut h = m.clone();
    symmetrize(&mut h);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eigenvalue(m: &DMatrix<C64>) -> f64 {
    hermitian_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// `½‖A − B‖₁` for Hermitian `A`, `B`.
pub fn trace_distance(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    0.5 * hermitian_eigenvalues(&(a - b)).iter().map(|l| l.abs()).sum::<f64>()
}

/// Eigen-decomposition of a real symmetric matrix, eigenvalues descending.
pub fn symmetric_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}
