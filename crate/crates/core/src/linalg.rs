//! Dense row-major matrices and the small set of symmetric kernels the solvers
//! need: Gramians, partial Gramians, rank-1 accumulation and Cholesky solves.
//!
//! Reductions use fixed-width lane accumulators so that the compiler can
//! vectorize them without reassociation flags. The lane layout is fixed, so
//! results do not depend on the thread count of the caller.

use std::ops::Range;

use thiserror::Error;

const LANES: usize = 8;

/// Rows per chunk when reducing Gramians. Chunks are summed in order, so the
/// result is identical for any number of worker threads.
const GRAMIAN_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("matrix is not positive definite: pivot {pivot} is {value}")]
pub struct NotPositiveDefinite {
    pub pivot: usize,
    pub value: f64,
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data. Panics if the length does not match.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length does not match shape");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        self.iter_rows().map(|r| dot(r, v)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    /// Copies the strict lower triangle onto the upper one.
    pub fn mirror_lower(&mut self) {
        debug_assert_eq!(self.rows, self.cols);
        mirror_lower(&mut self.data, self.rows);
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    let s0 = (acc[0] + acc[4]) + (acc[2] + acc[6]);
    let s1 = (acc[1] + acc[5]) + (acc[3] + acc[7]);
    (s0 + s1) + tail
}

/// `y += a * x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Adds `scale * v v^T` to the lower triangle (diagonal included) of the
/// row-major `k x k` buffer `acc`. The upper triangle is left untouched; call
/// [`mirror_lower`] before reading the full matrix.
#[inline]
pub fn accumulate_outer_lower(acc: &mut [f64], v: &[f64], scale: f64) {
    let k = v.len();
    debug_assert_eq!(acc.len(), k * k);
    for (r, &vr) in v.iter().enumerate() {
        let s = scale * vr;
        axpy(s, &v[..=r], &mut acc[r * k..r * k + r + 1]);
    }
}

/// Rank-4 form of [`accumulate_outer_lower`]: adds
/// `sum_j scales[j] * vs[j] vs[j]^T`, touching each entry of `acc` once.
#[inline]
pub fn accumulate_outer_lower4(acc: &mut [f64], vs: [&[f64]; 4], scales: [f64; 4]) {
    let k = vs[0].len();
    debug_assert_eq!(acc.len(), k * k);
    let [v0, v1, v2, v3] = vs.map(|v| &v[..k]);
    for r in 0..k {
        let c0 = scales[0] * v0[r];
        let c1 = scales[1] * v1[r];
        let c2 = scales[2] * v2[r];
        let c3 = scales[3] * v3[r];
        let n = r + 1;
        let out = &mut acc[r * k..r * k + n];
        for ((((o, a), b), c), d) in out.iter_mut().zip(&v0[..n]).zip(&v1[..n]).zip(&v2[..n]).zip(&v3[..n]) {
            *o += (c0 * a + c1 * b) + (c2 * c + c3 * d);
        }
    }
}

/// Lower-triangle accumulation of `sum_n scale_n v_n v_n^T` for the `count`
/// pairs `(v_n, scale_n) = term(n)`, four at a time.
#[inline]
pub fn accumulate_outer_lower_batch<'a>(acc: &mut [f64], count: usize, term: impl Fn(usize) -> (&'a [f64], f64)) {
    let mut n = 0;
    while n + 4 <= count {
        let t = [term(n), term(n + 1), term(n + 2), term(n + 3)];
        accumulate_outer_lower4(acc, t.map(|x| x.0), t.map(|x| x.1));
        n += 4;
    }
    for n in n..count {
        let (v, scale) = term(n);
        accumulate_outer_lower(acc, v, scale);
    }
}

/// `acc += scale * v v^T` on the full matrix.
pub fn accumulate_outer(acc: &mut Matrix, v: &[f64], scale: f64) {
    assert_eq!(acc.rows(), v.len());
    assert_eq!(acc.cols(), v.len());
    accumulate_outer_lower(&mut acc.data, v, scale);
    acc.mirror_lower();
}

pub fn mirror_lower(a: &mut [f64], n: usize) {
    for i in 0..n {
        for j in 0..i {
            a[j * n + i] = a[i * n + j];
        }
    }
}

/// Symmetric Gram matrix `G = sum_r e_r e_r^T` over the rows of `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gramian(Matrix);

impl Gramian {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)]).collect()
    }

    /// `v^T G v`
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        self.0.iter_rows().zip(v).map(|(row, &vi)| vi * dot(row, v)).sum()
    }
}

pub fn gramian(e: &Matrix) -> Gramian {
    let d = e.cols();
    let chunks: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        e.as_slice()
            .par_chunks(GRAMIAN_CHUNK * d.max(1))
            .map(|chunk| {
                let mut acc = vec![0.0; d * d];
                for row in chunk.chunks_exact(d.max(1)) {
                    accumulate_outer_lower(&mut acc, row, 1.0);
                }
                acc
            })
            .collect()
    };
    let mut g = vec![0.0; d * d];
    for c in &chunks {
        for (gi, ci) in g.iter_mut().zip(c) {
            *gi += ci;
        }
    }
    mirror_lower(&mut g, d);
    Gramian(Matrix::from_vec(d, d, g))
}

/// The `d x |block|` slab of a Gramian: column `j` equals column `block[j]` of
/// the full Gramian. Stored transposed, so each column is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialGramian {
    block: Vec<usize>,
    // row j = column block[j] of the full Gramian
    columns: Matrix,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BlockError {
    #[error("block is empty")]
    Empty,
    #[error("block index {index} out of range for dimension {dim}")]
    OutOfRange { index: usize, dim: usize },
    #[error("block indices must be strictly increasing (found {index} after {previous})")]
    NotIncreasing { previous: usize, index: usize },
}

pub fn validate_block(block: &[usize], dim: usize) -> Result<(), BlockError> {
    if block.is_empty() {
        return Err(BlockError::Empty);
    }
    for (n, &index) in block.iter().enumerate() {
        if index >= dim {
            return Err(BlockError::OutOfRange { index, dim });
        }
        if n > 0 && block[n - 1] >= index {
            return Err(BlockError::NotIncreasing {
                previous: block[n - 1],
                index,
            });
        }
    }
    Ok(())
}

impl PartialGramian {
    pub fn block(&self) -> &[usize] {
        &self.block
    }

    pub fn dim(&self) -> usize {
        self.columns.cols()
    }

    pub fn width(&self) -> usize {
        self.block.len()
    }

    /// Column `j` of the slab (length `d`).
    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        self.columns.row(j)
    }

    /// Entry `(block[a], block[b])` of the full Gramian.
    #[inline]
    pub fn restricted(&self, a: usize, b: usize) -> f64 {
        self.columns[(b, self.block[a])]
    }

    /// The slab in its `d x |block|` orientation.
    pub fn to_matrix(&self) -> Matrix {
        self.columns.transpose()
    }
}

pub fn partial_gramian(e: &Matrix, block: &[usize]) -> Result<PartialGramian, BlockError> {
    validate_block(block, e.cols())?;
    Ok(partial_gramian_unchecked(e, block))
}

/// Partial Gramian for a contiguous block of dimensions.
pub fn partial_gramian_range(e: &Matrix, block: Range<usize>) -> Result<PartialGramian, BlockError> {
    let idx: Vec<usize> = block.collect();
    partial_gramian(e, &idx)
}

fn partial_gramian_unchecked(e: &Matrix, block: &[usize]) -> PartialGramian {
    use rayon::prelude::*;
    let d = e.cols();
    let p = block.len();
    let chunks: Vec<Vec<f64>> = e
        .as_slice()
        .par_chunks(GRAMIAN_CHUNK * d.max(1))
        .map(|chunk| {
            let mut acc = vec![0.0; p * d];
            for row in chunk.chunks_exact(d) {
                for (j, &f) in block.iter().enumerate() {
                    axpy(row[f], row, &mut acc[j * d..(j + 1) * d]);
                }
            }
            acc
        })
        .collect();
    let mut cols = vec![0.0; p * d];
    for c in &chunks {
        for (gi, ci) in cols.iter_mut().zip(c) {
            *gi += ci;
        }
    }
    PartialGramian {
        block: block.to_vec(),
        columns: Matrix::from_vec(p, d, cols),
    }
}

/// In-place Cholesky factorization `A = L L^T` of the row-major `n x n`
/// buffer. Only the lower triangle is read; on success it holds `L`.
pub fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<(), NotPositiveDefinite> {
    debug_assert_eq!(a.len(), n * n);
    // Row-by-row (Cholesky-Crout): row i only reads the finished rows above it.
    for i in 0..n {
        let (done, rest) = a.split_at_mut(i * n);
        let row_i = &mut rest[..n];
        for j in 0..i {
            let row_j = &done[j * n..j * n + j + 1];
            row_i[j] = (row_i[j] - dot(&row_i[..j], &row_j[..j])) / row_j[j];
        }
        let diag = row_i[i] - dot(&row_i[..i], &row_i[..i]);
        // also rejects NaN
        if !(diag > 0.0) {
            return Err(NotPositiveDefinite { pivot: i, value: diag });
        }
        row_i[i] = diag.sqrt();
    }
    Ok(())
}

/// Solves `L L^T x = b` in place given a factor from [`cholesky_in_place`].
pub fn cholesky_solve_in_place(l: &[f64], n: usize, b: &mut [f64]) {
    debug_assert_eq!(b.len(), n);
    for i in 0..n {
        let row = &l[i * n..i * n + i];
        b[i] = (b[i] - dot(row, &b[..i])) / l[i * n + i];
    }
    for i in (0..n).rev() {
        let xi = b[i] / l[i * n + i];
        b[i] = xi;
        let (head, _) = b.split_at_mut(i);
        axpy(-xi, &l[i * n..i * n + i], head);
    }
}

/// Solves `A x = b` for symmetric positive definite `A` via Cholesky.
pub fn spd_solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>, NotPositiveDefinite> {
    let n = a.rows();
    assert_eq!(a.cols(), n, "matrix must be square");
    assert_eq!(b.len(), n, "right-hand side length mismatch");
    let mut factor = a.as_slice().to_vec();
    cholesky_in_place(&mut factor, n)?;
    let mut x = b.to_vec();
    cholesky_solve_in_place(&factor, n, &mut x);
    Ok(x)
}
