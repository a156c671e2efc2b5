//! Small dense complex and real matrix kernels.
//!
//! Matrices here are at most a few hundred rows, so everything is a plain
//! row-major `Vec` with straightforward loops.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::math::{atan2, hypot, sqrt, TAU};
use crate::{Error, Result};

pub type C64 = num_complex::Complex64;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Modulus of a complex number, overflow-safe.
#[inline]
pub fn cabs(z: C64) -> f64 {
    hypot(z.re, z.im)
}

/// Phase of `z` in `[0, 2π)`.
#[inline]
pub fn phase(z: C64) -> f64 {
    let p = atan2(z.im, z.re);
    let p = if p < 0.0 { p + TAU } else { p };
    if p >= TAU {
        0.0
    } else {
        p
    }
}

#[inline]
pub fn from_polar(magnitude: f64, phase: f64) -> C64 {
    let (s, c) = crate::math::sin_cos(phase);
    c64(magnitude * c, magnitude * s)
}

/// Dense row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument("data length does not match shape"));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from real-valued rows.
    pub fn from_real(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::InvalidArgument("data length does not match shape"));
        }
        Ok(Self {
            rows,
            cols,
            data: values.iter().map(|&v| C64::new(v, 0.0)).collect(),
        })
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [C64] {
        let cols = self.cols;
        &mut self.data[r * cols..(r + 1) * cols]
    }

    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn check_shape(&self, rows: usize, cols: usize) -> Result<()> {
        if self.rows != rows || self.cols != cols {
            return Err(Error::DimensionMismatch {
                expected_rows: rows,
                expected_cols: cols,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(())
    }

    pub fn matmul(&self, rhs: &CMatrix) -> Result<CMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch {
                expected_rows: self.cols,
                expected_cols: rhs.cols,
                rows: rhs.rows,
                cols: rhs.cols,
            });
        }
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (p, &a) in self.row(i).iter().enumerate() {
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(p)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self^T · rhs` without materializing the transpose.
    pub fn transpose_matmul(&self, rhs: &CMatrix) -> Result<CMatrix> {
        if self.rows != rhs.rows {
            return Err(Error::DimensionMismatch {
                expected_rows: self.rows,
                expected_cols: rhs.cols,
                rows: rhs.rows,
                cols: rhs.cols,
            });
        }
        let mut out = CMatrix::zeros(self.cols, rhs.cols);
        for m in 0..self.rows {
            let lhs_row = self.row(m);
            let rhs_row = rhs.row(m);
            for (k, &a) in lhs_row.iter().enumerate() {
                let out_row = &mut out.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, rhs: &CMatrix) -> Result<CMatrix> {
        rhs.check_shape(self.rows, self.cols)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, rhs: &CMatrix) -> Result<CMatrix> {
        rhs.check_shape(self.rows, self.cols)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn scale(&self, factor: f64) -> CMatrix {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    /// Diagonal part of a square matrix as a matrix of the same shape.
    pub fn diag_part(&self) -> CMatrix {
        Self::from_fn(self.rows, self.cols, |r, c| {
            if r == c {
                self[(r, c)]
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    /// Scales column `c` by `factors[c]`.
    pub fn scale_columns(&self, factors: &[C64]) -> CMatrix {
        Self::from_fn(self.rows, self.cols, |r, c| self[(r, c)] * factors[c])
    }

    pub fn row_norm(&self, r: usize) -> f64 {
        sqrt(self.row(r).iter().map(|z| z.norm_sqr()).sum())
    }

    /// Largest entry modulus (the elementwise max norm).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|&z| cabs(z)).fold(0.0, f64::max)
    }

    /// Largest absolute row sum (matrix infinity norm).
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|r| self.row(r).iter().map(|&z| cabs(z)).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Returns `P · self · Q` for row permutation `rows` and column
    /// permutation `cols`, where entry `(i, j)` moves to `(rows[i], cols[j])`.
    pub fn permute(&self, rows: &[usize], cols: &[usize]) -> CMatrix {
        let mut out = CMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(rows[r], cols[c])] = self[(r, c)];
            }
        }
        out
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Inverse of a Hermitian positive-definite matrix by Cholesky.
///
/// A pivot below `rel_pivot_tol` times the largest diagonal entry is reported
/// as [`Error::RankDeficient`].
pub fn hermitian_pd_inverse(a: &CMatrix, rel_pivot_tol: f64) -> Result<CMatrix> {
    let n = a.rows();
    a.check_shape(n, n)?;
    let scale = (0..n).map(|i| a[(i, i)].re).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(Error::RankDeficient {
            column: 0,
            pivot: scale,
        });
    }
    // Lower factor L with A = L L^H.
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for p in 0..j {
            d -= l[(j, p)].norm_sqr();
        }
        if !(d > rel_pivot_tol * scale) {
            return Err(Error::RankDeficient {
                column: j,
                pivot: d / scale,
            });
        }
        let d = sqrt(d);
        l[(j, j)] = C64::new(d, 0.0);
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)].conj();
            }
            l[(i, j)] = s / d;
        }
    }
    // Solve L L^H X = I column by column.
    let mut inv = CMatrix::zeros(n, n);
    let mut y = vec![C64::new(0.0, 0.0); n];
    for c in 0..n {
        for i in 0..n {
            let mut s = if i == c {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            };
            for p in 0..i {
                s -= l[(i, p)] * y[p];
            }
            y[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for p in i + 1..n {
                s -= l[(p, i)].conj() * inv[(p, c)];
            }
            inv[(i, c)] = s / l[(i, i)].re;
        }
    }
    Ok(inv)
}

/// In-place Cholesky factorization of a dense symmetric positive-definite
/// real matrix stored row-major; on success the lower triangle holds `L`.
pub(crate) fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let row_j = &mut a[j * n..(j + 1) * n];
        let d = row_j[j] - row_j[..j].iter().map(|x| x * x).sum::<f64>();
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = sqrt(d);
        row_j[j] = d;
        for i in j + 1..n {
            let (upper, lower) = a.split_at_mut(i * n);
            let row_j = &upper[j * n..j * n + j];
            let row_i = &mut lower[..n];
            let mut s = row_i[j];
            for (x, y) in row_i[..j].iter().zip(row_j) {
                s -= x * y;
            }
            row_i[j] = s / d;
        }
    }
    true
}

/// Solves `L L^T x = b` in place given the factor from [`cholesky_in_place`].
pub(crate) fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let row = &l[i * n..i * n + i];
        let mut s = b[i];
        for (x, y) in row.iter().zip(&b[..i]) {
            s -= x * y;
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for p in i + 1..n {
            s -= l[p * n + i] * b[p];
        }
        b[i] = s / l[i * n + i];
    }
}
