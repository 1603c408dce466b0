//! Small dense matrices.
//!
//! Everything the estimators need fits in a few hundred rows: design matrices,
//! quantile covariances and 2×2 parameter covariances. Storage is row-major and
//! the routines are textbook Cholesky (for the symmetric positive definite
//! covariance solves) and LU with partial pivoting (general inverse and
//! determinant).

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Dense row-major matrix of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "matrix entry ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn from_parts(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_parts(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::new(
            rows.len(),
            cols,
            rows.iter().flat_map(|r| r.iter().copied()).collect(),
        )
    }

    /// Column vector.
    pub fn column(values: &[f64]) -> Result<Self> {
        Self::new(values.len(), 1, values.to_vec())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::from_parts(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col_vec(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols))
            .map(|i| self[(i, i)])
            .collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(l);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `selfᵀ · v` without materializing the transpose.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.rows != v.len() {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply transpose of {}x{} by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, c: f64) -> Matrix {
        Matrix::from_parts(
            self.rows,
            self.cols,
            self.data.iter().map(|v| v * c).collect(),
        )
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Matrix::from_parts(
            self.rows,
            self.cols,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Symmetric within `rel_tol · max|entry|`.
    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let tol = rel_tol * self.max_abs();
        (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    /// Copies the average of the two triangles into both.
    pub fn symmetrized(&self) -> Matrix {
        Matrix::from_fn(self.rows, self.cols, |i, j| {
            0.5 * (self[(i, j)] + self[(j, i)])
        })
    }

    fn pivot_tolerance(&self) -> f64 {
        self.rows.max(1) as f64 * f64::EPSILON * self.max_abs()
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

/// Serialized as a list of rows.
impl serde::Serialize for Matrix {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq((0..self.rows).map(|i| self.row(i)))
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    a.matmul(b)
}

/// Lower-triangular Cholesky factor `L` with `source = L·Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdFactor {
    dim: usize,
    lower: Vec<f64>,
}

pub fn spd_factorize(m: &Matrix) -> Result<SpdFactor> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "Cholesky needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_symmetric(1e-12) {
        return Err(Error::Domain("Cholesky input is not symmetric".into()));
    }
    let n = m.rows();
    let tol = m.pivot_tolerance();
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = m[(j, j)];
        for p in 0..j {
            d -= l[j * n + p] * l[j * n + p];
        }
        if d <= tol || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let ljj = d.sqrt();
        l[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for p in 0..j {
                s -= l[i * n + p] * l[j * n + p];
            }
            l[i * n + j] = s / ljj;
        }
    }
    Ok(SpdFactor { dim: n, lower: l })
}

impl SpdFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self) -> Matrix {
        Matrix::from_parts(self.dim, self.dim, self.lower.clone())
    }

    /// Solves `L·y = b` in place.
    pub fn forward_substitute(&self, b: &mut [f64]) {
        let n = self.dim;
        for i in 0..n {
            let mut s = b[i];
            for p in 0..i {
                s -= self.lower[i * n + p] * b[p];
            }
            b[i] = s / self.lower[i * n + i];
        }
    }

    /// Solves `Lᵀ·x = y` in place.
    pub fn back_substitute(&self, b: &mut [f64]) {
        let n = self.dim;
        for i in (0..n).rev() {
            let mut s = b[i];
            for p in (i + 1)..n {
                s -= self.lower[p * n + i] * b[p];
            }
            b[i] = s / self.lower[i * n + i];
        }
    }

    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "right-hand side has {} rows, factor has {}",
                b.len(),
                self.dim
            )));
        }
        let mut x = b.to_vec();
        self.forward_substitute(&mut x);
        self.back_substitute(&mut x);
        Ok(x)
    }

    pub fn solve(&self, b: &Matrix) -> Result<Matrix> {
        if b.rows() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "right-hand side has {} rows, factor has {}",
                b.rows(),
                self.dim
            )));
        }
        let mut out = Matrix::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            let x = self.solve_vec(&b.col_vec(j))?;
            for (i, v) in x.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }

    /// `L⁻¹·B`, the whitened right-hand side; `(L⁻¹B)ᵀ(L⁻¹B) = Bᵀ·A⁻¹·B`.
    pub fn whiten(&self, b: &Matrix) -> Result<Matrix> {
        if b.rows() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "right-hand side has {} rows, factor has {}",
                b.rows(),
                self.dim
            )));
        }
        let mut out = Matrix::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            let mut x = b.col_vec(j);
            self.forward_substitute(&mut x);
            for (i, v) in x.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }

    /// `bᵀ·A⁻¹·b`.
    pub fn quadratic_form(&self, b: &[f64]) -> Result<f64> {
        if b.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "vector has {} entries, factor has {}",
                b.len(),
                self.dim
            )));
        }
        let mut y = b.to_vec();
        self.forward_substitute(&mut y);
        Ok(y.iter().map(|v| v * v).sum())
    }

    pub fn inverse(&self) -> Matrix {
        let inv = self
            .solve(&Matrix::identity(self.dim))
            .expect("identity matches factor dimension");
        inv.symmetrized()
    }

    pub fn log_det(&self) -> f64 {
        (0..self.dim)
            .map(|i| 2.0 * self.lower[i * self.dim + i].ln())
            .sum()
    }

    pub fn det(&self) -> f64 {
        self.log_det().exp()
    }

    pub fn reconstruct(&self) -> Matrix {
        let l = self.lower();
        l.matmul(&l.transpose()).expect("square factor")
    }
}

pub fn solve_spd(f: &SpdFactor, b: &Matrix) -> Result<Matrix> {
    f.solve(b)
}

struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    sign: f64,
    singular: Option<(usize, f64)>,
}

fn lu_decompose(m: &Matrix) -> Result<Lu> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "LU needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    let tol = m.pivot_tolerance();
    let mut lu = m.as_slice().to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;
    let mut singular = None;
    for k in 0..n {
        let (p, pivot) = (k..n)
            .map(|i| (i, lu[i * n + k].abs()))
            .fold(
                (k, -1.0),
                |best, cur| if cur.1 > best.1 { cur } else { best },
            );
        if pivot < tol || pivot == 0.0 {
            singular.get_or_insert((k, pivot));
            if pivot == 0.0 {
                continue;
            }
        }
        if p != k {
            for j in 0..n {
                lu.swap(k * n + j, p * n + j);
            }
            perm.swap(k, p);
            sign = -sign;
        }
        let akk = lu[k * n + k];
        for i in (k + 1)..n {
            let factor = lu[i * n + k] / akk;
            lu[i * n + k] = factor;
            if factor != 0.0 {
                for j in (k + 1)..n {
                    lu[i * n + j] -= factor * lu[k * n + j];
                }
            }
        }
    }
    Ok(Lu {
        n,
        lu,
        perm,
        sign,
        singular,
    })
}

/// Determinant via LU with partial pivoting; exactly singular input gives 0.
pub fn det(m: &Matrix) -> Result<f64> {
    let lu = lu_decompose(m)?;
    let n = lu.n;
    Ok((0..n).map(|i| lu.lu[i * n + i]).product::<f64>() * lu.sign)
}

/// General inverse via LU with partial pivoting.
pub fn inverse(m: &Matrix) -> Result<Matrix> {
    let lu = lu_decompose(m)?;
    if let Some((index, pivot)) = lu.singular {
        return Err(Error::Singular { index, pivot });
    }
    let n = lu.n;
    let mut out = Matrix::zeros(n, n);
    for col in 0..n {
        let mut x: Vec<f64> = lu
            .perm
            .iter()
            .map(|&p| if p == col { 1.0 } else { 0.0 })
            .collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= lu.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= lu.lu[i * n + j] * x[j];
            }
            x[i] = s / lu.lu[i * n + i];
        }
        for (i, v) in x.into_iter().enumerate() {
            out[(i, col)] = v;
        }
    }
    Ok(out)
}
