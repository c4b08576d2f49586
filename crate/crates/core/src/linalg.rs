//! Small dense linear algebra: a row-major `Matrix`, soft-thresholding,
//! Gram products and a cyclic Jacobi eigensolver for symmetric matrices.
//!
//! Vectors are plain `&[f64]` / `Vec<f64>`.

use std::fmt::Write as _;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Jacobi stops once the off-diagonal Frobenius norm drops below this
/// fraction of the input's Frobenius norm.
pub const JACOBI_REL_TOL: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Relative asymmetry accepted by the symmetric eigensolvers.
const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data has {} values, expected {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "matrix entry ({}, {}) is not finite",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Matrix::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("rows have unequal lengths"));
        }
        Matrix::new(rows.len(), cols, rows.concat())
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::invalid("columns have unequal lengths"));
        }
        let n = columns.len();
        let mut data = vec![0.0; rows * n];
        for (j, col) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                data[i * n + j] = v;
            }
        }
        Matrix::new(rows, n, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        debug_assert_eq!(values.len(), self.rows);
        for (i, &v) in values.iter().enumerate() {
            self[(i, j)] = v;
        }
    }

    /// Submatrix made of the listed columns, in the listed order.
    pub fn select_columns(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, idx.len());
        for i in 0..self.rows {
            let src = self.row(i);
            let dst = out.row_mut(i);
            for (d, &j) in dst.iter_mut().zip(idx) {
                *d = src[j];
            }
        }
        out
    }

    /// Submatrix made of the listed rows, in the listed order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// `self * x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.matvec_into(x, &mut out);
        out
    }

    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            *o = dot(row, x);
        }
    }

    /// `selfᵀ * x`.
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        self.matvec_t_into(x, &mut out);
        out
    }

    pub fn matvec_t_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (&xi, row) in x.iter().zip(self.data.chunks_exact(self.cols.max(1))) {
            if xi != 0.0 {
                axpy(xi, row, out);
            }
        }
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::invalid(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a != 0.0 {
                    axpy(a, other.row(k), out.row_mut(i));
                }
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let scale = self.frobenius_norm().max(f64::MIN_POSITIVE);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if (self[(i, j)] - self[(j, i)]).abs() > rel_tol * scale {
                    return false;
                }
            }
        }
        true
    }

    /// Text form: a `rows cols` line, then one line of whitespace-separated
    /// values per row, each printed with 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.data.len() * 25 + 16);
        let _ = writeln!(s, "{} {}", self.rows, self.cols);
        for i in 0..self.rows {
            let mut first = true;
            for v in self.row(i) {
                if !first {
                    s.push(' ');
                }
                first = false;
                let _ = write!(s, "{:.16e}", v);
            }
            s.push('\n');
        }
        s
    }

    /// Parses [`Matrix::to_text`] output. Lines starting with `#` are ignored.
    pub fn from_text(text: &str) -> Result<Matrix> {
        let mut offset = 0usize;
        let mut header: Option<(usize, usize)> = None;
        let mut data = Vec::new();
        let mut row_count = 0usize;
        for line in text.split_inclusive('\n') {
            let line_offset = offset;
            offset += line.len();
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            match header {
                None => {
                    let mut it = trimmed.split_whitespace();
                    let parse = |tok: Option<&str>| -> Result<usize> {
                        tok.and_then(|t| t.parse().ok()).ok_or_else(|| {
                            Error::format(line_offset, "expected `rows cols` header")
                        })
                    };
                    let rows = parse(it.next())?;
                    let cols = parse(it.next())?;
                    if it.next().is_some() {
                        return Err(Error::format(line_offset, "trailing tokens in header"));
                    }
                    header = Some((rows, cols));
                    data.reserve(rows * cols);
                }
                Some((rows, cols)) => {
                    if row_count == rows {
                        return Err(Error::format(line_offset, "more rows than declared"));
                    }
                    let before = data.len();
                    for tok in trimmed.split_whitespace() {
                        let v: f64 = tok.parse().map_err(|_| {
                            Error::format(line_offset, format!("invalid number `{tok}`"))
                        })?;
                        if !v.is_finite() {
                            return Err(Error::format(line_offset, "non-finite value"));
                        }
                        data.push(v);
                    }
                    if data.len() - before != cols {
                        return Err(Error::format(
                            line_offset,
                            format!("row {} has {} values, expected {}", row_count, data.len() - before, cols),
                        ));
                    }
                    row_count += 1;
                }
            }
        }
        let (rows, cols) = header.ok_or_else(|| Error::format(0, "missing header"))?;
        if row_count != rows {
            return Err(Error::format(
                offset,
                format!("found {row_count} rows, expected {rows}"),
            ));
        }
        Matrix::new(rows, cols, data)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

#[inline]
pub fn norm1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Scales `v` to unit ℓ2 norm in place. Returns the original norm.
pub fn normalize(v: &mut [f64]) -> f64 {
    let n = norm2(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Componentwise shrinkage `sign(v) * max(|v| - tau, 0)`.
pub fn soft_threshold(v: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau >= 0.0) {
        return Err(Error::invalid(format!("threshold must be >= 0, got {tau}")));
    }
    let mut out = v.to_vec();
    soft_threshold_in_place(&mut out, tau);
    Ok(out)
}

#[inline]
pub(crate) fn soft_threshold_in_place(v: &mut [f64], tau: f64) {
    for x in v.iter_mut() {
        let mag = x.abs() - tau;
        *x = if mag > 0.0 { mag.copysign(*x) } else { 0.0 };
    }
}

/// `M * Mᵀ`. The upper triangle is computed and mirrored, so the result is
/// exactly symmetric.
pub fn gram(m: &Matrix) -> Result<Matrix> {
    if m.rows() == 0 {
        return Err(Error::invalid("gram of an empty matrix"));
    }
    let n = m.rows();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        let ri = m.row(i);
        for j in i..n {
            let v = dot(ri, m.row(j));
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector of `values[k]`.
    pub vectors: Matrix,
    pub sweeps: usize,
}

impl SymEigen {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k)
    }
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigensolver.
pub fn sym_eigen(s: &Matrix) -> Result<SymEigen> {
    if s.rows() != s.cols() {
        return Err(Error::invalid(format!(
            "eigensolver needs a square matrix, got {}x{}",
            s.rows(),
            s.cols()
        )));
    }
    if s.rows() == 0 {
        return Err(Error::invalid("eigensolver needs a nonempty matrix"));
    }
    if !s.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::invalid("eigensolver needs a symmetric matrix"));
    }
    let n = s.rows();
    let mut a = s.clone();
    // symmetrize exactly so rotations see a consistent matrix
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = avg;
            a[(j, i)] = avg;
        }
    }
    let mut v = Matrix::identity(n);
    let threshold = JACOBI_REL_TOL * s.frobenius_norm();
    let mut sweeps = 0;

    while sweeps < JACOBI_MAX_SWEEPS && off_diagonal_norm(&a) > threshold {
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                rotate_columns(&mut a, p, q, c, sn);
                rotate_rows(&mut a, p, q, c, sn);
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                rotate_columns(&mut v, p, q, c, sn);
            }
        }
    }
    if off_diagonal_norm(&a) > threshold {
        return Err(Error::NumericalFailure {
            iteration: sweeps,
            message: "Jacobi eigensolver did not converge".into(),
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, k)] = v[(r, i)];
        }
    }
    Ok(SymEigen {
        values,
        vectors,
        sweeps,
    })
}

#[inline]
fn rotate_columns(a: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..a.rows() {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
}

#[inline]
fn rotate_rows(a: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..a.cols() {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
}

/// Smallest eigenvalue of a symmetric matrix and a unit eigenvector for it.
pub fn sym_eig_smallest(s: &Matrix) -> Result<(f64, Vec<f64>)> {
    let eig = sym_eigen(s)?;
    let mut vec = eig.vector(0);
    normalize(&mut vec);
    Ok((eig.values[0], vec))
}

/// Largest eigenvalue of `MᵀM`, i.e. the squared spectral norm of `M`.
pub fn spectral_norm_sq(m: &Matrix) -> Result<f64> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::invalid("spectral norm of an empty matrix"));
    }
    let g = if m.rows() <= m.cols() {
        gram(m)?
    } else {
        gram(&m.transpose())?
    };
    let eig = sym_eigen(&g)?;
    Ok(eig.values.last().copied().unwrap_or(0.0).max(0.0))
}
