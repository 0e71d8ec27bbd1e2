//! Dense row-major kernels and the vector/matrix norms used by the recovery
//! programs.
//!
//! Everything here is `f64`. Constructors reject NaN and infinities so that
//! downstream code never has to guard against them.
//!
//! The text format shared by every file this crate writes is:
//!
//! ```text
//! # <rows> <cols>
//! <v00> <v01> ...
//! <v10> <v11> ...
//! ```
//!
//! Values are written with 17 significant digits so a write/read cycle is
//! bit-exact. Vectors use `cols = 1`, one value per line.

use std::io::{BufRead, Write};
use std::ops::Deref;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// A dense real vector with finite entries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values)?;
        Ok(Vector(values))
    }

    pub fn zeros(len: usize) -> Self {
        Vector(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Builds from values already known to be finite (solver internals).
    pub(crate) fn from_finite(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Vector(values)
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Vector::new(values)
    }
}

/// A dense row-major real matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::dim(
                "Matrix::new",
                format!(
                    "{rows}x{cols} needs {} elements, got {}",
                    rows * cols,
                    data.len()
                ),
            ));
        }
        check_finite(&data)?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::dim("Matrix::from_rows", "ragged rows"));
        }
        Matrix::new(rows.len(), cols, rows.concat())
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
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        check_finite(values)?;
        let n = values.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub(crate) fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub(crate) fn row_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> Vector {
        Vector((0..self.rows).map(|r| self.get(r, col)).collect())
    }

    /// Elementwise sum; used for `B = A + V`.
    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::dim(
                "Matrix::add",
                format!(
                    "{}x{} + {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Matrix::new(self.rows, self.cols, data)
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    /// `out = self * x` without allocation. Caller guarantees dimensions.
    pub(crate) fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            *o = dot(row, x);
        }
        if self.cols == 0 {
            out.iter_mut().for_each(|o| *o = 0.0);
        }
    }

    /// `out = selfᵀ * x` without allocation. Caller guarantees dimensions.
    pub(crate) fn mul_t_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.iter_mut().for_each(|o| *o = 0.0);
        if self.cols == 0 {
            return;
        }
        for (&xi, row) in x.iter().zip(self.data.chunks_exact(self.cols)) {
            if xi != 0.0 {
                for (o, &a) in out.iter_mut().zip(row) {
                    *o += a * xi;
                }
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn require_nonempty(op: &'static str, len: usize) -> Result<()> {
    if len == 0 {
        Err(Error::dim(op, "empty input"))
    } else {
        Ok(())
    }
}

/// Sum of absolute values.
pub fn norm1(v: &[f64]) -> Result<f64> {
    require_nonempty("norm1", v.len())?;
    Ok(v.iter().map(|x| x.abs()).sum())
}

/// Euclidean norm.
pub fn norm2(v: &[f64]) -> Result<f64> {
    require_nonempty("norm2", v.len())?;
    Ok(v.iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// Largest absolute entry.
pub fn norm_inf(v: &[f64]) -> Result<f64> {
    require_nonempty("norm_inf", v.len())?;
    Ok(v.iter().fold(0.0, |m, x| m.max(x.abs())))
}

pub(crate) fn norm2_unchecked(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn norm1_unchecked(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Induced ℓ∞ norm: the largest row ℓ1 norm.
pub fn mat_inf_norm(m: &Matrix) -> Result<f64> {
    require_nonempty("mat_inf_norm", m.data.len())?;
    Ok((0..m.rows)
        .map(|r| norm1_unchecked(m.row(r)))
        .fold(0.0, f64::max))
}

/// Largest absolute entry of the matrix.
pub fn max_abs_entry(m: &Matrix) -> f64 {
    m.data.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn matvec(m: &Matrix, v: &[f64]) -> Result<Vector> {
    if m.cols != v.len() {
        return Err(Error::dim(
            "matvec",
            format!("{}x{} times length {}", m.rows, m.cols, v.len()),
        ));
    }
    let mut out = vec![0.0; m.rows];
    m.mul_vec_into(v, &mut out);
    Vector::new(out)
}

pub fn matvec_t(m: &Matrix, v: &[f64]) -> Result<Vector> {
    if m.rows != v.len() {
        return Err(Error::dim(
            "matvec_t",
            format!("({}x{})ᵀ times length {}", m.rows, m.cols, v.len()),
        ));
    }
    let mut out = vec![0.0; m.cols];
    m.mul_t_vec_into(v, &mut out);
    Vector::new(out)
}

/// Power-iteration estimate of the largest singular value.
///
/// Iterates on `MᵀM` from a seeded random start, so the result is a pure
/// function of `(m, iters, seed)`.
pub fn spectral_norm_estimate(m: &Matrix, iters: usize, seed: u64) -> Result<f64> {
    if iters == 0 {
        return Err(Error::InvalidParameter(
            "spectral_norm_estimate needs iters >= 1".into(),
        ));
    }
    require_nonempty("spectral_norm_estimate", m.data.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..m.cols).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut mv = vec![0.0; m.rows];
    let mut estimate = 0.0;
    for _ in 0..iters {
        let nv = norm2_unchecked(&v);
        if nv == 0.0 {
            return Ok(0.0);
        }
        v.iter_mut().for_each(|x| *x /= nv);
        m.mul_vec_into(&v, &mut mv);
        estimate = norm2_unchecked(&mv);
        m.mul_t_vec_into(&mv, &mut v);
    }
    Ok(estimate)
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    /// Factors `a`; only the lower triangle is read.
    pub fn factor(a: &Matrix) -> Result<Self> {
        if a.rows != a.cols {
            return Err(Error::dim(
                "Cholesky::factor",
                format!("{}x{} is not square", a.rows, a.cols),
            ));
        }
        let n = a.rows;
        let mut l = a.data.clone();
        let scale = (0..n).map(|i| a.data[i * n + i].abs()).fold(0.0, f64::max);
        let floor = scale * 1e-14;
        for j in 0..n {
            let (done, rest) = l.split_at_mut((j + 1) * n);
            let row_j = &mut done[j * n..];
            let d = row_j[j] - dot(&row_j[..j], &row_j[..j]);
            if !(d > floor) {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            let djj = d.sqrt();
            row_j[j] = djj;
            let row_j = &done[j * n..j * n + j];
            for row_i in rest.chunks_exact_mut(n) {
                row_i[j] = (row_i[j] - dot(&row_i[..j], row_j)) / djj;
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                l[i * n + j] = 0.0;
            }
        }
        Ok(Cholesky { n, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `L Lᵀ x = b`, overwriting `b` with `x`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        for i in 0..n {
            let row = &self.lower[i * n..i * n + i];
            let s = b[i] - dot(row, &b[..i]);
            b[i] = s / self.lower[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.lower[k * n + i] * b[k];
            }
            b[i] = s / self.lower[i * n + i];
        }
    }
}

/// Formats a value with 17 significant digits.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_matrix<W: Write>(out: &mut W, m: &Matrix) -> std::io::Result<()> {
    writeln!(out, "# {} {}", m.rows, m.cols)?;
    for r in 0..m.rows {
        let line: Vec<String> = m.row(r).iter().map(|&v| format_value(v)).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn write_vector<W: Write>(out: &mut W, v: &[f64]) -> std::io::Result<()> {
    writeln!(out, "# {} 1", v.len())?;
    for &x in v {
        writeln!(out, "{}", format_value(x))?;
    }
    Ok(())
}

/// Numbered-line source used by the text parsers. Line numbers are 1-based.
pub(crate) struct Lines<R> {
    inner: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> Lines<R> {
    pub(crate) fn new(reader: R) -> Self {
        Lines {
            inner: reader.lines(),
            line_no: 0,
        }
    }

    pub(crate) fn line_no(&self) -> usize {
        self.line_no
    }

    /// Next non-blank line, trimmed.
    pub(crate) fn next_content(&mut self) -> Result<Option<String>> {
        for line in self.inner.by_ref() {
            self.line_no += 1;
            let line = line?;
            let trimmed = line.trim();
            if !trimmed.is_empty() {
                return Ok(Some(trimmed.to_string()));
            }
        }
        Ok(None)
    }
}

fn parse_dims_header(line: &str, line_no: usize) -> Result<(usize, usize)> {
    let rest = line
        .strip_prefix('#')
        .ok_or_else(|| Error::parse(line_no, "expected `# <rows> <cols>` header"))?;
    let mut parts = rest.split_whitespace();
    let mut next_dim = |name: &str| -> Result<usize> {
        parts
            .next()
            .ok_or_else(|| Error::parse(line_no, format!("missing {name} in header")))?
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad {name} in header")))
    };
    let rows = next_dim("rows")?;
    let cols = next_dim("cols")?;
    if parts.next().is_some() {
        return Err(Error::parse(line_no, "trailing tokens in header"));
    }
    Ok((rows, cols))
}

pub(crate) fn parse_matrix<R: BufRead>(lines: &mut Lines<R>) -> Result<Matrix> {
    let header = lines.next_content()?.ok_or_else(|| {
        Error::parse(
            lines.line_no() + 1,
            "unexpected end of input, expected header",
        )
    })?;
    let (rows, cols) = parse_dims_header(&header, lines.line_no())?;
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let line = lines.next_content()?.ok_or_else(|| {
            Error::parse(
                lines.line_no() + 1,
                format!("unexpected end of input, expected row {} of {rows}", r + 1),
            )
        })?;
        let line_no = lines.line_no();
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad number `{tok}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(line_no, format!("non-finite value `{tok}`")));
            }
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(Error::parse(
                line_no,
                format!("expected {cols} values, found {}", data.len() - before),
            ));
        }
    }
    Matrix::new(rows, cols, data)
}

pub fn read_matrix<R: BufRead>(reader: R) -> Result<Matrix> {
    parse_matrix(&mut Lines::new(reader))
}

pub fn read_vector<R: BufRead>(reader: R) -> Result<Vector> {
    let mut lines = Lines::new(reader);
    let m = parse_matrix(&mut lines)?;
    matrix_to_vector(m, lines.line_no())
}

pub(crate) fn matrix_to_vector(m: Matrix, line_no: usize) -> Result<Vector> {
    if m.cols != 1 {
        return Err(Error::parse(
            line_no,
            format!("expected a column vector, found {} columns", m.cols),
        ));
    }
    Ok(Vector(m.data))
}
