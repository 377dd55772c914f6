//! Dense third-order tensors and the multilinear operations built on them.
//!
//! Storage is column-major over `(i, j, k)`: the linear offset of
//! `x[i][j][k]` is `i + I*(j + J*k)`. Each frontal slice `X_{::k}` is thus a
//! contiguous column-major `I x J` block and the mode-1 unfolding is the raw
//! buffer viewed as an `I x (J*K)` matrix.
//!
//! Slice and fiber accessors take 1-based indices, mirroring the usual
//! tensor notation. Element access through [`Tensor3::get`] is 0-based.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DMatrixView, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// One of the three modes of an order-3 tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    One,
    Two,
    Three,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::One, Mode::Two, Mode::Three];

    /// Builds a mode from its 1-based number.
    pub fn new(n: usize) -> Result<Self> {
        match n {
            1 => Ok(Mode::One),
            2 => Ok(Mode::Two),
            3 => Ok(Mode::Three),
            _ => Err(Error::arg(format!("mode must be 1, 2 or 3, got {n}"))),
        }
    }

    pub fn number(self) -> usize {
        self.axis() + 1
    }

    pub(crate) fn axis(self) -> usize {
        match self {
            Mode::One => 0,
            Mode::Two => 1,
            Mode::Three => 2,
        }
    }

    /// The two other modes in ascending order.
    pub fn others(self) -> [Mode; 2] {
        match self {
            Mode::One => [Mode::Two, Mode::Three],
            Mode::Two => [Mode::One, Mode::Three],
            Mode::Three => [Mode::One, Mode::Two],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    /// Wraps a buffer laid out with the first index varying fastest.
    pub fn new(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        let n = dims[0] * dims[1] * dims[2];
        if data.len() != n {
            return Err(Error::arg(format!(
                "tensor {}x{}x{} needs {} values, got {}",
                dims[0],
                dims[1],
                dims[2],
                n,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Tensor3 { dims, data })
    }

    pub fn zeros(dims: [usize; 3]) -> Result<Self> {
        check_dims(dims)?;
        Ok(Tensor3 {
            dims,
            data: vec![0.0; dims[0] * dims[1] * dims[2]],
        })
    }

    /// Builds a tensor from a 0-based element function.
    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        check_dims(dims)?;
        let [ni, nj, nk] = dims;
        let mut data = Vec::with_capacity(ni * nj * nk);
        for k in 0..nk {
            for j in 0..nj {
                for i in 0..ni {
                    data.push(f(i, j, k));
                }
            }
        }
        Tensor3::new(dims, data)
    }

    /// Stacks equally sized matrices as frontal slices.
    pub fn from_frontal_slices(slices: &[Matrix]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::arg("at least one frontal slice is required"))?;
        let (ni, nj) = first.shape();
        let mut data = Vec::with_capacity(ni * nj * slices.len());
        for (k, s) in slices.iter().enumerate() {
            if s.shape() != (ni, nj) {
                return Err(Error::arg(format!(
                    "frontal slice {} is {}x{}, expected {ni}x{nj}",
                    k + 1,
                    s.nrows(),
                    s.ncols()
                )));
            }
            data.extend_from_slice(s.as_slice());
        }
        Tensor3::new([ni, nj, slices.len()], data)
    }

    pub(crate) fn from_raw(dims: [usize; 3], data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dims[0] * dims[1] * dims[2]);
        Tensor3 { dims, data }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn dim(&self, mode: Mode) -> usize {
        self.dims[mode.axis()]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Raw values, first index fastest.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    /// 0-based element access. Panics when out of range.
    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        assert!(i < self.dims[0] && j < self.dims[1] && k < self.dims[2]);
        self.data[self.offset(i, j, k)]
    }

    /// Borrowed view of the 0-based frontal slice `k`.
    pub fn frontal(&self, k: usize) -> DMatrixView<'_, f64> {
        let [ni, nj, _] = self.dims;
        DMatrixView::from_slice(&self.data[k * ni * nj..(k + 1) * ni * nj], ni, nj)
    }

    /// Slice with the given mode fixed at the 1-based index `idx`.
    ///
    /// Mode 1 yields the horizontal slice `X_{i::}` (`J x K`), mode 2 the
    /// lateral slice `X_{:j:}` (`I x K`) and mode 3 the frontal slice
    /// `X_{::k}` (`I x J`).
    pub fn slice(&self, mode: Mode, idx: usize) -> Result<Matrix> {
        let limit = self.dim(mode);
        if idx == 0 || idx > limit {
            return Err(Error::Bounds {
                what: format!("mode-{} slice", mode.number()),
                index: idx,
                limit,
            });
        }
        let x = idx - 1;
        let [ni, nj, nk] = self.dims;
        Ok(match mode {
            Mode::One => Matrix::from_fn(nj, nk, |j, k| self.get(x, j, k)),
            Mode::Two => Matrix::from_fn(ni, nk, |i, k| self.get(i, x, k)),
            Mode::Three => self.frontal(x).into_owned(),
        })
    }

    /// Fiber along `mode`, with the other two indices (1-based, ascending
    /// mode order) held fixed.
    pub fn fiber(&self, mode: Mode, fixed: (usize, usize)) -> Result<DVector<f64>> {
        let [m1, m2] = mode.others();
        for (m, idx) in [(m1, fixed.0), (m2, fixed.1)] {
            let limit = self.dim(m);
            if idx == 0 || idx > limit {
                return Err(Error::Bounds {
                    what: format!("mode-{} index of a mode-{} fiber", m.number(), mode.number()),
                    index: idx,
                    limit,
                });
            }
        }
        let (a, b) = (fixed.0 - 1, fixed.1 - 1);
        let n = self.dim(mode);
        Ok(match mode {
            Mode::One => DVector::from_fn(n, |i, _| self.get(i, a, b)),
            Mode::Two => DVector::from_fn(n, |j, _| self.get(a, j, b)),
            Mode::Three => DVector::from_fn(n, |k, _| self.get(a, b, k)),
        })
    }

    /// Mode-`n` unfolding `X_(n)`.
    ///
    /// Columns enumerate the remaining two indices with the lower-numbered
    /// mode varying fastest, so `X_(1)` has column `j + J*k`, `X_(2)` has
    /// column `i + I*k` and `X_(3)` has column `i + I*j`.
    pub fn unfold(&self, mode: Mode) -> Matrix {
        let [ni, nj, nk] = self.dims;
        match mode {
            Mode::One => Matrix::from_column_slice(ni, nj * nk, &self.data),
            Mode::Two => {
                let mut m = Matrix::zeros(nj, ni * nk);
                for k in 0..nk {
                    for j in 0..nj {
                        for i in 0..ni {
                            m[(j, i + ni * k)] = self.data[self.offset(i, j, k)];
                        }
                    }
                }
                m
            }
            Mode::Three => Matrix::from_column_slice(ni * nj, nk, &self.data).transpose(),
        }
    }

    /// General matricization with the given row and column modes.
    ///
    /// Within each axis the first-listed mode varies fastest; e.g. rows
    /// `[Three, One]` enumerate `(k, i)` as `k + K*i`. With a single row mode
    /// and the remaining modes ascending this equals [`Tensor3::unfold`].
    pub fn unfold_general(&self, row_modes: &[Mode], col_modes: &[Mode]) -> Result<Matrix> {
        if row_modes.is_empty() || col_modes.is_empty() {
            return Err(Error::arg("row and column mode sets must be nonempty"));
        }
        let mut seen = [false; 3];
        for m in row_modes.iter().chain(col_modes) {
            if std::mem::replace(&mut seen[m.axis()], true) {
                return Err(Error::arg(format!("mode {} listed twice", m.number())));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::arg("row and column modes must cover modes 1, 2 and 3"));
        }
        let extent = |modes: &[Mode]| modes.iter().map(|m| self.dim(*m)).product::<usize>();
        let (nr, nc) = (extent(row_modes), extent(col_modes));
        let linear = |modes: &[Mode], idx: &[usize; 3]| {
            let mut pos = 0;
            let mut stride = 1;
            for m in modes {
                pos += idx[m.axis()] * stride;
                stride *= self.dim(*m);
            }
            pos
        };
        let mut out = Matrix::zeros(nr, nc);
        let [ni, nj, nk] = self.dims;
        for k in 0..nk {
            for j in 0..nj {
                for i in 0..ni {
                    let idx = [i, j, k];
                    out[(linear(row_modes, &idx), linear(col_modes, &idx))] =
                        self.data[self.offset(i, j, k)];
                }
            }
        }
        Ok(out)
    }

    /// Inverse of [`Tensor3::unfold`].
    pub fn fold(m: &Matrix, mode: Mode, dims: [usize; 3]) -> Result<Self> {
        check_dims(dims)?;
        let [ni, nj, nk] = dims;
        let expected = match mode {
            Mode::One => (ni, nj * nk),
            Mode::Two => (nj, ni * nk),
            Mode::Three => (nk, ni * nj),
        };
        if m.shape() != expected {
            return Err(Error::arg(format!(
                "cannot fold a {}x{} matrix along mode {} into {ni}x{nj}x{nk} (expected {}x{})",
                m.nrows(),
                m.ncols(),
                mode.number(),
                expected.0,
                expected.1
            )));
        }
        let data = match mode {
            Mode::One => m.as_slice().to_vec(),
            Mode::Two => {
                let mut data = vec![0.0; ni * nj * nk];
                for k in 0..nk {
                    for j in 0..nj {
                        for i in 0..ni {
                            data[i + ni * (j + nj * k)] = m[(j, i + ni * k)];
                        }
                    }
                }
                data
            }
            Mode::Three => m.transpose().as_slice().to_vec(),
        };
        Tensor3::new(dims, data)
    }

    /// n-mode product `X x_n V`; `V` must have as many columns as the
    /// tensor's extent along `mode`.
    pub fn nmode_product(&self, v: &Matrix, mode: Mode) -> Result<Tensor3> {
        let n = self.dim(mode);
        if v.ncols() != n {
            return Err(Error::arg(format!(
                "mode-{} product needs a matrix with {} columns, got {}x{} (tensor {}x{}x{})",
                mode.number(),
                n,
                v.nrows(),
                v.ncols(),
                self.dims[0],
                self.dims[1],
                self.dims[2]
            )));
        }
        let [ni, nj, nk] = self.dims;
        let r = v.nrows();
        if r == 0 {
            return Err(Error::arg("n-mode product with an empty matrix"));
        }
        Ok(match mode {
            Mode::One => {
                let mut data = Vec::with_capacity(r * nj * nk);
                for k in 0..nk {
                    data.extend_from_slice((v * self.frontal(k)).as_slice());
                }
                Tensor3::from_raw([r, nj, nk], data)
            }
            Mode::Two => {
                let vt = v.transpose();
                let mut data = Vec::with_capacity(ni * r * nk);
                for k in 0..nk {
                    data.extend_from_slice((self.frontal(k) * &vt).as_slice());
                }
                Tensor3::from_raw([ni, r, nk], data)
            }
            Mode::Three => {
                let flat = DMatrixView::from_slice(&self.data, ni * nj, nk);
                let out = flat * v.transpose();
                Tensor3::from_raw([ni, nj, r], out.as_slice().to_vec())
            }
        })
    }

    pub fn frob_norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn scale(&self, alpha: f64) -> Tensor3 {
        Tensor3::from_raw(self.dims, self.data.iter().map(|v| v * alpha).collect())
    }

    /// Elementwise difference; panics on shape mismatch.
    pub fn sub(&self, other: &Tensor3) -> Tensor3 {
        assert_eq!(self.dims, other.dims, "tensor shape mismatch");
        Tensor3::from_raw(
            self.dims,
            self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        )
    }

    /// Squared Frobenius distance to a tensor of the same shape.
    pub fn dist_sq(&self, other: &Tensor3) -> f64 {
        assert_eq!(self.dims, other.dims, "tensor shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        assert_eq!(self.dims, other.dims, "tensor shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Frontal slices `start..end` (0-based, half open) as a new tensor.
    pub fn frontal_range(&self, start: usize, end: usize) -> Result<Tensor3> {
        let nk = self.dims[2];
        if start >= end || end > nk {
            return Err(Error::arg(format!(
                "frontal range {start}..{end} invalid for {nk} slices"
            )));
        }
        let s = self.dims[0] * self.dims[1];
        Ok(Tensor3::from_raw(
            [self.dims[0], self.dims[1], end - start],
            self.data[start * s..end * s].to_vec(),
        ))
    }

    /// Concatenates tensors along the third mode.
    pub fn concat_frontal(parts: &[Tensor3]) -> Result<Tensor3> {
        let first = parts
            .first()
            .ok_or_else(|| Error::arg("nothing to concatenate"))?;
        let mut data = Vec::new();
        let mut nk = 0;
        for p in parts {
            if p.dims[..2] != first.dims[..2] {
                return Err(Error::arg("frontal concatenation needs matching I and J"));
            }
            data.extend_from_slice(&p.data);
            nk += p.dims[2];
        }
        Ok(Tensor3::from_raw([first.dims[0], first.dims[1], nk], data))
    }

    /// Writes the text format: a `dims I J K` header followed by the rows of
    /// `X_(1)`, one row per line.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let [ni, nj, nk] = self.dims;
        writeln!(w, "dims {ni} {nj} {nk}")?;
        let mut line = String::new();
        for i in 0..ni {
            line.clear();
            for c in 0..nj * nk {
                if c > 0 {
                    line.push(' ');
                }
                write!(line, "{:?}", self.data[i + ni * c]).expect("write to string");
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Tensor3> {
        let mut lines = r.lines().enumerate();
        let (dims, header_line) = loop {
            let Some((n, line)) = lines.next() else {
                return Err(Error::parse(1, "empty tensor file"));
            };
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let mut it = t.split_whitespace();
            if it.next() != Some("dims") {
                return Err(Error::parse(n + 1, "expected header `dims I J K`"));
            }
            let nums: Vec<&str> = it.collect();
            if nums.len() != 3 {
                return Err(Error::parse(n + 1, "header needs exactly three dimensions"));
            }
            let mut dims = [0usize; 3];
            for (d, s) in dims.iter_mut().zip(&nums) {
                *d = s
                    .parse()
                    .map_err(|_| Error::parse(n + 1, format!("bad dimension `{s}`")))?;
            }
            if dims.contains(&0) {
                return Err(Error::parse(n + 1, "dimensions must be positive"));
            }
            break (dims, n + 1);
        };
        let [ni, nj, nk] = dims;
        let total = ni * nj * nk;
        // values arrive in X_(1) row-major order
        let mut row_major = Vec::with_capacity(total);
        let mut last_line = header_line;
        for (n, line) in lines {
            let line = line?;
            last_line = n + 1;
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| Error::parse(n + 1, format!("bad number `{tok}`")))?;
                if !v.is_finite() {
                    return Err(Error::parse(n + 1, format!("non-finite value `{tok}`")));
                }
                row_major.push(v);
            }
            if row_major.len() > total {
                return Err(Error::parse(
                    n + 1,
                    format!("more than the {total} values announced by the header"),
                ));
            }
        }
        if row_major.len() != total {
            return Err(Error::parse(
                last_line,
                format!("expected {total} values, found {}", row_major.len()),
            ));
        }
        let cols = nj * nk;
        let mut data = vec![0.0; total];
        for i in 0..ni {
            for c in 0..cols {
                data[i + ni * c] = row_major[i * cols + c];
            }
        }
        Ok(Tensor3::from_raw(dims, data))
    }
}

/// Rank-one tensor `a o b o c`.
pub fn outer3(a: &DVector<f64>, b: &DVector<f64>, c: &DVector<f64>) -> Result<Tensor3> {
    if a.is_empty() || b.is_empty() || c.is_empty() {
        return Err(Error::arg("outer product needs nonempty vectors"));
    }
    Tensor3::from_fn([a.len(), b.len(), c.len()], |i, j, k| a[i] * b[j] * c[k])
}

fn check_dims(dims: [usize; 3]) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::arg(format!(
            "tensor dimensions must be positive, got {}x{}x{}",
            dims[0], dims[1], dims[2]
        )));
    }
    Ok(())
}

/// Writes a matrix as header-less CSV, one row per line.
pub fn write_matrix_csv<W: Write>(m: &Matrix, mut w: W) -> Result<()> {
    let mut line = String::new();
    for r in 0..m.nrows() {
        line.clear();
        for c in 0..m.ncols() {
            if c > 0 {
                line.push(',');
            }
            write!(line, "{:?}", m[(r, c)]).expect("write to string");
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_matrix_csv<R: BufRead>(r: R) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| {
                let tok = tok.trim();
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(n + 1, format!("bad number `{tok}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::parse(
                    n + 1,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(1, "empty matrix file"));
    }
    let nc = rows[0].len();
    Ok(Matrix::from_fn(rows.len(), nc, |i, j| rows[i][j]))
}
