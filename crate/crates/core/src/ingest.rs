//! Returns panels and windowed covariance tensors.

use std::io::Read;
use std::ops::Range;

use chrono::{Datelike, NaiveDate, NaiveDateTime};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tensor3};

/// Date-time of one observation. Date-only stamps sort before any time on
/// the same day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Stamp(NaiveDateTime);

impl Stamp {
    /// Accepts `YYYY-MM-DD`, `YYYY-MM-DDTHH:MM:SS` and `YYYY-MM-DD HH:MM:SS`
    /// (fractional seconds allowed).
    pub fn parse(s: &str) -> Option<Stamp> {
        let s = s.trim();
        for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"] {
            if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
                return Some(Stamp(t));
            }
        }
        NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .ok()
            .map(|d| Stamp(d.and_hms_opt(0, 0, 0).expect("midnight")))
    }

    pub fn year_month(&self) -> (i32, u32) {
        (self.0.year(), self.0.month())
    }
}

impl std::fmt::Display for Stamp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0.time() == chrono::NaiveTime::MIN {
            write!(f, "{}", self.0.date())
        } else {
            write!(f, "{}", self.0.format("%Y-%m-%dT%H:%M:%S"))
        }
    }
}

/// `T x M` log-returns with ticker labels and strictly increasing stamps.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    tickers: Vec<String>,
    stamps: Vec<Stamp>,
    values: Matrix,
}

impl ReturnsPanel {
    pub fn new(tickers: Vec<String>, stamps: Vec<Stamp>, values: Matrix) -> Result<Self> {
        if values.ncols() != tickers.len() || values.nrows() != stamps.len() {
            return Err(Error::arg(format!(
                "panel is {}x{} but has {} stamps and {} tickers",
                values.nrows(),
                values.ncols(),
                stamps.len(),
                tickers.len()
            )));
        }
        if let Some(i) = stamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::arg(format!(
                "timestamps must be strictly increasing ({} then {})",
                stamps[i],
                stamps[i + 1]
            )));
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(p));
        }
        Ok(ReturnsPanel { tickers, stamps, values })
    }

    /// Panel of log-returns from a price panel; the first stamp is dropped.
    pub fn from_prices(tickers: Vec<String>, stamps: Vec<Stamp>, prices: &Matrix) -> Result<Self> {
        if stamps.len() != prices.nrows() {
            return Err(Error::arg("one timestamp per price row required"));
        }
        let r = log_returns(prices)?;
        ReturnsPanel::new(tickers, stamps[1..].to_vec(), r)
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn stamps(&self) -> &[Stamp] {
        &self.stamps
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }
}

/// `r_t = ln P_t - ln P_{t-1}` for each column.
pub fn log_returns(prices: &Matrix) -> Result<Matrix> {
    let (t, m) = prices.shape();
    for i in 0..t {
        for j in 0..m {
            let p = prices[(i, j)];
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::arg(format!("price {p} at row {} column {} is not positive", i + 1, j + 1)));
            }
        }
    }
    if t < 2 {
        return Ok(Matrix::zeros(0, m));
    }
    Ok(Matrix::from_fn(t - 1, m, |i, j| prices[(i + 1, j)].ln() - prices[(i, j)].ln()))
}

/// Sample covariance (`1/(n-1)`) of the panel rows in `rows`.
pub fn window_cov(panel: &ReturnsPanel, rows: Range<usize>) -> Result<Matrix> {
    if rows.end > panel.len() || rows.start >= rows.end {
        return Err(Error::arg(format!("row range {rows:?} invalid for {} observations", panel.len())));
    }
    let n = rows.len();
    if n < 2 {
        return Err(Error::arg("a covariance window needs at least 2 observations"));
    }
    let x = panel.values.rows(rows.start, n);
    let m = x.ncols();
    let mean = x.row_mean();
    let mut centered = x.into_owned();
    for mut r in centered.row_iter_mut() {
        r -= &mean;
    }
    let mut cov = centered.tr_mul(&centered) / (n as f64 - 1.0);
    for i in 0..m {
        for j in 0..i {
            cov[(j, i)] = cov[(i, j)];
        }
    }
    Ok(cov)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowSpec {
    /// Fixed number of observations per window, advancing by `step`.
    Rows { len: usize, step: usize },
    /// One window per calendar month present in the stamps.
    CalendarMonth,
}

impl WindowSpec {
    /// Non-overlapping windows of `len` observations.
    pub fn rows(len: usize) -> Self {
        WindowSpec::Rows { len, step: len }
    }
}

/// Row ranges of each window. Trailing partial windows and months with
/// fewer than two observations are skipped with a warning.
pub fn window_ranges(panel: &ReturnsPanel, spec: WindowSpec) -> Result<Vec<Range<usize>>> {
    let n = panel.len();
    let mut out = Vec::new();
    match spec {
        WindowSpec::Rows { len, step } => {
            if len < 2 || step == 0 {
                return Err(Error::arg("window length must be at least 2 and step at least 1"));
            }
            let mut s = 0;
            while s + len <= n {
                out.push(s..s + len);
                s += step;
            }
            let covered = out.last().map_or(0, |r| r.end);
            if covered < n && !out.is_empty() {
                log::warn!("dropping {} trailing observations that do not fill a window", n - covered);
            }
        }
        WindowSpec::CalendarMonth => {
            let mut start = 0;
            while start < n {
                let ym = panel.stamps[start].year_month();
                let mut end = start;
                while end < n && panel.stamps[end].year_month() == ym {
                    end += 1;
                }
                if end - start >= 2 {
                    out.push(start..end);
                } else {
                    log::warn!("skipping {}-{:02}: only one observation", ym.0, ym.1);
                }
                start = end;
            }
        }
    }
    if out.is_empty() {
        return Err(Error::arg(format!("panel of {n} observations holds no complete window")));
    }
    Ok(out)
}

/// Stacks one covariance matrix per window as the frontal slices of an
/// `M x M x T` tensor.
pub fn build_cov_tensor(panel: &ReturnsPanel, spec: WindowSpec) -> Result<Tensor3> {
    let slices = window_ranges(panel, spec)?
        .into_iter()
        .map(|r| window_cov(panel, r))
        .collect::<Result<Vec<_>>>()?;
    Tensor3::from_frontal_slices(&slices)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PanelValues {
    Prices,
    Returns,
}

/// Reads a CSV whose header is `<stamp>,<ticker>,...` and whose rows hold an
/// ISO-8601 stamp followed by one value per ticker. Empty or unparsable
/// cells are errors; the panel must be complete.
pub fn read_panel_csv<R: Read>(r: R, values: PanelValues) -> Result<ReturnsPanel> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    let header = rdr.headers().map_err(|e| Error::parse(1, e.to_string()))?.clone();
    if header.len() < 2 {
        return Err(Error::parse(1, "header needs a stamp column and at least one ticker"));
    }
    let tickers: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let m = tickers.len();
    let mut stamps = Vec::new();
    let mut data = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let line = n + 2;
        let rec = rec.map_err(|e| Error::parse(line, e.to_string()))?;
        if rec.len() != m + 1 {
            return Err(Error::parse(line, format!("expected {} fields, found {}", m + 1, rec.len())));
        }
        let stamp = Stamp::parse(&rec[0]).ok_or_else(|| Error::parse(line, format!("bad timestamp `{}`", &rec[0])))?;
        stamps.push(stamp);
        for (j, cell) in rec.iter().skip(1).enumerate() {
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::parse(line, format!("missing or invalid value `{cell}` for {}", tickers[j])))?;
            data.push(v);
        }
    }
    let rows = stamps.len();
    let mat = Matrix::from_row_slice(rows, m, &data);
    match values {
        PanelValues::Returns => ReturnsPanel::new(tickers, stamps, mat),
        PanelValues::Prices => {
            if rows < 2 {
                return Err(Error::arg("a price panel needs at least two rows"));
            }
            ReturnsPanel::from_prices(tickers, stamps, &mat)
        }
    }
}
