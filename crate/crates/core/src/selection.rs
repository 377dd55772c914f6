//! Information criteria, core consistency, DIFFIT and rank scans.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decomp::{fit, AlsConfig, FitReport, Model, ModelKind, ParafacModel, Ranks};
use crate::error::{Error, Result};
use crate::linalg::svd;
use crate::tensor::{Matrix, Tensor3};

pub use crate::decomp::count_free_params;

/// Default CONCORDIA acceptance threshold (percent).
pub const CONCORDIA_THRESHOLD: f64 = 80.0;

/// Bayesian information criterion `u ln(SSR/u) + w ln(u)`.
///
/// A perfect fit (`ssr == 0`) yields negative infinity.
pub fn bic(ssr: f64, u: usize, w: usize) -> f64 {
    let u = u as f64;
    u * (ssr / u).ln() + w as f64 * u.ln()
}

/// Akaike information criterion `u ln(SSR/u) + 2w`.
pub fn aic(ssr: f64, u: usize, w: usize) -> f64 {
    let u = u as f64;
    u * (ssr / u).ln() + 2.0 * w as f64
}

/// Small-sample AIC `u ln(SSR/u) + 2w u/(u-w-1)`; needs `u > w + 1`.
pub fn aicc(ssr: f64, u: usize, w: usize) -> Result<f64> {
    if u <= w + 1 {
        return Err(Error::Domain(format!("AICc needs u > w + 1, got u={u}, w={w}")));
    }
    let (uf, wf) = (u as f64, w as f64);
    Ok(uf * (ssr / uf).ln() + 2.0 * wf * (uf / (uf - wf - 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Concordia {
    /// Core consistency in percent; at most 100, may be negative.
    pub value: f64,
    /// Some factor matrix lost column rank, so the implied core went
    /// through a truncated pseudoinverse.
    pub rank_deficient: bool,
}

fn column_rank_deficient(m: &Matrix) -> bool {
    let s = svd(m).s;
    let smax = s.iter().copied().fold(0.0, f64::max);
    s.len() < m.ncols() || s.iter().any(|&v| v <= 1e-12 * smax) || smax == 0.0
}

/// Core consistency of a PARAFAC model.
///
/// `A` and `B` columns are scaled to unit norm with the norms moved into
/// `C`; the least-squares Tucker core for those factors is then compared with
/// the superdiagonal tensor of ones: `100 (1 - Σ (g - t)^2 / R)`.
pub fn concordia(t: &Tensor3, m: &ParafacModel) -> Result<Concordia> {
    let r = m.rank();
    let (mut a, mut b, mut c) = (m.a().clone(), m.b().clone(), m.c().clone());
    for k in 0..r {
        let na = a.column(k).norm();
        let nb = b.column(k).norm();
        if na > 0.0 {
            a.column_mut(k).unscale_mut(na);
        }
        if nb > 0.0 {
            b.column_mut(k).unscale_mut(nb);
        }
        c.column_mut(k).scale_mut(na * nb);
    }
    let rank_deficient = [&a, &b, &c].iter().any(|f| column_rank_deficient(f));
    if rank_deficient {
        log::warn!("CONCORDIA: rank-deficient factor matrix, using pseudoinverse");
    }
    let g = crate::decomp::tucker_core_from_factors(t, &a, &b, &c)?;
    let mut ss = 0.0;
    for p in 0..r {
        for q in 0..r {
            for s in 0..r {
                let target = if p == q && q == s { 1.0 } else { 0.0 };
                ss += (g.get(p, q, s) - target).powi(2);
            }
        }
    }
    Ok(Concordia {
        value: 100.0 * (1.0 - ss / r as f64),
        rank_deficient,
    })
}

/// DIFFIT selection over `(s, fit)` pairs sorted by ascending `s`.
///
/// Returns the `s` maximizing `dif(s) / dif(s+1)` with
/// `dif(s) = fit(s) - fit(s-1)`; ties go to the smallest `s`.
pub fn diffit(fits: &[(usize, f64)]) -> Result<usize> {
    if fits.len() < 3 {
        return Err(Error::arg(format!("DIFFIT needs at least 3 candidates, got {}", fits.len())));
    }
    for w in fits.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(Error::arg("DIFFIT candidates must have strictly ascending component counts"));
        }
        if w[1].1 < w[0].1 {
            return Err(Error::arg(format!(
                "DIFFIT needs non-decreasing fit, but fit drops from {} at s={} to {} at s={}",
                w[0].1, w[0].0, w[1].1, w[1].0
            )));
        }
    }
    if fits.iter().any(|f| !f.1.is_finite()) {
        return Err(Error::arg("DIFFIT fit values must be finite"));
    }
    let ratio = |n: f64, d: f64| {
        if d > 0.0 {
            n / d
        } else if n > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    };
    let mut best = (fits[1].0, f64::NEG_INFINITY);
    for i in 1..fits.len() - 1 {
        let dif = fits[i].1 - fits[i - 1].1;
        let next = fits[i + 1].1 - fits[i].1;
        let v = ratio(dif, next);
        let better = if v.is_infinite() || best.1.is_infinite() {
            v > best.1
        } else {
            v > best.1 + 1e-12 * best.1.abs().max(1.0)
        };
        if better {
            best = (fits[i].0, v);
        }
    }
    Ok(best.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Bic,
    Aic,
    Aicc,
    Concordia,
    Diffit,
}

impl Criterion {
    /// The criterion used for a model kind unless overridden.
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Parafac => Criterion::Concordia,
            ModelKind::Tucker | ModelKind::Sdt => Criterion::Bic,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Bic => "bic",
            Criterion::Aic => "aic",
            Criterion::Aicc => "aicc",
            Criterion::Concordia => "concordia",
            Criterion::Diffit => "fit",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bic" => Ok(Criterion::Bic),
            "aic" => Ok(Criterion::Aic),
            "aicc" => Ok(Criterion::Aicc),
            "concordia" | "corcondia" => Ok(Criterion::Concordia),
            "diffit" | "fit" => Ok(Criterion::Diffit),
            other => Err(Error::arg(format!("unknown criterion `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    /// `None` picks BIC for Tucker/SDT and CONCORDIA for PARAFAC.
    pub criterion: Option<Criterion>,
    pub concordia_threshold: f64,
    /// Number of time components for Tucker/SDT candidates.
    pub time_rank: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            criterion: None,
            concordia_threshold: CONCORDIA_THRESHOLD,
            time_rank: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub rank: usize,
    /// Criterion value; for DIFFIT this is the fit `1 - SSR/||X||^2`.
    pub value: f64,
    pub ssr: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankScanResult {
    pub kind: ModelKind,
    pub criterion: Criterion,
    pub entries: Vec<ScanEntry>,
    pub selected: usize,
}

impl RankScanResult {
    pub fn ranks(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.rank).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.value).collect()
    }

    /// CSV with header `rank,<criterion>,ssr,iterations,converged`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "rank,{},ssr,iterations,converged", self.criterion)?;
        for e in &self.entries {
            writeln!(w, "{},{:e},{:e},{},{}", e.rank, e.value, e.ssr, e.iterations, e.converged)?;
        }
        Ok(())
    }
}

fn candidate_ranks(kind: ModelKind, s: usize, time_rank: usize) -> Ranks {
    match kind {
        ModelKind::Parafac => Ranks::parafac(s),
        ModelKind::Tucker => Ranks::tucker(s, s, time_rank),
        ModelKind::Sdt => Ranks::sdt(s, time_rank),
    }
}

/// Fits every candidate in `grid`, scores it and returns the scan together
/// with the selected model and its fit report.
pub fn scan_and_fit(
    t: &Tensor3,
    kind: ModelKind,
    grid: &[usize],
    cfg: &AlsConfig,
    opts: &ScanOptions,
) -> Result<(RankScanResult, Model, FitReport)> {
    if grid.is_empty() {
        return Err(Error::arg("rank grid is empty"));
    }
    let mut grid = grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let criterion = opts.criterion.unwrap_or(Criterion::default_for(kind));
    if criterion == Criterion::Concordia && kind != ModelKind::Parafac {
        return Err(Error::arg("CONCORDIA applies to PARAFAC models only"));
    }
    let u = t.len();
    let norm_sq = t.norm_sq();

    let mut entries = Vec::with_capacity(grid.len());
    let mut fitted: Vec<Option<(Model, FitReport)>> = Vec::with_capacity(grid.len());
    for &s in &grid {
        let ranks = candidate_ranks(kind, s, opts.time_rank);
        let scored = fit(t, kind, ranks, cfg).and_then(|(m, rep)| {
            let value = match criterion {
                Criterion::Bic => bic(rep.ssr, u, rep.free_params),
                Criterion::Aic => aic(rep.ssr, u, rep.free_params),
                Criterion::Aicc => aicc(rep.ssr, u, rep.free_params)?,
                Criterion::Diffit => 1.0 - rep.ssr / norm_sq,
                Criterion::Concordia => match &m {
                    Model::Parafac(p) => concordia(t, p)?.value,
                    _ => unreachable!("checked above"),
                },
            };
            Ok((m, rep, value))
        });
        match scored {
            Ok((m, rep, value)) => {
                log::info!("{kind} rank {s}: {criterion} {value:.6} ssr {:e}", rep.ssr);
                entries.push(ScanEntry {
                    rank: s,
                    value,
                    ssr: rep.ssr,
                    iterations: rep.iterations,
                    converged: rep.converged,
                    error: None,
                });
                fitted.push(Some((m, rep)));
            }
            Err(e) => {
                log::warn!("{kind} rank {s} failed: {e}");
                entries.push(ScanEntry {
                    rank: s,
                    value: f64::NAN,
                    ssr: f64::NAN,
                    iterations: 0,
                    converged: false,
                    error: Some(e.to_string()),
                });
                fitted.push(None);
            }
        }
    }

    let ok: Vec<usize> = (0..entries.len()).filter(|&i| fitted[i].is_some()).collect();
    if ok.is_empty() {
        let detail = entries
            .iter()
            .map(|e| format!("rank {}: {}", e.rank, e.error.as_deref().unwrap_or("?")))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::ScanFailed(detail));
    }

    let pick = match criterion {
        Criterion::Bic | Criterion::Aic | Criterion::Aicc => {
            // Minimum; the first (smallest rank) wins ties.
            let mut best = ok[0];
            for &i in &ok[1..] {
                if entries[i].value < entries[best].value {
                    best = i;
                }
            }
            best
        }
        Criterion::Concordia => *ok
            .iter()
            .rev()
            .find(|&&i| entries[i].value >= opts.concordia_threshold)
            .ok_or_else(|| {
                Error::ScanFailed(format!(
                    "no candidate reached CONCORDIA {} (best {:.2})",
                    opts.concordia_threshold,
                    ok.iter().map(|&i| entries[i].value).fold(f64::NEG_INFINITY, f64::max)
                ))
            })?,
        Criterion::Diffit => {
            if ok.len() == 1 {
                ok[0]
            } else {
                let fits: Vec<(usize, f64)> = ok.iter().map(|&i| (entries[i].rank, entries[i].value)).collect();
                // ALS fits are not guaranteed nested; enforce the running maximum.
                let mut mono = fits.clone();
                for k in 1..mono.len() {
                    mono[k].1 = mono[k].1.max(mono[k - 1].1);
                }
                let s = if mono.len() < 3 { mono[mono.len() - 1].0 } else { diffit(&mono)? };
                *ok.iter().find(|&&i| entries[i].rank == s).expect("selected from candidates")
            }
        }
    };

    let selected = entries[pick].rank;
    let (model, report) = fitted.swap_remove(pick).expect("picked a successful fit");
    Ok((
        RankScanResult {
            kind,
            criterion,
            entries,
            selected,
        },
        model,
        report,
    ))
}

/// Rank scan without returning the fitted model.
pub fn scan_ranks(t: &Tensor3, kind: ModelKind, grid: &[usize], cfg: &AlsConfig, opts: &ScanOptions) -> Result<RankScanResult> {
    scan_and_fit(t, kind, grid, cfg, opts).map(|(r, _, _)| r)
}
