//! Two-sample tests on eigenvalue spectra.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::hcm::CorrelationMatrix;
use crate::linalg::sym_eigvals;

/// Eigenvalues below this are treated as zero by `drop_zero`.
pub const ZERO_EIG: f64 = 1e-10;

/// Pooled sizes up to this use the exact permutation distribution for KS.
pub const KS_EXACT_MAX: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Midranks (1-based) of the pooled sample and the tie-correction sum
/// `Σ (t^3 - t)` over tie groups.
fn midranks(pooled: &[f64]) -> (Vec<f64>, f64) {
    let n = pooled.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; n];
    let mut ties = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && pooled[idx[j]] == pooled[idx[i]] {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = avg;
        }
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    (ranks, ties)
}

fn check_samples(x: &[f64], y: &[f64]) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::arg("both samples must be non-empty"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::arg("samples must be finite"));
    }
    Ok(())
}

/// Kruskal-Wallis H for two groups with the ties correction; the p-value is
/// the upper tail of a chi-square with one degree of freedom.
pub fn kruskal_wallis(x: &[f64], y: &[f64]) -> Result<TestResult> {
    check_samples(x, y)?;
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let n = pooled.len() as f64;
    let (ranks, ties) = midranks(&pooled);
    let correction = 1.0 - ties / (n * n * n - n);
    if correction <= 0.0 {
        // Every value identical.
        return Ok(TestResult {
            statistic: 0.0,
            p_value: 1.0,
        });
    }
    let rx: f64 = ranks[..x.len()].iter().sum();
    let ry: f64 = ranks[x.len()..].iter().sum();
    let h = 12.0 / (n * (n + 1.0)) * (rx * rx / x.len() as f64 + ry * ry / y.len() as f64) - 3.0 * (n + 1.0);
    let h = (h / correction).max(0.0);
    let chi = ChiSquared::new(1.0).expect("valid dof");
    Ok(TestResult {
        statistic: h,
        p_value: (1.0 - chi.cdf(h)).clamp(0.0, 1.0),
    })
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// `sup |F_x - F_y|` for sorted samples.
fn ks_stat_sorted(x: &[f64], y: &[f64]) -> f64 {
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d): (usize, usize, f64) = (0, 0, 0.0);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] == v {
            i += 1;
        }
        while j < y.len() && y[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Upper tail `P(K > λ)` of the Kolmogorov distribution, 100 series terms.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let q = if lambda < 1.0 {
        // Small-λ form of the CDF; the alternating series converges slowly here.
        let c = (2.0 * std::f64::consts::PI).sqrt() / lambda;
        let a = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let cdf: f64 = (1..=100).map(|k| (-((2 * k - 1) as f64).powi(2) * a).exp()).sum::<f64>() * c;
        1.0 - cdf
    } else {
        2.0 * (1..=100)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum::<f64>()
    };
    q.clamp(0.0, 1.0)
}

/// Asymptotic KS p-value with effective size `n m / (n + m)`.
pub fn ks_asymptotic_p(d: f64, n: usize, m: usize) -> f64 {
    let ne = (n * m) as f64 / (n + m) as f64;
    kolmogorov_q(ne.sqrt() * d)
}

/// Exact permutation p-value `P(D >= d)` over all splits of the pooled
/// sample into groups of sizes `n` and `len - n`.
pub fn ks_permutation_p(pooled: &[f64], n: usize, d: f64) -> f64 {
    let total = pooled.len();
    let mut chosen: Vec<usize> = (0..n).collect();
    let (mut hits, mut count) = (0u64, 0u64);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(total - n);
    loop {
        xs.clear();
        ys.clear();
        let mut c = 0;
        for (k, &v) in pooled.iter().enumerate() {
            if c < n && chosen[c] == k {
                xs.push(v);
                c += 1;
            } else {
                ys.push(v);
            }
        }
        xs.sort_by(f64::total_cmp);
        ys.sort_by(f64::total_cmp);
        if ks_stat_sorted(&xs, &ys) >= d - 1e-12 {
            hits += 1;
        }
        count += 1;
        // Next n-combination in lexicographic order.
        let mut i = n;
        let advanced = loop {
            if i == 0 {
                break false;
            }
            i -= 1;
            if chosen[i] < total - n + i {
                break true;
            }
        };
        if !advanced {
            return hits as f64 / count as f64;
        }
        chosen[i] += 1;
        for k in i + 1..n {
            chosen[k] = chosen[k - 1] + 1;
        }
    }
}

/// Two-sample Kolmogorov-Smirnov test. The p-value is exact (permutation)
/// when `n + m <= 20` and asymptotic otherwise.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> Result<TestResult> {
    check_samples(x, y)?;
    let d = ks_stat_sorted(&sorted(x), &sorted(y));
    let p = if x.len() + y.len() <= KS_EXACT_MAX {
        let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
        ks_permutation_p(&pooled, x.len(), d)
    } else {
        ks_asymptotic_p(d, x.len(), y.len())
    };
    Ok(TestResult { statistic: d, p_value: p })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumComparison {
    pub eigs_1: Vec<f64>,
    pub eigs_2: Vec<f64>,
    pub kw: TestResult,
    pub ks: TestResult,
}

impl SpectrumComparison {
    /// Two-row table: test name, statistic, p-value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "test,statistic,p_value")?;
        writeln!(w, "Kruskal-Wallis,{},{}", self.kw.statistic, self.kw.p_value)?;
        writeln!(w, "Kolmogorov-Smirnov,{},{}", self.ks.statistic, self.ks.p_value)?;
        Ok(())
    }
}

fn spectrum(c: &CorrelationMatrix, drop_zero: bool) -> Result<Vec<f64>> {
    let eigs = sym_eigvals(c.as_matrix())?;
    let trace_gap = (eigs.sum() - c.size() as f64).abs();
    if trace_gap > 1e-6 * c.size() as f64 {
        return Err(Error::Domain(format!("eigenvalues sum off the trace by {trace_gap:e}")));
    }
    // Eigenvalues below ZERO_EIG in magnitude are rounding noise around an
    // exact zero; kept ones are snapped to 0 so the tests see ties rather
    // than an arbitrary ordering of ±1e-15 values.
    let v: Vec<f64> = eigs
        .iter()
        .copied()
        .filter(|&e| !drop_zero || e >= ZERO_EIG)
        .map(|e| if e.abs() < ZERO_EIG { 0.0 } else { e })
        .collect();
    if v.is_empty() {
        return Err(Error::Domain("no eigenvalues left after dropping zeros".into()));
    }
    Ok(v)
}

/// Compares the eigenvalue distributions of two correlation matrices.
pub fn compare_spectra(t1: &CorrelationMatrix, t2: &CorrelationMatrix, drop_zero: bool) -> Result<SpectrumComparison> {
    let eigs_1 = spectrum(t1, drop_zero)?;
    let eigs_2 = spectrum(t2, drop_zero)?;
    let kw = kruskal_wallis(&eigs_1, &eigs_2)?;
    let ks = ks_two_sample(&eigs_1, &eigs_2)?;
    Ok(SpectrumComparison { eigs_1, eigs_2, kw, ks })
}
