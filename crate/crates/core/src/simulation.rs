//! Synthetic covariance tensors with planted block correlation structure.
//!
//! Random numbers come from `ChaCha8Rng` seeded with the config seed, so a
//! seed reproduces the same draws on every platform. Draw order: block
//! correlations, the full-size correlation, variances, time series (when
//! synthesized), then per slice the upper-triangle noise column by column.
//! Noise is mirrored so every frontal slice stays symmetric.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hcm::{nearest_correlation, CorrelationMatrix, NEAREST_MAX_ITER, NEAREST_TOL};
use crate::linalg::sym_eig;
use crate::tensor::{Matrix, Tensor3};

/// Modulating series used when none is supplied: `level * exp(z_t)` with
/// `z` a zero-started AR(1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesModel {
    pub level: f64,
    pub phi: f64,
    pub sd: f64,
}

impl Default for SeriesModel {
    fn default() -> Self {
        SeriesModel {
            level: 20.0,
            phi: 0.95,
            sd: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub block_sizes: Vec<usize>,
    pub d_block: f64,
    pub d_full: f64,
    /// Weights of the block matrix and the full-size matrix.
    pub mix: (f64, f64),
    pub svd_rank: usize,
    pub t: usize,
    /// Explicit positive series of length `t`; synthesized when absent.
    pub time_series: Option<Vec<f64>>,
    pub series: SeriesModel,
    /// Variances are log-uniform on this range.
    pub variance_range: (f64, f64),
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            block_sizes: vec![20, 10, 30, 15, 25],
            d_block: 0.2,
            d_full: 1.0,
            mix: (0.9, 0.1),
            svd_rank: 10,
            t: 150,
            time_series: None,
            series: SeriesModel::default(),
            variance_range: (0.5, 2.0),
            noise_sigma: 1.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    /// Smaller setup for quick runs: 40 assets, 60 periods, rank 5.
    pub fn reduced() -> Self {
        SimConfig {
            block_sizes: vec![8, 4, 12, 6, 10],
            svd_rank: 5,
            t: 60,
            ..SimConfig::default()
        }
    }

    pub fn size(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.size();
        if self.block_sizes.is_empty() || self.block_sizes.contains(&0) {
            return Err(Error::arg("block sizes must be non-empty and positive"));
        }
        if !(self.d_block > 0.0 && self.d_full > 0.0) {
            return Err(Error::arg("Beta shape parameters must be positive"));
        }
        let (we, ws) = self.mix;
        if we < 0.0 || ws < 0.0 || ((we + ws) - 1.0).abs() > 1e-12 {
            return Err(Error::arg("mixing weights must be nonnegative and sum to 1"));
        }
        if self.svd_rank == 0 || self.svd_rank > m {
            return Err(Error::arg(format!("svd_rank must lie in 1..={m}")));
        }
        if self.t == 0 {
            return Err(Error::arg("t must be at least 1"));
        }
        if let Some(ts) = &self.time_series {
            if ts.len() != self.t {
                return Err(Error::arg(format!("time series has {} values, expected {}", ts.len(), self.t)));
            }
            if let Some(i) = ts.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::arg(format!("time series value {} at position {} is not positive", ts[i], i + 1)));
            }
        }
        let (lo, hi) = self.variance_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::arg("variance range must satisfy 0 < lo <= hi"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::arg("noise_sigma must be nonnegative"));
        }
        if !(self.series.level > 0.0) {
            return Err(Error::arg("series level must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub omega_true: CorrelationMatrix,
    pub variances: Vec<f64>,
    pub sigma: Matrix,
    pub sigma_svd: Matrix,
    pub tensor: Tensor3,
    pub time_series: Vec<f64>,
}

/// Random correlation matrix from a C-vine whose partial correlations are
/// `Beta(d, d)` draws mapped to `(-1, 1)`; rows and columns are randomly
/// permuted afterwards so no index position is special.
pub fn vine_beta_corr_with<R: Rng + ?Sized>(n: usize, d: f64, rng: &mut R) -> Result<CorrelationMatrix> {
    if n == 0 {
        return Err(Error::arg("vine size must be at least 1"));
    }
    let beta = Beta::new(d, d).map_err(|e| Error::arg(format!("Beta({d}, {d}): {e}")))?;
    let mut part = Matrix::zeros(n, n);
    let mut s = Matrix::identity(n, n);
    for k in 0..n.saturating_sub(1) {
        for i in k + 1..n {
            let draw: f64 = beta.sample(rng);
            // Keep strictly inside (-1, 1) so later levels stay nondegenerate.
            let pk = (2.0 * draw - 1.0).clamp(-1.0 + 1e-12, 1.0 - 1e-12);
            part[(k, i)] = pk;
            let mut p = pk;
            for l in (0..k).rev() {
                p = p * ((1.0 - part[(l, i)].powi(2)) * (1.0 - part[(l, k)].powi(2))).sqrt() + part[(l, i)] * part[(l, k)];
            }
            s[(k, i)] = p;
            s[(i, k)] = p;
        }
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let out = Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { s[(perm[i], perm[j])].clamp(-1.0, 1.0) });
    Ok(CorrelationMatrix::from_trusted(out))
}

/// [`vine_beta_corr_with`] on a generator seeded from `seed`.
pub fn vine_beta_corr(n: usize, d: f64, seed: u64) -> Result<CorrelationMatrix> {
    vine_beta_corr_with(n, d, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Block-diagonal correlation matrix with independent vine blocks.
pub fn block_diag_corr_with<R: Rng + ?Sized>(sizes: &[usize], d: f64, rng: &mut R) -> Result<Matrix> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::arg("block sizes must be non-empty and positive"));
    }
    let m: usize = sizes.iter().sum();
    let mut e = Matrix::zeros(m, m);
    let mut off = 0;
    for &b in sizes {
        let blk = vine_beta_corr_with(b, d, rng)?;
        e.view_mut((off, off), (b, b)).copy_from(blk.as_matrix());
        off += b;
    }
    Ok(e)
}

pub fn block_diag_corr(sizes: &[usize], d: f64, seed: u64) -> Result<Matrix> {
    block_diag_corr_with(sizes, d, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Best rank-`r` approximation of a symmetric PSD matrix through its
/// leading eigenpairs (identical to the truncated SVD in this case).
fn truncate_psd(m: &Matrix, r: usize) -> Result<Matrix> {
    let eig = sym_eig(m)?;
    let n = m.nrows();
    let mut out = Matrix::zeros(n, n);
    for c in n - r..n {
        let v = eig.vectors.column(c);
        out += (v * eig.values[c]) * v.transpose();
    }
    Ok((&out + out.transpose()) * 0.5)
}

fn synth_series(rng: &mut ChaCha8Rng, t: usize, model: &SeriesModel) -> Vec<f64> {
    let mut z = 0.0;
    (0..t)
        .map(|_| {
            let e: f64 = StandardNormal.sample(rng);
            z = model.phi * z + model.sd * e;
            model.level * z.exp()
        })
        .collect()
}

/// Runs the full generator: block and full vine correlations, their mixture
/// projected to a correlation matrix, random variances, low-rank truncation
/// and a time-modulated tensor with Gaussian noise.
pub fn simulate(cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let m = cfg.size();

    let e = block_diag_corr_with(&cfg.block_sizes, cfg.d_block, &mut rng)?;
    let s = vine_beta_corr_with(m, cfg.d_full, &mut rng)?;
    let mixed = e * cfg.mix.0 + s.as_matrix() * cfg.mix.1;
    let omega = nearest_correlation(&mixed, NEAREST_TOL, NEAREST_MAX_ITER)?;

    let (lo, hi) = (cfg.variance_range.0.ln(), cfg.variance_range.1.ln());
    let variances: Vec<f64> = (0..m)
        .map(|_| if hi > lo { rng.random_range(lo..hi).exp() } else { lo.exp() })
        .collect();
    let sd: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
    let om = omega.as_matrix();
    let sigma = Matrix::from_fn(m, m, |i, j| sd[i] * om[(i, j)] * sd[j]);
    let sigma_svd = truncate_psd(&sigma, cfg.svd_rank)?;

    let series = match &cfg.time_series {
        Some(ts) => ts.clone(),
        None => synth_series(&mut rng, cfg.t, &cfg.series),
    };

    let mut data = Vec::with_capacity(m * m * cfg.t);
    let mut noise = Matrix::zeros(m, m);
    for &tau in &series {
        if cfg.noise_sigma > 0.0 {
            for j in 0..m {
                for i in 0..=j {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    noise[(i, j)] = cfg.noise_sigma * z;
                    noise[(j, i)] = noise[(i, j)];
                }
            }
        }
        data.extend(sigma_svd.iter().zip(noise.iter()).map(|(v, e)| tau * v + e));
    }
    let tensor = Tensor3::new([m, m, cfg.t], data)?;
    Ok(SimOutput {
        omega_true: omega,
        variances,
        sigma,
        sigma_svd,
        tensor,
        time_series: series,
    })
}

/// Splits along the third mode into slices `1..=at` and `at+1..=K`.
pub fn split_tensor(t: &Tensor3, at: usize) -> Result<(Tensor3, Tensor3)> {
    let k = t.dims()[2];
    if at == 0 || at >= k {
        return Err(Error::Bounds {
            what: "split point".into(),
            index: at,
            limit: k.saturating_sub(1),
        });
    }
    Ok((t.frontal_range(0, at)?, t.frontal_range(at, k)?))
}

/// Mean absolute within-block off-diagonal correlation minus the mean
/// absolute between-block correlation, for contiguous blocks.
pub fn block_contrast(corr: &Matrix, sizes: &[usize]) -> Result<f64> {
    let m: usize = sizes.iter().sum();
    if corr.shape() != (m, m) {
        return Err(Error::arg(format!("block sizes sum to {m} but matrix is {}x{}", corr.nrows(), corr.ncols())));
    }
    let mut label = Vec::with_capacity(m);
    for (b, &s) in sizes.iter().enumerate() {
        label.extend(std::iter::repeat_n(b, s));
    }
    let (mut win, mut nwin, mut btw, mut nbtw) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..m {
        for j in 0..i {
            if label[i] == label[j] {
                win += corr[(i, j)].abs();
                nwin += 1;
            } else {
                btw += corr[(i, j)].abs();
                nbtw += 1;
            }
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    Ok(mean(win, nwin) - mean(btw, nbtw))
}
