//! From a fitted covariance-tensor model to the hidden correlation matrix:
//! link matrix, normalization, nearest-correlation projection and the
//! end-to-end build.

use serde::{Deserialize, Serialize};

use crate::decomp::{fit, AlsConfig, FitReport, Model, ModelKind, ParafacModel, Ranks, SdtModel, TuckerModel};
use crate::error::{Error, Result, StageExt};
use crate::linalg::{svd, sym_eig};
use crate::selection::{scan_and_fit, RankScanResult, ScanOptions};
use crate::tensor::{Matrix, Tensor3};

/// Symmetric, unit-diagonal, positive semidefinite matrix with entries in
/// `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix(Matrix);

/// Eigenvalue slack accepted by [`CorrelationMatrix::new`].
pub const PSD_TOL: f64 = 1e-8;

impl CorrelationMatrix {
    /// Validates every invariant; symmetry and the unit diagonal must hold
    /// exactly.
    pub fn new(m: Matrix) -> Result<Self> {
        let n = m.nrows();
        if n == 0 || m.ncols() != n {
            return Err(Error::arg(format!("correlation matrix must be square, got {}x{}", m.nrows(), m.ncols())));
        }
        for i in 0..n {
            if m[(i, i)] != 1.0 {
                return Err(Error::arg(format!("diagonal entry {} is {}, not 1", i + 1, m[(i, i)])));
            }
            for j in 0..i {
                let v = m[(i, j)];
                if !v.is_finite() || v != m[(j, i)] || v.abs() > 1.0 {
                    return Err(Error::arg(format!("entry ({}, {}) breaks symmetry or bounds", i + 1, j + 1)));
                }
            }
        }
        let min = sym_eig(&m)?.values[0];
        if min < -PSD_TOL {
            return Err(Error::arg(format!("matrix is not PSD (smallest eigenvalue {min:e})")));
        }
        Ok(CorrelationMatrix(m))
    }

    /// Wraps a matrix whose invariants hold by construction.
    pub(crate) fn from_trusted(m: Matrix) -> Self {
        CorrelationMatrix(m)
    }

    pub fn identity(n: usize) -> Self {
        CorrelationMatrix(Matrix::identity(n, n))
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

impl AsRef<Matrix> for CorrelationMatrix {
    fn as_ref(&self) -> &Matrix {
        &self.0
    }
}

/// The (symmetrized) link matrix `Γ` and how asymmetric it was before.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkMatrix {
    pub values: Matrix,
    /// `||Γ - Γ^T||_F / 2` before symmetrization.
    pub asymmetry: f64,
}

fn column_means(c: &Matrix) -> Vec<f64> {
    let k = c.nrows() as f64;
    (0..c.ncols()).map(|r| c.column(r).sum() / k).collect()
}

/// Link matrix `Γ = A M B^T` of a model whose first two modes index the same
/// assets.
///
/// `M` weights the core's time slices by the means of the matching columns
/// of `C`: `diag(mean c_r)` for PARAFAC, `Σ_r mean(c_r) Λ̃_{::r}` for SDT and
/// Tucker. For a single time component this is a positive multiple of the
/// core slice with its sign fixed by the time factor, which resolves the
/// joint sign ambiguity of `C` and the core. Tucker and SDT models with more
/// than one time component need `collapse_time`.
pub fn link_matrix(model: &Model, collapse_time: bool) -> Result<LinkMatrix> {
    let (a, b, c) = model.factors();
    if a.nrows() != b.nrows() {
        return Err(Error::arg(format!(
            "link matrix needs I = J, got I={} and J={}",
            a.nrows(),
            b.nrows()
        )));
    }
    let means = column_means(c);
    let r = c.ncols();
    if r > 1 && !collapse_time && model.kind() != ModelKind::Parafac {
        return Err(Error::arg(format!(
            "model has {r} time components; request the experimental time collapse or refit with one"
        )));
    }
    let mid = match model {
        Model::Parafac(_) => Matrix::from_diagonal(&nalgebra::DVector::from_vec(means)),
        Model::Sdt(m) => Matrix::from_diagonal(&(m.core_diag() * nalgebra::DVector::from_vec(means))),
        Model::Tucker(m) => {
            let [p, q, _] = m.core().dims();
            Matrix::from_fn(p, q, |i, j| (0..r).map(|k| means[k] * m.core().get(i, j, k)).sum())
        }
    };
    let g = a * mid * b.transpose();
    let asymmetry = (&g - g.transpose()).norm() / 2.0;
    let values = (&g + g.transpose()) * 0.5;
    Ok(LinkMatrix { values, asymmetry })
}

/// `Ω = D^{-1} Γ D^{-1}` with `D = diag(sqrt(Γ_mm))`.
pub fn normalize_to_correlation(g: &Matrix) -> Result<Matrix> {
    let n = g.nrows();
    if g.ncols() != n {
        return Err(Error::arg("link matrix must be square"));
    }
    let mut d = Vec::with_capacity(n);
    for i in 0..n {
        let v = g[(i, i)];
        if !(v > 0.0) {
            return Err(Error::NonPositiveDiagonal { index: i + 1, value: v });
        }
        d.push(v.sqrt());
    }
    let mut out = Matrix::from_fn(n, n, |i, j| g[(i, j)] / (d[i] * d[j]));
    for i in 0..n {
        out[(i, i)] = 1.0;
    }
    Ok(out)
}

/// Default tolerance and iteration cap for [`nearest_correlation`].
pub const NEAREST_TOL: f64 = 1e-7;
pub const NEAREST_MAX_ITER: usize = 200;
/// Iteration cap used by the HCM pipeline. Link matrices of fitted models
/// are far from the correlation set and typically need a few hundred sweeps.
pub const HCM_MAX_ITER: usize = 2000;

fn project_psd(m: &Matrix) -> Result<Matrix> {
    let eig = sym_eig(m)?;
    let n = m.nrows();
    let mut out = Matrix::zeros(n, n);
    for (c, &l) in eig.values.iter().enumerate() {
        if l > 0.0 {
            let v = eig.vectors.column(c);
            out += (v * l) * v.transpose();
        }
    }
    Ok((&out + out.transpose()) * 0.5)
}

/// Rescales a PSD matrix to unit diagonal and cleans up rounding.
fn finish(x: &Matrix) -> Matrix {
    let n = x.nrows();
    let d: Vec<f64> = (0..n).map(|i| x[(i, i)].max(f64::MIN_POSITIVE).sqrt()).collect();
    let mut out = Matrix::from_fn(n, n, |i, j| (x[(i, j)] / (d[i] * d[j])).clamp(-1.0, 1.0));
    for i in 0..n {
        out[(i, i)] = 1.0;
        for j in 0..i {
            let v = out[(i, j)];
            out[(j, i)] = v;
        }
    }
    out
}

/// Nearest correlation matrix in Frobenius norm by alternating projections
/// with Dykstra's correction.
///
/// Iterates until both the unit-diagonal violation of the PSD iterate and
/// the relative change between successive iterates fall below `tol`. The converged
/// iterate is projected once more onto the PSD cone and rescaled to a unit
/// diagonal, so the result satisfies the [`CorrelationMatrix`] invariants.
pub fn nearest_correlation(w: &Matrix, tol: f64, max_iter: usize) -> Result<CorrelationMatrix> {
    let n = w.nrows();
    if n == 0 || w.ncols() != n {
        return Err(Error::arg("nearest_correlation needs a non-empty square matrix"));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::arg("tol must be positive and max_iter at least 1"));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("input has non-finite entries"));
    }
    let scale = w.norm().max(1.0);
    if (w - w.transpose()).norm() > 1e-8 * scale {
        return Err(Error::arg("input must be symmetric"));
    }
    let mut y = (w + w.transpose()) * 0.5;
    let mut ds = Matrix::zeros(n, n);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let r = &y - &ds;
        let x = project_psd(&r)?;
        ds = &x - &r;
        let mut next = x.clone();
        let mut diag_err: f64 = 0.0;
        for i in 0..n {
            diag_err = diag_err.max((x[(i, i)] - 1.0).abs());
            next[(i, i)] = 1.0;
        }
        let change = (&next - &y).norm() / next.norm();
        y = next;
        residual = diag_err.max(change);
        if residual < tol {
            return Ok(CorrelationMatrix(finish(&project_psd(&y)?)));
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual,
        last: Box::new(y),
    })
}

/// Rewrites a single-time-component SDT or Tucker model so that its static
/// part `A core Bᵀ` is in SVD form: orthonormal `A`, `B` and a diagonal core
/// of descending singular values. The reconstruction is unchanged.
///
/// At `R = 1` the static part only determines `A core Bᵀ`, so individual
/// components are otherwise arbitrary up to an invertible mixing.
fn canonical_static(model: &Model) -> Result<Option<Model>> {
    let (a, b, c) = model.factors();
    let p = a.ncols();
    if c.ncols() != 1 || b.ncols() != p {
        return Ok(None);
    }
    let g = match model {
        Model::Sdt(m) => Matrix::from_diagonal(&m.core_diag().column(0).into_owned()),
        Model::Tucker(m) => m.core().frontal(0).into_owned(),
        Model::Parafac(_) => return Ok(None),
    };
    let dec = svd(&(a * g * b.transpose()));
    let k = p.min(dec.s.len());
    let mut u = Matrix::zeros(a.nrows(), p);
    let mut v = Matrix::zeros(b.nrows(), p);
    u.columns_mut(0, k).copy_from(&dec.u.columns(0, k));
    v.columns_mut(0, k).copy_from(&dec.v.columns(0, k));
    let s = dec.s.rows(0, k).into_owned();
    Ok(Some(match model {
        Model::Sdt(_) => {
            let mut diag = Matrix::zeros(p, 1);
            diag.rows_mut(0, k).copy_from(&s);
            Model::Sdt(SdtModel::new(u, v, c.clone(), diag)?)
        }
        _ => {
            let core = Tensor3::from_fn([p, p, 1], |i, j, _| if i == j && i < k { s[i] } else { 0.0 })?;
            Model::Tucker(TuckerModel::new(u, v, c.clone(), core)?)
        }
    }))
}

/// Drops the dominant static component (the market mode).
///
/// The component weight is `||a_p|| ||b_p||` times the size of its core
/// entries: `||Λ̃_{p,:}||` for SDT, `||G_{pp:}||` for Tucker and `||c_p||` for
/// PARAFAC. SDT and Tucker models with one time component are first put in
/// SVD form (see [`canonical_static`]), so the dropped component is the
/// leading singular triple of `A core Bᵀ`.
pub fn remove_market_mode(model: &Model) -> Result<Model> {
    let canon = canonical_static(model)?;
    let model = canon.as_ref().unwrap_or(model);
    let (a, b, _) = model.factors();
    let p = a.ncols();
    if p < 2 || b.ncols() != p {
        return Err(Error::arg(format!(
            "market-mode removal needs at least two paired static components, got P={}, Q={}",
            a.ncols(),
            b.ncols()
        )));
    }
    let weight = |k: usize| {
        let ab = a.column(k).norm() * b.column(k).norm();
        ab * match model {
            Model::Parafac(m) => m.c().column(k).norm(),
            Model::Sdt(m) => m.core_diag().row(k).norm(),
            Model::Tucker(m) => {
                let r = m.core().dims()[2];
                (0..r).map(|s| m.core().get(k, k, s).powi(2)).sum::<f64>().sqrt()
            }
        }
    };
    let drop = (0..p)
        .map(|k| (k, weight(k)))
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
        .0;
    let a2 = a.clone().remove_column(drop);
    let b2 = b.clone().remove_column(drop);
    Ok(match model {
        Model::Parafac(m) => Model::Parafac(ParafacModel::new(a2, b2, m.c().clone().remove_column(drop))?),
        Model::Sdt(m) => Model::Sdt(SdtModel::new(a2, b2, m.c().clone(), m.core_diag().clone().remove_row(drop))?),
        Model::Tucker(m) => {
            let [cp, cq, cr] = m.core().dims();
            let core = Tensor3::from_fn([cp - 1, cq - 1, cr], |i, j, k| {
                let skip = |x: usize| if x >= drop { x + 1 } else { x };
                m.core().get(skip(i), skip(j), k)
            })?;
            Model::Tucker(TuckerModel::new(a2, b2, m.c().clone(), core)?)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarketMode {
    Keep,
    Remove,
}

impl std::str::FromStr for MarketMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "keep" => Ok(MarketMode::Keep),
            "remove" => Ok(MarketMode::Remove),
            other => Err(Error::arg(format!("market mode must be keep or remove, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RankPolicy {
    Fixed(Ranks),
    /// Scan static ranks over `grid` (PARAFAC: the single rank).
    Scan { grid: Vec<usize>, options: ScanOptions },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HcmOptions {
    pub market_mode: MarketMode,
    /// Allow the experimental time-slice collapse for `R > 1`.
    pub collapse_time: bool,
    /// Projection tolerance and iteration cap.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for HcmOptions {
    fn default() -> Self {
        HcmOptions {
            market_mode: MarketMode::Keep,
            collapse_time: false,
            tol: NEAREST_TOL,
            max_iter: HCM_MAX_ITER,
        }
    }
}

/// What went into an HCM; serialized as the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: ModelKind,
    pub ranks: Ranks,
    pub market_mode: MarketMode,
    pub seed: u64,
    pub fit: FitReport,
    pub link_asymmetry: f64,
    /// `||Θ - Ω||_F`, the distance moved by the projection.
    pub projection_distance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_rank: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct HcmOutput {
    pub hcm: CorrelationMatrix,
    pub model: Model,
    pub report: FitReport,
    pub scan: Option<RankScanResult>,
    pub provenance: Provenance,
}

fn check_symmetric_slices(t: &Tensor3) -> Result<()> {
    let [i, j, k] = t.dims();
    if i != j {
        return Err(Error::arg(format!("covariance tensor needs square slices, got {i}x{j}")));
    }
    for s in 0..k {
        let f = t.frontal(s);
        let scale = f.norm();
        let asym = (f - f.transpose()).norm();
        if asym > 1e-8 * scale {
            return Err(Error::arg(format!(
                "frontal slice {} is not symmetric (relative asymmetry {:e})",
                s + 1,
                asym / scale
            )));
        }
    }
    Ok(())
}

/// Result of turning a fitted model into a hidden correlation matrix.
#[derive(Debug, Clone)]
pub struct ModelHcm {
    pub hcm: CorrelationMatrix,
    pub link_asymmetry: f64,
    pub projection_distance: f64,
}

/// Fitted model to hidden correlation matrix: optional market-mode removal,
/// link matrix, normalization and nearest-correlation projection.
pub fn hcm_from_model(model: &Model, opts: &HcmOptions) -> Result<ModelHcm> {
    let removed;
    let used = match opts.market_mode {
        MarketMode::Keep => model,
        MarketMode::Remove => {
            removed = remove_market_mode(model).stage("market mode")?;
            &removed
        }
    };
    let link = link_matrix(used, opts.collapse_time).stage("link matrix")?;
    let omega = normalize_to_correlation(&link.values).stage("normalize")?;
    let hcm = nearest_correlation(&omega, opts.tol, opts.max_iter).stage("nearest correlation")?;
    Ok(ModelHcm {
        projection_distance: (hcm.as_matrix() - &omega).norm(),
        link_asymmetry: link.asymmetry,
        hcm,
    })
}

/// Covariance tensor to hidden correlation matrix: rank selection, fit,
/// optional market-mode removal, link matrix, normalization and projection.
pub fn build_hcm(t: &Tensor3, kind: ModelKind, policy: &RankPolicy, cfg: &AlsConfig, opts: &HcmOptions) -> Result<HcmOutput> {
    check_symmetric_slices(t).stage("input")?;
    let (scan, model, report) = match policy {
        RankPolicy::Fixed(ranks) => {
            let (m, r) = fit(t, kind, *ranks, cfg).stage("fit")?;
            (None, m, r)
        }
        RankPolicy::Scan { grid, options } => {
            let (s, m, r) = scan_and_fit(t, kind, grid, cfg, options).stage("rank scan")?;
            (Some(s), m, r)
        }
    };
    if report.degenerate {
        return Err(Error::Domain("input tensor is identically zero".into()).in_stage("fit"));
    }
    let fin = hcm_from_model(&model, opts)?;
    let provenance = Provenance {
        kind,
        ranks: model.ranks(),
        market_mode: opts.market_mode,
        seed: cfg.seed,
        fit: FitReport {
            trace: Vec::new(),
            ..report.clone()
        },
        link_asymmetry: fin.link_asymmetry,
        projection_distance: fin.projection_distance,
        selected_rank: scan.as_ref().map(|s| s.selected),
    };
    Ok(HcmOutput {
        hcm: fin.hcm,
        model,
        report,
        scan,
        provenance,
    })
}
