//! PARAFAC, Tucker and slice-diagonal (SDT) decompositions fitted by
//! alternating least squares.
//!
//! All three models share the form `X ≈ core x_1 A x_2 B x_3 C` with factor
//! matrices stored as `I x P`, `J x Q` and `K x R` (one column per
//! component). They differ in the core: the superdiagonal identity for
//! PARAFAC, a dense `P x Q x R` tensor for Tucker, and for SDT a core whose
//! frontal slices are diagonal, stored compactly as the `P x R` matrix of
//! `λ_{ppr}`.

mod io;
pub(crate) mod kernels;
mod parafac;
mod sdt;
mod tucker;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::pinv;
use crate::tensor::{Matrix, Mode, Tensor3};

pub use io::{load_model, save_model, ModelMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Parafac,
    Tucker,
    Sdt,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Parafac => "parafac",
            ModelKind::Tucker => "tucker",
            ModelKind::Sdt => "sdt",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "parafac" | "cp" => Ok(ModelKind::Parafac),
            "tucker" => Ok(ModelKind::Tucker),
            "sdt" => Ok(ModelKind::Sdt),
            other => Err(Error::arg(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Component counts along the three modes.
///
/// PARAFAC uses `p = q = r`; SDT uses `p = q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ranks {
    pub p: usize,
    pub q: usize,
    pub r: usize,
}

impl Ranks {
    pub fn parafac(r: usize) -> Self {
        Ranks { p: r, q: r, r }
    }

    pub fn tucker(p: usize, q: usize, r: usize) -> Self {
        Ranks { p, q, r }
    }

    pub fn sdt(p: usize, r: usize) -> Self {
        Ranks { p, q: p, r }
    }
}

impl fmt::Display for Ranks {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.p, self.q, self.r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    /// HOSVD start for Tucker, Gaussian start for PARAFAC and SDT.
    Auto,
    /// i.i.d. standard normal factors.
    Random,
    /// Leading singular vectors of each unfolding for the first restart,
    /// Gaussian starts for the rest.
    Svd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlsConfig {
    pub max_iter: usize,
    /// Threshold on the change of relative error between sweeps.
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub init: Init,
}

impl Default for AlsConfig {
    fn default() -> Self {
        AlsConfig {
            max_iter: 500,
            tol: 1e-8,
            restarts: 5,
            seed: 0,
            init: Init::Auto,
        }
    }
}

impl AlsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::arg("max_iter must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::arg("tol must be positive"));
        }
        if self.restarts == 0 {
            return Err(Error::arg("restarts must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub ssr: f64,
    /// `||X - X̂||_F / ||X||_F`.
    pub rel_error: f64,
    pub iterations: usize,
    pub converged: bool,
    pub free_params: usize,
    /// Set when the input tensor is identically zero.
    pub degenerate: bool,
    /// Index of the winning restart.
    pub restart: usize,
    /// Relative error after every sweep of the winning restart.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParafacModel {
    pub(crate) a: Matrix,
    pub(crate) b: Matrix,
    pub(crate) c: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuckerModel {
    pub(crate) a: Matrix,
    pub(crate) b: Matrix,
    pub(crate) c: Matrix,
    pub(crate) core: Tensor3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdtModel {
    pub(crate) a: Matrix,
    pub(crate) b: Matrix,
    pub(crate) c: Matrix,
    /// `P x R`, entry `(p, r)` is `λ_{ppr}`.
    pub(crate) core_diag: Matrix,
}

fn check_finite(name: &str, m: &Matrix) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::arg(format!("factor {name} has non-finite entries")))
    }
}

fn check_rows(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<()> {
    if a.nrows() == 0 || b.nrows() == 0 || c.nrows() == 0 {
        return Err(Error::arg("factor matrices need at least one row"));
    }
    check_finite("A", a)?;
    check_finite("B", b)?;
    check_finite("C", c)
}

impl ParafacModel {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        check_rows(&a, &b, &c)?;
        if a.ncols() == 0 || a.ncols() != b.ncols() || a.ncols() != c.ncols() {
            return Err(Error::arg(format!(
                "PARAFAC factors need equal positive column counts, got {}, {}, {}",
                a.ncols(),
                b.ncols(),
                c.ncols()
            )));
        }
        Ok(ParafacModel { a, b, c })
    }

    pub fn rank(&self) -> usize {
        self.a.ncols()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn reconstruct(&self) -> Tensor3 {
        kernels::cp_reconstruct(&self.a, &self.b, &self.c)
    }

    /// The same model expressed with a slice-diagonal core: `P = R` and
    /// `λ_{ppr} = 1` exactly when `p = r`.
    pub fn to_sdt(&self) -> SdtModel {
        let r = self.rank();
        SdtModel {
            a: self.a.clone(),
            b: self.b.clone(),
            c: self.c.clone(),
            core_diag: Matrix::identity(r, r),
        }
    }
}

impl TuckerModel {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, core: Tensor3) -> Result<Self> {
        check_rows(&a, &b, &c)?;
        let want = [a.ncols(), b.ncols(), c.ncols()];
        if core.dims() != want {
            return Err(Error::arg(format!(
                "Tucker core is {:?} but factors have {:?} columns",
                core.dims(),
                want
            )));
        }
        Ok(TuckerModel { a, b, c, core })
    }

    pub fn ranks(&self) -> Ranks {
        let [p, q, r] = self.core.dims();
        Ranks { p, q, r }
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn core(&self) -> &Tensor3 {
        &self.core
    }

    pub fn reconstruct(&self) -> Tensor3 {
        self.core
            .nmode_product(&self.c, Mode::Three)
            .and_then(|t| t.nmode_product(&self.a, Mode::One))
            .and_then(|t| t.nmode_product(&self.b, Mode::Two))
            .expect("validated shapes")
    }
}

impl SdtModel {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, core_diag: Matrix) -> Result<Self> {
        check_rows(&a, &b, &c)?;
        check_finite("core", &core_diag)?;
        let p = a.ncols();
        if p == 0 || b.ncols() != p {
            return Err(Error::arg(format!(
                "SDT needs A and B with the same positive column count, got {} and {}",
                a.ncols(),
                b.ncols()
            )));
        }
        if core_diag.shape() != (p, c.ncols()) || c.ncols() == 0 {
            return Err(Error::arg(format!(
                "SDT core diagonal must be {}x{}, got {}x{}",
                p,
                c.ncols(),
                core_diag.nrows(),
                core_diag.ncols()
            )));
        }
        Ok(SdtModel { a, b, c, core_diag })
    }

    pub fn ranks(&self) -> Ranks {
        Ranks::sdt(self.a.ncols(), self.c.ncols())
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn core_diag(&self) -> &Matrix {
        &self.core_diag
    }

    /// Effective third-mode loadings `W = C Λ̃^T` (`K x P`): frontal slice
    /// `k` of the model is `A diag(W[k,:]) B^T`.
    pub fn time_weights(&self) -> Matrix {
        &self.c * self.core_diag.transpose()
    }

    /// The core as a dense `P x P x R` tensor with diagonal frontal slices.
    pub fn core_tensor(&self) -> Tensor3 {
        let (p, r) = self.core_diag.shape();
        Tensor3::from_fn([p, p, r], |i, j, k| if i == j { self.core_diag[(i, k)] } else { 0.0 })
            .expect("finite core")
    }

    pub fn reconstruct(&self) -> Tensor3 {
        kernels::cp_reconstruct(&self.a, &self.b, &self.time_weights())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Parafac(ParafacModel),
    Tucker(TuckerModel),
    Sdt(SdtModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Parafac(_) => ModelKind::Parafac,
            Model::Tucker(_) => ModelKind::Tucker,
            Model::Sdt(_) => ModelKind::Sdt,
        }
    }

    pub fn ranks(&self) -> Ranks {
        match self {
            Model::Parafac(m) => Ranks::parafac(m.rank()),
            Model::Tucker(m) => m.ranks(),
            Model::Sdt(m) => m.ranks(),
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        let (a, b, c) = self.factors();
        [a.nrows(), b.nrows(), c.nrows()]
    }

    pub fn factors(&self) -> (&Matrix, &Matrix, &Matrix) {
        match self {
            Model::Parafac(m) => (&m.a, &m.b, &m.c),
            Model::Tucker(m) => (&m.a, &m.b, &m.c),
            Model::Sdt(m) => (&m.a, &m.b, &m.c),
        }
    }

    /// Third-mode factor matrix `C`.
    pub fn time_factor(&self) -> &Matrix {
        self.factors().2
    }

    pub fn reconstruct(&self) -> Tensor3 {
        match self {
            Model::Parafac(m) => m.reconstruct(),
            Model::Tucker(m) => m.reconstruct(),
            Model::Sdt(m) => m.reconstruct(),
        }
    }
}

/// Embeds a PARAFAC model in the SDT family; the reconstruction is unchanged.
pub fn embed_parafac_as_sdt(m: &ParafacModel) -> SdtModel {
    m.to_sdt()
}

/// Least-squares Tucker core for fixed factors:
/// `G = X x_1 A^+ x_2 B^+ x_3 C^+`, the minimizer of
/// `||X - G x_1 A x_2 B x_3 C||_F`.
pub fn tucker_core_from_factors(t: &Tensor3, a: &Matrix, b: &Matrix, c: &Matrix) -> Result<Tensor3> {
    let dims = t.dims();
    if [a.nrows(), b.nrows(), c.nrows()] != dims {
        return Err(Error::arg(format!(
            "factor row counts {}/{}/{} do not match tensor {:?}",
            a.nrows(),
            b.nrows(),
            c.nrows(),
            dims
        )));
    }
    t.nmode_product(&pinv(c), Mode::Three)?
        .nmode_product(&pinv(a), Mode::One)?
        .nmode_product(&pinv(b), Mode::Two)
}

/// Number of free parameters of a model with the given kind, tensor
/// dimensions and ranks.
pub fn count_free_params(kind: ModelKind, dims: [usize; 3], ranks: Ranks) -> usize {
    let [i, j, k] = dims;
    let Ranks { p, q, r } = ranks;
    match kind {
        ModelKind::Parafac => r * (i + j + k),
        ModelKind::Tucker => p * i + q * j + r * k + p * q * r,
        ModelKind::Sdt => p * i + q * j + r * k + p * r,
    }
}

/// Per-sweep behaviour of one ALS model family.
pub(crate) trait AlsState: Sized {
    /// One ALS sweep; returns the SSR of the updated model, possibly from
    /// the expanded form `||X||^2 - 2<X, M> + ||M||^2` (`norm_sq = ||X||^2`).
    fn sweep(&mut self, x: &Tensor3, norm_sq: f64) -> f64;
    /// Exact SSR through a full reconstruction.
    fn ssr(&self, x: &Tensor3) -> f64;
    fn into_model(self) -> Model;
}

pub(crate) fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Deterministic per-restart generator.
pub(crate) fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

struct Run<S> {
    state: S,
    ssr: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

/// Below this fraction of `||X||^2` the expanded SSR loses too many digits to
/// cancellation and the exact form is used instead.
const EXPANDED_SSR_FLOOR: f64 = 1e-6;

/// Chooses between the expanded SSR and an exact recomputation.
pub(crate) fn settle_ssr<S: AlsState>(state: &S, x: &Tensor3, norm_sq: f64, expanded: f64) -> f64 {
    if expanded > EXPANDED_SSR_FLOOR * norm_sq {
        expanded
    } else {
        state.ssr(x)
    }
}

fn run_one<S: AlsState>(x: &Tensor3, norm_x: f64, mut state: S, cfg: &AlsConfig) -> Run<S> {
    let norm_sq = norm_x * norm_x;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut ssr = state.ssr(x);
    let mut prev = ssr.sqrt() / norm_x;
    for _ in 0..cfg.max_iter {
        ssr = state.sweep(x, norm_sq);
        let eps = ssr.sqrt() / norm_x;
        trace.push(eps);
        if (prev - eps).abs() < cfg.tol {
            converged = true;
            break;
        }
        prev = eps;
    }
    Run {
        ssr: state.ssr(x),
        state,
        iterations: trace.len(),
        converged,
        trace,
    }
}

/// Runs `cfg.restarts` independent fits and keeps the one with the smallest
/// SSR (lowest restart index on ties).
pub(crate) fn run_restarts<S: AlsState>(
    x: &Tensor3,
    kind: ModelKind,
    ranks: Ranks,
    cfg: &AlsConfig,
    mut init: impl FnMut(usize) -> Result<S>,
) -> Result<(Model, FitReport)> {
    let norm_x = x.frob_norm();
    let mut best: Option<(usize, Run<S>)> = None;
    for restart in 0..cfg.restarts {
        let run = run_one(x, norm_x, init(restart)?, cfg);
        log::debug!(
            "{kind} {ranks} restart {restart}: ssr {:e} after {} sweeps",
            run.ssr,
            run.iterations
        );
        if best.as_ref().is_none_or(|(_, b)| run.ssr < b.ssr) {
            best = Some((restart, run));
        }
    }
    let (restart, run) = best.expect("at least one restart");
    let model = run.state.into_model();
    let report = FitReport {
        ssr: run.ssr,
        rel_error: run.ssr.sqrt() / norm_x,
        iterations: run.iterations,
        converged: run.converged,
        free_params: count_free_params(kind, x.dims(), ranks),
        degenerate: false,
        restart,
        trace: run.trace,
    };
    Ok((model, report))
}

fn zero_fit(x: &Tensor3, kind: ModelKind, ranks: Ranks) -> (Model, FitReport) {
    let [i, j, k] = x.dims();
    let Ranks { p, q, r } = ranks;
    let model = match kind {
        ModelKind::Parafac => Model::Parafac(ParafacModel {
            a: Matrix::zeros(i, r),
            b: Matrix::zeros(j, r),
            c: Matrix::zeros(k, r),
        }),
        ModelKind::Tucker => Model::Tucker(TuckerModel {
            a: Matrix::zeros(i, p),
            b: Matrix::zeros(j, q),
            c: Matrix::zeros(k, r),
            core: Tensor3::zeros([p, q, r]).expect("positive ranks"),
        }),
        ModelKind::Sdt => Model::Sdt(SdtModel {
            a: Matrix::zeros(i, p),
            b: Matrix::zeros(j, p),
            c: Matrix::zeros(k, r),
            core_diag: Matrix::zeros(p, r),
        }),
    };
    let report = FitReport {
        ssr: 0.0,
        rel_error: 0.0,
        iterations: 0,
        converged: true,
        free_params: count_free_params(kind, x.dims(), ranks),
        degenerate: true,
        restart: 0,
        trace: Vec::new(),
    };
    (model, report)
}

fn validate_ranks(kind: ModelKind, dims: [usize; 3], ranks: Ranks) -> Result<()> {
    let [i, j, k] = dims;
    let Ranks { p, q, r } = ranks;
    if p == 0 || q == 0 || r == 0 {
        return Err(Error::arg("ranks must be at least 1"));
    }
    match kind {
        ModelKind::Parafac => {
            let bound = (i * j).min(i * k).min(j * k);
            if p != q || q != r {
                return Err(Error::arg("PARAFAC uses a single rank"));
            }
            if r > bound {
                return Err(Error::arg(format!(
                    "PARAFAC rank {r} exceeds the bound {bound} for a {i}x{j}x{k} tensor"
                )));
            }
        }
        ModelKind::Tucker | ModelKind::Sdt => {
            if kind == ModelKind::Sdt && p != q {
                return Err(Error::arg(format!(
                    "SDT needs square diagonal core slices (P = Q), got P={p}, Q={q}"
                )));
            }
            if p > i || q > j || r > k {
                return Err(Error::arg(format!(
                    "ranks {ranks} exceed tensor dimensions {i}x{j}x{k}"
                )));
            }
        }
    }
    Ok(())
}

/// Fits a model of the given kind.
pub fn fit(t: &Tensor3, kind: ModelKind, ranks: Ranks, cfg: &AlsConfig) -> Result<(Model, FitReport)> {
    cfg.validate()?;
    validate_ranks(kind, t.dims(), ranks)?;
    if t.norm_sq() == 0.0 {
        return Ok(zero_fit(t, kind, ranks));
    }
    match kind {
        ModelKind::Parafac => parafac::fit(t, ranks.r, cfg),
        ModelKind::Tucker => tucker::fit(t, ranks, cfg),
        ModelKind::Sdt => sdt::fit(t, ranks.p, ranks.r, cfg),
    }
}

pub fn fit_parafac(t: &Tensor3, r: usize, cfg: &AlsConfig) -> Result<(ParafacModel, FitReport)> {
    match fit(t, ModelKind::Parafac, Ranks::parafac(r), cfg)? {
        (Model::Parafac(m), rep) => Ok((m, rep)),
        _ => unreachable!("kind preserved"),
    }
}

pub fn fit_tucker(t: &Tensor3, ranks: (usize, usize, usize), cfg: &AlsConfig) -> Result<(TuckerModel, FitReport)> {
    match fit(t, ModelKind::Tucker, Ranks::tucker(ranks.0, ranks.1, ranks.2), cfg)? {
        (Model::Tucker(m), rep) => Ok((m, rep)),
        _ => unreachable!("kind preserved"),
    }
}

pub fn fit_sdt(t: &Tensor3, ranks: (usize, usize), cfg: &AlsConfig) -> Result<(SdtModel, FitReport)> {
    match fit(t, ModelKind::Sdt, Ranks::sdt(ranks.0, ranks.1), cfg)? {
        (Model::Sdt(m), rep) => Ok((m, rep)),
        _ => unreachable!("kind preserved"),
    }
}

/// Continues SDT ALS from a given model instead of a fresh initialization.
pub fn refine_sdt(t: &Tensor3, start: SdtModel, cfg: &AlsConfig) -> Result<(SdtModel, FitReport)> {
    cfg.validate()?;
    if start.a.nrows() != t.dim(Mode::One)
        || start.b.nrows() != t.dim(Mode::Two)
        || start.c.nrows() != t.dim(Mode::Three)
    {
        return Err(Error::arg("starting model does not match the tensor"));
    }
    let ranks = start.ranks();
    let one = AlsConfig { restarts: 1, ..*cfg };
    let mut start = Some(sdt::SdtState::from_model(start));
    match run_restarts(t, ModelKind::Sdt, ranks, &one, |_| {
        Ok(start.take().expect("single restart"))
    })? {
        (Model::Sdt(m), rep) => Ok((m, rep)),
        _ => unreachable!("kind preserved"),
    }
}

/// Leading-eigenvector start for a factor, padded with Gaussian columns when
/// `r` exceeds the dimension.
pub(crate) fn svd_start(gram: &Matrix, r: usize, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    let n = gram.nrows();
    let lead = crate::linalg::leading_left_vectors(gram, r.min(n))?;
    if r <= n {
        return Ok(lead);
    }
    let mut out = gaussian(rng, n, r);
    out.columns_mut(0, n).copy_from(&lead);
    Ok(out)
}

pub(crate) fn use_svd_init(cfg: &AlsConfig, kind: ModelKind, restart: usize) -> bool {
    restart == 0
        && match cfg.init {
            Init::Svd => true,
            Init::Random => false,
            Init::Auto => kind == ModelKind::Tucker,
        }
}
