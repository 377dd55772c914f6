//! Higher-order orthogonal iteration (Tucker-ALS).

use super::kernels::{gram1, gram2, gram3, times3};
use super::{gaussian, restart_rng, run_restarts, settle_ssr, use_svd_init};
use super::{AlsConfig, AlsState, FitReport, Model, ModelKind, Ranks, TuckerModel};
use crate::error::Result;
use crate::linalg::leading_left_vectors;
use crate::tensor::{Matrix, Mode, Tensor3};

pub(super) struct TuckerState {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    core: Tensor3,
}

fn lead(m: &Matrix, r: usize) -> Matrix {
    leading_left_vectors(&(m * m.transpose()), r).expect("square gram")
}

fn orthonormal(m: Matrix) -> Matrix {
    m.qr().q()
}

impl TuckerState {
    fn update_core(&mut self, x: &Tensor3) {
        self.core = x
            .nmode_product(&self.a.transpose(), Mode::One)
            .and_then(|t| t.nmode_product(&self.b.transpose(), Mode::Two))
            .map(|t| times3(&t, &self.c))
            .expect("factor shapes fixed at init");
    }
}

impl AlsState for TuckerState {
    fn sweep(&mut self, x: &Tensor3, norm_sq: f64) -> f64 {
        let (p, q, r) = (self.a.ncols(), self.b.ncols(), self.c.ncols());
        let xc = times3(x, &self.c);

        let y = xc.nmode_product(&self.b.transpose(), Mode::Two).expect("shapes");
        self.a = lead(&y.unfold(Mode::One), p);

        let y = xc.nmode_product(&self.a.transpose(), Mode::One).expect("shapes");
        self.b = lead(&y.unfold(Mode::Two), q);

        let y = x
            .nmode_product(&self.a.transpose(), Mode::One)
            .and_then(|t| t.nmode_product(&self.b.transpose(), Mode::Two))
            .expect("shapes");
        self.c = lead(&y.unfold(Mode::Three), r);
        self.core = times3(&y, &self.c);
        // Orthonormal factors: ||X - X̂||^2 = ||X||^2 - ||G||^2.
        settle_ssr(self, x, norm_sq, norm_sq - self.core.norm_sq())
    }

    fn ssr(&self, x: &Tensor3) -> f64 {
        let m = TuckerModel {
            a: self.a.clone(),
            b: self.b.clone(),
            c: self.c.clone(),
            core: self.core.clone(),
        };
        x.dist_sq(&m.reconstruct())
    }

    fn into_model(self) -> Model {
        Model::Tucker(TuckerModel {
            a: self.a,
            b: self.b,
            c: self.c,
            core: self.core,
        })
    }
}

pub(super) fn fit(x: &Tensor3, ranks: Ranks, cfg: &AlsConfig) -> Result<(Model, FitReport)> {
    let [ni, nj, nk] = x.dims();
    let Ranks { p, q, r } = ranks;
    run_restarts(x, ModelKind::Tucker, ranks, cfg, |restart| {
        let (a, b, c) = if use_svd_init(cfg, ModelKind::Tucker, restart) {
            (
                leading_left_vectors(&gram1(x), p)?,
                leading_left_vectors(&gram2(x), q)?,
                leading_left_vectors(&gram3(x), r)?,
            )
        } else {
            let mut rng = restart_rng(cfg.seed, restart);
            (
                orthonormal(gaussian(&mut rng, ni, p)),
                orthonormal(gaussian(&mut rng, nj, q)),
                orthonormal(gaussian(&mut rng, nk, r)),
            )
        };
        let mut s = TuckerState {
            a,
            b,
            c,
            core: Tensor3::zeros([p, q, r])?,
        };
        s.update_core(x);
        Ok(s)
    })
}
