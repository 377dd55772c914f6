//! CP-ALS.

use super::kernels::{cp_ssr, gram1, gram2, gram3, mttkrp1, mttkrp2_from, mttkrp3_from, x1t_times};
use super::{gaussian, restart_rng, run_restarts, settle_ssr, svd_start, use_svd_init};
use super::{AlsConfig, AlsState, FitReport, Model, ModelKind, ParafacModel, Ranks};
use crate::error::Result;
use crate::linalg::pinv_psd;
use crate::tensor::{Matrix, Tensor3};

pub(super) struct CpState {
    a: Matrix,
    b: Matrix,
    c: Matrix,
}

impl AlsState for CpState {
    fn sweep(&mut self, x: &Tensor3, norm_sq: f64) -> f64 {
        let [_, nj, nk] = x.dims();
        let (btb, ctc) = (self.b.tr_mul(&self.b), self.c.tr_mul(&self.c));

        self.a = mttkrp1(x, &self.b, &self.c) * pinv_psd(&ctc.component_mul(&btb));
        let ata = self.a.tr_mul(&self.a);

        let z = x1t_times(x, &self.a);
        self.b = mttkrp2_from(&z, &self.c, nj) * pinv_psd(&ctc.component_mul(&ata));
        let btb = self.b.tr_mul(&self.b);

        let m3 = mttkrp3_from(&z, &self.b, nk);
        self.c = &m3 * pinv_psd(&btb.component_mul(&ata));
        let inner = self.c.component_mul(&m3).sum();
        let model_sq = ata.component_mul(&btb).component_mul(&self.c.tr_mul(&self.c)).sum();

        // Unit-norm a_r and b_r; scale goes into c_r.
        for r in 0..self.a.ncols() {
            let na = self.a.column(r).norm();
            let nb = self.b.column(r).norm();
            if na > 0.0 && nb > 0.0 {
                self.a.column_mut(r).unscale_mut(na);
                self.b.column_mut(r).unscale_mut(nb);
                self.c.column_mut(r).scale_mut(na * nb);
            }
        }
        settle_ssr(self, x, norm_sq, norm_sq - 2.0 * inner + model_sq)
    }

    fn ssr(&self, x: &Tensor3) -> f64 {
        cp_ssr(x, &self.a, &self.b, &self.c)
    }

    fn into_model(self) -> Model {
        Model::Parafac(ParafacModel {
            a: self.a,
            b: self.b,
            c: self.c,
        })
    }
}

pub(super) fn fit(x: &Tensor3, r: usize, cfg: &AlsConfig) -> Result<(Model, FitReport)> {
    let [ni, nj, nk] = x.dims();
    run_restarts(x, ModelKind::Parafac, Ranks::parafac(r), cfg, |restart| {
        let mut rng = restart_rng(cfg.seed, restart);
        if use_svd_init(cfg, ModelKind::Parafac, restart) {
            Ok(CpState {
                a: svd_start(&gram1(x), r, &mut rng)?,
                b: svd_start(&gram2(x), r, &mut rng)?,
                c: svd_start(&gram3(x), r, &mut rng)?,
            })
        } else {
            Ok(CpState {
                a: gaussian(&mut rng, ni, r),
                b: gaussian(&mut rng, nj, r),
                c: gaussian(&mut rng, nk, r),
            })
        }
    })
}
