//! ALS for the slice-diagonal model `X_{::k} ≈ A diag(w_k) B^T` with
//! `W = C Λ̃^T`.

use super::kernels::{cp_ssr, gram1, gram2, gram3, mttkrp1, mttkrp2_from, mttkrp3_from, x1t_times};
use super::{gaussian, restart_rng, run_restarts, settle_ssr, svd_start, use_svd_init};
use super::{AlsConfig, AlsState, FitReport, Model, ModelKind, Ranks, SdtModel};
use crate::error::Result;
use crate::linalg::pinv_psd;
use crate::tensor::{Matrix, Tensor3};

pub(crate) struct SdtState {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    lam: Matrix,
}

impl SdtState {
    pub(crate) fn from_model(m: SdtModel) -> Self {
        SdtState {
            a: m.a,
            b: m.b,
            c: m.c,
            lam: m.core_diag,
        }
    }

    /// Least-squares `Λ̃` for the current `A`, `B`, `C`.
    fn solve_lambda(&mut self, m3: &Matrix, h: &Matrix) {
        let ctc = self.c.tr_mul(&self.c);
        self.lam = pinv_psd(h) * m3.tr_mul(&self.c) * pinv_psd(&ctc);
    }
}

impl AlsState for SdtState {
    fn sweep(&mut self, x: &Tensor3, norm_sq: f64) -> f64 {
        let [_, nj, nk] = x.dims();
        let w = &self.c * self.lam.transpose();
        let wtw = w.tr_mul(&w);

        let btb = self.b.tr_mul(&self.b);
        self.a = mttkrp1(x, &self.b, &w) * pinv_psd(&wtw.component_mul(&btb));
        let ata = self.a.tr_mul(&self.a);

        let z = x1t_times(x, &self.a);
        self.b = mttkrp2_from(&z, &w, nj) * pinv_psd(&wtw.component_mul(&ata));
        let btb = self.b.tr_mul(&self.b);

        // X_(3) ≈ C Λ̃^T (B ⊙ A)^T, with (B ⊙ A)^T (B ⊙ A) = H.
        let m3 = mttkrp3_from(&z, &self.b, nk);
        let h = ata.component_mul(&btb);
        self.c = &m3 * &self.lam * pinv_psd(&(self.lam.transpose() * &h * &self.lam));
        self.solve_lambda(&m3, &h);
        let w = &self.c * self.lam.transpose();
        let inner = w.component_mul(&m3).sum();
        let model_sq = h.component_mul(&w.tr_mul(&w)).sum();

        for p in 0..self.a.ncols() {
            let na = self.a.column(p).norm();
            let nb = self.b.column(p).norm();
            if na > 0.0 && nb > 0.0 {
                self.a.column_mut(p).unscale_mut(na);
                self.b.column_mut(p).unscale_mut(nb);
                self.lam.row_mut(p).scale_mut(na * nb);
            }
        }
        for r in 0..self.c.ncols() {
            let nc = self.c.column(r).norm();
            if nc > 0.0 {
                self.c.column_mut(r).unscale_mut(nc);
                self.lam.column_mut(r).scale_mut(nc);
            }
        }
        settle_ssr(self, x, norm_sq, norm_sq - 2.0 * inner + model_sq)
    }

    fn ssr(&self, x: &Tensor3) -> f64 {
        cp_ssr(x, &self.a, &self.b, &(&self.c * self.lam.transpose()))
    }

    fn into_model(self) -> Model {
        Model::Sdt(SdtModel {
            a: self.a,
            b: self.b,
            c: self.c,
            core_diag: self.lam,
        })
    }
}

pub(super) fn fit(x: &Tensor3, p: usize, r: usize, cfg: &AlsConfig) -> Result<(Model, FitReport)> {
    let [ni, nj, nk] = x.dims();
    run_restarts(x, ModelKind::Sdt, Ranks::sdt(p, r), cfg, |restart| {
        let mut rng = restart_rng(cfg.seed, restart);
        if use_svd_init(cfg, ModelKind::Sdt, restart) {
            let a = svd_start(&gram1(x), p, &mut rng)?;
            let b = svd_start(&gram2(x), p, &mut rng)?;
            let c = svd_start(&gram3(x), r, &mut rng)?;
            let z = x1t_times(x, &a);
            let m3 = mttkrp3_from(&z, &b, nk);
            let h = a.tr_mul(&a).component_mul(&b.tr_mul(&b));
            let mut s = SdtState {
                a,
                b,
                c,
                lam: Matrix::zeros(p, r),
            };
            s.solve_lambda(&m3, &h);
            Ok(s)
        } else {
            Ok(SdtState {
                a: gaussian(&mut rng, ni, p),
                b: gaussian(&mut rng, nj, p),
                c: gaussian(&mut rng, nk, r),
                lam: gaussian(&mut rng, p, r),
            })
        }
    })
}
