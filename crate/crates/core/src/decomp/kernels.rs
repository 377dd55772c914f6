//! Products between a tensor's raw buffer and factor matrices.
//!
//! The buffer is read as the column-major `I x (J*K)` matrix `X_(1)`, so the
//! heavy products go straight to a blocked GEMM without reshaping copies.

use crate::linalg::khatri_rao;
use crate::tensor::{Matrix, Tensor3};

/// `C = op(A) * op(B)` over raw column-major buffers; `ta`/`tb` request a
/// transpose of the corresponding operand.
fn gemm(a: &[f64], ar: usize, ac: usize, ta: bool, b: &[f64], br: usize, bc: usize, tb: bool) -> Matrix {
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if tb { (bc, br) } else { (br, bc) };
    assert_eq!(k, k2, "gemm inner dimension mismatch");
    let mut out = Matrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return out;
    }
    let (rsa, csa) = if ta { (ar as isize, 1) } else { (1, ar as isize) };
    let (rsb, csb) = if tb { (br as isize, 1) } else { (1, br as isize) };
    // SAFETY: the buffers hold ar*ac, br*bc and m*n elements and the strides
    // describe column-major storage of exactly those shapes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            out.as_mut_slice().as_mut_ptr(),
            1,
            m as isize,
        );
    }
    out
}

/// `X_(1) (W ⊙ B)`: the mode-1 MTTKRP for a CP-structured model whose third
/// factor is `W`.
pub(crate) fn mttkrp1(x: &Tensor3, b: &Matrix, w: &Matrix) -> Matrix {
    let [ni, nj, nk] = x.dims();
    let kr = khatri_rao(w, b).expect("factor column counts agree");
    gemm(x.as_slice(), ni, nj * nk, false, kr.as_slice(), kr.nrows(), kr.ncols(), false)
}

/// `X_(1)^T A`, a `(J*K) x P` matrix whose row `j + J*k` is `X_{::k}^T A` at `j`.
pub(crate) fn x1t_times(x: &Tensor3, a: &Matrix) -> Matrix {
    let [ni, nj, nk] = x.dims();
    gemm(x.as_slice(), ni, nj * nk, true, a.as_slice(), a.nrows(), a.ncols(), false)
}

/// Mode-2 MTTKRP from `Z = X_(1)^T A`: `M[j,p] = sum_k Z[j+J*k, p] W[k, p]`.
pub(crate) fn mttkrp2_from(z: &Matrix, w: &Matrix, nj: usize) -> Matrix {
    let (nk, np) = w.shape();
    let mut m = Matrix::zeros(nj, np);
    for p in 0..np {
        let zc = z.column(p);
        let mut mc = m.column_mut(p);
        for k in 0..nk {
            let wk = w[(k, p)];
            if wk == 0.0 {
                continue;
            }
            for j in 0..nj {
                mc[j] += zc[j + nj * k] * wk;
            }
        }
    }
    m
}

/// Mode-3 MTTKRP from `Z = X_(1)^T A`: `M[k,p] = sum_j Z[j+J*k, p] B[j, p]`.
pub(crate) fn mttkrp3_from(z: &Matrix, b: &Matrix, nk: usize) -> Matrix {
    let (nj, np) = b.shape();
    let mut m = Matrix::zeros(nk, np);
    for p in 0..np {
        let zc = z.column(p);
        let bc = b.column(p);
        for k in 0..nk {
            let mut s = 0.0;
            for j in 0..nj {
                s += zc[j + nj * k] * bc[j];
            }
            m[(k, p)] = s;
        }
    }
    m
}

/// `sum_r a_r o b_r o w_r` as a tensor.
pub(crate) fn cp_reconstruct(a: &Matrix, b: &Matrix, w: &Matrix) -> Tensor3 {
    let kr = khatri_rao(w, b).expect("factor column counts agree");
    let x1 = gemm(a.as_slice(), a.nrows(), a.ncols(), false, kr.as_slice(), kr.nrows(), kr.ncols(), true);
    Tensor3::from_raw([a.nrows(), b.nrows(), w.nrows()], x1.as_slice().to_vec())
}

/// Squared distance between `x` and the CP model `(a, b, w)`.
pub(crate) fn cp_ssr(x: &Tensor3, a: &Matrix, b: &Matrix, w: &Matrix) -> f64 {
    x.dist_sq(&cp_reconstruct(a, b, w))
}

/// `sum_k X_{::k} X_{::k}^T` (the mode-1 Gram matrix).
pub(crate) fn gram1(x: &Tensor3) -> Matrix {
    let [ni, nj, nk] = x.dims();
    let d = x.as_slice();
    gemm(d, ni, nj * nk, false, d, ni, nj * nk, true)
}

/// `sum_k X_{::k}^T X_{::k}` (the mode-2 Gram matrix).
pub(crate) fn gram2(x: &Tensor3) -> Matrix {
    let [ni, nj, nk] = x.dims();
    let mut g = Matrix::zeros(nj, nj);
    for k in 0..nk {
        let s = &x.as_slice()[k * ni * nj..(k + 1) * ni * nj];
        g += gemm(s, ni, nj, true, s, ni, nj, false);
    }
    g
}

/// `X_(3) X_(3)^T`, entries `<X_{::k}, X_{::l}>`.
pub(crate) fn gram3(x: &Tensor3) -> Matrix {
    let [ni, nj, nk] = x.dims();
    let d = x.as_slice();
    gemm(d, ni * nj, nk, true, d, ni * nj, nk, false)
}

/// `X x_3 C^T` for a `K x R` matrix `C`, i.e. the raw buffer viewed as
/// `(I*J) x K` times `C`.
pub(crate) fn times3(x: &Tensor3, c: &Matrix) -> Tensor3 {
    let [ni, nj, nk] = x.dims();
    let out = gemm(x.as_slice(), ni * nj, nk, false, c.as_slice(), c.nrows(), c.ncols(), false);
    Tensor3::from_raw([ni, nj, c.ncols()], out.as_slice().to_vec())
}
