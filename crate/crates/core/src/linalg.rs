//! Dense matrix kernels: symmetric eigendecomposition, SVD, least squares,
//! pseudoinverse and the Khatri-Rao product.
//!
//! Factorizations are delegated to nalgebra; this module fixes ordering and
//! cutoff conventions on top of it.

use nalgebra::{DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Relative singular value cutoff for pseudoinverses.
pub const PINV_RCOND: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct EigResult {
    /// Ascending.
    pub values: DVector<f64>,
    /// Orthonormal eigenvectors, column `i` pairs with `values[i]`.
    pub vectors: Matrix,
}

#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    /// Nonnegative, descending.
    pub s: DVector<f64>,
    pub v: Matrix,
}

impl SvdResult {
    /// Rank-`r` truncation `U_r diag(s_r) V_r^T`.
    pub fn truncated(&self, r: usize) -> Matrix {
        let r = r.min(self.s.len());
        let mut us = self.u.columns(0, r).into_owned();
        for (c, s) in self.s.iter().take(r).enumerate() {
            us.column_mut(c).scale_mut(*s);
        }
        us * self.v.columns(0, r).transpose()
    }
}

/// Full spectrum of a symmetric matrix, eigenvalues ascending.
///
/// The input is symmetrized as `(M + M^T)/2` before decomposition.
pub fn sym_eig(m: &Matrix) -> Result<EigResult> {
    if !m.is_square() {
        return Err(Error::arg(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(EigResult {
            values: DVector::zeros(0),
            vectors: Matrix::zeros(0, 0),
        });
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigResult { values, vectors })
}

/// Eigenvalues only, ascending.
pub fn sym_eigvals(m: &Matrix) -> Result<DVector<f64>> {
    if !m.is_square() {
        return Err(Error::arg("eigenvalues need a square matrix"));
    }
    let sym = (m + m.transpose()) * 0.5;
    let mut v: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    Ok(DVector::from_vec(v))
}

/// Thin SVD with singular values sorted descending.
pub fn svd(m: &Matrix) -> SvdResult {
    let (nr, nc) = m.shape();
    let k = nr.min(nc);
    if k == 0 {
        return SvdResult {
            u: Matrix::zeros(nr, 0),
            s: DVector::zeros(0),
            v: Matrix::zeros(nc, 0),
        };
    }
    let dec = m.clone().svd(true, true);
    let u = dec.u.expect("left singular vectors requested");
    let vt = dec.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| dec.singular_values[b].total_cmp(&dec.singular_values[a]));
    let mut uo = Matrix::zeros(nr, k);
    let mut vo = Matrix::zeros(nc, k);
    for (dst, &src) in order.iter().enumerate() {
        uo.set_column(dst, &u.column(src));
        vo.set_column(dst, &vt.row(src).transpose());
    }
    let s = DVector::from_iterator(k, order.iter().map(|&i| dec.singular_values[i]));
    SvdResult { u: uo, s, v: vo }
}

/// Moore-Penrose pseudoinverse, discarding singular values below
/// `1e-12 * s_max`.
pub fn pinv(m: &Matrix) -> Matrix {
    let (nr, nc) = m.shape();
    let dec = svd(m);
    let smax = dec.s.iter().copied().fold(0.0, f64::max);
    let cut = PINV_RCOND * smax;
    let mut out = Matrix::zeros(nc, nr);
    if smax == 0.0 {
        return out;
    }
    for (c, &s) in dec.s.iter().enumerate() {
        if s > cut {
            out += (dec.v.column(c) / s) * dec.u.column(c).transpose();
        }
    }
    out
}

/// Pseudoinverse of a symmetric positive semidefinite matrix through its
/// eigendecomposition, with the same relative cutoff as [`pinv`].
pub(crate) fn pinv_psd(m: &Matrix) -> Matrix {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lmax = eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut out = Matrix::zeros(n, n);
    if lmax == 0.0 {
        return out;
    }
    let cut = PINV_RCOND * lmax;
    for (c, &l) in eig.eigenvalues.iter().enumerate() {
        if l > cut {
            let v = eig.eigenvectors.column(c);
            out += (v / l) * v.transpose();
        }
    }
    out
}

/// Minimum-norm least-squares solution of `a X = b`.
pub fn lstsq(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.nrows() != b.nrows() {
        return Err(Error::arg(format!(
            "least squares needs matching row counts, got {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(pinv(a) * b)
}

/// Columnwise Kronecker product. Row `ia * rows(b) + ib` of column `r`
/// holds `a[ia, r] * b[ib, r]`.
pub fn khatri_rao(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.ncols() != b.ncols() {
        return Err(Error::arg(format!(
            "Khatri-Rao product needs equal column counts, got {} and {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let (na, nb) = (a.nrows(), b.nrows());
    Ok(Matrix::from_fn(na * nb, a.ncols(), |row, r| {
        a[(row / nb, r)] * b[(row % nb, r)]
    }))
}

/// Leading `r` left singular vectors of `m`, through the eigenvectors of
/// `m m^T`.
pub(crate) fn leading_left_vectors(gram: &Matrix, r: usize) -> Result<Matrix> {
    let eig = sym_eig(gram)?;
    let n = gram.nrows();
    let r = r.min(n);
    let mut out = Matrix::zeros(n, r);
    for c in 0..r {
        out.set_column(c, &eig.vectors.column(n - 1 - c));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn eigenvalues_of_non_psd_counterexample() {
        let o = Matrix::from_row_slice(3, 3, &[1.0, -0.6, 0.8, -0.6, 1.0, 0.8, 0.8, 0.8, 1.0]);
        let e = sym_eig(&o).unwrap();
        let rounded: Vec<f64> = e.values.iter().map(|v| (v * 100.0).round() / 100.0).collect();
        assert_eq!(rounded, vec![-0.47, 1.60, 1.87]);
    }

    #[test]
    fn eigen_trivial_cases() {
        let e = sym_eig(&Matrix::identity(3, 3)).unwrap();
        assert_eq!(e.values.as_slice(), &[1.0, 1.0, 1.0]);
        let e = sym_eig(&Matrix::from_diagonal(&DVector::from_vec(vec![5.0, 2.0]))).unwrap();
        assert_eq!(e.values.as_slice(), &[2.0, 5.0]);
        assert!(sym_eig(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn eigen_reconstruction_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 7, 40, 200] {
            let a = random(&mut rng, n, n);
            let m = &a + a.transpose();
            let e = sym_eig(&m).unwrap();
            let rec = &e.vectors * Matrix::from_diagonal(&e.values) * e.vectors.transpose();
            assert!((&m - rec).norm() <= 1e-8 * m.norm());
            let vtv = e.vectors.transpose() * &e.vectors;
            assert!((vtv - Matrix::identity(n, n)).norm() <= 1e-10 * (n as f64).sqrt().max(1.0));
            for w in e.values.as_slice().windows(2) {
                assert!(w[0] <= w[1]);
            }
        }
    }

    #[test]
    fn svd_cases() {
        let d = svd(&Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]));
        assert!((d.s[0] - 3.0).abs() < 1e-14 && (d.s[1] - 1.0).abs() < 1e-14);

        let a = DVector::from_vec(vec![1.0, 2.0, 2.0]);
        let b = DVector::from_vec(vec![3.0, 4.0]);
        let d = svd(&(&a * b.transpose()));
        assert!((d.s[0] - 15.0).abs() < 1e-12);
        assert!(d.s[1].abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random(&mut rng, 5, 3);
        let d = svd(&m);
        let rec = &d.u * Matrix::from_diagonal(&d.s) * d.v.transpose();
        assert!((&m - rec).norm() <= 1e-10);
        assert!((d.u.transpose() * &d.u - Matrix::identity(3, 3)).norm() < 1e-12);
        assert!((d.v.transpose() * &d.v - Matrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn lstsq_cases() {
        let b = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let x = lstsq(&Matrix::identity(2, 2), &b).unwrap();
        assert!((x - &b).norm() < 1e-14);

        let x = lstsq(
            &Matrix::from_row_slice(2, 1, &[1.0, 1.0]),
            &Matrix::from_row_slice(2, 1, &[1.0, 3.0]),
        )
        .unwrap();
        assert!((x[(0, 0)] - 2.0).abs() < 1e-14);

        assert!(lstsq(&Matrix::zeros(3, 2), &Matrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn lstsq_residual_orthogonal_and_matches_pinv() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = random(&mut rng, 12, 4);
            let b = random(&mut rng, 12, 2);
            let x = lstsq(&a, &b).unwrap();
            let resid = &b - &a * &x;
            assert!((a.transpose() * resid).norm() < 1e-9);
            let normal = (a.transpose() * &a).try_inverse().unwrap() * a.transpose() * &b;
            assert!((x - normal).norm() < 1e-8);
        }
    }

    #[test]
    fn pinv_cases_and_penrose_conditions() {
        assert!((pinv(&Matrix::identity(3, 3)) - Matrix::identity(3, 3)).norm() < 1e-14);
        let p = pinv(&Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]));
        assert_eq!(p, Matrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]));

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for (r, c) in [(4, 6), (7, 3), (5, 5)] {
            // rank-deficient half the time
            let mut m = random(&mut rng, r, c);
            if r == 5 {
                let col = m.column(0).into_owned();
                m.set_column(1, &(col * 2.0));
            }
            let p = pinv(&m);
            assert!((&m * &p * &m - &m).norm() < 1e-9);
            assert!((&p * &m * &p - &p).norm() < 1e-9);
            let mp = &m * &p;
            assert!((&mp - mp.transpose()).norm() < 1e-9);
            let pm = &p * &m;
            assert!((&pm - pm.transpose()).norm() < 1e-9);
        }
    }

    #[test]
    fn pinv_psd_agrees_with_svd_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random(&mut rng, 6, 4);
        let g = a.transpose() * &a;
        assert!((pinv_psd(&g) - pinv(&g)).norm() < 1e-8);
    }

    #[test]
    fn khatri_rao_cases() {
        let a = Matrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let k = khatri_rao(&a, &a).unwrap();
        assert_eq!(k.as_slice(), &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(k, a.kronecker(&a));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(&mut rng, 3, 2);
        let b = random(&mut rng, 4, 2);
        let k = khatri_rao(&a, &b).unwrap();
        for r in 0..2 {
            for i in 0..3 {
                for j in 0..4 {
                    assert_eq!(k[(i * 4 + j, r)], a[(i, r)] * b[(j, r)]);
                }
            }
        }
        assert!(khatri_rao(&a, &Matrix::zeros(4, 3)).is_err());
    }
}
