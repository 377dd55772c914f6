//! Randomized invariants across modules.

use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdt_core::decomp::{
    count_free_params, embed_parafac_as_sdt, fit, fit_parafac, refine_sdt, AlsConfig, Model, ModelKind, ParafacModel, Ranks,
};
use sdt_core::hcm::{link_matrix, nearest_correlation, normalize_to_correlation, CorrelationMatrix};
use sdt_core::ingest::{build_cov_tensor, ReturnsPanel, Stamp, WindowSpec};
use sdt_core::linalg::{khatri_rao, lstsq, pinv, sym_eig};
use sdt_core::selection::{aic, aicc, bic, concordia};
use sdt_core::simulation::vine_beta_corr;
use sdt_core::spectrum::{compare_spectra, kruskal_wallis, ks_two_sample};
use sdt_core::tensor::{Matrix, Mode, Tensor3};

fn rand_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn rand_tensor(rng: &mut ChaCha8Rng, dims: [usize; 3]) -> Tensor3 {
    Tensor3::from_fn(dims, |_, _, _| rng.random_range(-1.0..1.0)).unwrap()
}

fn dims_strategy() -> impl Strategy<Value = [usize; 3]> {
    (1usize..6, 1usize..6, 1usize..6).prop_map(|(a, b, c)| [a, b, c])
}

fn rel(a: &Tensor3, b: &Tensor3) -> f64 {
    a.dist_sq(b).sqrt() / b.frob_norm().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn fold_unfold_roundtrip(dims in dims_strategy(), seed in any::<u64>()) {
        let t = rand_tensor(&mut ChaCha8Rng::seed_from_u64(seed), dims);
        for mode in Mode::ALL {
            let u = t.unfold(mode);
            prop_assert_eq!(Tensor3::fold(&u, mode, dims).unwrap(), t.clone());
            let n2: f64 = u.iter().map(|v| v * v).sum();
            prop_assert!((n2 - t.norm_sq()).abs() <= 1e-12 * t.norm_sq().max(1.0));
        }
    }

    #[test]
    fn general_unfolding_is_a_permutation(dims in dims_strategy(), seed in any::<u64>()) {
        let t = rand_tensor(&mut ChaCha8Rng::seed_from_u64(seed), dims);
        let m = t.unfold_general(&[Mode::Three, Mode::One], &[Mode::Two]).unwrap();
        prop_assert_eq!(m.shape(), (dims[2] * dims[0], dims[1]));
        let mut a: Vec<f64> = m.iter().copied().collect();
        let mut b: Vec<f64> = t.as_slice().to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(a, b);
        // row index: first listed mode varies fastest
        for i in 0..dims[0] { for j in 0..dims[1] { for k in 0..dims[2] {
            prop_assert_eq!(m[(k + dims[2] * i, j)], t.get(i, j, k));
        }}}
    }

    #[test]
    fn slices_and_fibers_match_indexing(dims in dims_strategy(), seed in any::<u64>()) {
        let t = rand_tensor(&mut ChaCha8Rng::seed_from_u64(seed), dims);
        let [ni, nj, nk] = dims;
        for k in 0..nk {
            let s = t.slice(Mode::Three, k + 1).unwrap();
            for i in 0..ni { for j in 0..nj { prop_assert_eq!(s[(i, j)], t.get(i, j, k)); } }
        }
        for i in 0..ni { for j in 0..nj {
            let f = t.fiber(Mode::Three, (i + 1, j + 1)).unwrap();
            for k in 0..nk { prop_assert_eq!(f[k], t.get(i, j, k)); }
        }}
    }

    #[test]
    fn nmode_products_commute_across_modes(dims in dims_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = rand_tensor(&mut rng, dims);
        let u = rand_matrix(&mut rng, 3, dims[0]);
        let v = rand_matrix(&mut rng, 2, dims[2]);
        let a = t.nmode_product(&u, Mode::One).unwrap().nmode_product(&v, Mode::Three).unwrap();
        let b = t.nmode_product(&v, Mode::Three).unwrap().nmode_product(&u, Mode::One).unwrap();
        prop_assert!(rel(&a, &b) <= 1e-12 || a.frob_norm() < 1e-12);
        // same mode composes as a matrix product
        let w = rand_matrix(&mut rng, 4, 3);
        let c = t.nmode_product(&u, Mode::One).unwrap().nmode_product(&w, Mode::One).unwrap();
        let d = t.nmode_product(&(&w * &u), Mode::One).unwrap();
        prop_assert!(rel(&c, &d) <= 1e-12 || d.frob_norm() < 1e-12);
    }

    #[test]
    fn khatri_rao_columns_are_kronecker(r in 1usize..4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_matrix(&mut rng, 3, r);
        let b = rand_matrix(&mut rng, 4, r);
        let kr = khatri_rao(&a, &b).unwrap();
        for c in 0..r {
            let kron = a.column(c).kronecker(&b.column(c));
            prop_assert!((kr.column(c) - kron).amax() < 1e-15);
        }
    }

    #[test]
    fn information_criteria_match_formulas(ssr in 1e-3f64..1e6, u in 10usize..10_000, w in 1usize..9) {
        let uf = u as f64;
        let wf = w as f64;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1.0);
        prop_assert!(close(bic(ssr, u, w), uf * (ssr / uf).ln() + wf * uf.ln()));
        prop_assert!(close(aic(ssr, u, w), uf * (ssr / uf).ln() + 2.0 * wf));
        prop_assert!(close(aicc(ssr, u, w).unwrap(), uf * (ssr / uf).ln() + 2.0 * wf + 2.0 * wf * (wf + 1.0) / (uf - wf - 1.0)));
    }

    #[test]
    fn free_params_match_rederivation(i in 1usize..80, j in 1usize..80, k in 1usize..200, p in 1usize..9, r in 1usize..5) {
        // loadings for every mode plus the core (full, slice-diagonal or none)
        let loadings = p * i + p * j + r * k;
        prop_assert_eq!(count_free_params(ModelKind::Sdt, [i, j, k], Ranks::sdt(p, r)), loadings + p * r);
        prop_assert_eq!(count_free_params(ModelKind::Tucker, [i, j, k], Ranks::tucker(p, p, r)), loadings + p * p * r);
        prop_assert_eq!(count_free_params(ModelKind::Parafac, [i, j, k], Ranks::parafac(p)), p * (i + j + k));
    }

    #[test]
    fn correlation_projection_invariants(n in 2usize..9, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = rand_matrix(&mut rng, n, n);
        let mut w = (&g + g.transpose()) * 0.7;
        for i in 0..n { w[(i, i)] = 1.0; }
        let c = nearest_correlation(&w, 1e-7, 2000).unwrap();
        let m = c.as_matrix();
        let eig = sym_eig(m).unwrap();
        prop_assert!(eig.values[0] >= -1e-8);
        for i in 0..n {
            prop_assert_eq!(m[(i, i)], 1.0);
            for j in 0..n {
                prop_assert_eq!(m[(i, j)], m[(j, i)]);
                prop_assert!(m[(i, j)].abs() <= 1.0);
            }
        }
        prop_assert!((eig.values.sum() - n as f64).abs() < 1e-9);
        // idempotent on its own output
        let again = nearest_correlation(m, 1e-7, 200).unwrap();
        prop_assert!((again.as_matrix() - m).norm() <= 1e-7);
    }

    #[test]
    fn normalization_is_scale_invariant(n in 1usize..8, alpha in 1e-3f64..1e3, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_matrix(&mut rng, n, n + 2);
        let gamma = &a * a.transpose() + Matrix::identity(n, n) * 0.1;
        let x = normalize_to_correlation(&gamma).unwrap();
        let y = normalize_to_correlation(&(gamma * alpha)).unwrap();
        prop_assert!((x - y).amax() < 1e-12);
    }

    #[test]
    fn rank_tests_ignore_monotone_transforms(n in 2usize..30, m in 2usize..30, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
        let y: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..3.5)).collect();
        let f = |v: &[f64]| v.iter().map(|t| (2.0 * t).exp() + t).collect::<Vec<_>>();
        let (kw1, kw2) = (kruskal_wallis(&x, &y).unwrap(), kruskal_wallis(&f(&x), &f(&y)).unwrap());
        let (ks1, ks2) = (ks_two_sample(&x, &y).unwrap(), ks_two_sample(&f(&x), &f(&y)).unwrap());
        prop_assert!((kw1.statistic - kw2.statistic).abs() < 1e-9);
        prop_assert_eq!(ks1.statistic, ks2.statistic);
        prop_assert_eq!(ks1.p_value, ks2.p_value);
        let kw3 = kruskal_wallis(&y, &x).unwrap();
        prop_assert!((kw1.p_value - kw3.p_value).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn pinv_penrose_and_lstsq(r in 1usize..8, c in 1usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_matrix(&mut rng, r, c);
        let p = pinv(&a);
        let tol = 1e-10;
        prop_assert!((&a * &p * &a - &a).amax() < tol);
        prop_assert!((&p * &a * &p - &p).amax() < tol);
        prop_assert!(((&a * &p).transpose() - &a * &p).amax() < tol);
        prop_assert!(((&p * &a).transpose() - &p * &a).amax() < tol);
        if r >= c {
            let b = rand_matrix(&mut rng, r, 2);
            let x = lstsq(&a, &b).unwrap();
            prop_assert!((x - &p * &b).amax() < 1e-8);
        }
    }

    #[test]
    fn sym_eig_reconstructs(n in 1usize..40, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = rand_matrix(&mut rng, n, n);
        let m = &g + g.transpose();
        let e = sym_eig(&m).unwrap();
        let rec = &e.vectors * Matrix::from_diagonal(&e.values) * e.vectors.transpose();
        prop_assert!((rec - &m).norm() <= 1e-8 * m.norm().max(1e-300));
        prop_assert!(e.values.as_slice().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn concordia_ignores_permutation_and_signs(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, c) = (rand_matrix(&mut rng, 5, 3), rand_matrix(&mut rng, 4, 3), rand_matrix(&mut rng, 6, 3));
        let t = ParafacModel::new(a.clone(), b.clone(), c.clone()).unwrap().reconstruct();
        let noisy = Tensor3::from_fn(t.dims(), |i, j, k| t.get(i, j, k) + 0.05 * rng.random_range(-1.0..1.0)).unwrap();
        let base = concordia(&noisy, &ParafacModel::new(a.clone(), b.clone(), c.clone()).unwrap()).unwrap().value;
        let perm = [2usize, 0, 1];
        let flip = |m: &Matrix, s: [f64; 3]| Matrix::from_fn(m.nrows(), 3, |i, j| s[j] * m[(i, perm[j])]);
        let sa = [1.0, -1.0, 1.0];
        let sb = [-1.0, 1.0, 1.0];
        let sc = [-1.0, -1.0, 1.0];
        let m2 = ParafacModel::new(flip(&a, sa), flip(&b, sb), flip(&c, sc)).unwrap();
        let other = concordia(&noisy, &m2).unwrap().value;
        prop_assert!((base - other).abs() < 1e-8, "{base} vs {other}");
    }

    #[test]
    fn parafac_link_ignores_paired_sign_flips(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_matrix(&mut rng, 5, 2);
        let c = rand_matrix(&mut rng, 4, 2).map(|v| v.abs() + 0.1);
        let m1 = Model::Parafac(ParafacModel::new(a.clone(), a.clone(), c.clone()).unwrap());
        let mut af = a.clone();
        af.column_mut(1).neg_mut();
        let m2 = Model::Parafac(ParafacModel::new(af.clone(), af, c).unwrap());
        let (g1, g2) = (link_matrix(&m1, false).unwrap(), link_matrix(&m2, false).unwrap());
        prop_assert!((g1.values - g2.values).amax() < 1e-12);
    }

    #[test]
    fn cov_tensor_equivariant_under_ticker_permutation(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (rows, m) = (30, 4);
        let vals = rand_matrix(&mut rng, rows, m);
        let stamps: Vec<Stamp> = (0..rows).map(|d| Stamp::parse(&format!("2020-01-{:02}", d + 1)).unwrap()).collect();
        let tickers: Vec<String> = (0..m).map(|i| format!("T{i}")).collect();
        let perm = [2usize, 0, 3, 1];
        let pvals = Matrix::from_fn(rows, m, |r, c| vals[(r, perm[c])]);
        let ptick: Vec<String> = perm.iter().map(|&i| tickers[i].clone()).collect();
        let t1 = build_cov_tensor(&ReturnsPanel::new(tickers, stamps.clone(), vals).unwrap(), WindowSpec::rows(10)).unwrap();
        let t2 = build_cov_tensor(&ReturnsPanel::new(ptick, stamps, pvals).unwrap(), WindowSpec::rows(10)).unwrap();
        prop_assert_eq!(t1.dims(), [4, 4, 3]);
        for k in 0..3 {
            let s = t1.frontal(k);
            prop_assert_eq!(s.transpose(), s.clone_owned());
            prop_assert!(sym_eig(&s.clone_owned()).unwrap().values[0] >= -1e-10);
            for i in 0..m { for j in 0..m {
                prop_assert!((t2.get(i, j, k) - t1.get(perm[i], perm[j], k)).abs() < 1e-14);
            }}
        }
    }
}

#[test]
fn vine_draws_are_valid_correlations() {
    for seed in 0..1000u64 {
        let n = 1 + (seed as usize % 30);
        let c = vine_beta_corr(n, if seed % 2 == 0 { 0.2 } else { 1.0 }, seed).unwrap();
        let m = c.as_matrix();
        for i in 0..n {
            assert_eq!(m[(i, i)], 1.0);
            for j in 0..n {
                assert_eq!(m[(i, j)], m[(j, i)]);
            }
        }
        assert!(sym_eig(m).unwrap().values[0] >= -1e-10, "seed {seed}");
    }
}

#[test]
fn als_error_is_monotone_for_every_kind() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..20u64 {
        let t = rand_tensor(&mut rng, [6, 5, 4]);
        let cfg = AlsConfig {
            max_iter: 60,
            restarts: 1,
            seed: trial,
            ..AlsConfig::default()
        };
        for (kind, ranks) in [
            (ModelKind::Parafac, Ranks::parafac(3)),
            (ModelKind::Tucker, Ranks::tucker(3, 2, 2)),
            (ModelKind::Sdt, Ranks::sdt(3, 2)),
        ] {
            let (_, rep) = fit(&t, kind, ranks, &cfg).unwrap();
            for w in rep.trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-10, "{kind} trial {trial}: {} -> {}", w[0], w[1]);
            }
        }
    }
}

#[test]
fn fits_are_bit_deterministic() {
    let t = rand_tensor(&mut ChaCha8Rng::seed_from_u64(5), [5, 5, 6]);
    let cfg = AlsConfig {
        seed: 77,
        restarts: 3,
        ..AlsConfig::default()
    };
    for kind in [ModelKind::Parafac, ModelKind::Tucker, ModelKind::Sdt] {
        let ranks = match kind {
            ModelKind::Parafac => Ranks::parafac(2),
            _ => Ranks::tucker(2, 2, 2),
        };
        let (m1, r1) = fit(&t, kind, ranks, &cfg).unwrap();
        let (m2, r2) = fit(&t, kind, ranks, &cfg).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(m1.reconstruct(), m2.reconstruct());
    }
}

#[test]
fn embedding_reproduces_parafac_and_refining_never_hurts() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..10u64 {
        let (a, b, c) = (rand_matrix(&mut rng, 5, 3), rand_matrix(&mut rng, 4, 3), rand_matrix(&mut rng, 6, 3));
        let p = ParafacModel::new(a, b, c).unwrap();
        let s = embed_parafac_as_sdt(&p);
        let (x, y) = (p.reconstruct(), s.reconstruct());
        assert!(x.max_abs_diff(&y) <= 1e-12 * x.frob_norm().max(1.0));

        let t = rand_tensor(&mut rng, [5, 4, 6]);
        let cfg = AlsConfig { seed: trial, ..AlsConfig::default() };
        let (pm, prep) = fit_parafac(&t, 2, &cfg).unwrap();
        let (_, srep) = refine_sdt(&t, embed_parafac_as_sdt(&pm), &cfg).unwrap();
        assert!(srep.ssr <= prep.ssr * (1.0 + 1e-10), "{} > {}", srep.ssr, prep.ssr);
    }
}

#[test]
fn spectrum_comparison_is_symmetric() {
    let a = vine_beta_corr(12, 0.5, 1).unwrap();
    let b = vine_beta_corr(12, 0.5, 2).unwrap();
    let ab = compare_spectra(&a, &b, false).unwrap();
    let ba = compare_spectra(&b, &a, false).unwrap();
    assert_eq!(ab.kw.p_value, ba.kw.p_value);
    assert_eq!(ab.ks.p_value, ba.ks.p_value);
    let id = CorrelationMatrix::identity(4);
    let r = compare_spectra(&id, &id, false).unwrap();
    assert_eq!((r.kw.p_value, r.ks.p_value), (1.0, 1.0));
    let _ = DVector::<f64>::zeros(0);
}
