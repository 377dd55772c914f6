//! End-to-end checks on small synthetic tensors.

use sdt_core::decomp::{fit, AlsConfig, ModelKind, Ranks};
use sdt_core::hcm::{build_hcm, hcm_from_model, link_matrix, normalize_to_correlation, HcmOptions, MarketMode, RankPolicy};
use sdt_core::ingest::{read_panel_csv, window_cov, PanelValues, ReturnsPanel, WindowSpec};
use sdt_core::linalg::sym_eig;
use sdt_core::selection::ScanOptions;
use sdt_core::simulation::{simulate, split_tensor, SimConfig};
use sdt_core::tensor::Matrix;

fn small(seed: u64, noise: f64) -> SimConfig {
    SimConfig {
        block_sizes: vec![4, 4, 4],
        svd_rank: 3,
        t: 24,
        noise_sigma: noise,
        seed,
        ..SimConfig::default()
    }
}

fn assert_correlation(m: &Matrix) {
    let n = m.nrows();
    for i in 0..n {
        assert_eq!(m[(i, i)], 1.0);
        for j in 0..n {
            assert_eq!(m[(i, j)], m[(j, i)]);
        }
    }
    assert!(sym_eig(m).unwrap().values[0] >= -1e-8);
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

#[test]
fn noise_free_sdt_recovers_planted_structure() {
    let sim = simulate(&small(3, 0.0)).unwrap();
    let (model, rep) = fit(&sim.tensor, ModelKind::Sdt, Ranks::sdt(3, 1), &AlsConfig::default()).unwrap();
    assert!(rep.rel_error < 1e-6, "rel error {}", rep.rel_error);

    let c: Vec<f64> = model.time_factor().column(0).iter().copied().collect();
    assert!(pearson(&c, &sim.time_series).abs() > 1.0 - 1e-8);

    // the link matrix is proportional to the planted low-rank covariance
    let g = link_matrix(&model, false).unwrap().values;
    let a = normalize_to_correlation(&g).unwrap();
    let b = normalize_to_correlation(&sim.sigma_svd).unwrap();
    assert!((a - b).amax() < 1e-6);
}

#[test]
fn hcm_is_a_correlation_matrix_for_every_kind_and_mode() {
    let sim = simulate(&small(5, 0.05)).unwrap();
    let cfg = AlsConfig::default();
    for (kind, ranks) in [
        (ModelKind::Parafac, Ranks::parafac(3)),
        (ModelKind::Tucker, Ranks::tucker(3, 3, 1)),
        (ModelKind::Sdt, Ranks::sdt(3, 1)),
    ] {
        for mode in [MarketMode::Keep, MarketMode::Remove] {
            let opts = HcmOptions {
                market_mode: mode,
                ..HcmOptions::default()
            };
            let out = build_hcm(&sim.tensor, kind, &RankPolicy::Fixed(ranks), &cfg, &opts).unwrap();
            assert_correlation(out.hcm.as_matrix());
            assert_eq!(out.provenance.kind, kind);
            assert_eq!(out.provenance.market_mode, mode);
            assert!(out.provenance.link_asymmetry.is_finite());
        }
    }
}

#[test]
fn scanned_hcm_reports_selection_and_is_deterministic() {
    let sim = simulate(&small(8, 0.05)).unwrap();
    let policy = RankPolicy::Scan {
        grid: (2..=5).collect(),
        options: ScanOptions::default(),
    };
    let cfg = AlsConfig { seed: 4, ..AlsConfig::default() };
    let a = build_hcm(&sim.tensor, ModelKind::Sdt, &policy, &cfg, &HcmOptions::default()).unwrap();
    let b = build_hcm(&sim.tensor, ModelKind::Sdt, &policy, &cfg, &HcmOptions::default()).unwrap();
    let scan = a.scan.as_ref().unwrap();
    assert_eq!(scan.ranks(), vec![2, 3, 4, 5]);
    assert_eq!(a.provenance.selected_rank, Some(scan.selected));
    assert_eq!(a.hcm, b.hcm);
    assert_eq!(a.provenance, b.provenance);
}

#[test]
fn split_halves_rebuild_the_tensor_and_give_valid_hcms() {
    let sim = simulate(&small(9, 0.05)).unwrap();
    let (h1, h2) = split_tensor(&sim.tensor, 10).unwrap();
    assert_eq!((h1.dims()[2], h2.dims()[2]), (10, 14));
    for k in 0..24 {
        let s = if k < 10 { h1.frontal(k) } else { h2.frontal(k - 10) };
        assert_eq!(s, sim.tensor.frontal(k));
    }
    let opts = HcmOptions {
        market_mode: MarketMode::Remove,
        ..HcmOptions::default()
    };
    for h in [&h1, &h2] {
        let (m, _) = fit(h, ModelKind::Sdt, Ranks::sdt(3, 1), &AlsConfig::default()).unwrap();
        assert_correlation(hcm_from_model(&m, &opts).unwrap().hcm.as_matrix());
    }
    assert!(split_tensor(&sim.tensor, 0).is_err());
    assert!(split_tensor(&sim.tensor, 24).is_err());
}

#[test]
fn windowed_covariance_matches_direct_sum() {
    let csv = "date,A,B,C\n\
               2021-03-01,0.01,0.02,-0.01\n\
               2021-03-02,-0.02,0.01,0.00\n\
               2021-03-03,0.03,-0.01,0.02\n\
               2021-03-04,0.00,0.00,0.01\n";
    let panel: ReturnsPanel = read_panel_csv(csv.as_bytes(), PanelValues::Returns).unwrap();
    let cov = window_cov(&panel, 0..4).unwrap();
    let x = panel.values();
    for i in 0..3 {
        for j in 0..3 {
            let (mi, mj) = (x.column(i).mean(), x.column(j).mean());
            let s: f64 = (0..4).map(|t| (x[(t, i)] - mi) * (x[(t, j)] - mj)).sum::<f64>() / 3.0;
            assert!((cov[(i, j)] - s).abs() < 1e-16);
        }
    }
    let t = sdt_core::ingest::build_cov_tensor(&panel, WindowSpec::rows(2)).unwrap();
    assert_eq!(t.dims(), [3, 3, 2]);
}

#[test]
fn malformed_panels_are_rejected_with_line_numbers() {
    let bad = "date,A,B\n2021-03-01,1,2\n2021-03-02,1,\n";
    let e = read_panel_csv(bad.as_bytes(), PanelValues::Returns).unwrap_err();
    assert!(e.to_string().contains("line 3"), "{e}");
    let unsorted = "date,A\n2021-03-02,1\n2021-03-01,2\n";
    assert!(read_panel_csv(unsorted.as_bytes(), PanelValues::Returns).is_err());
}
