//! Subcommand bodies. Each one reads its inputs, runs the pipeline and
//! writes its outputs atomically into the requested location.

use std::fs;
use std::io::{BufReader, Write};
use std::path::Path;

use serde::Serialize;

use crate::cli::config::RunConfig;
use crate::decomp::{save_model, Model, ModelKind};
use crate::error::{Error, Result};
use crate::fsutil::{self, write_atomic_with};
use crate::hcm::{build_hcm, link_matrix, normalize_to_correlation, remove_market_mode, HcmOutput, MarketMode, RankPolicy};
use crate::ingest::{build_cov_tensor, read_panel_csv, PanelValues, WindowSpec};
use crate::selection::scan_and_fit;
use crate::simulation::{simulate, split_tensor, SimConfig};
use crate::spectrum::compare_spectra;
use crate::tensor::{write_matrix_csv, Matrix, Tensor3};

pub fn read_tensor(path: &Path) -> Result<Tensor3> {
    let f = fsutil::open(path)?;
    Tensor3::read_text(BufReader::new(f))
}

fn write_tensor(path: &Path, t: &Tensor3) -> Result<()> {
    write_atomic_with(path, |buf| t.write_text(buf))
}

fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    write_atomic_with(path, |buf| write_matrix_csv(m, buf))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic_with(path, |buf| {
        serde_json::to_writer_pretty(&mut *buf, value)?;
        buf.push(b'\n');
        Ok(())
    })
}

fn write_series(path: &Path, header: &str, rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    write_atomic_with(path, |buf| {
        writeln!(buf, "{header}")?;
        for (t, row) in rows.enumerate() {
            write!(buf, "{}", t + 1)?;
            for v in row {
                write!(buf, ",{v:?}")?;
            }
            writeln!(buf)?;
        }
        Ok(())
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

pub fn cmd_cov_tensor(input: &Path, values: PanelValues, window: WindowSpec, out: &Path) -> Result<[usize; 3]> {
    let panel = read_panel_csv(fsutil::open(input)?, values)?;
    let t = build_cov_tensor(&panel, window)?;
    write_tensor(out, &t)?;
    Ok(t.dims())
}

/// Writes `tensor.txt`, `omega_true.csv`, `tau.csv` and the effective
/// config; with `emit_plots` also `sigma.csv` and `sigma_svd.csv`.
pub fn cmd_simulate(cfg: &SimConfig, out_dir: &Path, emit_plots: bool) -> Result<[usize; 3]> {
    let sim = simulate(cfg)?;
    ensure_dir(out_dir)?;
    write_tensor(&out_dir.join("tensor.txt"), &sim.tensor)?;
    write_matrix(&out_dir.join("omega_true.csv"), sim.omega_true.as_matrix())?;
    write_series(&out_dir.join("tau.csv"), "t,tau", sim.time_series.iter().map(|&v| vec![v]))?;
    write_json(&out_dir.join("config.json"), cfg)?;
    if emit_plots {
        write_matrix(&out_dir.join("sigma.csv"), &sim.sigma)?;
        write_matrix(&out_dir.join("sigma_svd.csv"), &sim.sigma_svd)?;
    }
    Ok(sim.tensor.dims())
}

fn run_hcm(t: &Tensor3, rc: &RunConfig) -> Result<HcmOutput> {
    let policy = RankPolicy::Scan {
        grid: rc.grid.clone(),
        options: rc.scan,
    };
    build_hcm(t, rc.kind, &policy, &rc.als, &rc.hcm)
}

/// Writes one HCM with its provenance, scan table and fitted model into
/// `dir`, file names suffixed by `tag`.
fn write_hcm(dir: &Path, tag: &str, out: &HcmOutput, rc: &RunConfig) -> Result<()> {
    write_matrix(&dir.join(format!("hcm{tag}.csv")), out.hcm.as_matrix())?;
    write_json(&dir.join(format!("provenance{tag}.json")), &out.provenance)?;
    if let Some(scan) = &out.scan {
        write_atomic_with(&dir.join(format!("scan{tag}.csv")), |buf| scan.write_csv(buf))?;
    }
    save_model(&dir.join(format!("model{tag}")), &out.model, Some(&out.report), Some(rc.als.seed))?;
    if rc.emit_plots {
        let m = match rc.hcm.market_mode {
            MarketMode::Keep => out.model.clone(),
            MarketMode::Remove => remove_market_mode(&out.model)?,
        };
        let omega = normalize_to_correlation(&link_matrix(&m, rc.hcm.collapse_time)?.values)?;
        write_matrix(&dir.join(format!("omega{tag}.csv")), &omega)?;
    }
    Ok(())
}

pub fn cmd_hcm(tensor: &Path, rc: &RunConfig, out_dir: &Path) -> Result<HcmOutput> {
    let t = read_tensor(tensor)?;
    let out = run_hcm(&t, rc)?;
    ensure_dir(out_dir)?;
    write_hcm(out_dir, "", &out, rc)?;
    Ok(out)
}

/// Splits along time at `at` (default: the middle), builds one HCM per half
/// and tests their spectra. Returns the Kruskal-Wallis and KS p-values.
pub fn cmd_split_compare(tensor: &Path, rc: &RunConfig, at: Option<usize>, drop_zero: bool, out_dir: &Path) -> Result<(f64, f64)> {
    let t = read_tensor(tensor)?;
    let at = at.unwrap_or(t.dims()[2] / 2);
    let (a, b) = split_tensor(&t, at)?;
    let ha = run_hcm(&a, rc)?;
    let hb = run_hcm(&b, rc)?;
    let cmp = compare_spectra(&ha.hcm, &hb.hcm, drop_zero)?;
    ensure_dir(out_dir)?;
    write_hcm(out_dir, "_1", &ha, rc)?;
    write_hcm(out_dir, "_2", &hb, rc)?;
    write_atomic_with(&out_dir.join("spectrum.csv"), |buf| cmp.write_csv(buf))?;
    write_atomic_with(&out_dir.join("eigenvalues.csv"), |buf| {
        writeln!(buf, "matrix,index,eigenvalue")?;
        for (tag, eigs) in [(1, &cmp.eigs_1), (2, &cmp.eigs_2)] {
            for (i, e) in eigs.iter().enumerate() {
                writeln!(buf, "{tag},{},{e:?}", i + 1)?;
            }
        }
        Ok(())
    })?;
    Ok((cmp.kw.p_value, cmp.ks.p_value))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Alignment {
    /// Pearson correlation after sign alignment (nonnegative).
    pub correlation: f64,
    /// +1 or -1, applied to the factor.
    pub sign: f64,
    /// Least-squares slope mapping the aligned factor onto the reference.
    pub scale: f64,
    pub n: usize,
}

/// Sign/scale alignment of `factor` against `reference`.
pub fn align_series(factor: &[f64], reference: &[f64]) -> Result<Alignment> {
    let n = factor.len();
    if n != reference.len() || n < 2 {
        return Err(Error::arg(format!(
            "reference series has {} values, the time factor {n}",
            reference.len()
        )));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (mf, mr) = (mean(factor), mean(reference));
    let (mut sfr, mut sff, mut srr) = (0.0, 0.0, 0.0);
    for (f, r) in factor.iter().zip(reference) {
        sfr += (f - mf) * (r - mr);
        sff += (f - mf).powi(2);
        srr += (r - mr).powi(2);
    }
    if sff == 0.0 || srr == 0.0 {
        return Err(Error::Domain("a constant series has no correlation".into()));
    }
    let rho = sfr / (sff * srr).sqrt();
    let sign = if rho < 0.0 { -1.0 } else { 1.0 };
    Ok(Alignment {
        correlation: rho.abs(),
        sign,
        scale: (sign * sfr) / sff,
        n,
    })
}

/// Reads a one-value-per-line series; a non-numeric first line is taken as
/// a header and, for multi-column rows, the last field is used.
pub fn read_series(path: &Path) -> Result<Vec<f64>> {
    let text = fsutil::read_to_string(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let field = line.rsplit(',').next().unwrap_or(line).trim();
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            _ if out.is_empty() && n == 0 => continue,
            _ => return Err(Error::parse(n + 1, format!("bad series value `{field}`"))),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicOutput {
    pub factor: Vec<f64>,
    pub alignment: Option<Alignment>,
}

/// The model's dynamic factor: the sum of time components for PARAFAC, the
/// first time component otherwise. Its sign is fixed so that it sums to a
/// nonnegative value (or, with a reference, correlates positively).
pub fn dynamic_factor(model: &Model) -> Vec<f64> {
    let c = model.time_factor();
    let raw: Vec<f64> = match model.kind() {
        ModelKind::Parafac => c.row_iter().map(|r| r.sum()).collect(),
        _ => c.column(0).iter().copied().collect(),
    };
    if raw.iter().sum::<f64>() < 0.0 {
        raw.iter().map(|v| -v).collect()
    } else {
        raw
    }
}

pub fn cmd_dynamic(tensor: &Path, rc: &RunConfig, reference: Option<&Path>, sqrt: bool, out_dir: &Path) -> Result<DynamicOutput> {
    let t = read_tensor(tensor)?;
    let reference = reference.map(read_series).transpose()?;
    let (scan, model, report) = scan_and_fit(&t, rc.kind, &rc.grid, &rc.als, &rc.scan)?;
    let mut factor = dynamic_factor(&model);
    if let Some(r) = &reference {
        if align_series(&factor, r)?.sign < 0.0 {
            factor.iter_mut().for_each(|v| *v = -*v);
        }
    }
    if sqrt {
        if let Some(t) = factor.iter().position(|&v| v < 0.0) {
            return Err(Error::Domain(format!("time factor is negative at t={}, no square root", t + 1)));
        }
        factor.iter_mut().for_each(|v| *v = v.sqrt());
    }
    let alignment = reference.as_deref().map(|r| align_series(&factor, r)).transpose()?;
    ensure_dir(out_dir)?;
    let c = model.time_factor();
    let header = std::iter::once("t,factor".to_owned())
        .chain((1..=c.ncols()).map(|r| format!("c{r}")))
        .collect::<Vec<_>>()
        .join(",");
    write_series(
        &out_dir.join("dynamic.csv"),
        &header,
        factor
            .iter()
            .zip(c.row_iter())
            .map(|(f, row)| std::iter::once(*f).chain(row.iter().copied()).collect()),
    )?;
    write_atomic_with(&out_dir.join("scan.csv"), |buf| scan.write_csv(buf))?;
    save_model(&out_dir.join("model"), &model, Some(&report), Some(rc.als.seed))?;
    if let Some(a) = &alignment {
        write_json(&out_dir.join("alignment.json"), a)?;
    }
    Ok(DynamicOutput { factor, alignment })
}

pub fn cmd_scan(tensor: &Path, rc: &RunConfig, out: &Path) -> Result<usize> {
    let t = read_tensor(tensor)?;
    let (scan, _, _) = scan_and_fit(&t, rc.kind, &rc.grid, &rc.als, &rc.scan)?;
    write_atomic_with(out, |buf| scan.write_csv(buf))?;
    Ok(scan.selected)
}
