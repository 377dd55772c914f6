//! Command-line front end for the `sdt` binary.
//!
//! Exit codes: 0 success, 2 usage error, 3 data or parse error, 4 numerical
//! failure.

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::ingest::{PanelValues, WindowSpec};
use crate::simulation::SimConfig;
use config::{FileConfig, Overrides, RunConfig};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "sdt", version, about = "Slice-diagonal tensor factorization and hidden correlation matrices")]
pub struct Cli {
    /// TOML file with default settings; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a covariance tensor from a price or return panel.
    CovTensor(CovTensorArgs),
    /// Generate a synthetic covariance tensor with planted structure.
    Simulate(SimulateArgs),
    /// Fit a model and build the hidden correlation matrix.
    Hcm(HcmArgs),
    /// Build one HCM per time half and compare their spectra.
    SplitCompare(SplitArgs),
    /// Extract the dynamic (time) factor, optionally aligned to a reference.
    Dynamic(DynamicArgs),
    /// Fit every rank in the grid and write the criterion table.
    Scan(ScanArgs),
}

#[derive(Debug, Args)]
pub struct CovTensorArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Cells are prices (log-returns are taken).
    #[arg(long, conflicts_with = "returns")]
    pub prices: bool,
    /// Cells are already returns.
    #[arg(long)]
    pub returns: bool,
    /// Observations per window.
    #[arg(long, conflicts_with = "monthly")]
    pub window: Option<usize>,
    /// Window step; defaults to the window length.
    #[arg(long, requires = "window")]
    pub step: Option<usize>,
    /// One window per calendar month.
    #[arg(long)]
    pub monthly: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Start from the small 40-asset configuration.
    #[arg(long)]
    pub reduced: bool,
    #[arg(long)]
    pub periods: Option<usize>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub svd_rank: Option<usize>,
    #[arg(long)]
    pub emit_plots: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Default)]
pub struct FitArgs {
    /// Input tensor in text format.
    #[arg(long)]
    pub tensor: PathBuf,
    /// parafac, tucker or sdt.
    #[arg(long)]
    pub model: Option<String>,
    /// Rank grid: a..b, a,b,c or a single rank.
    #[arg(long)]
    pub ranks: Option<String>,
    /// Time components for Tucker/SDT.
    #[arg(long)]
    pub time_rank: Option<usize>,
    /// bic, aic, aicc, concordia or diffit.
    #[arg(long)]
    pub criterion: Option<String>,
    /// keep or remove.
    #[arg(long)]
    pub market_mode: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// ALS tolerance on the change in relative error.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// auto, random or svd.
    #[arg(long)]
    pub init: Option<String>,
    /// Nearest-correlation tolerance.
    #[arg(long)]
    pub proj_tol: Option<f64>,
    #[arg(long)]
    pub proj_max_iter: Option<usize>,
    /// Also write intermediate matrices for plotting.
    #[arg(long)]
    pub emit_plots: bool,
}

impl FitArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            model: self.model.clone(),
            ranks: self.ranks.clone(),
            time_rank: self.time_rank,
            criterion: self.criterion.clone(),
            market_mode: self.market_mode.clone(),
            seed: self.seed,
            tol: self.tol,
            max_iter: self.max_iter,
            restarts: self.restarts,
            init: self.init.clone(),
            proj_tol: self.proj_tol,
            proj_max_iter: self.proj_max_iter,
            emit_plots: self.emit_plots,
        }
    }
}

#[derive(Debug, Args)]
pub struct HcmArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    /// Number of periods in the first half; defaults to K/2.
    #[arg(long)]
    pub split_at: Option<usize>,
    /// Test only the nonzero eigenvalues.
    #[arg(long)]
    pub drop_zero: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DynamicArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    /// Reference series (one value per period) to align against.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Take the square root of the factor (volatility scale).
    #[arg(long)]
    pub sqrt: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long)]
    pub out: PathBuf,
}

/// Maps an error to its process exit code.
pub fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        return EXIT_NUMERICAL;
    }
    match e.root() {
        Error::Argument(_) | Error::Bounds { .. } => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    path.map(FileConfig::load).transpose().map(Option::unwrap_or_default)
}

fn sim_config(file: &FileConfig, a: &SimulateArgs) -> SimConfig {
    let mut cfg = if a.reduced { SimConfig::reduced() } else { file.simulation.clone().unwrap_or_default() };
    if let Some(v) = a.seed.or(file.seed) {
        cfg.seed = v;
    }
    if let Some(v) = a.periods {
        cfg.t = v;
    }
    if let Some(v) = a.noise_sigma {
        cfg.noise_sigma = v;
    }
    if let Some(v) = a.svd_rank {
        cfg.svd_rank = v;
    }
    cfg
}

fn run_command(cli: &Cli) -> Result<()> {
    let file = load_config(cli.config.as_deref())?;
    let resolve = |f: &FitArgs| RunConfig::resolve(&file, &f.overrides());
    match &cli.command {
        Command::CovTensor(a) => {
            if !a.prices && !a.returns {
                return Err(Error::Argument("one of --prices or --returns is required".into()));
            }
            let values = if a.prices { PanelValues::Prices } else { PanelValues::Returns };
            let window = match (a.window, a.monthly) {
                (Some(len), false) => WindowSpec::Rows {
                    len,
                    step: a.step.unwrap_or(len),
                },
                (None, true) => WindowSpec::CalendarMonth,
                _ => return Err(Error::Argument("give either --window N or --monthly".into())),
            };
            let dims = commands::cmd_cov_tensor(&a.input, values, window, &a.out)?;
            println!("tensor {}x{}x{} -> {}", dims[0], dims[1], dims[2], a.out.display());
        }
        Command::Simulate(a) => {
            let cfg = sim_config(&file, a);
            let dims = commands::cmd_simulate(&cfg, &a.out_dir, a.emit_plots || file.emit_plots.unwrap_or(false))?;
            println!("tensor {}x{}x{} -> {}", dims[0], dims[1], dims[2], a.out_dir.display());
        }
        Command::Hcm(a) => {
            let rc = resolve(&a.fit)?;
            let out = commands::cmd_hcm(&a.fit.tensor, &rc, &a.out_dir)?;
            println!(
                "{} ranks {} selected {} rel_error {:.6}",
                out.provenance.kind,
                out.provenance.ranks,
                out.provenance.selected_rank.unwrap_or(out.provenance.ranks.p),
                out.report.rel_error
            );
        }
        Command::SplitCompare(a) => {
            let rc = resolve(&a.fit)?;
            let (kw, ks) = commands::cmd_split_compare(&a.fit.tensor, &rc, a.split_at, a.drop_zero, &a.out_dir)?;
            println!("Kruskal-Wallis p={kw:.4} Kolmogorov-Smirnov p={ks:.4}");
        }
        Command::Dynamic(a) => {
            let rc = resolve(&a.fit)?;
            let out = commands::cmd_dynamic(&a.fit.tensor, &rc, a.reference.as_deref(), a.sqrt, &a.out_dir)?;
            match out.alignment {
                Some(al) => println!("correlation with reference {:.4} (sign {:+}, scale {:e})", al.correlation, al.sign, al.scale),
                None => println!("{} periods written", out.factor.len()),
            }
        }
        Command::Scan(a) => {
            let rc = resolve(&a.fit)?;
            let selected = commands::cmd_scan(&a.fit.tensor, &rc, &a.out)?;
            println!("selected rank {selected}");
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and reports failures on stderr.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run_command(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
