//! Run settings: optional TOML config file merged under command-line flags.

use std::path::Path;

use serde::Deserialize;

use crate::decomp::{AlsConfig, Init, ModelKind};
use crate::error::{Error, Result};
use crate::hcm::{HcmOptions, MarketMode};
use crate::selection::{Criterion, ScanOptions};
use crate::simulation::SimConfig;

/// Contents of `--config`. Every field is optional; flags win.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<String>,
    pub ranks: Option<String>,
    pub time_rank: Option<usize>,
    pub criterion: Option<String>,
    pub market_mode: Option<String>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub restarts: Option<usize>,
    pub init: Option<String>,
    pub proj_tol: Option<f64>,
    pub proj_max_iter: Option<usize>,
    pub emit_plots: Option<bool>,
    pub simulation: Option<SimConfig>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::fsutil::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start].matches('\n').count() + 1)
                .unwrap_or(1);
            Error::parse(line, e.message().to_owned())
        })
    }
}

/// Parses a rank grid: `a..b` (inclusive), `a..=b`, a comma list or a
/// single rank.
pub fn parse_grid(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::arg(format!("bad rank grid `{s}` (expected a..b, a,b,c or n)"));
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
    let grid: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        s.split(',').map(num).collect::<Result<_>>()?
    };
    if grid.is_empty() || grid.contains(&0) {
        return Err(Error::arg(format!("rank grid `{s}` must be nonempty and positive")));
    }
    Ok(grid)
}

fn parse_init(s: &str) -> Result<Init> {
    match s {
        "auto" => Ok(Init::Auto),
        "random" => Ok(Init::Random),
        "svd" => Ok(Init::Svd),
        other => Err(Error::arg(format!("init must be auto, random or svd, got `{other}`"))),
    }
}

/// Command-line overrides shared by the model-fitting subcommands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub model: Option<String>,
    pub ranks: Option<String>,
    pub time_rank: Option<usize>,
    pub criterion: Option<String>,
    pub market_mode: Option<String>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub restarts: Option<usize>,
    pub init: Option<String>,
    pub proj_tol: Option<f64>,
    pub proj_max_iter: Option<usize>,
    pub emit_plots: bool,
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub kind: ModelKind,
    pub grid: Vec<usize>,
    pub scan: ScanOptions,
    pub als: AlsConfig,
    pub hcm: HcmOptions,
    pub emit_plots: bool,
}

impl RunConfig {
    pub fn resolve(file: &FileConfig, o: &Overrides) -> Result<Self> {
        let pick = |a: &Option<String>, b: &Option<String>| a.clone().or_else(|| b.clone());
        let kind: ModelKind = pick(&o.model, &file.model).as_deref().unwrap_or("sdt").parse()?;
        let grid = match pick(&o.ranks, &file.ranks) {
            Some(g) => parse_grid(&g)?,
            None => return Err(Error::arg("a rank grid is required (--ranks a..b)")),
        };
        let criterion = pick(&o.criterion, &file.criterion)
            .map(|c| c.parse::<Criterion>())
            .transpose()?;
        let mut scan = ScanOptions {
            criterion,
            ..ScanOptions::default()
        };
        if let Some(r) = o.time_rank.or(file.time_rank) {
            scan.time_rank = r;
        }
        let mut als = AlsConfig::default();
        if let Some(v) = o.seed.or(file.seed) {
            als.seed = v;
        }
        if let Some(v) = o.tol.or(file.tol) {
            als.tol = v;
        }
        if let Some(v) = o.max_iter.or(file.max_iter) {
            als.max_iter = v;
        }
        if let Some(v) = o.restarts.or(file.restarts) {
            als.restarts = v;
        }
        if let Some(v) = pick(&o.init, &file.init) {
            als.init = parse_init(&v)?;
        }
        als.validate()?;
        let mut hcm = HcmOptions::default();
        if let Some(m) = pick(&o.market_mode, &file.market_mode) {
            hcm.market_mode = m.parse::<MarketMode>()?;
        }
        if let Some(v) = o.proj_tol.or(file.proj_tol) {
            hcm.tol = v;
        }
        if let Some(v) = o.proj_max_iter.or(file.proj_max_iter) {
            hcm.max_iter = v;
        }
        Ok(RunConfig {
            kind,
            grid,
            scan,
            als,
            hcm,
            emit_plots: o.emit_plots || file.emit_plots.unwrap_or(false),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("2..5").unwrap(), vec![2, 3, 4, 5]);
        assert_eq!(parse_grid("2..=3").unwrap(), vec![2, 3]);
        assert_eq!(parse_grid("4").unwrap(), vec![4]);
        assert_eq!(parse_grid("1, 3,7").unwrap(), vec![1, 3, 7]);
        for bad in ["5..2", "0..3", "", "a..b", "2..", "0"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn flags_override_file() {
        let file: FileConfig = toml::from_str("model = 'tucker'\nranks = '2..4'\nseed = 9\nrestarts = 2").unwrap();
        let o = Overrides {
            seed: Some(3),
            market_mode: Some("remove".into()),
            ..Overrides::default()
        };
        let rc = RunConfig::resolve(&file, &o).unwrap();
        assert_eq!(rc.kind, ModelKind::Tucker);
        assert_eq!(rc.grid, vec![2, 3, 4]);
        assert_eq!((rc.als.seed, rc.als.restarts), (3, 2));
        assert_eq!(rc.hcm.market_mode, MarketMode::Remove);
    }

    #[test]
    fn missing_grid_and_unknown_keys_fail() {
        assert!(RunConfig::resolve(&FileConfig::default(), &Overrides::default()).is_err());
        assert!(toml::from_str::<FileConfig>("colour = 1").is_err());
    }

    #[test]
    fn simulation_section_parses() {
        let file: FileConfig = toml::from_str("[simulation]\nt = 12\nseed = 4").unwrap();
        let sim = file.simulation.unwrap();
        assert_eq!((sim.t, sim.seed, sim.svd_rank), (12, 4, 10));
    }
}
