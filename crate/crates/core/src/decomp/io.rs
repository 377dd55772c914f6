//! Model directories: `a.csv`, `b.csv`, `c.csv`, the core and `meta.json`.

use std::fs;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FitReport, Model, ModelKind, ParafacModel, Ranks, SdtModel, TuckerModel};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic_with;
use crate::tensor::{read_matrix_csv, write_matrix_csv, Matrix, Tensor3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub kind: ModelKind,
    pub dims: [usize; 3],
    pub ranks: Ranks,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub report: Option<FitReport>,
}

const CORE_TENSOR: &str = "core.txt";
const CORE_DIAG: &str = "core_diag.csv";

fn save_csv(dir: &Path, name: &str, m: &Matrix) -> Result<()> {
    write_atomic_with(&dir.join(name), |buf| write_matrix_csv(m, buf))
}

fn load_csv(dir: &Path, name: &str) -> Result<Matrix> {
    let f = crate::fsutil::open(&dir.join(name))?;
    read_matrix_csv(BufReader::new(f))
}

/// Writes the model into `dir`, creating it if needed.
pub fn save_model(dir: &Path, model: &Model, report: Option<&FitReport>, seed: Option<u64>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (a, b, c) = model.factors();
    save_csv(dir, "a.csv", a)?;
    save_csv(dir, "b.csv", b)?;
    save_csv(dir, "c.csv", c)?;
    match model {
        Model::Parafac(_) => {}
        Model::Tucker(m) => write_atomic_with(&dir.join(CORE_TENSOR), |buf| m.core.write_text(buf))?,
        Model::Sdt(m) => save_csv(dir, CORE_DIAG, &m.core_diag)?,
    }
    let meta = ModelMeta {
        kind: model.kind(),
        dims: model.dims(),
        ranks: model.ranks(),
        seed,
        report: report.cloned(),
    };
    write_atomic_with(&dir.join("meta.json"), |buf| {
        serde_json::to_writer_pretty(&mut *buf, &meta)?;
        buf.push(b'\n');
        Ok(())
    })
}

/// Reads a model written by [`save_model`].
pub fn load_model(dir: &Path) -> Result<(Model, ModelMeta)> {
    let meta: ModelMeta = serde_json::from_reader(BufReader::new(crate::fsutil::open(&dir.join("meta.json"))?))?;
    let a = load_csv(dir, "a.csv")?;
    let b = load_csv(dir, "b.csv")?;
    let c = load_csv(dir, "c.csv")?;
    let model = match meta.kind {
        ModelKind::Parafac => Model::Parafac(ParafacModel::new(a, b, c)?),
        ModelKind::Tucker => {
            let core = Tensor3::read_text(BufReader::new(crate::fsutil::open(&dir.join(CORE_TENSOR))?))?;
            Model::Tucker(TuckerModel::new(a, b, c, core)?)
        }
        ModelKind::Sdt => {
            let core = load_csv(dir, CORE_DIAG)?;
            Model::Sdt(SdtModel::new(a, b, c, core)?)
        }
    };
    if model.dims() != meta.dims || model.ranks() != meta.ranks {
        return Err(Error::arg(format!(
            "model files disagree with meta.json (dims {:?}, ranks {})",
            model.dims(),
            model.ranks()
        )));
    }
    Ok((model, meta))
}
