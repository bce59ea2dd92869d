//! File formats shared by the subcommands: state specs, matrix JSON and the
//! run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pathtomo::distinguishability::VisDensityMatrix;
use pathtomo::optics::SetupConfig;
use pathtomo::records::{read_records, write_records, MeasurementRecord};
use pathtomo::state::{Fixture, PathDensityMatrix};
use pathtomo::synth::TrueState;
use pathtomo::C64;
use nalgebra::{DMatrix, Matrix3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Real and imaginary parts of a square matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub real: Vec<Vec<f64>>,
    pub imag: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn from_dmatrix(m: &DMatrix<C64>) -> Self {
        let rows = |f: fn(&C64) -> f64| {
            (0..m.nrows())
                .map(|r| (0..m.ncols()).map(|c| f(&m[(r, c)])).collect())
                .collect()
        };
        Self {
            real: rows(|z| z.re),
            imag: rows(|z| z.im),
        }
    }

    pub fn from_matrix3(m: &Matrix3<C64>) -> Self {
        Self::from_dmatrix(&DMatrix::from_fn(3, 3, |r, c| m[(r, c)]))
    }

    pub fn to_matrix3(&self) -> Result<Matrix3<C64>> {
        let shape_ok = self.real.len() == 3
            && self.imag.len() == 3
            && self.real.iter().chain(&self.imag).all(|row| row.len() == 3);
        if !shape_ok {
            bail!("expected 3×3 `real` and `imag` arrays");
        }
        Ok(Matrix3::from_fn(|r, c| C64::new(self.real[r][c], self.imag[r][c])))
    }
}

/// State file: a 3×3 matrix, plus an antisymmetric population for states
/// with distinguishable photons.
#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct StateFile {
    #[serde(flatten)]
    matrix: MatrixJson,
    #[serde(default)]
    antisym_pop: Option<f64>,
}

/// Parses a fixture name (`ideal`, `mixed`, `dashed-theta=θ`) or reads a
/// state JSON file.
pub fn load_state(spec: &str) -> Result<TrueState> {
    if let Ok(fixture) = spec.parse::<Fixture>() {
        return Ok(TrueState::Path(fixture.state()));
    }
    let path = Path::new(spec);
    if !path.is_file() {
        bail!("`{spec}` is neither a known fixture nor a state file");
    }
    let file: StateFile = read_json(path)?;
    let m = file.matrix.to_matrix3()?;
    match file.antisym_pop {
        Some(w) => Ok(TrueState::Vis(VisDensityMatrix::new(m, w)?)),
        None => {
            let rho = PathDensityMatrix::new(m)?;
            if !rho.is_physical(1e-9) {
                bail!("state in {} is not a density matrix", path.display());
            }
            Ok(TrueState::Path(rho))
        }
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn load_config(path: Option<&Path>) -> Result<SetupConfig> {
    let cfg: SetupConfig = match path {
        Some(p) => read_json(p)?,
        None => SetupConfig::balanced_lossless(),
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_records(path: &Path) -> Result<Vec<MeasurementRecord>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_records(file).with_context(|| format!("reading records from {}", path.display()))
}

pub fn save_records(path: &Path, records: &[MeasurementRecord]) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_records(file, records)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<String>,
    /// SHA-256 of the setup configuration as serialized JSON.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &SetupConfig, seed: Option<u64>) -> Self {
        let canonical = serde_json::to_vec(cfg).expect("config serializes");
        Self {
            command: command.to_string(),
            inputs: Vec::new(),
            config_hash: format!("{:x}", Sha256::digest(&canonical)),
            seed,
            outputs: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn input(mut self, p: impl AsRef<Path>) -> Self {
        self.inputs.push(p.as_ref().display().to_string());
        self
    }

    pub fn output(mut self, p: impl AsRef<Path>) -> Self {
        self.outputs.push(p.as_ref().display().to_string());
        self
    }

    /// Writes `<out>.manifest.json` next to the primary output.
    pub fn write_beside(&self, out: &Path) -> Result<PathBuf> {
        let path = manifest_path(out);
        write_json(&path, self)?;
        Ok(path)
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// `runs/scan.csv` → `runs/scan.summary.csv`
pub fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.summary.csv"))
}
