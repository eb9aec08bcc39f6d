//! Resolved run configurations and output bookkeeping.

use std::fs;
use std::path::{Path, PathBuf};

use hsgppt::csbm::CsbmParams;
use hsgppt::eval::SweepConfig;
use hsgppt::graph::FeatureTransform;
use hsgppt::pretrain::PretrainConfig;
use hsgppt::prompt::{TuneConfig, Variant};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenCsbmConfig {
    pub out: Option<PathBuf>,
    pub csbm: CsbmParams,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub transform: FeatureTransform,
    /// Largest graph handed to the dense eigensolver.
    pub dense_limit: usize,
    pub curve_points: usize,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig {
            data: None,
            out: None,
            transform: FeatureTransform::None,
            dense_limit: hsgppt::spectral::DEFAULT_DENSE_LIMIT,
            curve_points: 201,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainCmdConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub transform: FeatureTransform,
    pub pretrain: PretrainConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneCmdConfig {
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub transform: FeatureTransform,
    pub k: usize,
    pub variant: Variant,
    pub tune: TuneConfig,
}

impl Default for TuneCmdConfig {
    fn default() -> Self {
        TuneCmdConfig {
            data: None,
            model: None,
            out: None,
            transform: FeatureTransform::None,
            k: 5,
            variant: Variant::Full,
            tune: TuneConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Transductive,
    Inductive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalCmdConfig {
    pub data: Option<PathBuf>,
    /// Pre-training graph in inductive mode.
    pub source: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub transform: FeatureTransform,
    pub mode: Mode,
    pub svd_dim: usize,
    pub k: usize,
    pub seeds: Vec<u64>,
    pub variant: Variant,
    pub pretrain: PretrainConfig,
    pub tune: TuneConfig,
}

impl Default for EvalCmdConfig {
    fn default() -> Self {
        EvalCmdConfig {
            data: None,
            source: None,
            out: None,
            transform: FeatureTransform::None,
            mode: Mode::Transductive,
            svd_dim: 128,
            k: 5,
            seeds: vec![0, 1, 2, 3, 4],
            variant: Variant::Full,
            pretrain: PretrainConfig::default(),
            tune: TuneConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepCmdConfig {
    pub out: Option<PathBuf>,
    pub sweep: SweepConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateCmdConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub transform: FeatureTransform,
    pub k: usize,
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
    pub pretrain: PretrainConfig,
    pub tune: TuneConfig,
}

impl Default for AblateCmdConfig {
    fn default() -> Self {
        AblateCmdConfig {
            data: None,
            out: None,
            transform: FeatureTransform::None,
            k: 5,
            seeds: vec![0, 1, 2, 3, 4],
            variants: Variant::ALL.to_vec(),
            pretrain: PretrainConfig::default(),
            tune: TuneConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            out: None,
            seed: 0,
            step: 1e-6,
            tolerance: 1e-4,
        }
    }
}

/// Defaults, replaced wholesale by the JSON file when one is given.
pub fn load_or_default<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Lib(hsgppt::Error::io(path, e)))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn required(value: &Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    value
        .clone()
        .ok_or_else(|| CliError::Usage(format!("missing --{name} (flag or config key `{name}`)")))
}

/// Collects the files a run writes and records them in `manifest.json`.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Lib(hsgppt::Error::io(dir, e)))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.dir.join(name)
    }

    /// Records a file written elsewhere under the output directory.
    pub fn record(&mut self, path: &Path) {
        let name = path.strip_prefix(&self.dir).unwrap_or(path).to_string_lossy().into_owned();
        if !self.files.contains(&name) {
            self.files.push(name);
        }
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value).expect("value serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::Lib(hsgppt::Error::io(&path, e)))
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, text).map_err(|e| CliError::Lib(hsgppt::Error::io(&path, e)))
    }

    pub fn finish(mut self, command: &str) -> Result<(), CliError> {
        self.files.sort();
        let manifest = serde_json::json!({ "command": command, "files": self.files });
        let path = self.dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::Lib(hsgppt::Error::io(&path, e)))
    }
}

/// Worker cap from `HSGPPT_THREADS`; one worker when unset.
pub fn thread_cap() -> Result<usize, CliError> {
    match std::env::var("HSGPPT_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Usage(format!("HSGPPT_THREADS must be a positive integer, got {v:?}"))),
    }
}
