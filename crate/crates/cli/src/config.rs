//! The JSON run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use facerep::augment::{DEFAULT_COUNT, DEFAULT_SOURCES};
use facerep::net::{ArchConfig, TrainConfig};
use facerep::synth::CorpusSpec;
use facerep::{Error, Result};
use serde::{Deserialize, Serialize};

/// Everything a run depends on. Missing keys take their defaults; unknown
/// keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// When set, replaces the seeds of the corpus, training and augmentation.
    pub seed: Option<u64>,
    pub corpus: CorpusSpec,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub bilinear: BilinearConfig,
    pub augment: AugmentConfig,
    /// Interpolation stride.
    pub stride: f64,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            corpus: CorpusSpec::default(),
            arch: ArchConfig::default(),
            train: TrainConfig::default(),
            bilinear: BilinearConfig::default(),
            augment: AugmentConfig::default(),
            stride: 0.25,
            paths: Paths::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BilinearConfig {
    pub k_id: usize,
    pub k_exp: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for BilinearConfig {
    fn default() -> Self {
        BilinearConfig {
            k_id: 50,
            k_exp: 25,
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub count: usize,
    pub sources: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            count: DEFAULT_COUNT,
            sources: DEFAULT_SOURCES,
            seed: 0,
        }
    }
}

/// Input and output locations; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        Self::parse(&text).map_err(|e| e.in_file(path))
    }

    /// Pushes the top-level seed into every section that has one.
    pub fn propagate_seed(&mut self) {
        if let Some(s) = self.seed {
            self.corpus.seed = s;
            self.train.seed = s;
            self.augment.seed = s;
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.arch.validate()?;
        self.train.validate()?;
        if self.bilinear.k_id == 0 || self.bilinear.k_exp == 0 {
            return Err(Error::InvalidArgument(
                "bilinear ranks must be positive".into(),
            ));
        }
        facerep::net::stride_steps(self.stride)?;
        Ok(())
    }
}
