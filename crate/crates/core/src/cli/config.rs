//! Optional TOML configuration. Top-level keys are the global options;
//! each subcommand reads its own table. Unknown keys are rejected.
//!
//! ```toml
//! seed = 7
//! threads = 1
//! out = "runs/exp1"
//!
//! [synth]
//! images = 500
//! size = 64
//! lesion_types = ["hemorrhage", "hard_exudate"]
//!
//! [train]
//! manifest = "data/manifest.jsonl"
//! epochs = 20
//! lr = 0.01
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::eval::LesionType;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub synth: SynthSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub cam: CamSection,
    #[serde(default)]
    pub propose: ProposeSection,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub images: Option<usize>,
    pub size: Option<usize>,
    pub channels: Option<usize>,
    pub diseased_fraction: Option<f64>,
    pub max_lesions: Option<usize>,
    pub lesion_types: Option<Vec<LesionType>>,
    pub expert_noise: Option<bool>,
    pub id_prefix: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub manifest: Option<PathBuf>,
    pub arch: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub size: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub lr_decay: Option<f64>,
    pub momentum: Option<f64>,
    pub weight_decay: Option<f64>,
    pub augment: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CamSection {
    pub model: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub images: Option<Vec<PathBuf>>,
    pub class: Option<usize>,
    pub colormap: Option<String>,
    pub alpha: Option<f32>,
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposeSection {
    pub heatmaps: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub images: Option<Vec<PathBuf>>,
    pub class: Option<usize>,
    pub tau: Option<f64>,
    pub min_area: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub proposals: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub size: Option<usize>,
    pub criterion: Option<String>,
    pub lesion_threshold: Option<f64>,
    pub classification_threshold: Option<f64>,
}

impl ConfigFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidArgument(e.to_string()))
    }
}
