use std::fs;
use std::path::Path;

use evpose::metrics::MetricConfig;
use evpose::posenet::ModelConfig;
use evpose::synthgen::DatasetConfig;
use evpose::trainer::TrainConfig;
use evpose::{Error, Result};
use serde::{Deserialize, Serialize};

/// Everything a run needs. Values come from the defaults, then the config
/// file, then command-line flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub dataset: DatasetConfig,
    pub metrics: MetricConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| {
            Error::InvalidConfig(format!("{}: line {}: {e}", path.display(), e.line()))
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.dataset.validate()?;
        if self.train.clip_length > self.model.t_max {
            return Err(Error::InvalidConfig(format!(
                "train.clip_length {} exceeds model.t_max {}",
                self.train.clip_length, self.model.t_max
            )));
        }
        Ok(())
    }

    /// Writes the resolved configuration as `config.json` under `dir`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let path = dir.join("config.json");
        let text = serde_json::to_string_pretty(self).expect("config serialises");
        fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))
    }
}

pub fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}
