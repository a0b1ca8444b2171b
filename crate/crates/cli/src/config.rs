//! The experiment config document and its validation.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use fairmargin::{Cohort, CohortConfig, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Toml,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Json => "json",
            Self::Toml => "toml",
        }
    }
}

/// One TOML document describing data, training and outputs.
///
/// ```toml
/// out_dir = "runs/demo"       # optional
/// report_format = "json"      # or "toml"
/// jobs = 4                    # experiment/ablate workers
///
/// [cohort]                    # or: dataset = "cohort.csv"
/// n_samples = 10000
///
/// [train]
/// epochs = 30
/// seeds = [0, 1, 2, 3, 4, 5]
///
/// [train.fairness]
/// lambda_plus = 0.5
/// lambda_minus = 0.5
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Synthetic cohort to generate; fields default to the biased cohort.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cohort: Option<CohortConfig>,
    /// Cohort CSV, relative to the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    pub train: TrainConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub report_format: ReportFormat,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let message = inner.message().to_string();
            match path.as_str() {
                "." | "" => anyhow!("{message}"),
                _ => anyhow!("`{path}`: {message}"),
            }
        })
    }

    /// Reads the file and resolves `dataset` against its directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))?;
        if let Some(dataset) = &cfg.dataset {
            if dataset.is_relative() {
                let base = path.parent().unwrap_or(Path::new(""));
                cfg.dataset = Some(base.join(dataset));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        match (&self.cohort, &self.dataset) {
            (Some(_), Some(_)) => bail!("set exactly one of `cohort` and `dataset`, not both"),
            (None, None) => bail!("set exactly one of `cohort` and `dataset`"),
            (Some(c), None) => c.validate()?,
            (None, Some(_)) => {}
        }
        self.train.validate()?;
        if self.jobs == Some(0) {
            bail!("`jobs` must be at least 1");
        }
        Ok(())
    }

    /// Generates or loads the cohort. A missing dataset file is a
    /// configuration error, reported as such by the caller.
    pub fn cohort(&self) -> anyhow::Result<Cohort> {
        match (&self.cohort, &self.dataset) {
            (Some(c), _) => Ok(fairmargin::generate(c)?),
            (None, Some(path)) => {
                if !path.is_file() {
                    bail!("dataset `{}` does not exist", path.display());
                }
                Cohort::load_csv(path).with_context(|| format!("cannot load dataset {}", path.display()))
            }
            (None, None) => bail!("set exactly one of `cohort` and `dataset`"),
        }
    }
}
