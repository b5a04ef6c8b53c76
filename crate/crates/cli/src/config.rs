use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use clipforge::highlighter::HighlightParams;
use clipforge::synthetic::SynthSpec;
use clipforge::trainer::TrainConfig;
use clipforge_service::ServiceConfig;
use serde::{Deserialize, Serialize};

/// Settings shared by every subcommand. `seed` is the only seed: it
/// overwrites the nested `train.seed` and `synth.seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub seed: u64,
    pub workers: Option<usize>,
    pub fractions: (f64, f64, f64),
    pub train: TrainConfig,
    pub highlight: HighlightParams,
    pub synth: SynthSpec,
    pub service: ServiceConfig,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: None,
            fractions: clipforge::dataset::DEFAULT_FRACTIONS,
            train: TrainConfig::default(),
            highlight: HighlightParams::default(),
            synth: SynthSpec::default(),
            service: ServiceConfig::default(),
        }
    }
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    pub fn resolve(mut self, seed: Option<u64>, workers: Option<usize>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        if workers.is_some() {
            self.workers = workers;
        }
        self.train.seed = self.seed;
        self.synth.seed = self.seed;
        if let Some(w) = self.workers {
            self.service.workers = w;
        }
        self
    }
}
