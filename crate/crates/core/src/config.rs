//! One TOML document holding every tunable of a run.
//!
//! Missing keys take their defaults, unknown keys are rejected. See
//! `configs/full.toml` for a fully annotated example.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::GnnHyper;
use crate::meta::MetaConfig;
use crate::scenario::{GenerationConfig, SyntheticConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub generation: GenerationConfig,
    pub model: GnnHyper,
    pub meta: MetaConfig,
    /// Network built by the `synth` command.
    pub synthetic: SyntheticConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// Uses `seed` for generation, initialization and meta-training.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.generation.seed = seed;
        self.meta.seed = seed;
        self.synthetic.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.generation.validate()?;
        self.model.validate()?;
        self.meta.validate()?;
        let g = &self.generation;
        let m = &self.meta;
        let train_ods = g.n_ods - g.n_test_ods;
        if m.k_support + m.m_query > train_ods {
            return Err(Error::Config(format!(
                "k_support + m_query = {} exceeds the {train_ods} training ODs per task",
                m.k_support + m.m_query
            )));
        }
        let train_tasks = g.n_tasks - g.n_test_tasks;
        if m.task_batch > train_tasks {
            return Err(Error::Config(format!(
                "task_batch {} exceeds the {train_tasks} training tasks",
                m.task_batch
            )));
        }
        if g.n_test_tasks > 0 && m.k_support >= g.n_test_ods {
            return Err(Error::Config(format!(
                "meta-test needs more than k_support = {} held-out ODs, got {}",
                m.k_support, g.n_test_ods
            )));
        }
        Ok(())
    }
}
