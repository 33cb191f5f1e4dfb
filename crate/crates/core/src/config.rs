//! Declarative run configuration (JSON).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::copilots::{validate_combination, MethodSpec};
use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::harness::{grids, SweepSpec};
use crate::learners::LearnerConfig;
use crate::pilots::PilotSpec;

/// Schema version accepted by this build.
pub const SPEC_VERSION: u32 = 1;

pub const DEFAULT_EVAL_EPISODES: usize = 100;

/// Parameter grid of a sweep: explicit values or a named preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    /// `"standard"` selects the standard grid of the configured method.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_eval_episodes() -> usize {
    DEFAULT_EVAL_EPISODES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub spec_version: u32,
    pub env: EnvSpec,
    /// Required by every method except `agent`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pilot: Option<PilotSpec>,
    pub method: MethodSpec,
    pub learner: LearnerConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepGrid>,
}

impl RunConfig {
    /// Parses without touching the filesystem. Errors name the offending
    /// field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { "config".to_string() } else { path }, e.into_inner().to_string())
        })?;
        if cfg.spec_version != SPEC_VERSION {
            return Err(Error::config(
                "spec_version",
                format!("unsupported version {} (expected {SPEC_VERSION})", cfg.spec_version),
            ));
        }
        Ok(cfg)
    }

    /// Reads, resolves relative paths against the file's directory, and
    /// validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        let cfg = Self::from_json(&text)?;
        cfg.resolve(path.parent())
    }

    /// Inlines map and policy files, rebases paths, and validates the
    /// method / env / learner / pilot combination.
    pub fn resolve(&self, base_dir: Option<&Path>) -> Result<Self> {
        let mut out = self.clone();
        out.env = self.env.resolve(base_dir)?;
        out.pilot = self.pilot.as_ref().map(|p| p.resolve(base_dir)).transpose()?;
        if let (Some(dir), Some(o)) = (base_dir, &self.out) {
            if o.is_relative() {
                out.out = Some(dir.join(o));
            }
        }
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        validate_combination(&self.method, self.env.kind(), &self.learner, self.pilot.is_some())?;
        if self.eval_episodes == 0 {
            return Err(Error::config("eval_episodes", "must be positive"));
        }
        if let Some(sweep) = &self.sweep {
            self.sweep_values(sweep)?;
            if sweep.seeds.is_empty() {
                return Err(Error::config("sweep.seeds", "seed list is empty"));
            }
        }
        Ok(())
    }

    fn sweep_values(&self, sweep: &SweepGrid) -> Result<Vec<f64>> {
        let values = match (&sweep.values, sweep.preset.as_deref()) {
            (Some(_), Some(_)) => return Err(Error::config("sweep", "set at most one of `values` and `preset`")),
            (Some(v), None) => v.clone(),
            (None, Some("standard")) | (None, None) => grids::for_method(self.method.name())
                .ok_or_else(|| Error::config("sweep", format!("method `{}` has no standard grid", self.method.name())))?,
            (None, Some(other)) => return Err(Error::config("sweep.preset", format!("unknown preset `{other}`"))),
        };
        if values.is_empty() {
            return Err(Error::config("sweep.values", "parameter grid is empty"));
        }
        Ok(values)
    }

    /// The sweep described by this config; `seeds` overrides the config's.
    pub fn sweep_spec(&self, seeds: Option<Vec<u64>>) -> Result<SweepSpec> {
        let grid = self.sweep.clone().unwrap_or(SweepGrid {
            values: None,
            preset: None,
            seeds: default_seeds(),
        });
        let spec = SweepSpec {
            env: self.env.clone(),
            pilot: self.pilot.clone(),
            method: self.method.clone(),
            learner: self.learner.clone(),
            values: self.sweep_values(&grid)?,
            seeds: seeds.unwrap_or(grid.seeds),
            eval_episodes: self.eval_episodes,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Canonical JSON echo of the config.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
