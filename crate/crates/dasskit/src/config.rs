//! Run configuration: a TOML file plus command-line overrides (flags win).
//!
//! Every command writes the fully resolved configuration next to its
//! outputs, so a run can be reproduced from the artifact directory alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distill::DistillConfig;
use crate::env::{Cycler, CyclerConfig, Environment, PendulumConfig, PendulumTrack};
use crate::error::{Error, Result};
use crate::ppo::PpoConfig;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RefineSection {
    /// Supervision weight `w` on the anchor loss.
    pub anchor_weight: f64,
    pub supervised_samples_per_iteration: usize,
    pub from_scratch: bool,
}

impl Default for RefineSection {
    fn default() -> Self {
        RefineSection {
            anchor_weight: 1.0,
            supervised_samples_per_iteration: 3000,
            from_scratch: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub horizon: usize,
    pub phases: usize,
    pub episodes_per_phase: usize,
    pub action_noise_std: f64,
    pub mass_scale: f64,
    /// Push force vector; defaults to 5 units along the first axis.
    pub push_force: Option<Vec<f64>>,
    pub push_for_seconds: f64,
    pub push_every_seconds: f64,
    pub command: Option<f64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            horizon: 400,
            phases: 8,
            episodes_per_phase: 5,
            action_noise_std: 0.1,
            mass_scale: 1.2,
            push_force: None,
            push_for_seconds: 0.2,
            push_every_seconds: 3.0,
            command: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub env: String,
    pub out_dir: PathBuf,
    /// Worker threads for evaluation episodes; 1 keeps everything on one
    /// thread (results are identical either way).
    pub jobs: usize,
    pub cycler: Option<CyclerConfig>,
    pub pendulum: Option<PendulumConfig>,
    pub ppo: PpoConfig,
    pub distill: DistillConfig,
    pub refine: RefineSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            env: "cycler".into(),
            out_dir: PathBuf::from("runs/out"),
            jobs: 1,
            cycler: None,
            pendulum: None,
            ppo: PpoConfig::default(),
            distill: DistillConfig::default(),
            refine: RefineSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text)
            .map_err(|e| Error::parse(path, 0, format!("config file rejected: {e}")))
    }

    /// Construct the environment this config describes.
    pub fn build_env(&self) -> Result<Box<dyn Environment>> {
        match self.env.as_str() {
            "cycler" => Ok(Box::new(Cycler::new(
                self.cycler.clone().unwrap_or_default(),
            )?)),
            "pendulum-track" => Ok(Box::new(PendulumTrack::new(
                self.pendulum.clone().unwrap_or_default(),
            )?)),
            other => Err(Error::invalid_argument(format!(
                "unknown environment id {other:?} (expected \"cycler\" or \"pendulum-track\")"
            ))),
        }
    }

    /// Serialize the resolved configuration (deterministic TOML rendering).
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("resolved-config.toml");
        std::fs::write(&path, self.to_toml()).map_err(|e| Error::io(&path, e))
    }
}
