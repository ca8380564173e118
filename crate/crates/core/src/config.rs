//! JSON run configuration shared by the command-line tools.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::ScenarioConfig;
use crate::harness::{EpisodeConfig, SuiteConfig};
use crate::rlplanner::{RlConfig, TrainSetup};
use crate::uodm::UodmConfig;

/// Every knob a run can set. Missing sections take their defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Scenario used by `generate` and `eval`. Its `sensing_radius` is the perception radius.
    pub scenario: ScenarioConfig,
    pub uodm: UodmConfig,
    /// Planner training: RL hyperparameters and the scenario mix.
    pub training: TrainSetup,
    /// Episode settings for `eval`; collision resolution parameters live here.
    pub episode: EpisodeConfig,
    pub bench: SuiteConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.training.rl.validate()?;
        self.episode.cem.validate()?;
        self.bench.episode.cem.validate()?;
        if self.training.scenarios.is_empty() {
            return Err(Error::InvalidConfig("training.scenarios is empty".into()));
        }
        if self.bench.entries.is_empty() || self.bench.seeds.is_empty() {
            return Err(Error::InvalidConfig("bench needs at least one entry and one seed".into()));
        }
        for s in std::iter::once(&self.scenario).chain(&self.training.scenarios).chain(self.bench.entries.iter().map(|e| &e.scenario)) {
            if !(s.sensing_radius > 0.0) {
                return Err(Error::InvalidConfig(format!("sensing radius must be positive, got {}", s.sensing_radius)));
            }
        }
        Ok(())
    }

    pub fn rl(&self) -> &RlConfig {
        &self.training.rl
    }
}
