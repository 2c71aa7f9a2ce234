//! Run configuration: a JSON file whose fields any flag can override.

use std::path::Path;

use serde::{Deserialize, Serialize};
use teamstrength::ingest::CsvSchema;
use teamstrength::model::Cardinalities;
use teamstrength::train::{TrainConfig, DEFAULT_C_GOAL, DEFAULT_C_TRANSITION};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub states: usize,
    pub goal_states: usize,
    pub c_transition: f64,
    pub c_goal: f64,
    pub train: TrainConfig,
    pub season_gap_days: i64,
    /// Skip malformed rows instead of aborting.
    pub lenient: bool,
    pub weekly_iters: usize,
    pub schema: CsvSchema,
}

impl Default for RunConfig {
    fn default() -> Self {
        let card = Cardinalities::default();
        Self {
            states: card.num_strength_states,
            goal_states: card.num_goal_states,
            c_transition: DEFAULT_C_TRANSITION,
            c_goal: DEFAULT_C_GOAL,
            train: TrainConfig::default(),
            season_gap_days: 45,
            lenient: false,
            weekly_iters: 10,
            schema: CsvSchema::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("bad config {}: {e}", path.display())))
    }

    pub fn cardinalities(&self) -> Result<Cardinalities, CliError> {
        Cardinalities::new(self.states, self.goal_states).map_err(CliError::config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.cardinalities()?;
        self.train.validate().map_err(CliError::config)?;
        if !(self.c_transition > 0.0 && self.c_goal > 0.0) {
            return Err(CliError::config("c_transition and c_goal must be positive"));
        }
        if self.weekly_iters == 0 {
            return Err(CliError::config("weekly_iters must be at least 1"));
        }
        if self.season_gap_days < 1 {
            return Err(CliError::config("season_gap_days must be positive"));
        }
        Ok(())
    }
}
