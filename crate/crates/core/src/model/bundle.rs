use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_skill_model, build_target_model, joint_posterior, BattleSnapshot, ModelParams, RankedActions};
use super::{SkillModel, TargetModel};
use crate::error::ModelError;

/// A target model and a skill model used together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionModel {
    /// Roster size the model was built or trained for.
    pub roster_size: usize,
    pub target: TargetModel,
    pub skill: SkillModel,
}

impl DecisionModel {
    pub fn from_params(params: &ModelParams, roster_size: usize) -> Result<Self, ModelError> {
        Ok(Self {
            roster_size,
            target: build_target_model(params, roster_size)?,
            skill: build_skill_model(params)?,
        })
    }

    pub fn joint(&self, snapshot: &BattleSnapshot) -> Result<RankedActions, ModelError> {
        joint_posterior(&self.target, &self.skill, snapshot)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::InvalidParams(format!("model file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ModelError::InvalidParams(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
