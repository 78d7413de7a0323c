//! Target and skill selection models, their questions, and the
//! exhaustive-enumeration oracles used to check them.

mod bundle;
mod oracle;
mod params;
mod query;
mod skill;
mod target;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::prob::Domain;
use crate::vars::{Class, DeltaHp, DistanceZone, Resists, HP_LEVELS};

pub use bundle::DecisionModel;
pub use oracle::{brute_force_skill_posterior, brute_force_target_posterior, full_joint_target_posterior};
pub use params::{ClassPopulation, ModelParams, TransitionPrior};
pub use query::{
    joint_posterior, select_action, skill_given_target, skill_posterior, target_posterior, RankedAction, RankedActions,
};
pub use skill::{build_skill_model, SkillModel, SKILL_TABLES};
pub use target::{build_target_model, TargetModel, TARGET_TABLES};

/// Observed and derived variables of one character.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacterState {
    pub id: String,
    pub hp_level: u8,
    pub distance: DistanceZone,
    pub ally: bool,
    pub delta_hp: DeltaHp,
    pub imminent_death: bool,
    pub class: Class,
    pub resists: Resists,
}

/// Alive roster plus the previous target: the known part of every question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSnapshot")]
pub struct BattleSnapshot {
    characters: Vec<CharacterState>,
    prev_target: Option<String>,
}

#[derive(Deserialize)]
struct RawSnapshot {
    characters: Vec<CharacterState>,
    #[serde(default)]
    prev_target: Option<String>,
}

impl TryFrom<RawSnapshot> for BattleSnapshot {
    type Error = ModelError;

    fn try_from(raw: RawSnapshot) -> Result<Self, Self::Error> {
        BattleSnapshot::new(raw.characters, raw.prev_target)
    }
}

impl BattleSnapshot {
    /// A `prev_target` that is not in the roster (it died) is dropped.
    pub fn new(characters: Vec<CharacterState>, prev_target: Option<String>) -> Result<Self, ModelError> {
        if characters.is_empty() {
            return Err(ModelError::InvalidSnapshot("empty roster".into()));
        }
        let mut seen = BTreeSet::new();
        for c in &characters {
            if !seen.insert(c.id.as_str()) {
                return Err(ModelError::InvalidSnapshot(format!("duplicate id `{}`", c.id)));
            }
            if usize::from(c.hp_level) >= HP_LEVELS {
                return Err(ModelError::InvalidSnapshot(format!(
                    "hp level {} of `{}` out of range",
                    c.hp_level, c.id
                )));
            }
        }
        let prev_target = prev_target.filter(|p| seen.contains(p.as_str()));
        Ok(Self {
            characters,
            prev_target,
        })
    }

    pub fn characters(&self) -> &[CharacterState] {
        &self.characters
    }

    pub fn len(&self) -> usize {
        self.characters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.characters.is_empty()
    }

    pub fn prev_target(&self) -> Option<&str> {
        self.prev_target.as_deref()
    }

    pub fn prev_index(&self) -> Option<usize> {
        self.prev_target.as_deref().and_then(|p| self.index_of(p))
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.characters.iter().position(|c| c.id == id)
    }

    pub fn get(&self, id: &str) -> Option<&CharacterState> {
        self.characters.iter().find(|c| c.id == id)
    }

    /// Domain of candidate targets, in roster order.
    pub fn target_domain(&self) -> Domain {
        Domain::new("target", self.characters.iter().map(|c| c.id.clone())).expect("ids are unique")
    }
}
