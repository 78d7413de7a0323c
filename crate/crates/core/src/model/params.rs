use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::prob::ConditionalTable;

/// Soft evidence and shape knobs the default tables are built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    /// P(A_i = false | T = i).
    pub e_ally: f64,
    /// P(ID_i = true | T = i).
    pub e_id: f64,
    /// Probability of keeping the previous target.
    pub persistence: Option<f64>,
    /// Relative weight of the previous target against 1 for every other.
    /// Takes precedence over `persistence`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prev_weight: Option<f64>,
    pub hp_shape_exponent: f64,
    pub resist_penalty: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_population: Option<ClassPopulation>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub table_overrides: BTreeMap<String, ConditionalTable>,
}

/// Class weights for targeted allies and foes, in class domain order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPopulation {
    pub ally: [f64; 4],
    pub foe: [f64; 4],
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            e_ally: 0.6,
            e_id: 0.5,
            persistence: Some(0.4),
            prev_weight: None,
            hp_shape_exponent: 2.0,
            resist_penalty: 0.1,
            class_population: None,
            table_overrides: BTreeMap::new(),
        }
    }
}

impl ModelParams {
    pub fn with_e_id(mut self, e_id: f64) -> Self {
        self.e_id = e_id;
        self
    }

    pub fn with_e_ally(mut self, e_ally: f64) -> Self {
        self.e_ally = e_ally;
        self
    }

    pub fn with_persistence(mut self, p: f64) -> Self {
        self.persistence = Some(p);
        self.prev_weight = None;
        self
    }

    pub fn with_prev_weight(mut self, w: f64) -> Self {
        self.prev_weight = Some(w);
        self.persistence = None;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidParams(msg));
        for (name, v) in [("e_ally", self.e_ally), ("e_id", self.e_id)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        match (self.persistence, self.prev_weight) {
            (_, Some(w)) if w > 0.0 && w.is_finite() => {}
            (_, Some(w)) => return bad(format!("prev_weight = {w} must be positive")),
            (Some(p), None) if p > 0.0 && p < 1.0 => {}
            (Some(p), None) => return bad(format!("persistence = {p} is outside (0, 1)")),
            (None, None) => return bad("one of persistence and prev_weight must be set".into()),
        }
        if !(self.hp_shape_exponent >= 0.0 && self.hp_shape_exponent.is_finite()) {
            return bad(format!("hp_shape_exponent = {} must be >= 0", self.hp_shape_exponent));
        }
        if !(self.resist_penalty > 0.0 && self.resist_penalty <= 1.0) {
            return bad(format!("resist_penalty = {} is outside (0, 1]", self.resist_penalty));
        }
        if let Some(pop) = &self.class_population {
            for w in pop.ally.iter().chain(&pop.foe) {
                if !(w.is_finite() && *w >= 0.0) {
                    return bad("class_population weights must be nonnegative".into());
                }
            }
            if pop.ally.iter().sum::<f64>() <= 0.0 || pop.foe.iter().sum::<f64>() <= 0.0 {
                return bad("class_population needs positive mass per side".into());
            }
        }
        Ok(())
    }

    pub fn transition(&self) -> TransitionPrior {
        match (self.persistence, self.prev_weight) {
            (_, Some(w)) => TransitionPrior::PrevWeight(w),
            (Some(p), None) => TransitionPrior::Persistence(p),
            (None, None) => TransitionPrior::Uniform,
        }
    }
}

/// Form of P(T | T^{t-1}). Every form is roster-size independent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum TransitionPrior {
    Uniform,
    /// Mass kept on the previous target; the rest is shared evenly.
    Persistence(f64),
    /// Weight of the previous target against 1 for each other character.
    PrevWeight(f64),
}

impl TransitionPrior {
    /// Row of the transition table for a roster of `n` given the previous
    /// target's index. No previous target gives the uniform row.
    pub fn row(&self, n: usize, prev: Option<usize>) -> Vec<f64> {
        let uniform = vec![1.0 / n as f64; n];
        let Some(prev) = prev else { return uniform };
        if n == 1 {
            return vec![1.0];
        }
        match *self {
            TransitionPrior::Uniform => uniform,
            TransitionPrior::Persistence(p) => {
                let other = (1.0 - p) / (n - 1) as f64;
                (0..n).map(|t| if t == prev { p } else { other }).collect()
            }
            TransitionPrior::PrevWeight(w) => {
                let z = w + (n - 1) as f64;
                (0..n).map(|t| if t == prev { w / z } else { 1.0 / z }).collect()
            }
        }
    }
}
