use serde::{Deserialize, Serialize};

use super::params::{ModelParams, TransitionPrior};
use super::CharacterState;
use crate::error::ModelError;
use crate::prob::{ConditionalTable, Domain};
use crate::vars::{
    ally_domain, hp_domain, imminent_death_domain, is_target_domain, Class, DeltaHp, DistanceZone, HP_LEVELS,
};

/// Names of the per-character factors, in evaluation order.
pub const TARGET_TABLES: [&str; 6] = ["hp", "distance", "ally", "delta_hp", "imminent_death", "class"];

/// Per-character factors of the target decomposition.
///
/// Every table is conditioned on `is_target` ("T designates this
/// character") instead of the full target variable, which keeps the tables
/// independent of the roster size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetModel {
    pub n: usize,
    pub transition: TransitionPrior,
    /// P(HP_i | A_i, C_i, is_target)
    pub hp: ConditionalTable,
    /// P(D_i | A_i, is_target)
    pub distance: ConditionalTable,
    /// P(A_i | is_target)
    pub ally: ConditionalTable,
    /// P(dHP_i | A_i, C_i, is_target)
    pub delta_hp: ConditionalTable,
    /// P(ID_i | is_target)
    pub imminent_death: ConditionalTable,
    /// P(C_i | A_i, is_target)
    pub class: ConditionalTable,
}

pub(crate) fn low_hp_weights(exponent: f64) -> Vec<f64> {
    (0..HP_LEVELS)
        .map(|l| ((HP_LEVELS - l) as f64).powf(exponent))
        .collect()
}

pub(crate) fn high_hp_weights(exponent: f64) -> Vec<f64> {
    (0..HP_LEVELS).map(|l| ((l + 1) as f64).powf(exponent)).collect()
}

const FOE_DISTANCE: [f64; 4] = [0.1, 0.2, 0.5, 0.2];
const WOUNDED_TREND: [f64; 3] = [0.6, 0.25, 0.15];

pub fn build_target_model(params: &ModelParams, n: usize) -> Result<TargetModel, ModelError> {
    params.validate()?;
    if n == 0 {
        return Err(ModelError::InvalidParams("roster size must be at least 1".into()));
    }
    const OTHER: usize = 0;
    let ally_d = ally_domain();
    let class_d = Class::domain();
    let is_target = is_target_domain();

    let hp = ConditionalTable::from_fn(
        hp_domain(),
        vec![ally_d.clone(), class_d.clone(), is_target.clone()],
        |a| {
            let (ally, class) = (a[0] == 1, Class::from_index(a[1]).unwrap());
            if a[2] != OTHER && ally && matches!(class, Class::Tank | Class::Healer) {
                low_hp_weights(params.hp_shape_exponent)
            } else {
                vec![1.0; HP_LEVELS]
            }
        },
    )?;
    let distance = ConditionalTable::from_fn(DistanceZone::domain(), vec![ally_d.clone(), is_target.clone()], |a| {
        if a[1] != OTHER && a[0] == 0 {
            FOE_DISTANCE.to_vec()
        } else {
            vec![1.0; 4]
        }
    })?;
    let ally = ConditionalTable::from_fn(ally_d.clone(), vec![is_target.clone()], |a| {
        if a[0] != OTHER {
            vec![params.e_ally, 1.0 - params.e_ally]
        } else {
            vec![1.0, 1.0]
        }
    })?;
    let delta_hp = ConditionalTable::from_fn(
        DeltaHp::domain(),
        vec![ally_d.clone(), class_d.clone(), is_target.clone()],
        |a| {
            let (ally, class) = (a[0] == 1, Class::from_index(a[1]).unwrap());
            let named = (!ally && class == Class::Healer) || (ally && class == Class::Tank);
            if a[2] != OTHER && named {
                WOUNDED_TREND.to_vec()
            } else {
                vec![1.0; 3]
            }
        },
    )?;
    let imminent_death = ConditionalTable::from_fn(imminent_death_domain(), vec![is_target.clone()], |a| {
        if a[0] != OTHER {
            vec![1.0 - params.e_id, params.e_id]
        } else {
            vec![1.0, 1.0]
        }
    })?;
    let class = ConditionalTable::from_fn(class_d, vec![ally_d, is_target], |a| {
        match (&params.class_population, a[1]) {
            (Some(pop), t) if t != OTHER => {
                if a[0] == 1 {
                    pop.ally.to_vec()
                } else {
                    pop.foe.to_vec()
                }
            }
            _ => vec![1.0; 4],
        }
    })?;

    let mut model = TargetModel {
        n,
        transition: params.transition(),
        hp,
        distance,
        ally,
        delta_hp,
        imminent_death,
        class,
    };
    for (key, table) in &params.table_overrides {
        if let Some(name) = key.strip_prefix("target.") {
            model.replace_table(name, table.clone())?;
        }
    }
    Ok(model)
}

impl TargetModel {
    pub fn table(&self, name: &str) -> Option<&ConditionalTable> {
        Some(match name {
            "hp" => &self.hp,
            "distance" => &self.distance,
            "ally" => &self.ally,
            "delta_hp" => &self.delta_hp,
            "imminent_death" => &self.imminent_death,
            "class" => &self.class,
            _ => return None,
        })
    }

    fn table_mut(&mut self, name: &str) -> Option<&mut ConditionalTable> {
        Some(match name {
            "hp" => &mut self.hp,
            "distance" => &mut self.distance,
            "ally" => &mut self.ally,
            "delta_hp" => &mut self.delta_hp,
            "imminent_death" => &mut self.imminent_death,
            "class" => &mut self.class,
            _ => return None,
        })
    }

    /// Swaps in a table of identical shape.
    pub fn replace_table(&mut self, name: &str, table: ConditionalTable) -> Result<(), ModelError> {
        let slot = self
            .table_mut(name)
            .ok_or_else(|| ModelError::InvalidParams(format!("no target table `{name}`")))?;
        if !slot.same_shape(&table) {
            return Err(ModelError::InvalidParams(format!("table `{name}` has the wrong shape")));
        }
        *slot = table;
        Ok(())
    }

    pub fn tables(&self) -> impl Iterator<Item = (&'static str, &ConditionalTable)> {
        TARGET_TABLES.into_iter().map(move |n| (n, self.table(n).unwrap()))
    }

    /// Explicit transition table over `targets`, with an extra `<none>`
    /// parent value for "no previous target".
    pub fn transition_table(&self, targets: &Domain) -> ConditionalTable {
        let n = targets.len();
        let prev = Domain::new(
            "prev_target",
            targets
                .values()
                .iter()
                .cloned()
                .chain(std::iter::once("<none>".to_string())),
        )
        .expect("target ids are unique and never `<none>`");
        let rows = (0..=n).map(|p| self.transition.row(n, (p < n).then_some(p))).collect();
        ConditionalTable::new(targets.clone(), vec![prev], rows).expect("transition rows are normalized")
    }

    /// The six factor values for one character.
    #[inline]
    pub fn factors(&self, c: &CharacterState, targeted: bool) -> [f64; 6] {
        let a = usize::from(c.ally);
        let cl = c.class.index();
        let t = usize::from(targeted);
        [
            self.hp.prob(&[a, cl, t], usize::from(c.hp_level)),
            self.distance.prob(&[a, t], c.distance.index()),
            self.ally.prob(&[t], a),
            self.delta_hp.prob(&[a, cl, t], c.delta_hp.index()),
            self.imminent_death.prob(&[t], usize::from(c.imminent_death)),
            self.class.prob(&[a, t], cl),
        ]
    }

    /// True when every `is_target = false` row is uniform.
    pub fn non_target_rows_uniform(&self) -> bool {
        self.tables().all(|(_, t)| {
            (0..t.row_count())
                .filter(|&r| *t.row_assignment(r).last().unwrap() == 0)
                .all(|r| {
                    let row = &t.rows()[r];
                    row.iter().all(|p| (p - row[0]).abs() < 1e-15)
                })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_evidence_rows() {
        let m = build_target_model(&ModelParams::default().with_e_id(0.9), 7).unwrap();
        let ally = m.ally.lookup(&["true"]).unwrap();
        assert_eq!(ally.prob("false"), Some(0.6));
        assert!((ally.prob("true").unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(m.ally.lookup(&["false"]).unwrap().probs(), &[0.5, 0.5]);
        let id = m.imminent_death.lookup(&["true"]).unwrap();
        assert!((id.prob("true").unwrap() - 0.9).abs() < 1e-15);
        assert!(m.non_target_rows_uniform());
    }

    #[test]
    fn tank_hp_shape_is_low_skewed() {
        let m = build_target_model(&ModelParams::default(), 7).unwrap();
        let row = m.hp.lookup(&["true", "Tank", "true"]).unwrap();
        assert!((row.probs()[0] - 100.0 / 385.0).abs() < 1e-15);
        assert!(row.probs().windows(2).all(|w| w[0] > w[1]));
        let foe = m.hp.lookup(&["false", "Tank", "true"]).unwrap();
        assert!(foe.probs().iter().all(|p| (p - 0.1).abs() < 1e-15));
    }

    #[test]
    fn transition_table_rows() {
        let m = build_target_model(&ModelParams::default(), 3).unwrap();
        let targets = Domain::new("target", ["a", "b", "c"]).unwrap();
        let t = m.transition_table(&targets);
        let row = t.lookup(&["b"]).unwrap();
        assert!((row.probs()[1] - 0.4).abs() < 1e-15);
        assert!((row.probs()[0] - 0.3).abs() < 1e-15);
        assert!(t
            .lookup(&["<none>"])
            .unwrap()
            .probs()
            .iter()
            .all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn override_must_match_shape() {
        let mut params = ModelParams::default();
        let wrong = ConditionalTable::uniform(hp_domain(), vec![is_target_domain()]);
        params.table_overrides.insert("target.hp".into(), wrong);
        assert!(build_target_model(&params, 2).is_err());
        let mut params = ModelParams::default();
        let right = ConditionalTable::uniform(ally_domain(), vec![is_target_domain()]);
        params.table_overrides.insert("target.ally".into(), right.clone());
        assert_eq!(build_target_model(&params, 2).unwrap().ally, right);
    }

    #[test]
    fn rejects_empty_roster() {
        assert!(build_target_model(&ModelParams::default(), 0).is_err());
    }
}
