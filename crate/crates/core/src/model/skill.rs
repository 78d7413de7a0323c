use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use super::target::{high_hp_weights, low_hp_weights};
use super::CharacterState;
use crate::error::ModelError;
use crate::prob::{uniform, ConditionalTable, Distribution, Domain};
use crate::vars::{
    ally_domain, hp_domain, imminent_death_domain, is_target_domain, Class, DeltaHp, DistanceZone, Resists, Side,
    Skill, HP_LEVELS,
};

/// Names of the per-character factors, in evaluation order.
pub const SKILL_TABLES: [&str; 7] = [
    "hp",
    "distance",
    "ally",
    "delta_hp",
    "resists",
    "imminent_death",
    "class",
];

/// Per-character factors of the skill decomposition, conditioned on the
/// skill and on `is_target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillModel {
    pub skills: Domain,
    /// Side of each skill, aligned with `skills`.
    pub sides: Vec<Side>,
    pub prior: Distribution,
    /// P(HP_i | A_i, C_i, S, is_target)
    pub hp: ConditionalTable,
    /// P(D_i | A_i, S, is_target)
    pub distance: ConditionalTable,
    /// P(A_i | S, is_target)
    pub ally: ConditionalTable,
    /// P(dHP_i | A_i, S, is_target)
    pub delta_hp: ConditionalTable,
    /// P(R_i | C_i, S, is_target)
    pub resists: ConditionalTable,
    /// P(ID_i | S, is_target)
    pub imminent_death: ConditionalTable,
    /// P(C_i | A_i, S, is_target)
    pub class: ConditionalTable,
}

const ROOT_DISTANCE: [f64; 4] = [0.1, 0.4, 0.4, 0.1];
/// Wounded trend of an ally receiving a heal.
const HEALED_TREND: [f64; 3] = [0.7, 0.2, 0.1];
/// Heals lean towards tanks.
const HEALED_CLASS: [f64; 4] = [0.4, 0.2, 0.2, 0.2];
/// Armor debuffs lean towards tanks.
const DEBUFFED_CLASS: [f64; 4] = [0.55, 0.15, 0.15, 0.15];

fn id_true(skill: Skill) -> f64 {
    match skill {
        Skill::BigHeal | Skill::BigDd => 0.7,
        Skill::SmallHeal => 0.4,
        _ => 0.3,
    }
}

pub fn build_skill_model(params: &ModelParams) -> Result<SkillModel, ModelError> {
    params.validate()?;
    const OTHER: usize = 0;
    let skill_d = Skill::domain();
    let ally_d = ally_domain();
    let class_d = Class::domain();
    let is_target = is_target_domain();
    let skill = |i: usize| Skill::from_index(i).unwrap();

    let hp = ConditionalTable::from_fn(
        hp_domain(),
        vec![ally_d.clone(), class_d.clone(), skill_d.clone(), is_target.clone()],
        |a| {
            if a[3] == OTHER {
                return vec![1.0; HP_LEVELS];
            }
            match skill(a[2]) {
                Skill::BigHeal => low_hp_weights(4.0),
                Skill::SmallHeal | Skill::Hot => low_hp_weights(2.0),
                Skill::DebuffArmor => high_hp_weights(2.0),
                _ => vec![1.0; HP_LEVELS],
            }
        },
    )?;
    let distance = ConditionalTable::from_fn(
        DistanceZone::domain(),
        vec![ally_d.clone(), skill_d.clone(), is_target.clone()],
        |a| {
            if a[2] != OTHER && skill(a[1]) == Skill::Root {
                ROOT_DISTANCE.to_vec()
            } else {
                vec![1.0; 4]
            }
        },
    )?;
    let ally = ConditionalTable::from_fn(ally_d.clone(), vec![skill_d.clone(), is_target.clone()], |a| {
        if a[1] == OTHER {
            return vec![1.0, 1.0];
        }
        match skill(a[0]).default_side() {
            Side::Ally => vec![0.0, 1.0],
            Side::Foe => vec![1.0, 0.0],
        }
    })?;
    let delta_hp = ConditionalTable::from_fn(
        DeltaHp::domain(),
        vec![ally_d.clone(), skill_d.clone(), is_target.clone()],
        |a| {
            if a[2] != OTHER && a[0] == 1 && skill(a[1]).is_heal() {
                HEALED_TREND.to_vec()
            } else {
                vec![1.0; 3]
            }
        },
    )?;
    let resists = ConditionalTable::from_fn(
        Resists::domain(),
        vec![class_d.clone(), skill_d.clone(), is_target.clone()],
        |a| match skill(a[1]).model_element() {
            Some(element) if a[2] != OTHER => Resists::ALL
                .iter()
                .map(|r| {
                    if r.contains(element) {
                        params.resist_penalty
                    } else {
                        1.0
                    }
                })
                .collect(),
            _ => vec![1.0; Resists::ALL.len()],
        },
    )?;
    let imminent_death =
        ConditionalTable::from_fn(imminent_death_domain(), vec![skill_d.clone(), is_target.clone()], |a| {
            if a[1] == OTHER {
                return vec![1.0, 1.0];
            }
            let p = id_true(skill(a[0]));
            vec![1.0 - p, p]
        })?;
    let class = ConditionalTable::from_fn(class_d, vec![ally_d, skill_d.clone(), is_target], |a| {
        if a[2] == OTHER {
            return vec![1.0; 4];
        }
        match (a[0] == 1, skill(a[1])) {
            (true, s) if s.is_heal() => HEALED_CLASS.to_vec(),
            (false, Skill::DebuffArmor) => DEBUFFED_CLASS.to_vec(),
            _ => vec![1.0; 4],
        }
    })?;

    let mut model = SkillModel {
        prior: uniform(&skill_d),
        sides: Skill::ALL.iter().map(|s| s.default_side()).collect(),
        skills: skill_d,
        hp,
        distance,
        ally,
        delta_hp,
        resists,
        imminent_death,
        class,
    };
    for (key, table) in &params.table_overrides {
        if let Some(name) = key.strip_prefix("skill.") {
            model.replace_table(name, table.clone())?;
        }
    }
    Ok(model)
}

impl SkillModel {
    pub fn table(&self, name: &str) -> Option<&ConditionalTable> {
        Some(match name {
            "hp" => &self.hp,
            "distance" => &self.distance,
            "ally" => &self.ally,
            "delta_hp" => &self.delta_hp,
            "resists" => &self.resists,
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
            "resists" => &mut self.resists,
            "imminent_death" => &mut self.imminent_death,
            "class" => &mut self.class,
            _ => return None,
        })
    }

    pub fn replace_table(&mut self, name: &str, table: ConditionalTable) -> Result<(), ModelError> {
        let slot = self
            .table_mut(name)
            .ok_or_else(|| ModelError::InvalidParams(format!("no skill table `{name}`")))?;
        if !slot.same_shape(&table) {
            return Err(ModelError::InvalidParams(format!("table `{name}` has the wrong shape")));
        }
        *slot = table;
        Ok(())
    }

    pub fn tables(&self) -> impl Iterator<Item = (&'static str, &ConditionalTable)> {
        SKILL_TABLES.into_iter().map(move |n| (n, self.table(n).unwrap()))
    }

    pub fn skill_count(&self) -> usize {
        self.skills.len()
    }

    pub fn side(&self, skill: Skill) -> Side {
        self.sides[skill.index()]
    }

    /// The seven factor values for one character under skill `s`.
    #[inline]
    pub fn factors(&self, c: &CharacterState, s: usize, targeted: bool) -> [f64; 7] {
        let a = usize::from(c.ally);
        let cl = c.class.index();
        let t = usize::from(targeted);
        [
            self.hp.prob(&[a, cl, s, t], usize::from(c.hp_level)),
            self.distance.prob(&[a, s, t], c.distance.index()),
            self.ally.prob(&[s, t], a),
            self.delta_hp.prob(&[a, s, t], c.delta_hp.index()),
            self.resists.prob(&[cl, s, t], c.resists.index()),
            self.imminent_death.prob(&[s, t], usize::from(c.imminent_death)),
            self.class.prob(&[a, s, t], cl),
        ]
    }
}
