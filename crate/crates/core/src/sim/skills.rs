use serde::{Deserialize, Serialize};

use crate::vars::{Element, Side, Skill};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillKind {
    Direct,
    OverTime,
    Flag,
    Cc,
    Resource,
}

/// Mechanics of one druid skill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillSpec {
    pub name: Skill,
    pub side: Side,
    pub kind: SkillKind,
    #[serde(default)]
    pub element: Option<Element>,
    /// Points, points per tick, or percent for armor flags.
    pub amount: u32,
    #[serde(default)]
    pub duration_ticks: u32,
    pub mana_cost: u32,
    #[serde(default)]
    pub cooldown_ticks: u32,
    pub range_m: f64,
    #[serde(default)]
    pub self_only: bool,
}

impl SkillSpec {
    pub fn validate(&self) -> Result<(), String> {
        if matches!(self.kind, SkillKind::OverTime | SkillKind::Cc | SkillKind::Flag) && self.duration_ticks == 0 {
            return Err(format!("{} needs a duration", self.name));
        }
        if self.range_m.is_nan() || self.range_m < 0.0 {
            return Err(format!("{} has a negative range", self.name));
        }
        Ok(())
    }
}

const RANGE: f64 = 40.0;

#[allow(clippy::too_many_arguments)]
fn spec(
    name: Skill,
    kind: SkillKind,
    element: Option<Element>,
    amount: u32,
    duration_ticks: u32,
    mana_cost: u32,
    cooldown_ticks: u32,
) -> SkillSpec {
    SkillSpec {
        name,
        side: name.default_side(),
        kind,
        element,
        amount,
        duration_ticks,
        mana_cost,
        cooldown_ticks,
        range_m: RANGE,
        self_only: name == Skill::RegenMana,
    }
}

/// The druid's twelve skills with the default calibration numbers.
pub fn default_skills() -> Vec<SkillSpec> {
    use Element::*;
    use SkillKind::*;
    vec![
        spec(Skill::SmallHeal, Direct, None, 20, 0, 15, 0),
        spec(Skill::BigHeal, Direct, None, 50, 0, 30, 2),
        spec(Skill::Hot, OverTime, None, 8, 5, 20, 0),
        spec(Skill::PoisonAbol, Direct, None, 0, 0, 10, 0),
        spec(Skill::MaledictionAbol, Direct, None, 0, 0, 10, 0),
        spec(Skill::BuffArmor, Flag, None, 20, 5, 15, 0),
        spec(Skill::RegenMana, Resource, None, 30, 0, 0, 10),
        spec(Skill::SmallDd, Direct, Some(Nature), 15, 0, 10, 0),
        spec(Skill::BigDd, Direct, Some(Fire), 40, 0, 25, 3),
        spec(Skill::Dot, OverTime, Some(Nature), 6, 6, 15, 0),
        // deals no damage, so resists never apply
        spec(Skill::DebuffArmor, Flag, None, 20, 5, 10, 0),
        spec(Skill::Root, Cc, Some(Nature), 0, 3, 12, 6),
    ]
}
