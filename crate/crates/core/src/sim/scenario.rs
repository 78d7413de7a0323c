use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::skills::{default_skills, SkillSpec};
use crate::error::SimError;
use crate::perception::PerceptionConfig;
use crate::vars::{Class, Resists, Skill};

/// Behavior driving an entity each tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// The controlled character; acts through a decision policy.
    Druid,
    /// Hits its aggro target.
    Foe,
    /// Heals the most wounded ally below half health.
    Healer,
    /// Hits its focus foe.
    Attacker,
    Idle,
}

/// Lingering effect a foe's hits leave on the victim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Affliction {
    Poison,
    Curse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub id: String,
    pub ally: bool,
    pub class: Class,
    pub resists: Resists,
    pub hp: u32,
    pub hp_max: u32,
    #[serde(default)]
    pub mana: u32,
    #[serde(default)]
    pub mana_max: u32,
    pub distance_m: f64,
    pub policy: PolicyKind,
    /// Initial attack target (foes) or focus foe (attackers).
    #[serde(default)]
    pub aggro: Option<String>,
    /// Damage per hit, or heal amount for healers.
    #[serde(default)]
    pub power: u32,
    #[serde(default)]
    pub inflicts: Option<Affliction>,
    /// Hit points over the ticks before the fight starts, oldest first,
    /// ending with `hp`.
    #[serde(default)]
    pub hp_history: Vec<u32>,
}

/// A complete fight description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub roster: Vec<RosterEntry>,
    #[serde(default = "default_skills")]
    pub skills: Vec<SkillSpec>,
    #[serde(default)]
    pub perception: PerceptionConfig,
    #[serde(default)]
    pub prev_target: Option<String>,
    #[serde(default = "default_mana_regen")]
    pub druid_mana_regen: u32,
}

fn default_mana_regen() -> u32 {
    2
}

/// The two builtin fights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Setup {
    A,
    B,
}

impl std::str::FromStr for Setup {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(Setup::A),
            "B" | "b" => Ok(Setup::B),
            other => Err(format!("unknown setup `{other}`")),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn entry(
    id: &str,
    ally: bool,
    class: Class,
    resists: Resists,
    hp: u32,
    hp_max: u32,
    distance_m: f64,
    policy: PolicyKind,
    aggro: Option<&str>,
    power: u32,
) -> RosterEntry {
    RosterEntry {
        id: id.to_string(),
        ally,
        class,
        resists,
        hp,
        hp_max,
        mana: 0,
        mana_max: 0,
        distance_m,
        policy,
        aggro: aggro.map(str::to_string),
        power,
        inflicts: None,
        hp_history: Vec::new(),
    }
}

/// Two foes (the Lich and its Add) against four allies and the druid.
///
/// In A the main tank is low and dropping fast under the Lich. In B the
/// Add is also nearly dead: everyone focuses it while it hits the tank.
/// Hit points are chosen so that perception flags exactly the characters
/// drawn as dying in the reference figure.
pub fn builtin_setup(which: Setup) -> Scenario {
    use Class::*;
    use PolicyKind as P;
    let focus = match which {
        Setup::A => "Lich",
        Setup::B => "Add",
    };
    let mut lich = entry(
        "Lich",
        false,
        Tank,
        Resists::FireIce,
        1000,
        1000,
        30.0,
        P::Foe,
        Some("MT"),
        10,
    );
    lich.inflicts = Some(Affliction::Curse);
    let mut add = match which {
        Setup::A => entry(
            "Add",
            false,
            Contact,
            Resists::Nothing,
            300,
            300,
            30.0,
            P::Foe,
            Some("Warrior"),
            8,
        ),
        Setup::B => {
            let mut add = entry(
                "Add",
                false,
                Contact,
                Resists::Nothing,
                40,
                300,
                30.0,
                P::Foe,
                Some("MT"),
                8,
            );
            add.hp_history = vec![100, 70, 40];
            add
        }
    };
    add.inflicts = Some(Affliction::Poison);
    // A quarter of its health in A. Slightly more in B, where the Add is
    // the more urgent of the two.
    let mt_hp = match which {
        Setup::A => 50,
        Setup::B => 60,
    };
    let mut mt = entry(
        "MT",
        true,
        Tank,
        Resists::Nothing,
        mt_hp,
        200,
        30.0,
        P::Attacker,
        Some("Lich"),
        5,
    );
    mt.hp_history = vec![mt_hp + 40, mt_hp + 20, mt_hp];
    let mut druid = entry(
        "Druid",
        true,
        Healer,
        Resists::Nothing,
        100,
        100,
        0.0,
        P::Druid,
        None,
        0,
    );
    druid.mana = 100;
    druid.mana_max = 100;
    Scenario {
        name: format!("setup-{which:?}"),
        roster: vec![
            lich,
            add,
            mt,
            entry(
                "Warrior",
                true,
                Contact,
                Resists::Nothing,
                150,
                150,
                30.0,
                P::Attacker,
                Some(focus),
                12,
            ),
            entry(
                "Hunter",
                true,
                Ranged,
                Resists::Nothing,
                100,
                100,
                15.0,
                P::Attacker,
                Some(focus),
                12,
            ),
            entry(
                "Priest",
                true,
                Healer,
                Resists::Nothing,
                100,
                100,
                10.0,
                P::Healer,
                None,
                20,
            ),
            druid,
        ],
        skills: default_skills(),
        perception: PerceptionConfig::default(),
        prev_target: Some("Lich".to_string()),
        druid_mana_regen: default_mana_regen(),
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| SimError::BadScenario(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// `A`, `B`, or a path to a JSON scenario file.
    pub fn resolve(spec: &str) -> Result<Self, SimError> {
        match spec.parse::<Setup>() {
            Ok(setup) => Ok(builtin_setup(setup)),
            Err(_) => Self::load(Path::new(spec)),
        }
    }

    /// Like [`Scenario::resolve`], but a bare name that is not a file is
    /// looked up as `<dir>/<name>.json`.
    pub fn resolve_in(spec: &str, dir: Option<&Path>) -> Result<Self, SimError> {
        if spec.parse::<Setup>().is_ok() || Path::new(spec).is_file() {
            return Self::resolve(spec);
        }
        match dir {
            Some(dir) if !spec.contains(['/', '\\']) => {
                let file = if spec.ends_with(".json") {
                    spec.to_string()
                } else {
                    format!("{spec}.json")
                };
                Self::load(&dir.join(file))
            }
            _ => Err(SimError::BadScenario(format!("unknown scenario `{spec}`"))),
        }
    }

    pub fn druid_id(&self) -> Option<&str> {
        self.roster
            .iter()
            .find(|e| e.policy == PolicyKind::Druid)
            .map(|e| e.id.as_str())
    }

    pub fn skill(&self, skill: Skill) -> Option<&SkillSpec> {
        self.skills.iter().find(|s| s.name == skill)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::BadScenario(m));
        if self.roster.is_empty() {
            return bad("empty roster".into());
        }
        let mut ids = BTreeSet::new();
        for e in &self.roster {
            if !ids.insert(e.id.as_str()) {
                return bad(format!("duplicate id `{}`", e.id));
            }
            if e.hp_max == 0 || e.hp == 0 || e.hp > e.hp_max {
                return bad(format!("`{}` has hp {}/{}", e.id, e.hp, e.hp_max));
            }
            if e.mana > e.mana_max {
                return bad(format!("`{}` has mana above its max", e.id));
            }
            if e.distance_m.is_nan() || e.distance_m < 0.0 {
                return bad(format!("`{}` has a negative distance", e.id));
            }
            if let Some(last) = e.hp_history.last() {
                if *last != e.hp || e.hp_history.iter().any(|h| *h > e.hp_max) {
                    return bad(format!("`{}` has an inconsistent hp history", e.id));
                }
            }
        }
        for e in &self.roster {
            if let Some(a) = &e.aggro {
                if !ids.contains(a.as_str()) {
                    return bad(format!("`{}` aggro names unknown `{a}`", e.id));
                }
            }
        }
        let druids = self.roster.iter().filter(|e| e.policy == PolicyKind::Druid).count();
        if druids != 1 {
            return bad(format!("expected exactly one druid, found {druids}"));
        }
        for skill in Skill::ALL {
            match self.skills.iter().filter(|s| s.name == *skill).count() {
                1 => {}
                k => return bad(format!("skill {skill} is defined {k} times")),
            }
        }
        for s in &self.skills {
            s.validate().map_err(SimError::BadScenario)?;
        }
        if let Some(p) = &self.prev_target {
            if !ids.contains(p.as_str()) {
                return bad(format!("prev_target names unknown `{p}`"));
            }
        }
        if self.perception.window == 0 {
            return bad("perception window must be at least 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolve_in_directory() {
        let dir = std::env::temp_dir().join(format!("bayes-arena-scn-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let mut s = builtin_setup(Setup::B);
        s.name = "raid".into();
        std::fs::write(dir.join("raid.json"), serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(Scenario::resolve_in("raid", Some(&dir)).unwrap(), s);
        assert_eq!(Scenario::resolve_in("a", Some(&dir)).unwrap(), builtin_setup(Setup::A));
        assert!(Scenario::resolve_in("raid", None).is_err());
        assert!(Scenario::resolve_in("nope", Some(&dir)).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn builtins_are_valid() {
        for setup in [Setup::A, Setup::B] {
            let s = builtin_setup(setup);
            s.validate().unwrap();
            assert_eq!(s.roster.len(), 7);
            assert_eq!(s.roster.iter().filter(|e| !e.ally).count(), 2);
        }
    }

    #[test]
    fn json_round_trip() {
        let s = builtin_setup(Setup::B);
        let text = serde_json::to_string_pretty(&s).unwrap();
        assert_eq!(Scenario::from_json(&text).unwrap(), s);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut s = builtin_setup(Setup::A);
        s.roster[0].aggro = Some("Nobody".into());
        assert!(s.validate().is_err());
        let mut s = builtin_setup(Setup::A);
        s.skills.pop();
        assert!(s.validate().is_err());
        let mut s = builtin_setup(Setup::A);
        s.roster[6].policy = PolicyKind::Idle;
        assert!(s.validate().is_err());
        assert!(Scenario::resolve("C-does-not-exist.json").is_err());
    }
}
