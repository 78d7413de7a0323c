//! Discrete variable families and their domains.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::prob::Domain;

macro_rules! label_enum {
    ($(#[$meta:meta])* $name:ident, $domain:literal { $($variant:ident => $label:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $label)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn label(self) -> &'static str {
                match self { $($name::$variant => $label),+ }
            }

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn from_index(i: usize) -> Option<Self> {
                Self::ALL.get(i).copied()
            }

            pub fn domain() -> Domain {
                Domain::new($domain, Self::ALL.iter().map(|v| v.label())).expect("static domain")
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::ALL
                    .iter()
                    .copied()
                    .find(|v| v.label() == s)
                    .ok_or_else(|| format!("unknown {} `{}`", $domain, s))
            }
        }
    };
}

label_enum!(
    /// Distance band around the druid.
    DistanceZone, "distance" {
        Contact => "Contact",
        Close => "Close",
        Far => "Far",
        VeryFar => "VeryFar",
    }
);

label_enum!(
    /// Recent hit-point trend.
    DeltaHp, "delta_hp" {
        Minus => "minus",
        Zero => "zero",
        Plus => "plus",
    }
);

label_enum!(
    Class, "class" {
        Tank => "Tank",
        Contact => "Contact",
        Ranged => "Ranged",
        Healer => "Healer",
    }
);

label_enum!(
    /// Combined fire/ice/nature resistance flags.
    Resists, "resists" {
        Nothing => "Nothing",
        Fire => "Fire",
        Ice => "Ice",
        Nature => "Nature",
        FireIce => "FireIce",
        IceNat => "IceNat",
        FireNat => "FireNat",
        All => "All",
    }
);

label_enum!(
    Element, "element" {
        Fire => "Fire",
        Ice => "Ice",
        Nature => "Nature",
    }
);

label_enum!(
    Skill, "skill" {
        SmallHeal => "small_heal",
        BigHeal => "big_heal",
        Hot => "HOT",
        PoisonAbol => "poison_abol",
        MaledictionAbol => "malediction_abol",
        BuffArmor => "buff_armor",
        RegenMana => "regen_mana",
        SmallDd => "small_dd",
        BigDd => "big_dd",
        Dot => "DOT",
        DebuffArmor => "debuff_armor",
        Root => "root",
    }
);

/// Which side of the fight a skill is meant for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Ally,
    Foe,
}

impl Resists {
    pub fn contains(self, element: Element) -> bool {
        use Element as E;
        use Resists as R;
        matches!(
            (self, element),
            (R::All, _)
                | (R::Fire | R::FireIce | R::FireNat, E::Fire)
                | (R::Ice | R::FireIce | R::IceNat, E::Ice)
                | (R::Nature | R::IceNat | R::FireNat, E::Nature)
        )
    }
}

impl Skill {
    /// Default side classification of the druid skills.
    pub fn default_side(self) -> Side {
        if self.index() < Skill::SmallDd.index() {
            Side::Ally
        } else {
            Side::Foe
        }
    }

    /// Element used by the skill model's resist factor. `debuff_armor` is
    /// treated as non-elemental there.
    pub fn model_element(self) -> Option<Element> {
        match self {
            Skill::SmallDd | Skill::Dot | Skill::Root => Some(Element::Nature),
            Skill::BigDd => Some(Element::Fire),
            _ => None,
        }
    }

    pub fn is_heal(self) -> bool {
        matches!(self, Skill::SmallHeal | Skill::BigHeal | Skill::Hot)
    }
}

pub const HP_LEVELS: usize = 10;

pub fn hp_domain() -> Domain {
    Domain::new("hp", (0..HP_LEVELS).map(|l| l.to_string())).expect("static domain")
}

pub fn bool_domain(name: &str) -> Domain {
    Domain::new(name, ["false", "true"]).expect("static domain")
}

pub fn ally_domain() -> Domain {
    bool_domain("ally")
}

pub fn imminent_death_domain() -> Domain {
    bool_domain("imminent_death")
}

/// The binary condition "T designates this character".
pub fn is_target_domain() -> Domain {
    bool_domain("is_target")
}

pub fn bool_label(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resist_membership() {
        assert!(Resists::FireIce.contains(Element::Fire));
        assert!(Resists::FireIce.contains(Element::Ice));
        assert!(!Resists::FireIce.contains(Element::Nature));
        assert!(Resists::All.contains(Element::Nature));
        assert!(!Resists::Nothing.contains(Element::Fire));
        let nature: Vec<_> = Resists::ALL.iter().filter(|r| r.contains(Element::Nature)).collect();
        assert_eq!(
            nature,
            [&Resists::Nature, &Resists::IceNat, &Resists::FireNat, &Resists::All]
        );
    }

    #[test]
    fn skill_sides() {
        let ally: Vec<_> = Skill::ALL.iter().filter(|s| s.default_side() == Side::Ally).collect();
        assert_eq!(ally.len(), 7);
        assert_eq!(Skill::Root.default_side(), Side::Foe);
        assert_eq!(Skill::RegenMana.default_side(), Side::Ally);
    }

    #[test]
    fn labels_round_trip() {
        for s in Skill::ALL {
            assert_eq!(s.label().parse::<Skill>().unwrap(), *s);
        }
        assert_eq!(serde_json::to_string(&Skill::Hot).unwrap(), "\"HOT\"");
        assert_eq!(Skill::domain().len(), 12);
        assert_eq!(Resists::domain().len(), 8);
    }
}
