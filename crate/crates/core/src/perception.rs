//! Turns raw world quantities into the model's discrete variables.
//!
//! Two variables are interpolated over a short window of recent ticks: the
//! hit-point trend and the imminent-death flag.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::PerceptionError;
use crate::model::{BattleSnapshot, CharacterState};
use crate::vars::{Class, DeltaHp, DistanceZone, Resists, HP_LEVELS};

/// Thresholds for the interpolated variables and distance bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerceptionConfig {
    /// History length in ticks (samples).
    pub window: usize,
    /// Slope threshold, as a fraction of max hp per tick.
    pub theta: f64,
    /// Time-to-death threshold in ticks.
    pub tau: f64,
    /// Hp fraction at or below which a character is about to die.
    pub low_hp: f64,
    /// Right-inclusive upper bounds of Contact, Close and Far, in meters.
    pub zones: [f64; 3],
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            window: 3,
            theta: 0.02,
            tau: 5.0,
            low_hp: 0.15,
            zones: [5.0, 20.0, 40.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawCharacter {
    pub id: String,
    pub hp: u32,
    pub hp_max: u32,
    pub distance_m: f64,
    pub ally: bool,
    pub class: Class,
    pub resists: Resists,
}

/// Hit points and attackers of every character at one tick.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub tick: i64,
    pub hp: BTreeMap<String, u32>,
    #[serde(default)]
    pub attackers: BTreeMap<String, BTreeSet<String>>,
}

/// Ring buffer of the last `capacity` frames with contiguous ticks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct History {
    capacity: usize,
    frames: VecDeque<Frame>,
}

impl History {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            frames: VecDeque::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn frames(&self) -> impl Iterator<Item = &Frame> {
        self.frames.iter()
    }

    pub fn latest(&self) -> Option<&Frame> {
        self.frames.back()
    }

    pub fn push(&mut self, frame: Frame) -> Result<(), PerceptionError> {
        if let Some(last) = self.frames.back() {
            if frame.tick != last.tick + 1 {
                return Err(PerceptionError::NonContiguous {
                    last: last.tick,
                    next: frame.tick,
                });
            }
        }
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
        }
        self.frames.push_back(frame);
        Ok(())
    }

    /// Hit-point samples of `id`, oldest first.
    pub fn series(&self, id: &str) -> Vec<u32> {
        self.frames.iter().filter_map(|f| f.hp.get(id).copied()).collect()
    }

    pub fn attackers(&self, id: &str) -> Option<&BTreeSet<String>> {
        self.frames.back().and_then(|f| f.attackers.get(id))
    }

    /// Endpoint slope as a fraction of `hp_max` per tick.
    pub fn slope(&self, id: &str, hp_max: u32) -> Result<f64, PerceptionError> {
        let series = self.series(id);
        let (Some(first), Some(last)) = (series.first(), series.last()) else {
            return Err(PerceptionError::UnknownCharacter(id.to_string()));
        };
        if series.len() < 2 || hp_max == 0 {
            return Ok(0.0);
        }
        let span = (series.len() - 1) as f64;
        Ok((f64::from(*last) - f64::from(*first)) / span / f64::from(hp_max))
    }
}

pub fn discretize_hp(hp: u32, hp_max: u32) -> Result<u8, PerceptionError> {
    if hp_max == 0 || hp > hp_max {
        return Err(PerceptionError::InvalidHp { hp, hp_max });
    }
    let level = (u64::from(hp) * HP_LEVELS as u64 / u64::from(hp_max)).min(HP_LEVELS as u64 - 1);
    Ok(level as u8)
}

impl PerceptionConfig {
    pub fn zone(&self, distance_m: f64) -> DistanceZone {
        let [contact, close, far] = self.zones;
        if distance_m <= contact {
            DistanceZone::Contact
        } else if distance_m <= close {
            DistanceZone::Close
        } else if distance_m <= far {
            DistanceZone::Far
        } else {
            DistanceZone::VeryFar
        }
    }
}

/// Distance band with the default thresholds.
pub fn distance_zone(distance_m: f64) -> DistanceZone {
    PerceptionConfig::default().zone(distance_m)
}

pub fn delta_hp(history: &History, id: &str, hp_max: u32, cfg: &PerceptionConfig) -> Result<DeltaHp, PerceptionError> {
    let slope = history.slope(id, hp_max)?;
    Ok(if slope < -cfg.theta {
        DeltaHp::Minus
    } else if slope > cfg.theta {
        DeltaHp::Plus
    } else {
        DeltaHp::Zero
    })
}

/// Low hp, or losing hp fast enough to die within `tau` ticks while under
/// attack.
pub fn imminent_death(
    history: &History,
    id: &str,
    hp: u32,
    hp_max: u32,
    cfg: &PerceptionConfig,
) -> Result<bool, PerceptionError> {
    if hp_max == 0 || hp > hp_max {
        return Err(PerceptionError::InvalidHp { hp, hp_max });
    }
    let slope = history.slope(id, hp_max)?;
    if f64::from(hp) / f64::from(hp_max) <= cfg.low_hp {
        return Ok(true);
    }
    let loss_rate = (-slope).max(0.0) * f64::from(hp_max);
    let attacked = history.attackers(id).is_some_and(|a| !a.is_empty());
    Ok(attacked && loss_rate > 0.0 && f64::from(hp) / loss_rate <= cfg.tau)
}

pub fn build_snapshot(
    raw: &[RawCharacter],
    history: &History,
    prev_target: Option<&str>,
    cfg: &PerceptionConfig,
) -> Result<BattleSnapshot, PerceptionError> {
    if raw.is_empty() {
        return Err(PerceptionError::EmptyRoster);
    }
    let mut characters = Vec::with_capacity(raw.len());
    for r in raw {
        characters.push(CharacterState {
            id: r.id.clone(),
            hp_level: discretize_hp(r.hp, r.hp_max)?,
            distance: cfg.zone(r.distance_m),
            ally: r.ally,
            delta_hp: delta_hp(history, &r.id, r.hp_max, cfg)?,
            imminent_death: imminent_death(history, &r.id, r.hp, r.hp_max, cfg)?,
            class: r.class,
            resists: r.resists,
        });
    }
    Ok(BattleSnapshot::new(characters, prev_target.map(str::to_string))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn history(id: &str, hps: &[u32], attackers: &[&str]) -> History {
        let mut h = History::new(3);
        for (k, hp) in hps.iter().enumerate() {
            let mut frame = Frame {
                tick: k as i64,
                hp: BTreeMap::from([(id.to_string(), *hp)]),
                attackers: BTreeMap::new(),
            };
            if k + 1 == hps.len() {
                frame
                    .attackers
                    .insert(id.to_string(), attackers.iter().map(|a| a.to_string()).collect());
            }
            h.push(frame).unwrap();
        }
        h
    }

    #[test]
    fn hp_levels() {
        assert_eq!(discretize_hp(0, 100).unwrap(), 0);
        assert_eq!(discretize_hp(100, 100).unwrap(), 9);
        assert_eq!(discretize_hp(55, 100).unwrap(), 5);
        assert!(discretize_hp(101, 100).is_err());
        assert!(discretize_hp(0, 0).is_err());
    }

    #[test]
    fn zones() {
        assert_eq!(distance_zone(3.0), DistanceZone::Contact);
        assert_eq!(distance_zone(5.0), DistanceZone::Contact);
        assert_eq!(distance_zone(25.0), DistanceZone::Far);
        assert_eq!(distance_zone(50.0), DistanceZone::VeryFar);
    }

    #[test]
    fn trends() {
        let cfg = PerceptionConfig::default();
        assert_eq!(
            delta_hp(&history("x", &[100, 100, 100], &[]), "x", 100, &cfg).unwrap(),
            DeltaHp::Zero
        );
        let falling = history("x", &[100, 90, 80], &[]);
        assert!((falling.slope("x", 100).unwrap() + 0.10).abs() < 1e-15);
        assert_eq!(delta_hp(&falling, "x", 100, &cfg).unwrap(), DeltaHp::Minus);
        assert_eq!(
            delta_hp(&history("x", &[80, 85, 90], &[]), "x", 100, &cfg).unwrap(),
            DeltaHp::Plus
        );
        assert!(matches!(
            delta_hp(&falling, "y", 100, &cfg),
            Err(PerceptionError::UnknownCharacter(_))
        ));
    }

    #[test]
    fn dying() {
        let cfg = PerceptionConfig::default();
        assert!(imminent_death(&history("x", &[10, 10, 10], &[]), "x", 10, 100, &cfg).unwrap());
        assert!(!imminent_death(&history("x", &[100, 100, 100], &[]), "x", 100, 100, &cfg).unwrap());
        assert!(imminent_death(&history("x", &[50, 40, 30], &["lich"]), "x", 30, 100, &cfg).unwrap());
        // same loss without an attacker is not flagged
        assert!(!imminent_death(&history("x", &[50, 40, 30], &[]), "x", 30, 100, &cfg).unwrap());
    }

    #[test]
    fn ring_buffer_keeps_window() {
        let h = history("x", &[100, 90, 80, 70, 60], &[]);
        assert_eq!(h.series("x"), vec![80, 70, 60]);
        let mut h = History::new(3);
        h.push(Frame {
            tick: 0,
            hp: BTreeMap::new(),
            attackers: BTreeMap::new(),
        })
        .unwrap();
        assert!(h
            .push(Frame {
                tick: 2,
                hp: BTreeMap::new(),
                attackers: BTreeMap::new()
            })
            .is_err());
    }

    #[test]
    fn snapshot_from_single_character() {
        let raw = [RawCharacter {
            id: "solo".into(),
            hp: 100,
            hp_max: 100,
            distance_m: 0.0,
            ally: true,
            class: Class::Healer,
            resists: Resists::Nothing,
        }];
        let h = history("solo", &[100], &[]);
        let snap = build_snapshot(&raw, &h, Some("gone"), &PerceptionConfig::default()).unwrap();
        let c = &snap.characters()[0];
        assert_eq!((c.hp_level, c.delta_hp, c.imminent_death), (9, DeltaHp::Zero, false));
        assert_eq!(snap.prev_target(), None);
    }

    proptest! {
        #[test]
        fn hp_level_is_monotone(max in 10u32..5000, a in 0u32..5000, b in 0u32..5000) {
            let (lo, hi) = (a.min(b).min(max), a.max(b).min(max));
            prop_assert!(discretize_hp(lo, max).unwrap() <= discretize_hp(hi, max).unwrap());
        }

        #[test]
        fn zone_is_monotone(a in 0.0f64..100.0, b in 0.0f64..100.0) {
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(distance_zone(lo) <= distance_zone(hi));
        }

        #[test]
        fn trend_flips_under_time_reversal(hps in prop::collection::vec(1u32..=100, 1..=3)) {
            let cfg = PerceptionConfig::default();
            let fwd = delta_hp(&history("x", &hps, &[]), "x", 100, &cfg).unwrap();
            let rev: Vec<u32> = hps.iter().rev().copied().collect();
            let back = delta_hp(&history("x", &rev, &[]), "x", 100, &cfg).unwrap();
            let flipped = match fwd { DeltaHp::Minus => DeltaHp::Plus, DeltaHp::Plus => DeltaHp::Minus, DeltaHp::Zero => DeltaHp::Zero };
            prop_assert_eq!(back, flipped);
        }

        #[test]
        fn lower_hp_never_clears_dying(hps in prop::collection::vec(1u32..=100, 3), hp in 1u32..=100, drop in 0u32..100, attacked: bool) {
            let cfg = PerceptionConfig::default();
            let att: &[&str] = if attacked { &["foe"] } else { &[] };
            let h = history("x", &hps, att);
            let lower = hp.saturating_sub(drop).max(1);
            if imminent_death(&h, "x", hp, 100, &cfg).unwrap() {
                prop_assert!(imminent_death(&h, "x", lower, 100, &cfg).unwrap());
            }
        }
    }

    #[test]
    fn surjective_levels() {
        let levels: BTreeSet<u8> = (0..=10).map(|hp| discretize_hp(hp, 10).unwrap()).collect();
        assert_eq!(levels.len(), 10);
    }
}
