//! Random tables, models and snapshots for property checks.

use rand::Rng;

use crate::model::{build_skill_model, build_target_model};
use crate::model::{BattleSnapshot, CharacterState, ModelParams, SkillModel, TargetModel, TransitionPrior};
use crate::prob::ConditionalTable;
use crate::vars::{Class, DeltaHp, DistanceZone, Resists, HP_LEVELS};

/// A table shaped like `like` with random rows. Each cell is zero with
/// probability `zero_rate`; every row keeps at least one positive cell.
pub fn random_table<R: Rng>(like: &ConditionalTable, zero_rate: f64, rng: &mut R) -> ConditionalTable {
    let k = like.child().len();
    let rows = (0..like.row_count())
        .map(|_| {
            let mut w: Vec<f64> = (0..k)
                .map(|_| {
                    if rng.random_bool(zero_rate) {
                        0.0
                    } else {
                        rng.random_range(0.01..1.0)
                    }
                })
                .collect();
            if w.iter().all(|x| *x == 0.0) {
                w[rng.random_range(0..k)] = 1.0;
            }
            let z: f64 = w.iter().sum();
            w.iter().map(|x| x / z).collect()
        })
        .collect();
    ConditionalTable::new(like.child().clone(), like.parents().to_vec(), rows).expect("shape copied")
}

pub fn random_transition<R: Rng>(rng: &mut R) -> TransitionPrior {
    match rng.random_range(0..3) {
        0 => TransitionPrior::Uniform,
        1 => TransitionPrior::Persistence(rng.random_range(0.05..0.95)),
        _ => TransitionPrior::PrevWeight(rng.random_range(0.2..5.0)),
    }
}

pub fn random_target_model<R: Rng>(n: usize, zero_rate: f64, rng: &mut R) -> TargetModel {
    let mut m = build_target_model(&ModelParams::default(), n).expect("default parameters");
    let names: Vec<&str> = m.tables().map(|(name, _)| name).collect();
    for name in names {
        let t = random_table(m.table(name).expect("listed"), zero_rate, rng);
        m.replace_table(name, t).expect("same shape");
    }
    m.transition = random_transition(rng);
    m
}

/// Random tables except the hard side rows, which stay as in the default
/// model, and a random skill prior.
pub fn random_skill_model<R: Rng>(zero_rate: f64, rng: &mut R) -> SkillModel {
    let mut m = build_skill_model(&ModelParams::default()).expect("default parameters");
    let names: Vec<&str> = m.tables().map(|(name, _)| name).filter(|n| *n != "ally").collect();
    for name in names {
        let t = random_table(m.table(name).expect("listed"), zero_rate, rng);
        m.replace_table(name, t).expect("same shape");
    }
    let w: Vec<f64> = (0..m.skill_count()).map(|_| rng.random_range(0.05..1.0)).collect();
    m.prior = crate::prob::normalize(&w, &m.skills).expect("positive weights");
    m
}

pub fn random_character<R: Rng>(id: String, rng: &mut R) -> CharacterState {
    CharacterState {
        id,
        hp_level: rng.random_range(0..HP_LEVELS as u8),
        distance: DistanceZone::ALL[rng.random_range(0..DistanceZone::ALL.len())],
        ally: rng.random_bool(0.5),
        delta_hp: DeltaHp::ALL[rng.random_range(0..DeltaHp::ALL.len())],
        imminent_death: rng.random_bool(0.3),
        class: Class::ALL[rng.random_range(0..Class::ALL.len())],
        resists: Resists::ALL[rng.random_range(0..Resists::ALL.len())],
    }
}

/// `n` random characters named `c0..`, with a previous target half of the
/// time.
pub fn random_snapshot<R: Rng>(n: usize, rng: &mut R) -> BattleSnapshot {
    let chars = (0..n).map(|i| random_character(format!("c{i}"), rng)).collect();
    let prev = rng.random_bool(0.5).then(|| format!("c{}", rng.random_range(0..n)));
    BattleSnapshot::new(chars, prev).expect("distinct ids")
}
