//! Exhaustive evaluations of the quotient
//! `P(Searched | Known) = sum_Free P(Searched, Free, Known) / P(Known)`
//! for small rosters. They work in linear space over the explicit target
//! variable and share nothing with the factored log-space path except the
//! table contents.

use super::{BattleSnapshot, CharacterState, SkillModel, TargetModel};
use crate::error::{ModelError, ProbError};
use crate::prob::{ConditionalTable, Distribution};
use crate::vars::{bool_label, Class, DeltaHp, DistanceZone, Resists, HP_LEVELS};

const TARGET_ORACLE_MAX: usize = 3;
const SKILL_ORACLE_MAX: usize = 1;

fn label_prob(table: &ConditionalTable, parents: &[&str], child: &str) -> Result<f64, ModelError> {
    let row = table.lookup(parents)?;
    row.prob(child).ok_or_else(|| {
        ModelError::Prob(ProbError::UnknownParentValue {
            domain: table.child().name().to_string(),
            value: child.to_string(),
        })
    })
}

/// Joint mass of one character's observed variables in the target model,
/// read through value labels.
fn target_character_mass(m: &TargetModel, c: &CharacterState, targeted: bool) -> Result<f64, ModelError> {
    let a = bool_label(c.ally);
    let t = bool_label(targeted);
    let cl = c.class.label();
    let hp = c.hp_level.to_string();
    Ok(label_prob(&m.hp, &[a, cl, t], &hp)?
        * label_prob(&m.distance, &[a, t], c.distance.label())?
        * label_prob(&m.ally, &[t], a)?
        * label_prob(&m.delta_hp, &[a, cl, t], c.delta_hp.label())?
        * label_prob(&m.imminent_death, &[t], bool_label(c.imminent_death))?
        * label_prob(&m.class, &[a, t], cl)?)
}

/// P(T | snapshot) by summing the joint over the free previous target (when
/// unknown) and dividing by P(Known).
pub fn brute_force_target_posterior(
    model: &TargetModel,
    snapshot: &BattleSnapshot,
) -> Result<Distribution, ModelError> {
    let n = snapshot.len();
    if n > TARGET_ORACLE_MAX {
        return Err(ModelError::TooLarge(n));
    }
    let targets = snapshot.target_domain();
    let transition = model.transition_table(&targets);
    let prev_values: Vec<&str> = match snapshot.prev_target() {
        Some(p) => vec![p],
        None => targets.values().iter().map(String::as_str).collect(),
    };
    // P(T^{t-1}) is uniform over the roster.
    let prev_prior = 1.0 / n as f64;
    let mut joint = vec![0.0; n];
    for (ti, t) in targets.values().iter().enumerate() {
        let mut rest = 1.0;
        for (i, c) in snapshot.characters().iter().enumerate() {
            rest *= target_character_mass(model, c, i == ti)?;
        }
        for prev in &prev_values {
            // A free previous target is summed over; its row is the one
            // that names it, not the `<none>` row.
            joint[ti] += prev_prior * label_prob(&transition, &[prev], t)? * rest;
        }
    }
    let known: f64 = joint.iter().sum();
    if known <= 0.0 {
        return Err(ProbError::AllZero.into());
    }
    let probs: Vec<f64> = joint.iter().map(|j| j / known).collect();
    Ok(crate::prob::normalize(&probs, &targets)?)
}

/// Literal enumeration of every assignment of every variable of the target
/// decomposition for one or two characters. Returns the conditional on T and
/// the total joint mass (which must be 1).
pub fn full_joint_target_posterior(
    model: &TargetModel,
    snapshot: &BattleSnapshot,
) -> Result<(Distribution, f64), ModelError> {
    let n = snapshot.len();
    if n > 2 {
        return Err(ModelError::TooLarge(n));
    }
    let targets = snapshot.target_domain();
    let known_prev = snapshot.prev_index();
    // Each character's variables as (hp, d, a, dhp, id, c) index tuples.
    let mut per_char = Vec::new();
    for hp in 0..HP_LEVELS {
        for d in 0..DistanceZone::ALL.len() {
            for a in 0..2 {
                for dh in 0..DeltaHp::ALL.len() {
                    for id in 0..2 {
                        for c in 0..Class::ALL.len() {
                            per_char.push([hp, d, a, dh, id, c]);
                        }
                    }
                }
            }
        }
    }
    let observed: Vec<[usize; 6]> = snapshot
        .characters()
        .iter()
        .map(|c| {
            [
                usize::from(c.hp_level),
                c.distance.index(),
                usize::from(c.ally),
                c.delta_hp.index(),
                usize::from(c.imminent_death),
                c.class.index(),
            ]
        })
        .collect();
    let mass = |v: &[usize; 6], targeted: bool| {
        let t = usize::from(targeted);
        let [hp, d, a, dh, id, c] = *v;
        model.hp.prob(&[a, c, t], hp)
            * model.distance.prob(&[a, t], d)
            * model.ally.prob(&[t], a)
            * model.delta_hp.prob(&[a, c, t], dh)
            * model.imminent_death.prob(&[t], id)
            * model.class.prob(&[a, t], c)
    };
    let mut total = 0.0;
    let mut matched = vec![0.0; n];
    for prev in 0..n {
        let p_prev = 1.0 / n as f64;
        let row = model.transition.row(n, Some(prev));
        for t in 0..n {
            let head = p_prev * row[t];
            let prev_ok = known_prev.is_none_or(|k| k == prev);
            if n == 1 {
                for v in &per_char {
                    let j = head * mass(v, t == 0);
                    total += j;
                    if prev_ok && *v == observed[0] {
                        matched[t] += j;
                    }
                }
            } else {
                for v0 in &per_char {
                    let j0 = head * mass(v0, t == 0);
                    for v1 in &per_char {
                        let j = j0 * mass(v1, t == 1);
                        total += j;
                        if prev_ok && *v0 == observed[0] && *v1 == observed[1] {
                            matched[t] += j;
                        }
                    }
                }
            }
        }
    }
    let known: f64 = matched.iter().sum();
    if known <= 0.0 {
        return Err(ProbError::AllZero.into());
    }
    let probs: Vec<f64> = matched.iter().map(|m| m / known).collect();
    Ok((crate::prob::normalize(&probs, &targets)?, total))
}

/// P(S | snapshot) for a single-character roster by literal enumeration of
/// the skill decomposition, mixed over `target_dist`.
pub fn brute_force_skill_posterior(
    model: &SkillModel,
    snapshot: &BattleSnapshot,
    target_dist: &Distribution,
) -> Result<Distribution, ModelError> {
    let n = snapshot.len();
    if n > SKILL_ORACLE_MAX {
        return Err(ModelError::TooLarge(n));
    }
    let c = &snapshot.characters()[0];
    let observed = [
        usize::from(c.hp_level),
        c.distance.index(),
        usize::from(c.ally),
        c.delta_hp.index(),
        c.resists.index(),
        usize::from(c.imminent_death),
        c.class.index(),
    ];
    let m = model.skill_count();
    let p_target = 1.0 / n as f64;
    let t = 1; // the only character is the target
    let mut matched = vec![0.0; m];
    let mut total = 0.0;
    for (s, slot) in matched.iter_mut().enumerate() {
        let head = model.prior.probs()[s] * p_target;
        for hp in 0..HP_LEVELS {
            for d in 0..DistanceZone::ALL.len() {
                for a in 0..2 {
                    for dh in 0..DeltaHp::ALL.len() {
                        for r in 0..Resists::ALL.len() {
                            for id in 0..2 {
                                for cl in 0..Class::ALL.len() {
                                    let j = head
                                        * model.hp.prob(&[a, cl, s, t], hp)
                                        * model.distance.prob(&[a, s, t], d)
                                        * model.ally.prob(&[s, t], a)
                                        * model.delta_hp.prob(&[a, s, t], dh)
                                        * model.resists.prob(&[cl, s, t], r)
                                        * model.imminent_death.prob(&[s, t], id)
                                        * model.class.prob(&[a, s, t], cl);
                                    total += j;
                                    if [hp, d, a, dh, r, id, cl] == observed {
                                        *slot += j;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    debug_assert!((total - 1.0).abs() < 1e-9, "joint mass {total}");
    let known: f64 = matched.iter().sum();
    if known <= 0.0 {
        return Err(ProbError::AllZero.into());
    }
    let weight = target_dist.probs().first().copied().unwrap_or(0.0);
    if weight <= 0.0 {
        return Err(ProbError::AllZero.into());
    }
    let mixed: Vec<f64> = matched.iter().map(|x| x / known * weight).collect();
    Ok(crate::prob::normalize(&mixed, &model.skills)?)
}
