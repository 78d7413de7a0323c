use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{BattleSnapshot, SkillModel, TargetModel};
use crate::error::{ModelError, ProbError};
use crate::prob::{log_score, normalize, normalize_log, Distribution, LogWeight};
use crate::vars::Skill;

/// P(T | all target-model state variables).
///
/// The tables do not depend on the roster size, so any alive roster can be
/// scored; the transition row is rebuilt for the snapshot's size.
pub fn target_posterior(model: &TargetModel, snapshot: &BattleSnapshot) -> Result<Distribution, ModelError> {
    let chars = snapshot.characters();
    let n = chars.len();
    let transition = model.transition.row(n, snapshot.prev_index());
    let mut base = Vec::with_capacity(n);
    let mut hit = Vec::with_capacity(n);
    for c in chars {
        base.push(log_score(model.factors(c, false))?);
        hit.push(log_score(model.factors(c, true))?);
    }
    let mut scores = Vec::with_capacity(n);
    for t in 0..n {
        let mut w = LogWeight::from_prob(transition[t])? * hit[t];
        for (i, b) in base.iter().enumerate() {
            if i != t {
                w = w * *b;
            }
        }
        scores.push(w);
    }
    Ok(normalize_log(&scores, &snapshot.target_domain())?)
}

/// P(S | T = target, all state variables). P(T) cancels.
pub fn skill_given_target(
    model: &SkillModel,
    snapshot: &BattleSnapshot,
    target: &str,
) -> Result<Distribution, ModelError> {
    let t = snapshot
        .index_of(target)
        .ok_or_else(|| ModelError::UnknownTarget(target.to_string()))?;
    let mut scores = Vec::with_capacity(model.skill_count());
    for s in 0..model.skill_count() {
        let mut w = LogWeight::from_prob(model.prior.probs()[s])?;
        for (i, c) in snapshot.characters().iter().enumerate() {
            w = w * log_score(model.factors(c, s, i == t))?;
            if w.is_zero() {
                break;
            }
        }
        scores.push(w);
    }
    Ok(normalize_log(&scores, &model.skills)?)
}

/// P(S | state) = sum over T of P(S | T, state) P(T).
///
/// Targets whose conditional has no consistent skill are skipped; the
/// mixture is renormalized afterwards.
pub fn skill_posterior(
    model: &SkillModel,
    snapshot: &BattleSnapshot,
    target_dist: &Distribution,
) -> Result<Distribution, ModelError> {
    let domain = snapshot.target_domain();
    if *target_dist.domain() != domain {
        return Err(ProbError::DomainMismatch {
            left: target_dist.domain().to_string(),
            right: domain.to_string(),
        }
        .into());
    }
    let mut mix = vec![0.0; model.skill_count()];
    for (t, pt) in target_dist.iter() {
        if pt <= 0.0 {
            continue;
        }
        match skill_given_target(model, snapshot, t) {
            Ok(cond) => {
                for (m, p) in mix.iter_mut().zip(cond.probs()) {
                    *m += p * pt;
                }
            }
            Err(ModelError::Prob(ProbError::AllZero)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(normalize(&mix, &model.skills)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedAction {
    pub target: String,
    pub skill: Skill,
    pub prob: f64,
}

/// Every (target, skill) pair with its joint posterior, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedActions {
    /// Targets in roster order.
    pub targets: Vec<String>,
    pub entries: Vec<RankedAction>,
}

impl RankedActions {
    pub fn top(&self) -> Option<&RankedAction> {
        self.entries.first()
    }

    pub fn prob(&self, target: &str, skill: Skill) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.target == target && e.skill == skill)
            .map(|e| e.prob)
    }

    /// Rank (0-based) of a pair.
    pub fn rank_of(&self, target: &str, skill: Skill) -> Option<usize> {
        self.entries.iter().position(|e| e.target == target && e.skill == skill)
    }

    pub fn target_marginal(&self) -> Vec<f64> {
        self.targets
            .iter()
            .map(|t| self.entries.iter().filter(|e| &e.target == t).map(|e| e.prob).sum())
            .collect()
    }

    pub fn skill_marginal(&self) -> Vec<f64> {
        Skill::ALL
            .iter()
            .map(|s| self.entries.iter().filter(|e| e.skill == *s).map(|e| e.prob).sum())
            .collect()
    }

    /// Keeps only pairs accepted by `keep` and renormalizes them. `None`
    /// when nothing is kept or the kept mass is zero.
    pub fn restricted<F>(&self, mut keep: F) -> Option<RankedActions>
    where
        F: FnMut(&str, Skill) -> bool,
    {
        let kept: Vec<_> = self
            .entries
            .iter()
            .filter(|e| keep(&e.target, e.skill))
            .cloned()
            .collect();
        let total: f64 = kept.iter().map(|e| e.prob).sum();
        if kept.is_empty() || total <= 0.0 {
            return None;
        }
        Some(RankedActions {
            targets: self.targets.clone(),
            entries: kept
                .into_iter()
                .map(|mut e| {
                    e.prob /= total;
                    e
                })
                .collect(),
        })
    }
}

/// P(S, T | state) = P(S | T, state) P(T | state), ranked.
pub fn joint_posterior(
    target_model: &TargetModel,
    skill_model: &SkillModel,
    snapshot: &BattleSnapshot,
) -> Result<RankedActions, ModelError> {
    let targets = target_posterior(target_model, snapshot)?;
    let m = skill_model.skill_count();
    let mut cells = Vec::with_capacity(targets.len() * m);
    for (ti, (t, pt)) in targets.iter().enumerate() {
        let cond = if pt > 0.0 {
            match skill_given_target(skill_model, snapshot, t) {
                Ok(d) => Some(d),
                Err(ModelError::Prob(ProbError::AllZero)) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        for s in 0..m {
            let p = cond.as_ref().map_or(0.0, |d| d.probs()[s] * pt);
            cells.push((ti, s, p));
        }
    }
    let total: f64 = cells.iter().map(|c| c.2).sum();
    if total <= 0.0 {
        return Err(ProbError::AllZero.into());
    }
    cells.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap_or(Ordering::Equal)
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });
    let names: Vec<String> = snapshot.characters().iter().map(|c| c.id.clone()).collect();
    let entries = cells
        .into_iter()
        .map(|(t, s, p)| RankedAction {
            target: names[t].clone(),
            skill: Skill::from_index(s).expect("skill domain has 12 values"),
            prob: p / total,
        })
        .collect();
    Ok(RankedActions {
        targets: names,
        entries,
    })
}

/// First pair, in rank order, accepted by `available`.
pub fn select_action<F>(ranked: &RankedActions, mut available: F) -> Option<(String, Skill)>
where
    F: FnMut(&str, Skill) -> bool,
{
    ranked
        .entries
        .iter()
        .find(|e| available(&e.target, e.skill))
        .map(|e| (e.target.clone(), e.skill))
}
