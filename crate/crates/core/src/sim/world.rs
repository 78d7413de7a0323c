use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::scenario::{Affliction, PolicyKind, Scenario};
use super::skills::SkillSpec;
use crate::error::SimError;
use crate::model::BattleSnapshot;
use crate::perception::{build_snapshot, Frame, History, PerceptionConfig, RawCharacter};
use crate::vars::{Class, Resists, Side, Skill};

const POISON_PER_TICK: u32 = 3;
const AFFLICTION_TICKS: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectKind {
    Hot,
    Dot,
    Poison,
    Curse,
    BuffArmor,
    DebuffArmor,
    Root,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Effect {
    pub kind: EffectKind,
    pub remaining: u32,
    /// Points per tick for periodic effects, percent for armor flags.
    pub amount: u32,
    pub source: String,
}

/// A (skill, target) pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Action {
    pub skill: Skill,
    pub target: String,
}

impl Action {
    pub fn new(skill: Skill, target: impl Into<String>) -> Self {
        Self {
            skill,
            target: target.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Cast {
        actor: String,
        skill: Skill,
        target: String,
    },
    Idle {
        actor: String,
    },
    Damage {
        source: String,
        target: String,
        amount: u32,
    },
    Heal {
        source: String,
        target: String,
        amount: u32,
    },
    Mana {
        target: String,
        amount: u32,
    },
    EffectApplied {
        target: String,
        effect: EffectKind,
    },
    EffectCleared {
        target: String,
        effect: EffectKind,
    },
    EffectExpired {
        target: String,
        effect: EffectKind,
    },
    Retarget {
        id: String,
        target: String,
    },
    Death {
        id: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub ally: bool,
    pub class: Class,
    pub resists: Resists,
    pub hp: u32,
    pub hp_max: u32,
    pub mana: u32,
    pub mana_max: u32,
    pub distance_m: f64,
    pub policy: PolicyKind,
    pub aggro: Option<String>,
    pub power: u32,
    pub inflicts: Option<Affliction>,
    pub effects: Vec<Effect>,
    pub cooldowns: BTreeMap<Skill, u32>,
}

impl Entity {
    pub fn has(&self, kind: EffectKind) -> bool {
        self.effects.iter().any(|e| e.kind == kind)
    }

    pub fn hp_fraction(&self) -> f64 {
        f64::from(self.hp) / f64::from(self.hp_max)
    }

    pub fn cooldown(&self, skill: Skill) -> u32 {
        self.cooldowns.get(&skill).copied().unwrap_or(0)
    }

    fn raw(&self) -> RawCharacter {
        RawCharacter {
            id: self.id.clone(),
            hp: self.hp,
            hp_max: self.hp_max,
            distance_m: self.distance_m,
            ally: self.ally,
            class: self.class,
            resists: self.resists,
        }
    }

    fn take_damage(&mut self, amount: u32) -> u32 {
        let dealt = amount.min(self.hp);
        self.hp -= dealt;
        dealt
    }

    fn take_heal(&mut self, amount: u32) -> u32 {
        let amount = if self.has(EffectKind::Curse) {
            amount / 2
        } else {
            amount
        };
        let healed = amount.min(self.hp_max - self.hp);
        self.hp += healed;
        healed
    }

    /// Physical damage after armor flags.
    fn physical(&self, base: u32) -> u32 {
        let mut pct: u32 = 100;
        for e in &self.effects {
            match e.kind {
                EffectKind::BuffArmor => pct = pct.saturating_sub(e.amount),
                EffectKind::DebuffArmor => pct += e.amount,
                _ => {}
            }
        }
        base * pct / 100
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Win,
    Loss,
    Timeout,
}

/// Complete state of a fight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub tick: i64,
    pub seed: u64,
    pub scenario: String,
    /// Alive entities in roster order.
    pub entities: Vec<Entity>,
    pub history: History,
    /// Target of the druid's last action.
    pub prev_target: Option<String>,
    pub druid: String,
    skills: Vec<SkillSpec>,
    perception: PerceptionConfig,
    mana_regen: u32,
    pending_attackers: BTreeMap<String, BTreeSet<String>>,
}

impl World {
    pub fn from_scenario(scenario: &Scenario, seed: u64) -> Result<Self, SimError> {
        scenario.validate()?;
        let entities: Vec<Entity> = scenario
            .roster
            .iter()
            .map(|r| Entity {
                id: r.id.clone(),
                ally: r.ally,
                class: r.class,
                resists: r.resists,
                hp: r.hp,
                hp_max: r.hp_max,
                mana: r.mana,
                mana_max: r.mana_max,
                distance_m: r.distance_m,
                policy: r.policy,
                aggro: r.aggro.clone(),
                power: r.power,
                inflicts: r.inflicts,
                effects: Vec::new(),
                cooldowns: BTreeMap::new(),
            })
            .collect();
        let mut history = History::new(scenario.perception.window);
        let depth = scenario
            .roster
            .iter()
            .map(|r| r.hp_history.len())
            .max()
            .unwrap_or(0)
            .max(1);
        let mut attackers: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for r in &scenario.roster {
            if matches!(r.policy, PolicyKind::Foe | PolicyKind::Attacker) {
                if let Some(a) = &r.aggro {
                    attackers.entry(a.clone()).or_default().insert(r.id.clone());
                }
            }
        }
        for k in 0..depth {
            let tick = k as i64 + 1 - depth as i64;
            let hp = scenario
                .roster
                .iter()
                .map(|r| {
                    // Shorter histories are padded with their oldest value.
                    let pad = depth - r.hp_history.len().max(1);
                    let v = if r.hp_history.is_empty() {
                        r.hp
                    } else {
                        r.hp_history[k.saturating_sub(pad)]
                    };
                    (r.id.clone(), v)
                })
                .collect();
            history.push(Frame {
                tick,
                hp,
                attackers: if tick == 0 { attackers.clone() } else { BTreeMap::new() },
            })?;
        }
        Ok(Self {
            tick: 0,
            seed,
            scenario: scenario.name.clone(),
            entities,
            history,
            prev_target: scenario.prev_target.clone(),
            druid: scenario.druid_id().expect("validated").to_string(),
            skills: scenario.skills.clone(),
            perception: scenario.perception.clone(),
            mana_regen: scenario.druid_mana_regen,
            pending_attackers: BTreeMap::new(),
        })
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.id == id)
    }

    fn entity_mut(&mut self, id: &str) -> Option<&mut Entity> {
        self.entities.iter_mut().find(|e| e.id == id)
    }

    pub fn skill_spec(&self, skill: Skill) -> &SkillSpec {
        self.skills
            .iter()
            .find(|s| s.name == skill)
            .expect("validated skill table")
    }

    pub fn skills(&self) -> &[SkillSpec] {
        &self.skills
    }

    pub fn perception(&self) -> &PerceptionConfig {
        &self.perception
    }

    pub fn outcome(&self) -> Option<Outcome> {
        if self.entity(&self.druid).is_none() || !self.entities.iter().any(|e| e.ally) {
            Some(Outcome::Loss)
        } else if !self.entities.iter().any(|e| !e.ally) {
            Some(Outcome::Win)
        } else {
            None
        }
    }

    pub fn snapshot(&self) -> Result<BattleSnapshot, SimError> {
        let raw: Vec<RawCharacter> = self.entities.iter().map(Entity::raw).collect();
        Ok(build_snapshot(
            &raw,
            &self.history,
            self.prev_target.as_deref(),
            &self.perception,
        )?)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("world serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    fn check_action(&self, actor: &Entity, action: &Action) -> bool {
        let spec = self.skill_spec(action.skill);
        let Some(target) = self.entity(&action.target) else {
            return false;
        };
        let side_ok = match spec.side {
            Side::Ally => target.ally,
            Side::Foe => !target.ally,
        };
        let distance = if target.id == actor.id { 0.0 } else { target.distance_m };
        let effect_free = match action.skill {
            Skill::Hot => !target.has(EffectKind::Hot),
            Skill::Dot => !target.has(EffectKind::Dot),
            Skill::BuffArmor => !target.has(EffectKind::BuffArmor),
            Skill::DebuffArmor => !target.has(EffectKind::DebuffArmor),
            Skill::Root => !target.has(EffectKind::Root),
            Skill::PoisonAbol => target.has(EffectKind::Poison),
            Skill::MaledictionAbol => target.has(EffectKind::Curse),
            _ => true,
        };
        side_ok
            && (!spec.self_only || target.id == actor.id)
            && spec.mana_cost <= actor.mana
            && actor.cooldown(action.skill) == 0
            && distance <= spec.range_m
            && effect_free
    }

    /// Castable (skill, target) pairs in skill order, then roster order.
    pub fn legal_actions(&self, actor: &str) -> Result<Vec<Action>, SimError> {
        let actor = self
            .entity(actor)
            .ok_or_else(|| SimError::DeadActor(actor.to_string()))?;
        let mut out = Vec::new();
        for skill in Skill::ALL {
            for target in &self.entities {
                let action = Action::new(*skill, target.id.clone());
                if self.check_action(actor, &action) {
                    out.push(action);
                }
            }
        }
        Ok(out)
    }

    pub fn apply_action(&mut self, actor: &str, action: &Action) -> Result<Vec<Event>, SimError> {
        let illegal = || SimError::IllegalAction {
            skill: action.skill.to_string(),
            target: action.target.clone(),
        };
        let caster = self
            .entity(actor)
            .ok_or_else(|| SimError::DeadActor(actor.to_string()))?;
        if !self.check_action(caster, action) {
            return Err(illegal());
        }
        let spec = self.skill_spec(action.skill).clone();
        let caster = self.entity_mut(actor).expect("checked");
        caster.mana -= spec.mana_cost;
        if spec.cooldown_ticks > 0 {
            caster.cooldowns.insert(spec.name, spec.cooldown_ticks);
        }
        let mut events = vec![Event::Cast {
            actor: actor.to_string(),
            skill: spec.name,
            target: action.target.clone(),
        }];
        let target_id = action.target.clone();
        let target = self.entity_mut(&target_id).expect("checked");
        let resisted = spec.element.is_some_and(|e| target.resists.contains(e));
        let elemental = |amount: u32| if resisted { amount / 2 } else { amount };
        let mut apply = |target: &mut Entity, kind: EffectKind, amount: u32| {
            target.effects.push(Effect {
                kind,
                remaining: spec.duration_ticks,
                amount,
                source: actor.to_string(),
            });
            events.push(Event::EffectApplied {
                target: target.id.clone(),
                effect: kind,
            });
        };
        match spec.name {
            Skill::SmallHeal | Skill::BigHeal => {
                let healed = target.take_heal(spec.amount);
                events.push(Event::Heal {
                    source: actor.to_string(),
                    target: target_id.clone(),
                    amount: healed,
                });
            }
            Skill::Hot => apply(target, EffectKind::Hot, spec.amount),
            Skill::Dot => apply(target, EffectKind::Dot, elemental(spec.amount)),
            Skill::BuffArmor => apply(target, EffectKind::BuffArmor, spec.amount),
            Skill::DebuffArmor => apply(target, EffectKind::DebuffArmor, spec.amount),
            Skill::Root => apply(target, EffectKind::Root, 0),
            Skill::PoisonAbol | Skill::MaledictionAbol => {
                let kind = if spec.name == Skill::PoisonAbol {
                    EffectKind::Poison
                } else {
                    EffectKind::Curse
                };
                target.effects.retain(|e| e.kind != kind);
                events.push(Event::EffectCleared {
                    target: target_id.clone(),
                    effect: kind,
                });
            }
            Skill::RegenMana => {
                let gained = spec.amount.min(target.mana_max - target.mana);
                target.mana += gained;
                events.push(Event::Mana {
                    target: target_id.clone(),
                    amount: gained,
                });
            }
            Skill::SmallDd | Skill::BigDd => {
                let dealt = target.take_damage(elemental(spec.amount));
                events.push(Event::Damage {
                    source: actor.to_string(),
                    target: target_id.clone(),
                    amount: dealt,
                });
            }
        }
        if spec.side == Side::Foe {
            self.pending_attackers
                .entry(target_id)
                .or_default()
                .insert(actor.to_string());
        }
        self.reap(&mut events);
        Ok(events)
    }

    /// One world step: periodic effects, timers, mana, scripted entities,
    /// deaths, history.
    pub fn tick(&mut self) -> Vec<Event> {
        let mut events = Vec::new();
        for i in 0..self.entities.len() {
            let effects = self.entities[i].effects.clone();
            for e in &effects {
                let ent = &mut self.entities[i];
                match e.kind {
                    EffectKind::Hot => {
                        let healed = ent.take_heal(e.amount);
                        events.push(Event::Heal {
                            source: e.source.clone(),
                            target: ent.id.clone(),
                            amount: healed,
                        });
                    }
                    EffectKind::Dot | EffectKind::Poison => {
                        let dealt = ent.take_damage(e.amount);
                        events.push(Event::Damage {
                            source: e.source.clone(),
                            target: ent.id.clone(),
                            amount: dealt,
                        });
                        let id = ent.id.clone();
                        self.pending_attackers.entry(id).or_default().insert(e.source.clone());
                    }
                    _ => {}
                }
            }
            let ent = &mut self.entities[i];
            for e in &mut ent.effects {
                e.remaining = e.remaining.saturating_sub(1);
            }
            let expired: Vec<EffectKind> = ent
                .effects
                .iter()
                .filter(|e| e.remaining == 0)
                .map(|e| e.kind)
                .collect();
            ent.effects.retain(|e| e.remaining > 0);
            for kind in expired {
                events.push(Event::EffectExpired {
                    target: ent.id.clone(),
                    effect: kind,
                });
            }
            for cd in ent.cooldowns.values_mut() {
                *cd = cd.saturating_sub(1);
            }
            ent.cooldowns.retain(|_, cd| *cd > 0);
            if ent.policy == PolicyKind::Druid {
                ent.mana = (ent.mana + self.mana_regen).min(ent.mana_max);
            }
        }
        self.reap(&mut events);

        let order: Vec<String> = self.entities.iter().map(|e| e.id.clone()).collect();
        for id in order {
            if self.entity(&id).is_none() {
                continue;
            }
            self.scripted_policy(&id, &mut events);
            self.reap(&mut events);
        }

        self.tick += 1;
        let frame = Frame {
            tick: self.tick,
            hp: self.entities.iter().map(|e| (e.id.clone(), e.hp)).collect(),
            attackers: std::mem::take(&mut self.pending_attackers),
        };
        self.history.push(frame).expect("ticks advance by one");
        events
    }

    /// Runs the entity's scripted behavior once.
    pub fn scripted_policy(&mut self, id: &str, events: &mut Vec<Event>) {
        let Some(me) = self.entity(id).cloned() else { return };
        match me.policy {
            PolicyKind::Foe => {
                let Some(target) = self.foe_target(&me, events) else {
                    return;
                };
                let victim = self.entity_mut(&target).expect("alive");
                let dealt = victim.take_damage(victim.physical(me.power));
                events.push(Event::Damage {
                    source: me.id.clone(),
                    target: target.clone(),
                    amount: dealt,
                });
                if let Some(aff) = me.inflicts {
                    let kind = match aff {
                        Affliction::Poison => EffectKind::Poison,
                        Affliction::Curse => EffectKind::Curse,
                    };
                    if victim.hp > 0 && !victim.has(kind) {
                        victim.effects.push(Effect {
                            kind,
                            remaining: AFFLICTION_TICKS,
                            amount: if kind == EffectKind::Poison { POISON_PER_TICK } else { 0 },
                            source: me.id.clone(),
                        });
                        events.push(Event::EffectApplied {
                            target: target.clone(),
                            effect: kind,
                        });
                    }
                }
                self.pending_attackers.entry(target).or_default().insert(me.id.clone());
            }
            PolicyKind::Attacker => {
                let Some(target) = self.attacker_target(&me, events) else {
                    return;
                };
                let victim = self.entity_mut(&target).expect("alive");
                let dealt = victim.take_damage(victim.physical(me.power));
                events.push(Event::Damage {
                    source: me.id.clone(),
                    target: target.clone(),
                    amount: dealt,
                });
                self.pending_attackers.entry(target).or_default().insert(me.id.clone());
            }
            PolicyKind::Healer => {
                let wounded = self
                    .entities
                    .iter()
                    .filter(|e| e.ally && e.hp_fraction() < 0.5)
                    .min_by(|a, b| a.hp_fraction().total_cmp(&b.hp_fraction()))
                    .map(|e| e.id.clone());
                if let Some(target) = wounded {
                    let healed = self.entity_mut(&target).expect("alive").take_heal(me.power);
                    events.push(Event::Heal {
                        source: me.id.clone(),
                        target,
                        amount: healed,
                    });
                }
            }
            PolicyKind::Druid | PolicyKind::Idle => {}
        }
    }

    fn lowest_hp(&self, ally: bool) -> Option<String> {
        self.entities
            .iter()
            .filter(|e| e.ally == ally)
            .min_by_key(|e| e.hp)
            .map(|e| e.id.clone())
    }

    fn first_alive(&self, ally: bool) -> Option<String> {
        self.entities.iter().find(|e| e.ally == ally).map(|e| e.id.clone())
    }

    fn foe_target(&mut self, me: &Entity, events: &mut Vec<Event>) -> Option<String> {
        match &me.aggro {
            Some(a) if self.entity(a).is_some_and(|e| e.ally) => Some(a.clone()),
            _ => {
                let t = self.lowest_hp(true)?;
                self.set_aggro(&me.id, &t, events);
                Some(t)
            }
        }
    }

    fn attacker_target(&mut self, me: &Entity, events: &mut Vec<Event>) -> Option<String> {
        match &me.aggro {
            Some(a) if self.entity(a).is_some_and(|e| !e.ally) => Some(a.clone()),
            _ => {
                let t = self.first_alive(false)?;
                self.set_aggro(&me.id, &t, events);
                Some(t)
            }
        }
    }

    fn set_aggro(&mut self, id: &str, target: &str, events: &mut Vec<Event>) {
        if let Some(e) = self.entity_mut(id) {
            e.aggro = Some(target.to_string());
            events.push(Event::Retarget {
                id: id.to_string(),
                target: target.to_string(),
            });
        }
    }

    /// Removes dead entities and re-targets everyone that was aiming at them.
    fn reap(&mut self, events: &mut Vec<Event>) {
        let dead: Vec<String> = self
            .entities
            .iter()
            .filter(|e| e.hp == 0)
            .map(|e| e.id.clone())
            .collect();
        if dead.is_empty() {
            return;
        }
        self.entities.retain(|e| e.hp > 0);
        for id in &dead {
            events.push(Event::Death { id: id.clone() });
            self.pending_attackers.remove(id);
            if self.prev_target.as_deref() == Some(id.as_str()) {
                self.prev_target = None;
            }
        }
        let stale: Vec<(String, PolicyKind)> = self
            .entities
            .iter()
            .filter(|e| e.aggro.as_ref().is_some_and(|a| dead.contains(a)))
            .map(|e| (e.id.clone(), e.policy))
            .collect();
        for (id, policy) in stale {
            let next = match policy {
                PolicyKind::Foe => self.lowest_hp(true),
                _ => self.first_alive(false),
            };
            match next {
                Some(t) => self.set_aggro(&id, &t, events),
                None => {
                    if let Some(e) = self.entity_mut(&id) {
                        e.aggro = None;
                    }
                }
            }
        }
    }

    /// Druid decision followed by one tick. `None` idles.
    pub fn step(&mut self, action: Option<&Action>) -> Result<Vec<Event>, SimError> {
        let druid = self.druid.clone();
        let mut events = match action {
            Some(a) => {
                let ev = self.apply_action(&druid, a)?;
                self.prev_target = Some(a.target.clone()).filter(|t| self.entity(t).is_some());
                ev
            }
            None => vec![Event::Idle { actor: druid }],
        };
        events.extend(self.tick());
        Ok(events)
    }
}
