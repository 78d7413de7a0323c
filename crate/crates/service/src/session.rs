use std::collections::BTreeMap;
use std::sync::Arc;

use bayes_arena::model::{skill_given_target, BattleSnapshot, CharacterState, DecisionModel, RankedActions};
use bayes_arena::sim::{bot_choice, replay, Action, BotMode, Effect, Episode, Event, Outcome, Scenario};
use bayes_arena::vars::{Class, Resists, Skill};
use bayes_arena::SimError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

/// Targets whose skill distributions are included in a posterior view.
pub const TOP_TARGETS: usize = 3;
/// Joint pairs included in a posterior view.
pub const TOP_PAIRS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Finished,
}

pub struct Session {
    pub id: String,
    pub model_id: Option<String>,
    model: Arc<DecisionModel>,
    episode: Episode,
    rng: ChaCha8Rng,
    replay_verified: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CharacterView {
    pub id: String,
    pub ally: bool,
    pub class: Class,
    pub resists: Resists,
    pub hp: u32,
    pub hp_max: u32,
    pub mana: u32,
    pub mana_max: u32,
    pub distance_m: f64,
    pub effects: Vec<Effect>,
    /// Discrete variables the decision model sees.
    pub derived: CharacterState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DruidView {
    pub id: String,
    pub mana: u32,
    pub mana_max: u32,
    pub cooldowns: BTreeMap<Skill, u32>,
}

/// Everything a client needs to draw the board.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateDocument {
    pub id: String,
    pub scenario: String,
    pub model: Option<String>,
    pub tick: i64,
    pub status: Status,
    pub outcome: Option<Outcome>,
    pub prev_target: Option<String>,
    pub druid: Option<DruidView>,
    pub characters: Vec<CharacterView>,
    pub legal: Vec<Action>,
    /// Set once the finished log has been replayed.
    pub replay_verified: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prob<K> {
    pub value: K,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSkills {
    pub target: String,
    pub target_prob: f64,
    pub skills: Vec<Prob<Skill>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairView {
    pub target: String,
    pub skill: Skill,
    pub prob: f64,
    pub legal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityRow {
    pub target: String,
    /// One flag per skill, in `skills` order.
    pub mask: Vec<bool>,
}

/// The three questions answered for the current tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorView {
    pub tick: i64,
    pub targets: Vec<Prob<String>>,
    pub skills_by_target: Vec<TargetSkills>,
    pub top_pairs: Vec<PairView>,
    pub skills: Vec<Skill>,
    pub availability: Vec<AvailabilityRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepResponse {
    pub events: Vec<Event>,
    pub state: StateDocument,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BotStepResponse {
    pub action: Option<Action>,
    /// True when nothing was legal and the bot waited.
    pub idle: bool,
    pub posterior: PosteriorView,
    pub events: Vec<Event>,
    pub state: StateDocument,
}

impl Session {
    pub fn new(
        id: String,
        scenario: &Scenario,
        model_id: Option<String>,
        model: Arc<DecisionModel>,
        seed: u64,
    ) -> Result<Self, SimError> {
        Ok(Self {
            id,
            model_id,
            model,
            episode: Episode::new(scenario, seed)?,
            rng: ChaCha8Rng::seed_from_u64(seed),
            replay_verified: None,
        })
    }

    pub fn episode(&self) -> &Episode {
        &self.episode
    }

    pub fn status(&self) -> Status {
        if self.episode.is_finished() {
            Status::Finished
        } else {
            Status::Running
        }
    }

    pub fn state(&self) -> Result<StateDocument, ApiError> {
        let world = self.episode.world();
        let snapshot = world.snapshot().map_err(ApiError::internal)?;
        let characters = world
            .entities
            .iter()
            .filter_map(|e| {
                let derived = snapshot.get(&e.id)?.clone();
                Some(CharacterView {
                    id: e.id.clone(),
                    ally: e.ally,
                    class: e.class,
                    resists: e.resists,
                    hp: e.hp,
                    hp_max: e.hp_max,
                    mana: e.mana,
                    mana_max: e.mana_max,
                    distance_m: e.distance_m,
                    effects: e.effects.clone(),
                    derived,
                })
            })
            .collect();
        let druid = world.entity(&world.druid).map(|d| DruidView {
            id: d.id.clone(),
            mana: d.mana,
            mana_max: d.mana_max,
            cooldowns: Skill::ALL.iter().map(|s| (*s, d.cooldown(*s))).collect(),
        });
        Ok(StateDocument {
            id: self.id.clone(),
            scenario: world.scenario.clone(),
            model: self.model_id.clone(),
            tick: world.tick,
            status: self.status(),
            outcome: self.episode.outcome(),
            prev_target: snapshot.prev_target().map(str::to_string),
            druid,
            characters,
            legal: self.episode.legal().map_err(ApiError::internal)?,
            replay_verified: self.replay_verified,
        })
    }

    pub fn posterior(&self) -> Result<PosteriorView, ApiError> {
        let snapshot = self.episode.snapshot().map_err(ApiError::internal)?;
        let legal = self.episode.legal().map_err(ApiError::internal)?;
        let ranked = self.model.joint(&snapshot).map_err(ApiError::internal)?;
        self.view(&snapshot, &ranked, &legal)
    }

    fn view(
        &self,
        snapshot: &BattleSnapshot,
        ranked: &RankedActions,
        legal: &[Action],
    ) -> Result<PosteriorView, ApiError> {
        let is_legal = |t: &str, s: Skill| legal.iter().any(|a| a.skill == s && a.target == t);
        let targets: Vec<Prob<String>> = ranked
            .targets
            .iter()
            .zip(ranked.target_marginal())
            .map(|(t, p)| Prob {
                value: t.clone(),
                prob: p,
            })
            .collect();
        let mut order: Vec<&Prob<String>> = targets.iter().collect();
        order.sort_by(|a, b| b.prob.total_cmp(&a.prob));
        let skills_by_target = order
            .iter()
            .take(TOP_TARGETS)
            .map(|t| {
                let dist = skill_given_target(&self.model.skill, snapshot, &t.value).map_err(ApiError::internal)?;
                Ok(TargetSkills {
                    target: t.value.clone(),
                    target_prob: t.prob,
                    skills: Skill::ALL
                        .iter()
                        .zip(dist.probs())
                        .map(|(s, p)| Prob { value: *s, prob: *p })
                        .collect(),
                })
            })
            .collect::<Result<_, ApiError>>()?;
        let top_pairs = ranked
            .entries
            .iter()
            .take(TOP_PAIRS)
            .map(|e| PairView {
                target: e.target.clone(),
                skill: e.skill,
                prob: e.prob,
                legal: is_legal(&e.target, e.skill),
            })
            .collect();
        let availability = ranked
            .targets
            .iter()
            .map(|t| AvailabilityRow {
                target: t.clone(),
                mask: Skill::ALL.iter().map(|s| is_legal(t, *s)).collect(),
            })
            .collect();
        Ok(PosteriorView {
            tick: self.episode.world().tick,
            targets,
            skills_by_target,
            top_pairs,
            skills: Skill::ALL.to_vec(),
            availability,
        })
    }

    pub fn human_action(&mut self, action: Action) -> Result<StepResponse, ApiError> {
        let events = self.episode.step("human", Some(action)).map_err(ApiError::from_step)?;
        self.after_step()?;
        Ok(StepResponse {
            events,
            state: self.state()?,
        })
    }

    pub fn bot_step(&mut self, mode: BotMode) -> Result<BotStepResponse, ApiError> {
        if self.episode.is_finished() {
            return Err(ApiError::from_step(SimError::Finished));
        }
        let snapshot = self.episode.snapshot().map_err(ApiError::internal)?;
        let legal = self.episode.legal().map_err(ApiError::internal)?;
        let (action, ranked) =
            bot_choice(&self.model, &snapshot, &legal, mode, &mut self.rng).map_err(ApiError::internal)?;
        let posterior = self.view(&snapshot, &ranked, &legal)?;
        let events = self.episode.step("bot", action.clone()).map_err(ApiError::from_step)?;
        self.after_step()?;
        Ok(BotStepResponse {
            idle: action.is_none(),
            action,
            posterior,
            events,
            state: self.state()?,
        })
    }

    fn after_step(&mut self) -> Result<(), ApiError> {
        if self.episode.is_finished() && self.replay_verified.is_none() {
            let ok = replay(self.episode.log())
                .map(|w| w.digest() == self.episode.world().digest())
                .unwrap_or(false);
            self.replay_verified = Some(ok);
            if !ok {
                return Err(ApiError::internal("session log does not replay to the final state"));
            }
        }
        Ok(())
    }
}
