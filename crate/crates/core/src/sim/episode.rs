use std::collections::VecDeque;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scenario::Scenario;
use super::world::{Action, Event, Outcome, World};
use crate::error::SimError;
use crate::model::{select_action, BattleSnapshot, DecisionModel, RankedActions};

/// First line of a log: everything needed to rebuild the initial world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub scenario: Scenario,
    pub seed: u64,
}

/// One druid decision tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionLine {
    pub tick: i64,
    pub snapshot: BattleSnapshot,
    pub actor: String,
    /// `None` when the druid idled.
    pub action: Option<Action>,
    pub legal: Vec<Action>,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEnd {
    pub outcome: Outcome,
    pub final_tick: i64,
    /// SHA-256 of the final world state.
    pub state_digest: String,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header(LogHeader),
    Decision(DecisionLine),
    End(LogEnd),
}

/// A played episode, serialized as JSON Lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub header: LogHeader,
    pub records: Vec<DecisionLine>,
    pub end: Option<LogEnd>,
}

impl EpisodeLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |line: &Line| {
            out.push_str(&serde_json::to_string(line).expect("log line serializes"));
            out.push('\n');
        };
        push(&Line::Header(self.header.clone()));
        for r in &self.records {
            push(&Line::Decision(r.clone()));
        }
        if let Some(end) = &self.end {
            push(&Line::End(end.clone()));
        }
        out
    }

    /// Parses and structurally checks a log. Use [`replay`] to check it
    /// against the simulator.
    pub fn from_jsonl(text: &str) -> Result<Self, SimError> {
        let bad = |m: String| SimError::MalformedLog(m);
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let header = match lines.next() {
            Some((_, l)) => match serde_json::from_str(l).map_err(|e| bad(format!("line 1: {e}")))? {
                Line::Header(h) => h,
                _ => return Err(bad("first line is not a header".into())),
            },
            None => return Err(bad("empty log".into())),
        };
        let mut records: Vec<DecisionLine> = Vec::new();
        let mut end = None;
        for (no, l) in lines {
            if end.is_some() {
                return Err(bad(format!("line {}: content after the terminal line", no + 1)));
            }
            match serde_json::from_str(l).map_err(|e| bad(format!("line {}: {e}", no + 1)))? {
                Line::Header(_) => return Err(bad(format!("line {}: second header", no + 1))),
                Line::Decision(d) => {
                    if records.last().is_some_and(|p| p.tick >= d.tick) {
                        return Err(bad(format!("line {}: ticks must increase", no + 1)));
                    }
                    if let Some(a) = &d.action {
                        if !d.legal.contains(a) {
                            return Err(bad(format!("line {}: action outside the legal set", no + 1)));
                        }
                    }
                    records.push(d);
                }
                Line::End(e) => end = Some(e),
            }
        }
        Ok(Self { header, records, end })
    }

    /// Records where the druid acted.
    pub fn actions(&self) -> impl Iterator<Item = &DecisionLine> {
        self.records.iter().filter(|r| r.action.is_some())
    }
}

/// A world together with the log of everything that happened to it.
#[derive(Debug, Clone)]
pub struct Episode {
    world: World,
    log: EpisodeLog,
}

impl Episode {
    pub fn new(scenario: &Scenario, seed: u64) -> Result<Self, SimError> {
        let world = World::from_scenario(scenario, seed)?;
        Ok(Self {
            world,
            log: EpisodeLog {
                header: LogHeader {
                    scenario: scenario.clone(),
                    seed,
                },
                records: Vec::new(),
                end: None,
            },
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.log
    }

    pub fn into_log(self) -> EpisodeLog {
        self.log
    }

    pub fn is_finished(&self) -> bool {
        self.log.end.is_some()
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.log.end.as_ref().map(|e| e.outcome)
    }

    pub fn snapshot(&self) -> Result<BattleSnapshot, SimError> {
        self.world.snapshot()
    }

    pub fn legal(&self) -> Result<Vec<Action>, SimError> {
        if self.is_finished() {
            return Ok(Vec::new());
        }
        self.world.legal_actions(&self.world.druid)
    }

    /// Logs the druid's decision, applies it and runs one tick.
    pub fn step(&mut self, actor: &str, action: Option<Action>) -> Result<Vec<Event>, SimError> {
        if self.is_finished() {
            return Err(SimError::Finished);
        }
        let snapshot = self.world.snapshot()?;
        let legal = self.legal()?;
        if let Some(a) = &action {
            if !legal.contains(a) {
                return Err(SimError::IllegalAction {
                    skill: a.skill.to_string(),
                    target: a.target.clone(),
                });
            }
        }
        let tick = self.world.tick;
        let events = self.world.step(action.as_ref())?;
        self.log.records.push(DecisionLine {
            tick,
            snapshot,
            actor: actor.to_string(),
            action,
            legal,
            events: events.clone(),
        });
        if let Some(outcome) = self.world.outcome() {
            self.finish(outcome);
        }
        Ok(events)
    }

    /// Writes the terminal line. No effect once finished.
    pub fn finish(&mut self, outcome: Outcome) {
        if self.log.end.is_none() {
            self.log.end = Some(LogEnd {
                outcome,
                final_tick: self.world.tick,
                state_digest: self.world.digest(),
            });
        }
    }
}

/// Chooses the druid's action each tick.
pub trait DruidPolicy {
    /// Label written to the log's `actor` field.
    fn actor(&self) -> &str;

    fn choose(&mut self, snapshot: &BattleSnapshot, legal: &[Action]) -> Result<Option<Action>, SimError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BotMode {
    Argmax,
    Sample,
}

impl FromStr for BotMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "argmax" => Ok(BotMode::Argmax),
            "sample" => Ok(BotMode::Sample),
            other => Err(format!("unknown bot mode `{other}`")),
        }
    }
}

/// The bot's decision: the highest ranked legal pair, or a pair drawn from
/// the joint posterior restricted to legal pairs. Returns the ranking that
/// justified the choice; the action is `None` when nothing is legal.
pub fn bot_choice<R: Rng>(
    model: &DecisionModel,
    snapshot: &BattleSnapshot,
    legal: &[Action],
    mode: BotMode,
    rng: &mut R,
) -> Result<(Option<Action>, RankedActions), SimError> {
    let ranked = model.joint(snapshot)?;
    let is_legal = |t: &str, s| legal.iter().any(|a| a.skill == s && a.target == t);
    let argmax = || select_action(&ranked, is_legal).map(|(t, s)| Action::new(s, t));
    let action = match mode {
        BotMode::Argmax => argmax(),
        BotMode::Sample => match ranked.restricted(is_legal) {
            Some(kept) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = kept.entries.last().map(|e| Action::new(e.skill, e.target.clone()));
                for e in &kept.entries {
                    acc += e.prob;
                    if u < acc {
                        pick = Some(Action::new(e.skill, e.target.clone()));
                        break;
                    }
                }
                pick
            }
            // every legal pair has probability zero
            None => argmax(),
        },
    };
    Ok((action, ranked))
}

pub struct BotPolicy {
    model: DecisionModel,
    mode: BotMode,
    rng: ChaCha8Rng,
}

impl BotPolicy {
    pub fn new(model: DecisionModel, mode: BotMode, seed: u64) -> Self {
        Self {
            model,
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl DruidPolicy for BotPolicy {
    fn actor(&self) -> &str {
        "bot"
    }

    fn choose(&mut self, snapshot: &BattleSnapshot, legal: &[Action]) -> Result<Option<Action>, SimError> {
        Ok(bot_choice(&self.model, snapshot, legal, self.mode, &mut self.rng)?.0)
    }
}

/// Uniformly random legal actions.
pub struct ScriptedRandomPolicy {
    rng: ChaCha8Rng,
}

impl ScriptedRandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl DruidPolicy for ScriptedRandomPolicy {
    fn actor(&self) -> &str {
        "scripted"
    }

    fn choose(&mut self, _: &BattleSnapshot, legal: &[Action]) -> Result<Option<Action>, SimError> {
        Ok(legal.choose(&mut self.rng).cloned())
    }
}

/// Replays queued actions; idles once the queue is empty.
pub struct ExternalPolicy {
    actor: String,
    queue: VecDeque<Action>,
}

impl ExternalPolicy {
    pub fn new(actor: impl Into<String>, queue: impl IntoIterator<Item = Action>) -> Self {
        Self {
            actor: actor.into(),
            queue: queue.into_iter().collect(),
        }
    }
}

impl DruidPolicy for ExternalPolicy {
    fn actor(&self) -> &str {
        &self.actor
    }

    fn choose(&mut self, _: &BattleSnapshot, _: &[Action]) -> Result<Option<Action>, SimError> {
        Ok(self.queue.pop_front())
    }
}

/// Plays until one side is wiped out or `max_ticks` decisions were made.
pub fn run_episode(
    scenario: &Scenario,
    policy: &mut dyn DruidPolicy,
    max_ticks: u32,
    seed: u64,
) -> Result<EpisodeLog, SimError> {
    if max_ticks == 0 {
        return Err(SimError::BadScenario("max_ticks must be at least 1".into()));
    }
    let mut episode = Episode::new(scenario, seed)?;
    for _ in 0..max_ticks {
        if episode.is_finished() {
            break;
        }
        let snapshot = episode.snapshot()?;
        let legal = episode.legal()?;
        let action = policy.choose(&snapshot, &legal)?;
        let actor = policy.actor().to_string();
        episode.step(&actor, action)?;
    }
    episode.finish(Outcome::Timeout);
    Ok(episode.into_log())
}

/// Re-runs a log through the simulator, checking every recorded snapshot,
/// legal set and event list, and the terminal state when present.
pub fn replay(log: &EpisodeLog) -> Result<World, SimError> {
    let bad = |m: String| SimError::MalformedLog(m);
    let mut episode = Episode::new(&log.header.scenario, log.header.seed)?;
    for r in &log.records {
        if episode.world().tick != r.tick {
            return Err(bad(format!(
                "record at tick {} but the world is at {}",
                r.tick,
                episode.world().tick
            )));
        }
        if episode.snapshot()? != r.snapshot {
            return Err(bad(format!("tick {}: snapshot differs", r.tick)));
        }
        if episode.legal()? != r.legal {
            return Err(bad(format!("tick {}: legal set differs", r.tick)));
        }
        let events = episode
            .step(&r.actor, r.action.clone())
            .map_err(|e| bad(format!("tick {}: {e}", r.tick)))?;
        if events != r.events {
            return Err(bad(format!("tick {}: events differ", r.tick)));
        }
    }
    if let Some(end) = &log.end {
        let world = episode.world();
        let outcome = world.outcome().unwrap_or(Outcome::Timeout);
        if outcome != end.outcome || world.tick != end.final_tick || world.digest() != end.state_digest {
            return Err(bad("terminal state differs".into()));
        }
    }
    Ok(episode.world)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::sim::scenario::{builtin_setup, Setup};
    use crate::vars::Skill;

    fn bot(mode: BotMode) -> BotPolicy {
        let params = ModelParams::default().with_e_id(0.9);
        BotPolicy::new(DecisionModel::from_params(&params, 7).unwrap(), mode, 7)
    }

    #[test]
    fn one_tick_gives_one_record() {
        let log = run_episode(&builtin_setup(Setup::A), &mut bot(BotMode::Argmax), 1, 42).unwrap();
        assert_eq!(log.records.len(), 1);
        assert_eq!(log.end.as_ref().unwrap().outcome, Outcome::Timeout);
    }

    #[test]
    fn empty_queue_idles() {
        let mut p = ExternalPolicy::new("human", [Action::new(Skill::SmallDd, "Lich")]);
        let log = run_episode(&builtin_setup(Setup::A), &mut p, 3, 1).unwrap();
        assert!(log.records[0].action.is_some());
        assert!(log.records[1..].iter().all(|r| r.action.is_none()));
        assert!(matches!(log.records[1].events[0], Event::Idle { .. }));
    }

    #[test]
    fn bot_log_is_deterministic_and_replays() {
        let s = builtin_setup(Setup::A);
        let a = run_episode(&s, &mut bot(BotMode::Sample), 200, 42).unwrap().to_jsonl();
        let b = run_episode(&s, &mut bot(BotMode::Sample), 200, 42).unwrap().to_jsonl();
        assert_eq!(a, b);
        let log = EpisodeLog::from_jsonl(&a).unwrap();
        assert_eq!(log.to_jsonl(), a);
        replay(&log).unwrap();
    }

    #[test]
    fn tampered_log_is_rejected() {
        let s = builtin_setup(Setup::B);
        let mut log = run_episode(&s, &mut ScriptedRandomPolicy::new(3), 30, 3).unwrap();
        log.records[2].events.clear();
        assert!(matches!(replay(&log), Err(SimError::MalformedLog(_))));

        let mut log = run_episode(&s, &mut ScriptedRandomPolicy::new(3), 30, 3).unwrap();
        log.end.as_mut().unwrap().state_digest = "00".into();
        assert!(matches!(replay(&log), Err(SimError::MalformedLog(_))));
    }

    #[test]
    fn illegal_line_fails_to_parse() {
        let s = builtin_setup(Setup::A);
        let mut log = run_episode(&s, &mut ScriptedRandomPolicy::new(9), 5, 9).unwrap();
        log.records[0].action = Some(Action::new(Skill::SmallHeal, "Lich"));
        assert!(matches!(
            EpisodeLog::from_jsonl(&log.to_jsonl()),
            Err(SimError::MalformedLog(_))
        ));
    }

    #[test]
    fn finished_episode_refuses_steps() {
        let mut s = builtin_setup(Setup::A);
        for e in &mut s.roster {
            if !e.ally {
                e.hp = 1;
                e.hp_history.clear();
            }
        }
        let mut ep = Episode::new(&s, 0).unwrap();
        ep.step("human", None).unwrap();
        assert_eq!(ep.outcome(), Some(Outcome::Win));
        assert!(ep.legal().unwrap().is_empty());
        assert!(matches!(ep.step("human", None), Err(SimError::Finished)));
    }
}
