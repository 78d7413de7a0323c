//! Deterministic tick-based combat engine.

mod episode;
mod scenario;
mod skills;
mod world;

pub use episode::{
    bot_choice, replay, run_episode, BotMode, BotPolicy, DecisionLine, DruidPolicy, Episode, EpisodeLog,
    ExternalPolicy, LogEnd, LogHeader, ScriptedRandomPolicy,
};
pub use scenario::{builtin_setup, Affliction, PolicyKind, RosterEntry, Scenario, Setup};
pub use skills::{default_skills, SkillKind, SkillSpec};
pub use world::{Action, Effect, EffectKind, Entity, Event, Outcome, World};
