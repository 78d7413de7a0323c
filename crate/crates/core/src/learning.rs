//! Table identification by counting decision records, a generative sampler
//! for recovery checks, and predictive scoring.

use std::collections::BTreeMap;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LearnError, ModelError, ProbError, SimError};
use crate::model::{
    skill_given_target, BattleSnapshot, CharacterState, DecisionModel, ModelParams, SkillModel, TargetModel,
    TransitionPrior, SKILL_TABLES, TARGET_TABLES,
};
use crate::prob::{kl_divergence_slices, ConditionalTable};
use crate::sim::{replay, Action, EpisodeLog};
use crate::vars::{Class, DeltaHp, DistanceZone, Resists, Skill};

/// Log-loss floor for pairs the model rules out.
pub const LOG_LOSS_FLOOR: f64 = 1e-12;

/// Which decomposition a record is evidence for. Played records inform
/// both; synthetic records come from one generative story.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    #[default]
    Both,
    Target,
    Skill,
}

impl Scope {
    fn target(self) -> bool {
        self != Scope::Skill
    }

    fn skill(self) -> bool {
        self != Scope::Target
    }
}

/// A state and the (target, skill) pair chosen in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub snapshot: BattleSnapshot,
    pub chosen: Action,
    /// Pairs that were castable, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub legal: Option<Vec<Action>>,
    #[serde(default)]
    pub scope: Scope,
}

fn malformed(e: SimError) -> LearnError {
    match e {
        SimError::MalformedLog(m) => LearnError::MalformedLog(m),
        other => LearnError::MalformedLog(other.to_string()),
    }
}

/// Decision records of every non-idle tick, after checking the log against
/// the simulator. Snapshots are the ones perception recomputes on replay.
pub fn extract_records(log: &EpisodeLog) -> Result<Vec<DecisionRecord>, LearnError> {
    replay(log).map_err(malformed)?;
    Ok(log
        .actions()
        .map(|r| DecisionRecord {
            snapshot: r.snapshot.clone(),
            chosen: r.action.clone().expect("filtered on actions"),
            legal: Some(r.legal.clone()),
            scope: Scope::Both,
        })
        .collect())
}

pub fn load_log(path: &Path) -> Result<EpisodeLog, LearnError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| LearnError::MalformedLog(format!("{}: {e}", path.display())))?;
    EpisodeLog::from_jsonl(&text).map_err(malformed)
}

/// (row, child) cell of each target table, in `TARGET_TABLES` order.
fn target_cells(m: &TargetModel, c: &CharacterState, targeted: bool) -> [(usize, usize); 6] {
    let (a, cl, t) = (usize::from(c.ally), c.class.index(), usize::from(targeted));
    [
        (m.hp.row_index(&[a, cl, t]), usize::from(c.hp_level)),
        (m.distance.row_index(&[a, t]), c.distance.index()),
        (m.ally.row_index(&[t]), a),
        (m.delta_hp.row_index(&[a, cl, t]), c.delta_hp.index()),
        (m.imminent_death.row_index(&[t]), usize::from(c.imminent_death)),
        (m.class.row_index(&[a, t]), cl),
    ]
}

/// (row, child) cell of each skill table, in `SKILL_TABLES` order.
fn skill_cells(m: &SkillModel, c: &CharacterState, s: usize, targeted: bool) -> [(usize, usize); 7] {
    let (a, cl, t) = (usize::from(c.ally), c.class.index(), usize::from(targeted));
    [
        (m.hp.row_index(&[a, cl, s, t]), usize::from(c.hp_level)),
        (m.distance.row_index(&[a, s, t]), c.distance.index()),
        (m.ally.row_index(&[s, t]), a),
        (m.delta_hp.row_index(&[a, s, t]), c.delta_hp.index()),
        (m.resists.row_index(&[cl, s, t]), c.resists.index()),
        (m.imminent_death.row_index(&[s, t]), usize::from(c.imminent_death)),
        (m.class.row_index(&[a, s, t]), cl),
    ]
}

/// Integer counts shaped like a table.
#[derive(Debug, Clone)]
struct Counts {
    cells: Vec<Vec<u64>>,
}

impl Counts {
    fn like(table: &ConditionalTable) -> Self {
        Self {
            cells: vec![vec![0; table.child().len()]; table.row_count()],
        }
    }

    fn add(&mut self, (row, child): (usize, usize)) {
        self.cells[row][child] += 1;
    }

    fn coverage(&self) -> f64 {
        let seen = self.cells.iter().filter(|r| r.iter().any(|&c| c > 0)).count();
        seen as f64 / self.cells.len() as f64
    }

    /// Laplace-smoothed table; unobserved rows without pseudocount are uniform.
    fn to_table(&self, template: &ConditionalTable, pseudocount: f64) -> Result<ConditionalTable, ProbError> {
        let k = template.child().len() as f64;
        let rows = self
            .cells
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                if total == 0 && pseudocount == 0.0 {
                    return vec![1.0 / k; row.len()];
                }
                let z = total as f64 + pseudocount * k;
                row.iter().map(|&c| (c as f64 + pseudocount) / z).collect()
            })
            .collect();
        ConditionalTable::new(template.child().clone(), template.parents().to_vec(), rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub records: usize,
    pub target_records: usize,
    pub skill_records: usize,
    pub pseudocount: f64,
    /// Fraction of rows with at least one observation, keyed `model.table`.
    pub coverage: BTreeMap<String, f64>,
    /// Records that had a previous target still alive.
    pub transition_observations: u64,
    pub transition: TransitionPrior,
}

/// Fits every learnable table by counting. P(S) stays uniform.
pub fn fit(records: &[DecisionRecord], pseudocount: f64) -> Result<(DecisionModel, FitReport), LearnError> {
    if !(pseudocount >= 0.0 && pseudocount.is_finite()) {
        return Err(LearnError::InvalidArgument(format!(
            "pseudocount {pseudocount} must be >= 0"
        )));
    }
    if records.is_empty() && pseudocount == 0.0 {
        return Err(LearnError::NoData);
    }
    let roster_size = records.iter().map(|r| r.snapshot.len()).max().unwrap_or(0);
    let template = DecisionModel::from_params(&ModelParams::default(), roster_size.max(1))?;
    let mut tc: Vec<Counts> = template.target.tables().map(|(_, t)| Counts::like(t)).collect();
    let mut sc: Vec<Counts> = template.skill.tables().map(|(_, t)| Counts::like(t)).collect();
    let (mut kept, mut moves) = (0u64, 0u64);
    let (mut n_target, mut n_skill) = (0, 0);

    for r in records {
        let snap = &r.snapshot;
        if snap.index_of(&r.chosen.target).is_none() {
            return Err(LearnError::InvalidArgument(format!(
                "chosen target `{}` is not in the snapshot",
                r.chosen.target
            )));
        }
        if r.scope.target() {
            n_target += 1;
            for c in snap.characters() {
                for (counts, cell) in tc
                    .iter_mut()
                    .zip(target_cells(&template.target, c, c.id == r.chosen.target))
                {
                    counts.add(cell);
                }
            }
            if let (Some(prev), true) = (snap.prev_target(), snap.len() > 1) {
                moves += 1;
                kept += u64::from(prev == r.chosen.target);
            }
        }
        if r.scope.skill() {
            n_skill += 1;
            let s = r.chosen.skill.index();
            for c in snap.characters() {
                for (counts, cell) in sc
                    .iter_mut()
                    .zip(skill_cells(&template.skill, c, s, c.id == r.chosen.target))
                {
                    counts.add(cell);
                }
            }
        }
    }

    let mut model = template.clone();
    model.roster_size = roster_size;
    let mut coverage = BTreeMap::new();
    for ((name, t), counts) in template.target.tables().zip(&tc) {
        model
            .target
            .replace_table(name, counts.to_table(t, pseudocount).map_err(ModelError::from)?)?;
        coverage.insert(format!("target.{name}"), counts.coverage());
    }
    for ((name, t), counts) in template.skill.tables().zip(&sc) {
        model
            .skill
            .replace_table(name, counts.to_table(t, pseudocount).map_err(ModelError::from)?)?;
        coverage.insert(format!("skill.{name}"), counts.coverage());
    }
    model.target.transition = if moves == 0 && pseudocount == 0.0 {
        TransitionPrior::Uniform
    } else {
        TransitionPrior::Persistence((kept as f64 + pseudocount) / (moves as f64 + 2.0 * pseudocount))
    };
    let report = FitReport {
        records: records.len(),
        target_records: n_target,
        skill_records: n_skill,
        pseudocount,
        coverage,
        transition_observations: moves,
        transition: model.target.transition,
    };
    Ok((model, report))
}

fn draw<R: Rng>(row: &[f64], rng: &mut R) -> usize {
    WeightedIndex::new(row)
        .expect("table rows have positive mass")
        .sample(rng)
}

fn character_id(i: usize) -> String {
    format!("c{i}")
}

fn target_story<R: Rng>(m: &TargetModel, n: usize, rng: &mut R) -> Result<(BattleSnapshot, usize), ModelError> {
    let prev = rng.random_range(0..n);
    let t = draw(&m.transition.row(n, Some(prev)), rng);
    let mut chars = Vec::with_capacity(n);
    for i in 0..n {
        let ti = usize::from(i == t);
        let a = draw(m.ally.row(&[ti]), rng);
        let cl = draw(m.class.row(&[a, ti]), rng);
        chars.push(CharacterState {
            id: character_id(i),
            hp_level: draw(m.hp.row(&[a, cl, ti]), rng) as u8,
            distance: DistanceZone::from_index(draw(m.distance.row(&[a, ti]), rng)).expect("domain"),
            ally: a == 1,
            delta_hp: DeltaHp::from_index(draw(m.delta_hp.row(&[a, cl, ti]), rng)).expect("domain"),
            imminent_death: draw(m.imminent_death.row(&[ti]), rng) == 1,
            class: Class::from_index(cl).expect("domain"),
            // not part of the target decomposition
            resists: Resists::from_index(rng.random_range(0..Resists::ALL.len())).expect("domain"),
        });
    }
    Ok((BattleSnapshot::new(chars, Some(character_id(prev)))?, t))
}

fn skill_story<R: Rng>(m: &SkillModel, n: usize, rng: &mut R) -> Result<(BattleSnapshot, usize, usize), ModelError> {
    let s = draw(m.prior.probs(), rng);
    let t = rng.random_range(0..n);
    let mut chars = Vec::with_capacity(n);
    for i in 0..n {
        let ti = usize::from(i == t);
        let a = draw(m.ally.row(&[s, ti]), rng);
        let cl = draw(m.class.row(&[a, s, ti]), rng);
        chars.push(CharacterState {
            id: character_id(i),
            hp_level: draw(m.hp.row(&[a, cl, s, ti]), rng) as u8,
            distance: DistanceZone::from_index(draw(m.distance.row(&[a, s, ti]), rng)).expect("domain"),
            ally: a == 1,
            delta_hp: DeltaHp::from_index(draw(m.delta_hp.row(&[a, s, ti]), rng)).expect("domain"),
            imminent_death: draw(m.imminent_death.row(&[s, ti]), rng) == 1,
            class: Class::from_index(cl).expect("domain"),
            resists: Resists::from_index(draw(m.resists.row(&[cl, s, ti]), rng)).expect("domain"),
        });
    }
    Ok((BattleSnapshot::new(chars, None)?, t, s))
}

/// Records drawn from the two generative stories, alternating: even
/// indices follow the target decomposition (with a skill then drawn from
/// P(S | T, state)), odd indices follow the skill decomposition.
pub fn sample_generative(model: &DecisionModel, count: usize, seed: u64) -> Result<Vec<DecisionRecord>, LearnError> {
    if count == 0 {
        return Err(LearnError::InvalidArgument("count must be at least 1".into()));
    }
    let n = model.roster_size.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let record = if k % 2 == 0 {
            let (snapshot, t) = target_story(&model.target, n, &mut rng)?;
            let target = character_id(t);
            let skill = match skill_given_target(&model.skill, &snapshot, &target) {
                Ok(d) => draw(d.probs(), &mut rng),
                Err(ModelError::Prob(ProbError::AllZero)) => draw(model.skill.prior.probs(), &mut rng),
                Err(e) => return Err(e.into()),
            };
            DecisionRecord {
                snapshot,
                chosen: Action::new(Skill::from_index(skill).expect("domain"), target),
                legal: None,
                scope: Scope::Target,
            }
        } else {
            let (snapshot, t, s) = skill_story(&model.skill, n, &mut rng)?;
            DecisionRecord {
                snapshot,
                chosen: Action::new(Skill::from_index(s).expect("domain"), character_id(t)),
                legal: None,
                scope: Scope::Skill,
            }
        };
        out.push(record);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: usize,
    pub top1: f64,
    pub top3: f64,
    /// Mean of -ln P(chosen), floored at [`LOG_LOSS_FLOOR`].
    pub log_loss: f64,
    /// 1 / mean number of candidate pairs.
    pub uniform_baseline: f64,
}

/// Ranks each record's pairs with the joint posterior (restricted to the
/// legal pairs when they are known) and scores the chosen pair.
pub fn evaluate(model: &DecisionModel, records: &[DecisionRecord]) -> Result<EvalReport, LearnError> {
    if records.is_empty() {
        return Err(LearnError::NoData);
    }
    let (mut top1, mut top3, mut loss, mut candidates) = (0usize, 0usize, 0.0, 0usize);
    for r in records {
        let full = model.joint(&r.snapshot)?;
        let ranked = match &r.legal {
            Some(legal) => {
                candidates += legal.len();
                full.restricted(|t, s| legal.iter().any(|a| a.skill == s && a.target == t))
                    .unwrap_or(full)
            }
            None => {
                candidates += full.entries.len();
                full
            }
        };
        match ranked.rank_of(&r.chosen.target, r.chosen.skill) {
            Some(0) => {
                top1 += 1;
                top3 += 1;
            }
            Some(k) if k < 3 => top3 += 1,
            _ => {}
        }
        let p = ranked.prob(&r.chosen.target, r.chosen.skill).unwrap_or(0.0);
        loss -= p.max(LOG_LOSS_FLOOR).ln();
    }
    let n = records.len() as f64;
    Ok(EvalReport {
        records: records.len(),
        top1: top1 as f64 / n,
        top3: top3 as f64 / n,
        log_loss: loss / n,
        uniform_baseline: n / candidates.max(1) as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDivergence {
    pub max: f64,
    pub mean: f64,
    /// KL(a row ‖ b row), in row order.
    pub rows: Vec<f64>,
}

/// Row-wise KL divergence between two models, keyed `model.table`. The
/// persistence scalars are compared as `target.transition` when both
/// models use one.
pub fn model_divergence(a: &DecisionModel, b: &DecisionModel) -> Result<BTreeMap<String, TableDivergence>, LearnError> {
    let mut out = BTreeMap::new();
    let pairs = TARGET_TABLES
        .iter()
        .map(|n| (format!("target.{n}"), a.target.table(n), b.target.table(n)))
        .chain(
            SKILL_TABLES
                .iter()
                .map(|n| (format!("skill.{n}"), a.skill.table(n), b.skill.table(n))),
        );
    for (name, ta, tb) in pairs {
        let (ta, tb) = (ta.expect("known table"), tb.expect("known table"));
        if !ta.same_shape(tb) {
            return Err(LearnError::DomainMismatch(name));
        }
        let rows = ta
            .rows()
            .iter()
            .zip(tb.rows())
            .map(|(p, q)| kl_divergence_slices(p, q))
            .collect();
        out.insert(name, summarize(rows));
    }
    if a.skill.prior.domain() != b.skill.prior.domain() {
        return Err(LearnError::DomainMismatch("skill.prior".into()));
    }
    let prior = kl_divergence_slices(a.skill.prior.probs(), b.skill.prior.probs());
    out.insert("skill.prior".into(), summarize(vec![prior]));
    if let (TransitionPrior::Persistence(p), TransitionPrior::Persistence(q)) =
        (a.target.transition, b.target.transition)
    {
        let kl = kl_divergence_slices(&[p, 1.0 - p], &[q, 1.0 - q]);
        out.insert("target.transition".into(), summarize(vec![kl]));
    }
    Ok(out)
}

fn summarize(rows: Vec<f64>) -> TableDivergence {
    let max = rows.iter().copied().fold(0.0, f64::max);
    let mean = rows.iter().sum::<f64>() / rows.len() as f64;
    TableDivergence { max, mean, rows }
}

/// Number of times each row of each table was observed by [`fit`].
pub fn row_observations(records: &[DecisionRecord], like: &DecisionModel) -> BTreeMap<String, Vec<u64>> {
    let mut out: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    for (name, t) in like.target.tables() {
        out.insert(format!("target.{name}"), vec![0; t.row_count()]);
    }
    for (name, t) in like.skill.tables() {
        out.insert(format!("skill.{name}"), vec![0; t.row_count()]);
    }
    for r in records {
        for c in r.snapshot.characters() {
            let targeted = c.id == r.chosen.target;
            if r.scope.target() {
                for (name, (row, _)) in TARGET_TABLES.iter().zip(target_cells(&like.target, c, targeted)) {
                    out.get_mut(&format!("target.{name}")).expect("inserted")[row] += 1;
                }
            }
            if r.scope.skill() {
                let s = r.chosen.skill.index();
                for (name, (row, _)) in SKILL_TABLES.iter().zip(skill_cells(&like.skill, c, s, targeted)) {
                    out.get_mut(&format!("skill.{name}")).expect("inserted")[row] += 1;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{builtin_setup, run_episode, ExternalPolicy, Setup};

    fn state(id: &str, ally: bool, id_flag: bool) -> CharacterState {
        CharacterState {
            id: id.into(),
            hp_level: 5,
            distance: DistanceZone::Close,
            ally,
            delta_hp: DeltaHp::Zero,
            imminent_death: id_flag,
            class: Class::Tank,
            resists: Resists::Nothing,
        }
    }

    fn record(target: &str, flags: [bool; 2]) -> DecisionRecord {
        let snap = BattleSnapshot::new(vec![state("x", true, flags[0]), state("y", false, flags[1])], None).unwrap();
        DecisionRecord {
            snapshot: snap,
            chosen: Action::new(Skill::SmallDd, target),
            legal: None,
            scope: Scope::Both,
        }
    }

    #[test]
    fn laplace_counts() {
        // targeted characters had ID true three times and false once
        let records = vec![
            record("x", [true, false]),
            record("x", [true, false]),
            record("y", [false, true]),
            record("y", [false, false]),
        ];
        let (m, report) = fit(&records, 1.0).unwrap();
        let row = m.target.imminent_death.lookup(&["true"]).unwrap();
        assert_eq!(row.probs(), &[2.0 / 6.0, 4.0 / 6.0]);
        assert_eq!(report.records, 4);
        assert_eq!(report.coverage["target.imminent_death"], 1.0);
    }

    #[test]
    fn empty_fit() {
        assert!(matches!(fit(&[], 0.0), Err(LearnError::NoData)));
        let (m, report) = fit(&[], 1.0).unwrap();
        for (_, t) in m.target.tables().chain(m.skill.tables()) {
            for row in t.rows() {
                assert!(row.iter().all(|p| (p - row[0]).abs() < 1e-15));
            }
        }
        assert_eq!(m.target.transition, TransitionPrior::Persistence(0.5));
        assert_eq!(report.coverage["skill.hp"], 0.0);
    }

    #[test]
    fn fit_is_order_independent() {
        let model = DecisionModel::from_params(&ModelParams::default(), 4).unwrap();
        let mut records = sample_generative(&model, 400, 3).unwrap();
        let (a, _) = fit(&records, 1.0).unwrap();
        records.reverse();
        records.swap(3, 100);
        let (b, _) = fit(&records, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_is_seeded() {
        let model = DecisionModel::from_params(&ModelParams::default(), 3).unwrap();
        assert_eq!(
            sample_generative(&model, 50, 9).unwrap(),
            sample_generative(&model, 50, 9).unwrap()
        );
        assert_ne!(
            sample_generative(&model, 50, 9).unwrap(),
            sample_generative(&model, 50, 10).unwrap()
        );
        assert!(sample_generative(&model, 0, 9).is_err());
    }

    #[test]
    fn extraction_skips_idle_ticks() {
        let actions = [
            Action::new(Skill::SmallDd, "Lich"),
            Action::new(Skill::DebuffArmor, "Lich"),
        ];
        let mut policy = ExternalPolicy::new("human", actions);
        let log = run_episode(&builtin_setup(Setup::A), &mut policy, 6, 0).unwrap();
        let records = extract_records(&log).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[1].chosen, Action::new(Skill::DebuffArmor, "Lich"));
        assert_eq!(records[0].snapshot, log.records[0].snapshot);
    }

    #[test]
    fn extraction_rejects_illegal_actions() {
        let mut policy = ExternalPolicy::new("human", [Action::new(Skill::SmallDd, "Lich")]);
        let mut log = run_episode(&builtin_setup(Setup::A), &mut policy, 2, 0).unwrap();
        log.records[1].action = Some(Action::new(Skill::BigHeal, "Lich"));
        assert!(matches!(extract_records(&log), Err(LearnError::MalformedLog(_))));
    }

    #[test]
    fn evaluation_floor_and_top1() {
        let model = DecisionModel::from_params(&ModelParams::default(), 2).unwrap();
        let mut r = record("y", [false, false]);
        let top = model.joint(&r.snapshot).unwrap().top().cloned().unwrap();
        r.chosen = Action::new(top.skill, top.target);
        let report = evaluate(&model, &[r.clone()]).unwrap();
        assert_eq!((report.top1, report.top3), (1.0, 1.0));
        // a heal on a foe is impossible
        r.chosen = Action::new(Skill::BigHeal, "y");
        let report = evaluate(&model, &[r]).unwrap();
        assert_eq!(report.top1, 0.0);
        assert!((report.log_loss + LOG_LOSS_FLOOR.ln()).abs() < 1e-12);
        assert!(matches!(evaluate(&model, &[]), Err(LearnError::NoData)));
    }

    #[test]
    fn divergence_locality() {
        let a = DecisionModel::from_params(&ModelParams::default(), 7).unwrap();
        let d = model_divergence(&a, &a).unwrap();
        assert!(d.values().all(|t| t.max == 0.0));
        let mut b = a.clone();
        let t = b.skill.imminent_death.clone();
        let mut rows = t.rows().to_vec();
        let r = t.row_index(&[Skill::BigHeal.index(), 1]);
        rows[r].swap(0, 1);
        let swapped = ConditionalTable::new(t.child().clone(), t.parents().to_vec(), rows).unwrap();
        b.skill.replace_table("imminent_death", swapped).unwrap();
        let d = model_divergence(&a, &b).unwrap();
        for (name, t) in &d {
            assert_eq!(t.max > 0.0, name == "skill.imminent_death", "{name}");
        }
    }
}
