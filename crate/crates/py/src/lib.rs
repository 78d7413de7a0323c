//! Python module `bayes_arena`.
//!
//! Structured results (events, reports, snapshots) cross the boundary as
//! plain dicts and lists built from their JSON form.

use std::collections::BTreeMap;

use bayes_arena::experiments::{self, SweepGrid};
use bayes_arena::learning;
use bayes_arena::model::{self, BattleSnapshot, ModelParams};
use bayes_arena::sim::{self, Action, BotMode, BotPolicy, DruidPolicy, EpisodeLog, ScriptedRandomPolicy};
use bayes_arena::vars::Skill;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

create_exception!(bayes_arena, BayesArenaError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    BayesArenaError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    PyModule::import(py, "json")?.call_method1("loads", (text,))
}

fn from_py<T: serde::de::DeserializeOwned>(py: Python<'_>, value: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = PyModule::import(py, "json")?
        .call_method1("dumps", (value,))?
        .extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn skill(name: &str) -> PyResult<Skill> {
    name.parse().map_err(PyValueError::new_err)
}

fn params(e_id: f64, e_ally: f64, prev_weight: Option<f64>, persistence: Option<f64>) -> PyResult<ModelParams> {
    let mut p = ModelParams::default().with_e_id(e_id).with_e_ally(e_ally);
    if let Some(q) = persistence {
        p = p.with_persistence(q);
    }
    if let Some(w) = prev_weight {
        p = p.with_prev_weight(w);
    }
    p.validate().map_err(err)?;
    Ok(p)
}

/// A fight description: `Scenario.builtin("A")` or `Scenario.from_json(text)`.
#[pyclass(name = "Scenario", module = "bayes_arena", from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: sim::Scenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        let setup: sim::Setup = name.parse().map_err(PyValueError::new_err)?;
        Ok(Self {
            inner: sim::builtin_setup(setup),
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: sim::Scenario::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.inner).expect("scenario serializes")
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn roster(&self) -> Vec<String> {
        self.inner.roster.iter().map(|e| e.id.clone()).collect()
    }

    /// Discrete state of every character at tick 0.
    fn initial_snapshot<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &experiments::initial_snapshot(&self.inner).map_err(err)?)
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario({:?}, {} characters)",
            self.inner.name,
            self.inner.roster.len()
        )
    }
}

/// Target and skill tables used together.
#[pyclass(name = "DecisionModel", module = "bayes_arena", from_py_object)]
#[derive(Clone)]
struct PyDecisionModel {
    inner: model::DecisionModel,
}

#[pymethods]
impl PyDecisionModel {
    #[new]
    #[pyo3(signature = (roster_size, e_id=0.5, e_ally=0.6, prev_weight=None, persistence=None))]
    fn new(
        roster_size: usize,
        e_id: f64,
        e_ally: f64,
        prev_weight: Option<f64>,
        persistence: Option<f64>,
    ) -> PyResult<Self> {
        let p = params(e_id, e_ally, prev_weight, persistence)?;
        Ok(Self {
            inner: model::DecisionModel::from_params(&p, roster_size).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: model::DecisionModel::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn roster_size(&self) -> usize {
        self.inner.roster_size
    }

    /// P(T) keyed by character id.
    fn target_posterior(&self, py: Python<'_>, snapshot: &Bound<'_, PyAny>) -> PyResult<BTreeMap<String, f64>> {
        let snap: BattleSnapshot = from_py(py, snapshot)?;
        let d = model::target_posterior(&self.inner.target, &snap).map_err(err)?;
        Ok(d.iter().map(|(k, p)| (k.to_string(), p)).collect())
    }

    /// P(S) keyed by skill, mixed over the target posterior.
    fn skill_posterior(&self, py: Python<'_>, snapshot: &Bound<'_, PyAny>) -> PyResult<BTreeMap<String, f64>> {
        let snap: BattleSnapshot = from_py(py, snapshot)?;
        let t = model::target_posterior(&self.inner.target, &snap).map_err(err)?;
        let d = model::skill_posterior(&self.inner.skill, &snap, &t).map_err(err)?;
        Ok(d.iter().map(|(k, p)| (k.to_string(), p)).collect())
    }

    /// Every (target, skill, probability), best first.
    fn joint(&self, py: Python<'_>, snapshot: &Bound<'_, PyAny>) -> PyResult<Vec<(String, String, f64)>> {
        let snap: BattleSnapshot = from_py(py, snapshot)?;
        let ranked = self.inner.joint(&snap).map_err(err)?;
        Ok(ranked
            .entries
            .into_iter()
            .map(|e| (e.target, e.skill.to_string(), e.prob))
            .collect())
    }

    /// Highest ranked pair among `legal` (a list of `(skill, target)`), or
    /// `None`.
    fn select_action(
        &self,
        py: Python<'_>,
        snapshot: &Bound<'_, PyAny>,
        legal: Vec<(String, String)>,
    ) -> PyResult<Option<(String, String)>> {
        let snap: BattleSnapshot = from_py(py, snapshot)?;
        let legal: Vec<(Skill, String)> = legal
            .into_iter()
            .map(|(s, t)| Ok((skill(&s)?, t)))
            .collect::<PyResult<_>>()?;
        let ranked = self.inner.joint(&snap).map_err(err)?;
        let pick = model::select_action(&ranked, |t, s| legal.iter().any(|(ls, lt)| *ls == s && lt == t));
        Ok(pick.map(|(t, s)| (s.to_string(), t)))
    }

    fn __repr__(&self) -> String {
        format!("DecisionModel(roster_size={})", self.inner.roster_size)
    }
}

/// A fight in progress with its log.
#[pyclass(name = "Episode", module = "bayes_arena")]
struct PyEpisode {
    inner: sim::Episode,
    rng: ChaCha8Rng,
}

#[pymethods]
impl PyEpisode {
    #[new]
    #[pyo3(signature = (scenario, seed=0))]
    fn new(scenario: &PyScenario, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: sim::Episode::new(&scenario.inner, seed).map_err(err)?,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    #[getter]
    fn tick(&self) -> i64 {
        self.inner.world().tick
    }

    #[getter]
    fn finished(&self) -> bool {
        self.inner.is_finished()
    }

    /// `"win"`, `"loss"`, `"timeout"`, or `None` while running.
    #[getter]
    fn outcome(&self) -> Option<String> {
        self.inner
            .outcome()
            .and_then(|o| serde_json::to_value(o).ok())
            .and_then(|v| v.as_str().map(str::to_string))
    }

    fn snapshot<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.snapshot().map_err(err)?)
    }

    /// Legal druid actions as `(skill, target)`.
    fn legal(&self) -> PyResult<Vec<(String, String)>> {
        let legal = self.inner.legal().map_err(err)?;
        Ok(legal.into_iter().map(|a| (a.skill.to_string(), a.target)).collect())
    }

    /// Plays one tick. Without a skill the druid idles. Returns the events.
    #[pyo3(signature = (skill=None, target=None, actor="human"))]
    fn step<'py>(
        &mut self,
        py: Python<'py>,
        skill: Option<&str>,
        target: Option<&str>,
        actor: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let action = match (skill, target) {
            (Some(s), Some(t)) => Some(Action::new(self::skill(s)?, t)),
            (None, None) => None,
            _ => return Err(PyValueError::new_err("give both skill and target, or neither")),
        };
        let events = self.inner.step(actor, action).map_err(err)?;
        to_py(py, &events)
    }

    /// Lets `model` choose and play one tick; returns the chosen
    /// `(skill, target)` or `None` when it idled.
    #[pyo3(signature = (model, mode="argmax"))]
    fn bot_step(&mut self, model: &PyDecisionModel, mode: &str) -> PyResult<Option<(String, String)>> {
        let mode: BotMode = mode.parse().map_err(PyValueError::new_err)?;
        let snap = self.inner.snapshot().map_err(err)?;
        let legal = self.inner.legal().map_err(err)?;
        let (action, _) = sim::bot_choice(&model.inner, &snap, &legal, mode, &mut self.rng).map_err(err)?;
        self.inner.step("bot", action.clone()).map_err(err)?;
        Ok(action.map(|a| (a.skill.to_string(), a.target)))
    }

    /// Marks a running episode as timed out.
    fn finish(&mut self) {
        self.inner.finish(sim::Outcome::Timeout);
    }

    fn log_jsonl(&self) -> String {
        self.inner.log().to_jsonl()
    }

    fn digest(&self) -> String {
        self.inner.world().digest()
    }
}

/// Plays one episode and returns its JSON Lines log.
#[pyfunction]
#[pyo3(signature = (scenario, policy="bot", ticks=200, seed=0, model=None))]
fn simulate(
    scenario: &PyScenario,
    policy: &str,
    ticks: u32,
    seed: u64,
    model: Option<&PyDecisionModel>,
) -> PyResult<String> {
    let n = scenario.inner.roster.len();
    let bot = |mode| -> PyResult<Box<dyn DruidPolicy>> {
        let m = match model {
            Some(m) => m.inner.clone(),
            None => model::DecisionModel::from_params(&ModelParams::default(), n).map_err(err)?,
        };
        Ok(Box::new(BotPolicy::new(m, mode, seed)))
    };
    let mut policy: Box<dyn DruidPolicy> = match policy {
        "bot" => bot(BotMode::Argmax)?,
        "bot-sample" => bot(BotMode::Sample)?,
        "scripted-random" => Box::new(ScriptedRandomPolicy::new(seed)),
        other => return Err(PyValueError::new_err(format!("unknown policy `{other}`"))),
    };
    let log = sim::run_episode(&scenario.inner, policy.as_mut(), ticks, seed).map_err(err)?;
    Ok(log.to_jsonl())
}

/// Replays a log and returns the digest of the final world state.
#[pyfunction]
fn replay_digest(log: &str) -> PyResult<String> {
    let log = EpisodeLog::from_jsonl(log).map_err(err)?;
    Ok(sim::replay(&log).map_err(err)?.digest())
}

fn records(logs: &[String]) -> PyResult<Vec<learning::DecisionRecord>> {
    let mut out = Vec::new();
    for text in logs {
        let log = EpisodeLog::from_jsonl(text).map_err(err)?;
        out.extend(learning::extract_records(&log).map_err(err)?);
    }
    Ok(out)
}

/// Fits a model to JSON Lines logs. Returns the model and the fit report.
#[pyfunction]
#[pyo3(signature = (logs, pseudocount=1.0))]
fn fit<'py>(py: Python<'py>, logs: Vec<String>, pseudocount: f64) -> PyResult<(PyDecisionModel, Bound<'py, PyAny>)> {
    let (m, report) = learning::fit(&records(&logs)?, pseudocount).map_err(err)?;
    Ok((PyDecisionModel { inner: m }, to_py(py, &report)?))
}

/// Top-1, top-3, log-loss and the uniform baseline on JSON Lines logs.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, model: &PyDecisionModel, logs: Vec<String>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &learning::evaluate(&model.inner, &records(&logs)?).map_err(err)?)
}

fn sweep_params(e_ally: f64, prev_weight: Option<f64>) -> PyResult<ModelParams> {
    params(0.5, e_ally, prev_weight, None)
}

/// CSV of P(T) over an e_id grid given as `start:stop:step`.
#[pyfunction]
#[pyo3(signature = (scenario, grid="0:1:0.05", e_ally=0.6, prev_weight=None))]
fn sweep_target(scenario: &PyScenario, grid: &str, e_ally: f64, prev_weight: Option<f64>) -> PyResult<String> {
    let grid: SweepGrid = grid.parse().map_err(PyValueError::new_err)?;
    let snap = experiments::initial_snapshot(&scenario.inner).map_err(err)?;
    experiments::sweep_target(&snap, &grid, &sweep_params(e_ally, prev_weight)?).map_err(err)
}

/// CSV of P(S) over an e_id grid.
#[pyfunction]
#[pyo3(signature = (scenario, grid="0:1:0.05", e_ally=0.6, prev_weight=None))]
fn sweep_skill(scenario: &PyScenario, grid: &str, e_ally: f64, prev_weight: Option<f64>) -> PyResult<String> {
    let grid: SweepGrid = grid.parse().map_err(PyValueError::new_err)?;
    let snap = experiments::initial_snapshot(&scenario.inner).map_err(err)?;
    experiments::sweep_skill(&snap, &grid, &sweep_params(e_ally, prev_weight)?).map_err(err)
}

/// CSV of ln P(T, S), targets as rows.
#[pyfunction]
#[pyo3(signature = (scenario, e_id=0.9, e_ally=0.6, prev_weight=2.0))]
fn joint_table(scenario: &PyScenario, e_id: f64, e_ally: f64, prev_weight: f64) -> PyResult<String> {
    let snap = experiments::initial_snapshot(&scenario.inner).map_err(err)?;
    experiments::joint_table(&snap, &params(e_id, e_ally, Some(prev_weight), None)?).map_err(err)
}

#[pymodule(name = "bayes_arena")]
fn bayes_arena_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("BayesArenaError", m.py().get_type::<BayesArenaError>())?;
    m.add("SKILLS", Skill::ALL.iter().map(|s| s.to_string()).collect::<Vec<_>>())?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyDecisionModel>()?;
    m.add_class::<PyEpisode>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(replay_digest, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_target, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_skill, m)?)?;
    m.add_function(wrap_pyfunction!(joint_table, m)?)?;
    Ok(())
}
