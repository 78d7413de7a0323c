//! Soft-evidence sweeps and the joint log-probability table, as CSV.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, SimError};
use crate::model::{skill_posterior, target_posterior, BattleSnapshot, DecisionModel, ModelParams};
use crate::sim::{Scenario, World};
use crate::vars::Skill;

/// Significant digits of every number written to CSV.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Formats with 12 significant digits, fixed notation for moderate
/// magnitudes, trailing zeros trimmed. Negative infinity is `-inf`.
pub fn fmt_sig(x: f64) -> String {
    if x == f64::NEG_INFINITY {
        return "-inf".into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..SIGNIFICANT_DIGITS as i32).contains(&exp) {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// `start:stop:step` over [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl SweepGrid {
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self, String> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(unit(start) && unit(stop) && start <= stop) {
            return Err(format!("grid {start}:{stop} must satisfy 0 <= start <= stop <= 1"));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(format!("grid step {step} must be positive"));
        }
        Ok(Self { start, stop, step })
    }

    /// Grid points `start + k * step` up to `stop`, tolerating rounding.
    pub fn points(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=count).map(|k| self.start + k as f64 * self.step).collect()
    }
}

impl FromStr for SweepGrid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, c] = parts.as_slice() else {
            return Err(format!("grid `{s}` must look like start:stop:step"));
        };
        let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("grid `{s}`: {e}"));
        Self::new(num(a)?, num(b)?, num(c)?)
    }
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            start: 0.0,
            stop: 1.0,
            step: 0.05,
        }
    }
}

/// Snapshot of the scenario's opening state.
pub fn initial_snapshot(scenario: &Scenario) -> Result<BattleSnapshot, SimError> {
    World::from_scenario(scenario, 0)?.snapshot()
}

/// One row per grid point: `e_id`, then P(T = id) in roster order.
pub fn sweep_target(snapshot: &BattleSnapshot, grid: &SweepGrid, params: &ModelParams) -> Result<String, ModelError> {
    let mut out = String::from("e_id");
    for c in snapshot.characters() {
        write!(out, ",{}", c.id).unwrap();
    }
    out.push('\n');
    for e in grid.points() {
        let model = DecisionModel::from_params(&params.clone().with_e_id(e), snapshot.len())?;
        let dist = target_posterior(&model.target, snapshot)?;
        push_row(&mut out, e, dist.probs());
    }
    Ok(out)
}

/// One row per grid point: `e_id`, then P(S = s) through the mixture over
/// targets. Only the target model sees the swept value.
pub fn sweep_skill(snapshot: &BattleSnapshot, grid: &SweepGrid, params: &ModelParams) -> Result<String, ModelError> {
    let mut out = String::from("e_id");
    for s in Skill::ALL {
        write!(out, ",{s}").unwrap();
    }
    out.push('\n');
    let skill_model = DecisionModel::from_params(params, snapshot.len())?.skill;
    for e in grid.points() {
        let model = DecisionModel::from_params(&params.clone().with_e_id(e), snapshot.len())?;
        let targets = target_posterior(&model.target, snapshot)?;
        let dist = skill_posterior(&skill_model, snapshot, &targets)?;
        push_row(&mut out, e, dist.probs());
    }
    Ok(out)
}

fn push_row(out: &mut String, e: f64, probs: &[f64]) {
    out.push_str(&fmt_sig(e));
    for p in probs {
        write!(out, ",{}", fmt_sig(*p)).unwrap();
    }
    out.push('\n');
}

/// Natural-log joint P(T, S) with targets as rows and skills as columns.
pub fn joint_table(snapshot: &BattleSnapshot, params: &ModelParams) -> Result<String, ModelError> {
    let model = DecisionModel::from_params(params, snapshot.len())?;
    let ranked = model.joint(snapshot)?;
    let mut out = String::from("target");
    for s in Skill::ALL {
        write!(out, ",{s}").unwrap();
    }
    out.push('\n');
    for c in snapshot.characters() {
        out.push_str(&c.id);
        for s in Skill::ALL {
            let p = ranked.prob(&c.id, *s).expect("every pair is ranked");
            let cell = if p == 0.0 { f64::NEG_INFINITY } else { p.ln() };
            write!(out, ",{}", fmt_sig(cell)).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{builtin_setup, Setup};

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(0.15000000000000002), "0.15");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(-std::f64::consts::LN_10), "-2.30258509299");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_sig(1.5e-9), "1.5e-9");
        assert_eq!(fmt_sig(f64::NEG_INFINITY), "-inf");
        assert_eq!(fmt_sig(0.0), "0");
    }

    #[test]
    fn grid_points() {
        let g: SweepGrid = "0:1:0.05".parse().unwrap();
        let pts = g.points();
        assert_eq!(pts.len(), 21);
        assert_eq!(fmt_sig(pts[20]), "1");
        assert_eq!("0.2:0.2:0.1".parse::<SweepGrid>().unwrap().points(), vec![0.2]);
        assert!("1:0:0.1".parse::<SweepGrid>().is_err());
        assert!("0:1:0".parse::<SweepGrid>().is_err());
        assert!("0:1".parse::<SweepGrid>().is_err());
    }

    #[test]
    fn sweep_shape() {
        let snap = initial_snapshot(&builtin_setup(Setup::A)).unwrap();
        let csv = sweep_target(&snap, &SweepGrid::default(), &ModelParams::default()).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 22);
        assert_eq!(lines[0], "e_id,Lich,Add,MT,Warrior,Hunter,Priest,Druid");
        assert!(lines[1].starts_with("0,") && lines[1].contains(",0,"));
    }

    #[test]
    fn joint_has_hard_zeros() {
        let snap = initial_snapshot(&builtin_setup(Setup::A)).unwrap();
        let csv = joint_table(&snap, &ModelParams::default().with_e_id(0.9).with_prev_weight(2.0)).unwrap();
        let lich: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(lich[0], "Lich");
        assert!(lich[1..8].iter().all(|c| *c == "-inf"));
        assert!(lich[8..].iter().all(|c| *c != "-inf"));
    }
}
