//! Finite categorical distributions, conditional tables and log-space scoring.
//!
//! Tables hold probabilities in linear space so they stay readable and can be
//! filled by counting. Products over many characters are scored in log space
//! through [`LogWeight`], which keeps exact zeros as a dedicated variant.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::ProbError;

/// Tolerance on the sum of a stored distribution.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Smoothing mass added to `q` before evaluating a KL divergence.
pub const KL_EPSILON: f64 = 1e-9;

/// A named, ordered set of value labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawDomain")]
pub struct Domain {
    name: String,
    values: Vec<String>,
}

#[derive(Deserialize)]
struct RawDomain {
    name: String,
    values: Vec<String>,
}

impl TryFrom<RawDomain> for Domain {
    type Error = ProbError;

    fn try_from(raw: RawDomain) -> Result<Self, Self::Error> {
        Domain::new(raw.name, raw.values)
    }
}

impl Domain {
    pub fn new<N, I, S>(name: N, values: I) -> Result<Self, ProbError>
    where
        N: Into<String>,
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let name = name.into();
        let values: Vec<String> = values.into_iter().map(Into::into).collect();
        if values.is_empty() {
            return Err(ProbError::EmptyDomain(name));
        }
        for (i, v) in values.iter().enumerate() {
            if values[..i].contains(v) {
                return Err(ProbError::DuplicateValue {
                    domain: name,
                    value: v.clone(),
                });
            }
        }
        Ok(Self { name, values })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index_of(&self, value: &str) -> Option<usize> {
        self.values.iter().position(|v| v == value)
    }

    pub fn label(&self, index: usize) -> &str {
        &self.values[index]
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{{{}}}", self.name, self.values.join(","))
    }
}

/// A normalized probability vector aligned with a [`Domain`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Distribution {
    domain: Domain,
    probs: Vec<f64>,
}

impl Distribution {
    /// Wraps an already normalized vector, validating it.
    pub fn new(domain: Domain, probs: Vec<f64>) -> Result<Self, ProbError> {
        check_row(&domain, &probs)?;
        Ok(Self { domain, probs })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, value: &str) -> Option<f64> {
        self.domain.index_of(value).map(|i| self.probs[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.domain
            .values()
            .iter()
            .map(String::as_str)
            .zip(self.probs.iter().copied())
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }
}

impl<'de> Deserialize<'de> for Distribution {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            domain: Domain,
            probs: Vec<f64>,
        }
        let raw = Raw::deserialize(de)?;
        Distribution::new(raw.domain, raw.probs).map_err(D::Error::custom)
    }
}

fn check_row(domain: &Domain, probs: &[f64]) -> Result<(), ProbError> {
    if probs.len() != domain.len() {
        return Err(ProbError::LengthMismatch {
            expected: domain.len(),
            got: probs.len(),
        });
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
        return Err(ProbError::NegativeOrNaN);
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(ProbError::NotNormalized(sum));
    }
    Ok(())
}

/// Scales nonnegative weights so they sum to one.
pub fn normalize(weights: &[f64], domain: &Domain) -> Result<Distribution, ProbError> {
    if weights.len() != domain.len() {
        return Err(ProbError::LengthMismatch {
            expected: domain.len(),
            got: weights.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(ProbError::NegativeOrNaN);
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(ProbError::AllZero);
    }
    let probs = weights.iter().map(|w| w / total).collect();
    Ok(Distribution {
        domain: domain.clone(),
        probs,
    })
}

pub fn uniform(domain: &Domain) -> Distribution {
    let p = 1.0 / domain.len() as f64;
    Distribution {
        domain: domain.clone(),
        probs: vec![p; domain.len()],
    }
}

/// Most probable value; the first in domain order wins ties.
pub fn argmax(dist: &Distribution) -> &str {
    let mut best = 0;
    for (i, p) in dist.probs.iter().enumerate() {
        if *p > dist.probs[best] {
            best = i;
        }
    }
    dist.domain.label(best)
}

/// KL(p || q) with `q` smoothed by [`KL_EPSILON`] and renormalized.
pub fn kl_divergence(p: &Distribution, q: &Distribution) -> Result<f64, ProbError> {
    if p.domain != q.domain {
        return Err(ProbError::DomainMismatch {
            left: p.domain.to_string(),
            right: q.domain.to_string(),
        });
    }
    Ok(kl_divergence_slices(&p.probs, &q.probs))
}

pub fn kl_divergence_slices(p: &[f64], q: &[f64]) -> f64 {
    if p == q {
        return 0.0;
    }
    let z: f64 = q.iter().map(|x| x + KL_EPSILON).sum();
    let kl: f64 = p
        .iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / ((qi + KL_EPSILON) / z)).ln())
        .sum();
    kl.max(0.0)
}

/// Log of an unnormalized weight. `Zero` stands in for log 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogWeight {
    Zero,
    Finite(f64),
}

impl LogWeight {
    pub const ONE: LogWeight = LogWeight::Finite(0.0);

    pub fn from_prob(p: f64) -> Result<Self, ProbError> {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return Err(ProbError::FactorOutOfRange(p));
        }
        Ok(if p == 0.0 {
            LogWeight::Zero
        } else {
            LogWeight::Finite(p.ln())
        })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, LogWeight::Zero)
    }

    /// Natural log as an `f64`, with `-inf` for `Zero`. For display only.
    pub fn to_f64(self) -> f64 {
        match self {
            LogWeight::Zero => f64::NEG_INFINITY,
            LogWeight::Finite(x) => x,
        }
    }
}

impl std::ops::Mul for LogWeight {
    type Output = LogWeight;

    #[allow(clippy::suspicious_arithmetic_impl)]
    fn mul(self, other: LogWeight) -> LogWeight {
        match (self, other) {
            (LogWeight::Finite(a), LogWeight::Finite(b)) => LogWeight::Finite(a + b),
            _ => LogWeight::Zero,
        }
    }
}

/// Sum of logs of the factors.
pub fn log_score<I>(factors: I) -> Result<LogWeight, ProbError>
where
    I: IntoIterator<Item = f64>,
{
    let mut acc = LogWeight::ONE;
    for f in factors {
        acc = acc * LogWeight::from_prob(f)?;
    }
    Ok(acc)
}

/// Normalizes log weights with the max-shift trick.
pub fn normalize_log(weights: &[LogWeight], domain: &Domain) -> Result<Distribution, ProbError> {
    if weights.len() != domain.len() {
        return Err(ProbError::LengthMismatch {
            expected: domain.len(),
            got: weights.len(),
        });
    }
    let max = weights
        .iter()
        .filter_map(|w| match w {
            LogWeight::Finite(x) => Some(*x),
            LogWeight::Zero => None,
        })
        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))
        .ok_or(ProbError::AllZero)?;
    let linear: Vec<f64> = weights
        .iter()
        .map(|w| match w {
            LogWeight::Finite(x) => (x - max).exp(),
            LogWeight::Zero => 0.0,
        })
        .collect();
    normalize(&linear, domain)
}

/// P(child | parents), one row per element of the parents' Cartesian product.
///
/// Rows are stored in mixed-radix order with the last parent varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTable {
    child: Domain,
    parents: Vec<Domain>,
    rows: Vec<Vec<f64>>,
}

impl ConditionalTable {
    pub fn new(child: Domain, parents: Vec<Domain>, rows: Vec<Vec<f64>>) -> Result<Self, ProbError> {
        let expected: usize = parents.iter().map(Domain::len).product();
        if rows.len() != expected {
            return Err(ProbError::RowCount {
                expected,
                got: rows.len(),
            });
        }
        for row in &rows {
            check_row(&child, row)?;
        }
        Ok(Self { child, parents, rows })
    }

    /// Builds a table by evaluating `weights` on every parent assignment
    /// (given as per-parent value indices) and normalizing.
    pub fn from_fn<F>(child: Domain, parents: Vec<Domain>, mut weights: F) -> Result<Self, ProbError>
    where
        F: FnMut(&[usize]) -> Vec<f64>,
    {
        let mut rows = Vec::new();
        for assignment in assignments(&parents) {
            let w = weights(&assignment);
            rows.push(normalize(&w, &child)?.into_probs());
        }
        Self::new(child, parents, rows)
    }

    pub fn uniform(child: Domain, parents: Vec<Domain>) -> Self {
        let count: usize = parents.iter().map(Domain::len).product();
        let row = uniform(&child).into_probs();
        Self {
            child,
            parents,
            rows: vec![row; count],
        }
    }

    pub fn child(&self) -> &Domain {
        &self.child
    }

    pub fn parents(&self) -> &[Domain] {
        &self.parents
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    /// Flat row index of a parent assignment given by value indices.
    pub fn row_index(&self, parent_indices: &[usize]) -> usize {
        debug_assert_eq!(parent_indices.len(), self.parents.len());
        let mut idx = 0;
        for (d, &v) in self.parents.iter().zip(parent_indices) {
            debug_assert!(v < d.len());
            idx = idx * d.len() + v;
        }
        idx
    }

    /// Inverse of [`row_index`](Self::row_index).
    pub fn row_assignment(&self, mut row: usize) -> Vec<usize> {
        let mut out = vec![0; self.parents.len()];
        for (slot, d) in out.iter_mut().zip(&self.parents).rev() {
            *slot = row % d.len();
            row /= d.len();
        }
        out
    }

    pub fn row(&self, parent_indices: &[usize]) -> &[f64] {
        &self.rows[self.row_index(parent_indices)]
    }

    /// P(child = child_index | parents).
    #[inline]
    pub fn prob(&self, parent_indices: &[usize], child_index: usize) -> f64 {
        self.rows[self.row_index(parent_indices)][child_index]
    }

    /// Row lookup by value labels, in parent order.
    pub fn lookup(&self, parent_values: &[&str]) -> Result<Distribution, ProbError> {
        if parent_values.len() != self.parents.len() {
            return Err(ProbError::LengthMismatch {
                expected: self.parents.len(),
                got: parent_values.len(),
            });
        }
        let mut idx = Vec::with_capacity(parent_values.len());
        for (d, v) in self.parents.iter().zip(parent_values) {
            let i = d.index_of(v).ok_or_else(|| ProbError::UnknownParentValue {
                domain: d.name().to_string(),
                value: v.to_string(),
            })?;
            idx.push(i);
        }
        Ok(Distribution {
            domain: self.child.clone(),
            probs: self.row(&idx).to_vec(),
        })
    }

    pub fn row_key(&self, row: usize) -> String {
        self.row_assignment(row)
            .iter()
            .zip(&self.parents)
            .map(|(&i, d)| d.label(i))
            .collect::<Vec<_>>()
            .join("|")
    }

    pub fn same_shape(&self, other: &ConditionalTable) -> bool {
        self.child == other.child && self.parents == other.parents
    }
}

/// All assignments of value indices over `domains`, last domain fastest.
pub fn assignments(domains: &[Domain]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let total: usize = domains.iter().map(Domain::len).product();
    (0..total).map(move |mut k| {
        let mut out = vec![0; domains.len()];
        for (slot, d) in out.iter_mut().zip(domains).rev() {
            *slot = k % d.len();
            k /= d.len();
        }
        out
    })
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    child: Domain,
    parents: Vec<Domain>,
    rows: BTreeMap<String, Vec<f64>>,
}

impl Serialize for ConditionalTable {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        let rows = (0..self.rows.len())
            .map(|r| (self.row_key(r), self.rows[r].clone()))
            .collect();
        TableRepr {
            child: self.child.clone(),
            parents: self.parents.clone(),
            rows,
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for ConditionalTable {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let mut repr = TableRepr::deserialize(de)?;
        let shell = ConditionalTable::uniform(repr.child.clone(), repr.parents.clone());
        let mut rows = Vec::with_capacity(shell.row_count());
        for r in 0..shell.row_count() {
            let key = shell.row_key(r);
            let row = repr
                .rows
                .remove(&key)
                .ok_or_else(|| D::Error::custom(format!("missing row `{key}`")))?;
            rows.push(row);
        }
        if let Some(extra) = repr.rows.keys().next() {
            return Err(D::Error::custom(format!("unknown row `{extra}`")));
        }
        ConditionalTable::new(repr.child, repr.parents, rows).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dom(n: usize) -> Domain {
        Domain::new("x", (0..n).map(|i| format!("v{i}"))).unwrap()
    }

    #[test]
    fn normalize_scales_proportionally() {
        let d = normalize(&[2.0, 2.0, 4.0], &dom(3)).unwrap();
        assert_eq!(d.probs(), &[0.25, 0.25, 0.5]);
    }

    #[test]
    fn normalize_keeps_normalized_prior() {
        let w = [0.4, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1];
        let d = normalize(&w, &dom(7)).unwrap();
        for (a, b) in d.probs().iter().zip(w) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_rejects_bad_input() {
        assert_eq!(normalize(&[0.0, 0.0, 0.0], &dom(3)), Err(ProbError::AllZero));
        assert_eq!(normalize(&[1.0, -1.0], &dom(2)), Err(ProbError::NegativeOrNaN));
        assert_eq!(normalize(&[1.0, f64::NAN], &dom(2)), Err(ProbError::NegativeOrNaN));
    }

    #[test]
    fn uniform_sizes() {
        assert!(uniform(&dom(7)).probs().iter().all(|p| (*p - 1.0 / 7.0).abs() < 1e-15));
        assert_eq!(uniform(&dom(2)).probs(), &[0.5, 0.5]);
        assert_eq!(uniform(&dom(1)).probs(), &[1.0]);
    }

    #[test]
    fn domain_rejects_duplicates() {
        assert!(Domain::new("d", ["a", "a"]).is_err());
        assert!(Domain::new("d", Vec::<String>::new()).is_err());
    }

    #[test]
    fn lookup_by_labels() {
        let is_target = Domain::new("is_target", ["false", "true"]).unwrap();
        let ally = Domain::new("ally", ["false", "true"]).unwrap();
        let table = ConditionalTable::new(ally, vec![is_target], vec![vec![0.5, 0.5], vec![0.6, 0.4]]).unwrap();
        let row = table.lookup(&["true"]).unwrap();
        assert_eq!(row.prob("false"), Some(0.6));
        assert_eq!(row.prob("true"), Some(0.4));
        assert_eq!(table.lookup(&["false"]).unwrap().probs(), &[0.5, 0.5]);
        assert!(matches!(
            table.lookup(&["Paladin"]),
            Err(ProbError::UnknownParentValue { .. })
        ));
    }

    #[test]
    fn table_rejects_unnormalized_rows() {
        let c = dom(2);
        assert!(ConditionalTable::new(c.clone(), vec![dom(2)], vec![vec![0.5, 0.5]]).is_err());
        assert!(ConditionalTable::new(c, vec![dom(1)], vec![vec![0.5, 0.6]]).is_err());
    }

    #[test]
    fn log_score_cases() {
        assert_eq!(log_score([1.0, 1.0, 1.0]).unwrap(), LogWeight::Finite(0.0));
        match log_score([0.5, 0.5]).unwrap() {
            LogWeight::Finite(x) => assert!((x - 0.25f64.ln()).abs() < 1e-15),
            LogWeight::Zero => panic!(),
        }
        assert_eq!(log_score([0.3, 0.0, 0.9]).unwrap(), LogWeight::Zero);
        assert_eq!(log_score([1.5]), Err(ProbError::FactorOutOfRange(1.5)));
    }

    #[test]
    fn log_score_survives_many_tiny_factors() {
        let w = log_score(std::iter::repeat_n(1e-300, 10_000)).unwrap();
        match w {
            LogWeight::Finite(x) => {
                let expected = 10_000.0 * 1e-300f64.ln();
                assert!(((x - expected) / expected).abs() < 1e-12);
            }
            LogWeight::Zero => panic!("underflowed"),
        }
        let a = w;
        let b = w * LogWeight::Finite(1.0);
        let d = normalize_log(&[a, b], &dom(2)).unwrap();
        let e = std::f64::consts::E;
        assert!((d.probs()[1] - e / (1.0 + e)).abs() < 1e-12);
    }

    #[test]
    fn argmax_cases() {
        let d = Distribution::new(dom(3), vec![0.1, 0.7, 0.2]).unwrap();
        assert_eq!(argmax(&d), "v1");
        assert_eq!(argmax(&uniform(&dom(2))), "v0");
        assert_eq!(argmax(&uniform(&dom(1))), "v0");
    }

    #[test]
    fn kl_cases() {
        let p = Distribution::new(dom(2), vec![1.0, 0.0]).unwrap();
        let q = uniform(&dom(2));
        assert!((kl_divergence(&p, &q).unwrap() - std::f64::consts::LN_2).abs() < 1e-6);
        assert_eq!(kl_divergence(&q, &q).unwrap(), 0.0);
        let big = kl_divergence(&q, &p).unwrap();
        assert!(big.is_finite() && big > 5.0);
        assert!(matches!(
            kl_divergence(&p, &uniform(&dom(3))),
            Err(ProbError::DomainMismatch { .. })
        ));
    }

    #[test]
    fn table_json_round_trip() {
        let parents = vec![
            Domain::new("a", ["x", "y"]).unwrap(),
            Domain::new("b", ["u", "v", "w"]).unwrap(),
        ];
        let t = ConditionalTable::from_fn(dom(3), parents, |a| {
            vec![1.0 + a[0] as f64, 0.3, 1.0 / (1.0 + a[1] as f64)]
        })
        .unwrap();
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.contains("\"y|w\""));
        let back: ConditionalTable = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }

    fn weights_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..10.0, 1..12).prop_filter("positive mass", |w| w.iter().any(|x| *x > 1e-6))
    }

    fn dist_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..10).prop_flat_map(|n| {
            (
                prop::collection::vec(0.0f64..1.0, n),
                prop::collection::vec(0.0f64..1.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn normalize_is_scale_invariant(w in weights_strategy(), k in 1e-3f64..1e3) {
            let d = dom(w.len());
            let a = normalize(&w, &d).unwrap();
            let scaled: Vec<f64> = w.iter().map(|x| x * k).collect();
            let b = normalize(&scaled, &d).unwrap();
            for (x, y) in a.probs().iter().zip(b.probs()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
            prop_assert!((a.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn argmax_survives_normalization(w in weights_strategy()) {
            let d = dom(w.len());
            let n = normalize(&w, &d).unwrap();
            let mut best = 0;
            for (i, x) in w.iter().enumerate() {
                if *x > w[best] { best = i; }
            }
            prop_assert_eq!(argmax(&n), d.label(best));
        }

        #[test]
        fn log_score_matches_product(f in prop::collection::vec(1e-6f64..=1.0, 0..40)) {
            let direct: f64 = f.iter().product();
            match log_score(f.iter().copied()).unwrap() {
                LogWeight::Finite(x) => prop_assert!(((x.exp() - direct) / direct).abs() <= 1e-9),
                LogWeight::Zero => prop_assert!(false),
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn kl_is_nonnegative((p, q) in dist_pair()) {
            let d = dom(p.len());
            let p = normalize(&p.iter().map(|x| x + 1e-3).collect::<Vec<_>>(), &d).unwrap();
            let q = normalize(&q.iter().map(|x| x + 1e-3).collect::<Vec<_>>(), &d).unwrap();
            prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
            prop_assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-8);
        }
    }
}
