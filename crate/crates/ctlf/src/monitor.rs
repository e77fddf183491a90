//! Streaming monitor for an observed output series.
//!
//! The monitor ingests outcomes one at a time, tracks the world the series
//! occupies in the tree, and answers three online questions: is the series
//! still within the target distribution (with an optional tolerance band);
//! what is the exact probability that it completes within the target; and
//! what share of the remaining steps each outcome may still take. When a
//! finite dataset is supplied it also tracks residual sampling-without-
//! replacement odds.
//!
//! The tolerance band lives here only; the logic layer stays exact.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{format_rational, parse_rational, StateFormula, Threshold};
use crate::model::{ModelError, ModelSpec, WorldId};
use crate::semantics::{
    sigma_completions, sigma_completions_from, CountVector, Distribution,
    Evaluator, SemanticsError,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MonitorError {
    #[error("outcome {0} is not in the model alphabet")]
    UnknownOutcome(String),
    #[error("the series already has all {0} outputs")]
    SeriesComplete(u32),
    #[error("no observations yet")]
    EmptySeries,
    #[error("no dataset configured for residual odds")]
    MissingDataset,
    #[error("dataset exhausted for outcome {0}")]
    DatasetExhausted(String),
    #[error("observed prefix cannot extend to a compatible completion")]
    NotExtendable,
    #[error("invalid monitor configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Compliance status of the observed prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    /// Every observed ratio is within the tolerance band of its target.
    Compliant,
    /// Out of band now but a band-compatible completion still exists.
    AtRisk,
    /// No completion can end within the band.
    Violated,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Status::Compliant => "Compliant",
            Status::AtRisk => "AtRisk",
            Status::Violated => "Violated",
        };
        write!(f, "{name}")
    }
}

/// Outcome of the distribution question at the current prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub status: Status,
    /// Observed frequency of each outcome so far.
    pub ratios: BTreeMap<String, BigRational>,
    /// The one-sided frequency formulas backing the verdict, with their values.
    pub formulas: Vec<(String, bool)>,
}

/// Residual odds between two outcomes, kept unreduced the way a running
/// tally would be written (e.g. `13/3`, then `12/3`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Odds {
    pub numerator: u64,
    pub denominator: u64,
}

impl Odds {
    /// Exact value, when the denominator side still has items left.
    pub fn ratio(&self) -> Option<BigRational> {
        if self.denominator == 0 {
            None
        } else {
            Some(BigRational::new(
                BigInt::from(self.numerator),
                BigInt::from(self.denominator),
            ))
        }
    }
}

impl fmt::Display for Odds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

/// Immutable monitor snapshot; `ingest` returns the next snapshot.
#[derive(Debug, Clone)]
pub struct MonitorState {
    spec: Arc<ModelSpec>,
    target: Arc<Distribution>,
    epsilon: BigRational,
    counts: CountVector,
    current: Option<WorldId>,
    dataset: Option<CountVector>,
}

impl MonitorState {
    pub fn new(
        spec: ModelSpec,
        target: Distribution,
        epsilon: BigRational,
        dataset: Option<CountVector>,
    ) -> Result<Self, MonitorError> {
        target.validate_against(&spec)?;
        if epsilon.is_negative() {
            return Err(MonitorError::InvalidConfig(
                "epsilon must be non-negative".to_string(),
            ));
        }
        if let Some(d) = &dataset {
            for outcome in d.outcomes() {
                if !spec.alphabet().iter().any(|a| a == outcome) {
                    return Err(MonitorError::UnknownOutcome(outcome.to_string()));
                }
            }
        }
        Ok(MonitorState {
            spec: Arc::new(spec),
            target: Arc::new(target),
            epsilon,
            counts: CountVector::default(),
            current: None,
            dataset,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn target(&self) -> &Distribution {
        &self.target
    }

    pub fn epsilon(&self) -> &BigRational {
        &self.epsilon
    }

    pub fn counts(&self) -> &CountVector {
        &self.counts
    }

    pub fn dataset(&self) -> Option<&CountVector> {
        self.dataset.as_ref()
    }

    /// World of the last observed output; `None` before the first one.
    pub fn current_world(&self) -> Option<&WorldId> {
        self.current.as_ref()
    }

    /// Number of outputs observed so far.
    pub fn len(&self) -> u64 {
        self.counts.total()
    }

    pub fn is_empty(&self) -> bool {
        self.current.is_none()
    }

    pub fn is_complete(&self) -> bool {
        self.len() == u64::from(self.spec.n())
    }

    /// The observed outcome sequence, recovered from the current world.
    pub fn observed(&self) -> Vec<String> {
        match &self.current {
            None => Vec::new(),
            Some(w) => self
                .spec
                .prefix_labels(w)
                .expect("current world tracks observations"),
        }
    }

    /// Appends one outcome, moving to the child world with that label.
    pub fn ingest(&self, outcome: &str) -> Result<MonitorState, MonitorError> {
        let position = self
            .spec
            .alphabet()
            .iter()
            .position(|a| a == outcome)
            .ok_or_else(|| MonitorError::UnknownOutcome(outcome.to_string()))?;
        if self.is_complete() {
            return Err(MonitorError::SeriesComplete(self.spec.n()));
        }
        let next_world = match &self.current {
            None => self.child_labeled(None, outcome, position)?,
            Some(w) => self.child_labeled(Some(w), outcome, position)?,
        };
        let mut counts = self.counts.clone();
        counts.increment(outcome);
        Ok(MonitorState {
            spec: Arc::clone(&self.spec),
            target: Arc::clone(&self.target),
            epsilon: self.epsilon.clone(),
            counts,
            current: Some(next_world),
            dataset: self.dataset.clone(),
        })
    }

    fn child_labeled(
        &self,
        parent: Option<&WorldId>,
        outcome: &str,
        position: usize,
    ) -> Result<WorldId, MonitorError> {
        if self.spec.is_canonical() {
            // Children carry the alphabet in order, so the label names the child.
            return Ok(match parent {
                None => WorldId::new(1, position as u64 + 1),
                Some(w) => self.spec.children_of(w)?[position].clone(),
            });
        }
        let candidates: Vec<WorldId> = match parent {
            None => {
                let mut roots = Vec::new();
                let width = self.spec.level_width(1);
                let mut index = BigUint::one();
                while index <= width {
                    roots.push(WorldId::new(1, index.clone()));
                    index += BigUint::one();
                }
                roots
            }
            Some(w) => self.spec.children_of(w)?,
        };
        let mut matching = candidates
            .into_iter()
            .filter(|c| self.spec.label_of(c).map(|l| l == outcome).unwrap_or(false));
        match (matching.next(), matching.next()) {
            (Some(child), None) => Ok(child),
            (Some(_), Some(_)) => Err(MonitorError::InvalidConfig(format!(
                "labeling is ambiguous: several children labeled {outcome}"
            ))),
            (None, _) => Err(MonitorError::InvalidConfig(format!(
                "labeling has no child labeled {outcome} here"
            ))),
        }
    }

    /// Observed frequency of each outcome.
    pub fn observed_ratios(&self) -> BTreeMap<String, BigRational> {
        let total = self.counts.total();
        self.spec
            .alphabet()
            .iter()
            .map(|p| {
                let ratio = if total == 0 {
                    BigRational::zero()
                } else {
                    BigRational::new(BigInt::from(self.counts.get(p)), BigInt::from(total))
                };
                (p.clone(), ratio)
            })
            .collect()
    }

    /// Whether some completion of the current counts ends with every final
    /// ratio inside the tolerance band.
    fn band_recovery_possible(&self) -> bool {
        let n = BigRational::from_integer(BigInt::from(self.spec.n()));
        let mut sum_lower = BigInt::zero();
        let mut sum_upper = BigInt::zero();
        for p in self.spec.alphabet() {
            let mu = self.target.mu(p).expect("validated domain");
            let have = BigInt::from(self.counts.get(p));
            let lower_band = ((mu - &self.epsilon) * &n).ceil().to_integer();
            let upper_band = ((mu + &self.epsilon) * &n).floor().to_integer();
            let lower = lower_band.max(have.clone());
            if lower > upper_band {
                return false;
            }
            sum_lower += lower;
            sum_upper += upper_band;
        }
        let n = BigInt::from(self.spec.n());
        sum_lower <= n && n <= sum_upper
    }

    /// The distribution question for the current prefix.
    pub fn q1_verdict(&self) -> Result<Verdict, MonitorError> {
        let Some(current) = &self.current else {
            return Err(MonitorError::EmptySeries);
        };
        let ratios = self.observed_ratios();
        let mut within_band = true;
        for p in self.spec.alphabet() {
            let mu = self.target.mu(p)?;
            if (ratios[p].clone() - mu).abs() > self.epsilon {
                within_band = false;
            }
        }
        let status = if !self.band_recovery_possible() {
            Status::Violated
        } else if within_band {
            Status::Compliant
        } else {
            Status::AtRisk
        };

        let evaluator = Evaluator::new(&self.spec, Some(&self.target))?;
        let mut formulas = Vec::new();
        for p in self.spec.alphabet() {
            let mu = self.target.mu(p)?;
            let mut bound = mu - &self.epsilon;
            if bound.is_negative() {
                bound = BigRational::zero();
            }
            let threshold = Threshold::new(bound).expect("band bound within [0, 1]");
            let formula =
                StateFormula::boxed(threshold, StateFormula::atom(p.clone()));
            let holds = evaluator.eval_state(current, &formula)?;
            formulas.push((formula.to_string(), holds));
        }
        Ok(Verdict {
            status,
            ratios,
            formulas,
        })
    }

    /// Exact probability that the series completes within the target
    /// distribution: compatible completions over all completions. Zero when
    /// the prefix is violated.
    pub fn q2_completion_probability(&self) -> Result<BigRational, MonitorError> {
        let n = u64::from(self.spec.n());
        let (compatible, total) = match &self.current {
            None => (
                sigma_completions(&CountVector::default(), &self.target, n)?,
                self.spec.leaf_count(),
            ),
            Some(w) => (
                sigma_completions_from(w, &self.spec, &self.target)?,
                self.spec.count_paths_from(w)?,
            ),
        };
        Ok(BigRational::new(
            BigInt::from(compatible),
            BigInt::from(total),
        ))
    }

    /// Probability that the series is still extendable to a compatible
    /// completion after `horizon` outputs (`horizon` between the current
    /// length and n). At `horizon = n` this equals
    /// [`MonitorState::q2_completion_probability`].
    pub fn q2_at_horizon(&self, horizon: u32) -> Result<BigRational, MonitorError> {
        let i = self.len();
        let n = u64::from(self.spec.n());
        let m = u64::from(horizon);
        if m < i || m > n {
            return Err(MonitorError::InvalidConfig(format!(
                "horizon {m} outside [{i}, {n}]"
            )));
        }
        let Some(quotas) = self
            .target
            .integral_quotas(n, self.spec.alphabet())
        else {
            return Ok(BigRational::zero());
        };
        let counts = self.counts.to_ordered(self.spec.alphabet())?;
        if counts.iter().zip(&quotas).any(|(c, q)| c > q) {
            return Ok(BigRational::zero());
        }
        // Sum the number of (m - i)-step extensions per still-extendable
        // count vector at the horizon.
        let budget = (m - i) as usize;
        let head_room: Vec<u64> = quotas.iter().zip(&counts).map(|(q, c)| q - c).collect();
        let mut favourable = BigUint::zero();
        let mut allocation = vec![0u64; head_room.len()];
        sum_allocations(&head_room, budget, 0, &mut allocation, &mut favourable);
        let total = BigUint::from(self.spec.l()).pow((m - i) as u32);
        Ok(BigRational::new(
            BigInt::from(favourable),
            BigInt::from(total),
        ))
    }

    /// For each outcome, the maximal share of the remaining steps it can
    /// take on a compatible completion: `(quota - count) / (n - i)`.
    pub fn next_step_outlook(&self) -> Result<BTreeMap<String, BigRational>, MonitorError> {
        let n = u64::from(self.spec.n());
        let i = self.len();
        if i == n {
            return Err(MonitorError::SeriesComplete(self.spec.n()));
        }
        let Some(quotas) = self
            .target
            .integral_quotas(n, self.spec.alphabet())
        else {
            return Err(MonitorError::NotExtendable);
        };
        let counts = self.counts.to_ordered(self.spec.alphabet())?;
        if counts.iter().zip(&quotas).any(|(c, q)| c > q) {
            return Err(MonitorError::NotExtendable);
        }
        let remaining = BigInt::from(n - i);
        Ok(self
            .spec
            .alphabet()
            .iter()
            .enumerate()
            .map(|(o, p)| {
                let slack = BigInt::from(quotas[o] - counts[o]);
                (p.clone(), BigRational::new(slack, remaining.clone()))
            })
            .collect())
    }

    /// Residual sampling odds `(dataset[p] - observed[p]) / (dataset[p'] -
    /// observed[p'])` for every ordered pair of distinct outcomes.
    pub fn residual_odds(&self) -> Result<BTreeMap<(String, String), Odds>, MonitorError> {
        let dataset = self.dataset.as_ref().ok_or(MonitorError::MissingDataset)?;
        let mut residuals = BTreeMap::new();
        for p in self.spec.alphabet() {
            let have = dataset.get(p);
            let seen = self.counts.get(p);
            if seen > have {
                return Err(MonitorError::DatasetExhausted(p.clone()));
            }
            residuals.insert(p.clone(), have - seen);
        }
        let mut odds = BTreeMap::new();
        for p in self.spec.alphabet() {
            for p2 in self.spec.alphabet() {
                if p == p2 {
                    continue;
                }
                odds.insert(
                    (p.clone(), p2.clone()),
                    Odds {
                        numerator: residuals[p],
                        denominator: residuals[p2],
                    },
                );
            }
        }
        Ok(odds)
    }
}

fn sum_allocations(
    head_room: &[u64],
    budget: usize,
    at: usize,
    allocation: &mut Vec<u64>,
    favourable: &mut BigUint,
) {
    if at == head_room.len() {
        if budget == 0 {
            *favourable += multiset_permutations(allocation);
        }
        return;
    }
    let max_here = head_room[at].min(budget as u64);
    for take in 0..=max_here {
        allocation[at] = take;
        sum_allocations(head_room, budget - take as usize, at + 1, allocation, favourable);
    }
    allocation[at] = 0;
}

fn multiset_permutations(parts: &[u64]) -> BigUint {
    let total: u64 = parts.iter().sum();
    let mut out = BigUint::one();
    for i in 2..=total {
        out *= BigUint::from(i);
    }
    for &p in parts {
        for i in 2..=p {
            out /= BigUint::from(i);
        }
    }
    out
}

/// One observed event in a JSON-lines trace: `{"seq":1,"outcome":"M"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub outcome: String,
}

/// Session configuration bundling model, target, band, and optional dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionConfig {
    pub model: ModelSpec,
    pub target: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<BTreeMap<String, u64>>,
}

impl SessionConfig {
    pub fn from_json(text: &str) -> Result<Self, MonitorError> {
        serde_json::from_str(text).map_err(|e| MonitorError::InvalidConfig(e.to_string()))
    }

    pub fn build(self) -> Result<MonitorState, MonitorError> {
        let mut freq = BTreeMap::new();
        for (outcome, value) in &self.target {
            let mu = parse_rational(value)
                .map_err(|e| MonitorError::InvalidConfig(format!("target {outcome}: {e}")))?;
            freq.insert(outcome.clone(), mu);
        }
        let target = Distribution::new(freq)?;
        let epsilon = match &self.epsilon {
            None => BigRational::zero(),
            Some(text) => parse_rational(text)
                .map_err(|e| MonitorError::InvalidConfig(format!("epsilon: {e}")))?,
        };
        let dataset = self
            .dataset
            .map(|d| CountVector::from_pairs(d.into_iter().collect::<Vec<_>>()));
        MonitorState::new(self.model, target, epsilon, dataset)
    }
}

/// Full per-event monitor report as a JSON value:
/// status, observed ratios, completion probability, outlook, and odds.
pub fn report_json(state: &MonitorState) -> Result<serde_json::Value, MonitorError> {
    use serde_json::{Map, Value};
    let verdict = state.q1_verdict()?;
    let q2 = state.q2_completion_probability()?;
    let mut out = Map::new();
    out.insert("status".into(), Value::String(verdict.status.to_string()));
    out.insert(
        "ratios".into(),
        Value::Object(
            verdict
                .ratios
                .iter()
                .map(|(p, r)| (p.clone(), Value::String(format_rational(r))))
                .collect(),
        ),
    );
    out.insert("q2".into(), Value::String(format_rational(&q2)));
    match state.next_step_outlook() {
        Ok(outlook) => {
            out.insert(
                "outlook".into(),
                Value::Object(
                    outlook
                        .iter()
                        .map(|(p, r)| (p.clone(), Value::String(format_rational(r))))
                        .collect(),
                ),
            );
        }
        Err(MonitorError::SeriesComplete(_)) | Err(MonitorError::NotExtendable) => {
            out.insert("outlook".into(), Value::Null);
        }
        Err(other) => return Err(other),
    }
    if state.dataset().is_some() {
        let odds = state.residual_odds()?;
        out.insert(
            "odds".into(),
            Value::Object(
                odds.iter()
                    .map(|((p, p2), o)| (format!("{p}:{p2}"), Value::String(o.to_string())))
                    .collect(),
            ),
        );
    }
    Ok(Value::Object(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(level: u32, index: u64) -> WorldId {
        WorldId::new(level, index)
    }

    fn fair_state(n: u32) -> MonitorState {
        let spec = ModelSpec::new(2, n, vec!["M".to_string(), "F".to_string()]).unwrap();
        let target = Distribution::from_json(r#"{"M":"1/2","F":"1/2"}"#).unwrap();
        MonitorState::new(spec, target, BigRational::zero(), None).unwrap()
    }

    fn with_dataset(n: u32, m: u64, f: u64) -> MonitorState {
        let spec = ModelSpec::new(2, n, vec!["M".to_string(), "F".to_string()]).unwrap();
        let target = Distribution::from_json(r#"{"M":"1/2","F":"1/2"}"#).unwrap();
        let dataset = CountVector::from_pairs([("M", m), ("F", f)]);
        MonitorState::new(spec, target, BigRational::zero(), Some(dataset)).unwrap()
    }

    fn ingest_all(state: &MonitorState, outcomes: &[&str]) -> MonitorState {
        let mut cur = state.clone();
        for o in outcomes {
            cur = cur.ingest(o).unwrap();
        }
        cur
    }

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn ingest_tracks_the_world() {
        let state = fair_state(6);
        let s1 = state.ingest("M").unwrap();
        assert_eq!(s1.current_world(), Some(&w(1, 1)));

        let s4 = ingest_all(&state, &["M", "F", "F", "M"]);
        assert_eq!(s4.current_world(), Some(&w(4, 7)));
        assert_eq!(s4.counts().get("M"), 2);
        assert_eq!(s4.counts().get("F"), 2);
        assert_eq!(s4.observed(), vec!["M", "F", "F", "M"]);

        let s3 = ingest_all(&state, &["M", "M", "F"]);
        assert_eq!(s3.current_world(), Some(&w(3, 2)));
    }

    #[test]
    fn ingest_rejects_unknown_and_overflow() {
        let state = fair_state(2);
        assert!(matches!(
            state.ingest("X"),
            Err(MonitorError::UnknownOutcome(_))
        ));
        let full = ingest_all(&state, &["M", "F"]);
        assert!(matches!(
            full.ingest("M"),
            Err(MonitorError::SeriesComplete(2))
        ));
    }

    #[test]
    fn q1_compliant_at_balanced_prefix() {
        let state = ingest_all(&fair_state(6), &["M", "F", "F", "M"]);
        let verdict = state.q1_verdict().unwrap();
        assert_eq!(verdict.status, Status::Compliant);
        assert_eq!(verdict.ratios["M"], rat(1, 2));
        assert_eq!(verdict.ratios["F"], rat(1, 2));
        assert!(verdict.formulas.iter().all(|(_, holds)| *holds));
    }

    #[test]
    fn q1_at_risk_when_recoverable() {
        let state = ingest_all(&fair_state(6), &["M", "M", "M"]);
        let verdict = state.q1_verdict().unwrap();
        assert_eq!(verdict.status, Status::AtRisk);
    }

    #[test]
    fn q1_violated_when_quota_overrun() {
        let state = ingest_all(&fair_state(6), &["M", "M", "M", "M"]);
        let verdict = state.q1_verdict().unwrap();
        assert_eq!(verdict.status, Status::Violated);
        assert_eq!(state.q2_completion_probability().unwrap(), rat(0, 1));
    }

    #[test]
    fn q1_errors_on_empty_series() {
        assert!(matches!(
            fair_state(6).q1_verdict(),
            Err(MonitorError::EmptySeries)
        ));
    }

    #[test]
    fn q2_matches_worked_values() {
        let base = fair_state(6);
        assert_eq!(
            ingest_all(&base, &["M", "F", "F", "M"])
                .q2_completion_probability()
                .unwrap(),
            rat(1, 2)
        );
        assert_eq!(
            ingest_all(&base, &["M", "M", "M"])
                .q2_completion_probability()
                .unwrap(),
            rat(1, 8)
        );
        assert_eq!(
            ingest_all(&base, &["M"]).q2_completion_probability().unwrap(),
            rat(5, 16)
        );
    }

    #[test]
    fn q2_at_horizon_interpolates() {
        let state = ingest_all(&fair_state(6), &["M"]);
        // At the full horizon this is q2 itself.
        assert_eq!(state.q2_at_horizon(6).unwrap(), rat(5, 16));
        // At the current length the prefix is extendable with certainty.
        assert_eq!(state.q2_at_horizon(1).unwrap(), rat(1, 1));
        // One more step: only a third M violates (prob 1/2 of M twice more... )
        let two = state.q2_at_horizon(3).unwrap();
        // Extensions of M by two steps: MM, MF, FM, FF; MM gives 3 M's, still
        // extendable (quota 3): all four extendable.
        assert_eq!(two, rat(1, 1));
        let state4 = ingest_all(&fair_state(6), &["M", "M", "M"]);
        // Next step must be F: half the one-step extensions survive.
        assert_eq!(state4.q2_at_horizon(4).unwrap(), rat(1, 2));
    }

    #[test]
    fn outlook_matches_worked_values() {
        let base = fair_state(6);
        let at47 = ingest_all(&base, &["M", "F", "F", "M"]);
        let outlook = at47.next_step_outlook().unwrap();
        assert_eq!(outlook["M"], rat(1, 2));
        assert_eq!(outlook["F"], rat(1, 2));

        let mmm = ingest_all(&base, &["M", "M", "M"]);
        let outlook = mmm.next_step_outlook().unwrap();
        assert_eq!(outlook["F"], rat(1, 1));
        assert_eq!(outlook["M"], rat(0, 1));

        let mmf = ingest_all(&base, &["M", "M", "F"]);
        let outlook = mmf.next_step_outlook().unwrap();
        assert_eq!(outlook["F"], rat(2, 3));
        assert_eq!(outlook["M"], rat(1, 3));
    }

    #[test]
    fn outlook_errors() {
        let base = fair_state(2);
        let full = ingest_all(&base, &["M", "F"]);
        assert!(matches!(
            full.next_step_outlook(),
            Err(MonitorError::SeriesComplete(2))
        ));
        let over = ingest_all(&fair_state(6), &["M", "M", "M", "M"]);
        assert!(matches!(
            over.next_step_outlook(),
            Err(MonitorError::NotExtendable)
        ));
    }

    #[test]
    fn residual_odds_follow_the_tally() {
        let base = with_dataset(12, 15, 5);
        let at4 = ingest_all(&base, &["M", "F", "M", "F"]);
        let odds = at4.residual_odds().unwrap();
        let mf = odds[&("M".to_string(), "F".to_string())];
        assert_eq!((mf.numerator, mf.denominator), (13, 3));

        let after_m = at4.ingest("M").unwrap();
        let mf = after_m.residual_odds().unwrap()[&("M".to_string(), "F".to_string())];
        assert_eq!((mf.numerator, mf.denominator), (12, 3));

        let after_f = at4.ingest("F").unwrap();
        let mf = after_f.residual_odds().unwrap()[&("M".to_string(), "F".to_string())];
        assert_eq!((mf.numerator, mf.denominator), (13, 2));

        // Two more steps in each direction.
        let mm = ingest_all(&at4, &["M", "M"]);
        assert_eq!(
            mm.residual_odds().unwrap()[&("M".to_string(), "F".to_string())].to_string(),
            "11/3"
        );
        let mixed = ingest_all(&at4, &["M", "F"]);
        assert_eq!(
            mixed.residual_odds().unwrap()[&("M".to_string(), "F".to_string())].to_string(),
            "12/2"
        );
        let ff = ingest_all(&at4, &["F", "F"]);
        assert_eq!(
            ff.residual_odds().unwrap()[&("M".to_string(), "F".to_string())].to_string(),
            "13/1"
        );
    }

    #[test]
    fn residual_odds_errors() {
        assert!(matches!(
            fair_state(6).residual_odds(),
            Err(MonitorError::MissingDataset)
        ));
        let tiny = with_dataset(6, 1, 5);
        let spent = ingest_all(&tiny, &["M", "M"]);
        assert!(matches!(
            spent.residual_odds(),
            Err(MonitorError::DatasetExhausted(_))
        ));
    }

    #[test]
    fn verdict_depends_only_on_counts() {
        let base = fair_state(6);
        let orders: [&[&str]; 3] = [
            &["M", "M", "F", "F"],
            &["F", "M", "M", "F"],
            &["F", "F", "M", "M"],
        ];
        let statuses: Vec<Status> = orders
            .iter()
            .map(|o| ingest_all(&base, o).q1_verdict().unwrap().status)
            .collect();
        assert!(statuses.iter().all(|s| *s == statuses[0]));
    }

    #[test]
    fn flow_conservation_of_completions() {
        // Parent completions equal the sum over children, exactly.
        let base = fair_state(6);
        let state = ingest_all(&base, &["M", "F"]);
        let w_parent = state.current_world().unwrap().clone();
        let spec = state.spec().clone();
        let sigma = state.target().clone();
        let parent = sigma_completions_from(&w_parent, &spec, &sigma).unwrap();
        let mut child_sum = BigUint::zero();
        for child in spec.children_of(&w_parent).unwrap() {
            child_sum += sigma_completions_from(&child, &spec, &sigma).unwrap();
        }
        assert_eq!(parent, child_sum);
    }

    #[test]
    fn session_config_round_trip() {
        let text = r#"{
            "model": {"l":2,"n":6,"alphabet":["M","F"],"labeling":"canonical"},
            "target": {"M":"1/2","F":"1/2"},
            "epsilon": "0",
            "dataset": {"M":15,"F":5}
        }"#;
        let state = SessionConfig::from_json(text).unwrap().build().unwrap();
        assert_eq!(state.spec().n(), 6);
        assert!(state.dataset().is_some());
        assert_eq!(state.epsilon(), &BigRational::zero());
    }

    #[test]
    fn report_json_has_the_documented_fields() {
        let state = ingest_all(&with_dataset(12, 15, 5), &["M", "F", "M", "F"]);
        let report = report_json(&state).unwrap();
        assert_eq!(report["status"], "Compliant");
        assert_eq!(report["ratios"]["M"], "1/2");
        assert_eq!(report["odds"]["M:F"], "13/3");
        assert!(report["q2"].is_string());
        assert!(report["outlook"].is_object());
    }
}
