//! Target distributions, combinatorial path counting, and closed-form
//! evaluation of the six modal operators.
//!
//! Two evaluators exist side by side. The closed forms in this module turn
//! each operator into counting over the root path, feasibility over count
//! vectors, or exact multinomial coefficients, so no evaluation enumerates
//! the tree unless the formula nests modalities too deeply for the count
//! abstraction. The [`oracle`] submodule evaluates the same operators by
//! literal set construction over all enumerated complete paths; the two
//! must agree wherever the oracle is defined.
//!
//! All thresholds, ratios, and probabilities are exact rationals. A ratio
//! test is always `>=`, so boundary cases hold.

pub mod oracle;

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{format_rational, parse_rational, PathFormula, StateFormula, Threshold};
use crate::model::{ModelError, ModelSpec, Path, WorldId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SemanticsError {
    #[error("atom {0} is not in the model alphabet")]
    UnknownAtom(String),
    #[error("outcome {0} is not in the distribution domain")]
    UnknownOutcome(String),
    #[error("formula needs a target distribution (BBOX, TRI, or DAG)")]
    MissingDistribution,
    #[error("count total {total} does not match expected {expected}")]
    TotalMismatch { total: u64, expected: u64 },
    #[error("count total {total} exceeds the horizon {horizon}")]
    TotalExceedsHorizon { total: u64, horizon: u64 },
    #[error("NAB requires a complete path")]
    IncompletePath,
    #[error("DAG requires a path starting at a root world")]
    PathNotFromRoot,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("distribution domain does not match the model alphabet: {0}")]
    DistributionDomain(String),
    #[error("unsupported evaluation: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A target distribution: exact rational frequency per outcome, summing to 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Distribution {
    freq: BTreeMap<String, BigRational>,
}

impl Distribution {
    pub fn new(freq: BTreeMap<String, BigRational>) -> Result<Self, SemanticsError> {
        if freq.is_empty() {
            return Err(SemanticsError::InvalidDistribution(
                "empty distribution".to_string(),
            ));
        }
        let mut total = BigRational::zero();
        for (outcome, mu) in &freq {
            if mu.is_negative() || *mu > BigRational::one() {
                return Err(SemanticsError::InvalidDistribution(format!(
                    "frequency of {outcome} is {} which is outside [0, 1]",
                    format_rational(mu)
                )));
            }
            total += mu;
        }
        if !total.is_one() {
            return Err(SemanticsError::InvalidDistribution(format!(
                "frequencies sum to {}, not 1",
                format_rational(&total)
            )));
        }
        Ok(Distribution { freq })
    }

    /// Uniform distribution over the given outcomes.
    pub fn uniform(outcomes: &[String]) -> Result<Self, SemanticsError> {
        let k = outcomes.len();
        if k == 0 {
            return Err(SemanticsError::InvalidDistribution(
                "empty distribution".to_string(),
            ));
        }
        let share = BigRational::new(BigInt::one(), BigInt::from(k));
        Distribution::new(
            outcomes
                .iter()
                .map(|o| (o.clone(), share.clone()))
                .collect(),
        )
    }

    /// Parses `{"M":"1/2","F":"1/2"}` (rationals as strings).
    pub fn from_json(text: &str) -> Result<Self, SemanticsError> {
        let raw: BTreeMap<String, String> = serde_json::from_str(text)
            .map_err(|e| SemanticsError::InvalidDistribution(e.to_string()))?;
        let mut freq = BTreeMap::new();
        for (outcome, value) in raw {
            let mu = parse_rational(&value)
                .map_err(|e| SemanticsError::InvalidDistribution(format!("{outcome}: {e}")))?;
            freq.insert(outcome, mu);
        }
        Distribution::new(freq)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.freq
                .iter()
                .map(|(o, mu)| (o.clone(), serde_json::Value::String(format_rational(mu))))
                .collect(),
        )
    }

    pub fn mu(&self, outcome: &str) -> Result<&BigRational, SemanticsError> {
        self.freq
            .get(outcome)
            .ok_or_else(|| SemanticsError::UnknownOutcome(outcome.to_string()))
    }

    pub fn outcomes(&self) -> impl Iterator<Item = &str> {
        self.freq.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.freq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freq.is_empty()
    }

    /// Errors unless the domain equals the model alphabet.
    pub fn validate_against(&self, spec: &ModelSpec) -> Result<(), SemanticsError> {
        let mut alphabet: Vec<&str> = spec.alphabet().iter().map(String::as_str).collect();
        alphabet.sort_unstable();
        let domain: Vec<&str> = self.freq.keys().map(String::as_str).collect();
        if alphabet != domain {
            return Err(SemanticsError::DistributionDomain(format!(
                "distribution over {{{}}}, alphabet {{{}}}",
                domain.join(", "),
                spec.alphabet().join(", ")
            )));
        }
        Ok(())
    }

    /// The exact quota `mu(p) * n` for each outcome of `alphabet`, or `None`
    /// if any quota is non-integral (then no complete path is compatible).
    pub fn integral_quotas(&self, n: u64, alphabet: &[String]) -> Option<Vec<u64>> {
        let mut quotas = Vec::with_capacity(alphabet.len());
        for outcome in alphabet {
            let mu = self.freq.get(outcome)?;
            let quota = mu * BigRational::from_integer(BigInt::from(n));
            if !quota.is_integer() {
                return None;
            }
            quotas.push(quota.to_integer().to_u64()?);
        }
        Some(quotas)
    }

    /// Least common multiple of the frequency denominators; any compatible
    /// series length must be one of its multiples.
    pub fn denominator_lcm(&self) -> BigUint {
        let mut lcm = BigUint::one();
        for mu in self.freq.values() {
            let den = mu.denom().magnitude();
            lcm = num_integer::lcm(lcm, den.clone());
        }
        lcm
    }
}

/// Occurrence counts per outcome along some observed prefix or path.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CountVector {
    counts: BTreeMap<String, u64>,
}

impl CountVector {
    pub fn new(counts: BTreeMap<String, u64>) -> Self {
        CountVector { counts }
    }

    pub fn from_labels<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts = BTreeMap::new();
        for label in labels {
            *counts.entry(label.as_ref().to_string()).or_insert(0) += 1;
        }
        CountVector { counts }
    }

    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        CountVector {
            counts: pairs.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    pub fn get(&self, outcome: &str) -> u64 {
        self.counts.get(outcome).copied().unwrap_or(0)
    }

    pub fn increment(&mut self, outcome: &str) {
        *self.counts.entry(outcome.to_string()).or_insert(0) += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    pub fn outcomes(&self) -> impl Iterator<Item = &str> {
        self.counts.keys().map(String::as_str)
    }

    /// Counts in the order of `alphabet`; outcomes absent from the map count 0.
    pub fn to_ordered(&self, alphabet: &[String]) -> Result<Vec<u64>, SemanticsError> {
        for outcome in self.counts.keys() {
            if !alphabet.contains(outcome) {
                return Err(SemanticsError::UnknownOutcome(outcome.clone()));
            }
        }
        Ok(alphabet.iter().map(|o| self.get(o)).collect())
    }
}

impl fmt::Display for CountVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (outcome, count)) in self.counts.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{outcome}: {count}")?;
        }
        write!(f, "}}")
    }
}

/// Outcome counts along the root path of `w` (including `w` itself).
pub fn prefix_counts(w: &WorldId, spec: &ModelSpec) -> Result<CountVector, SemanticsError> {
    let labels = spec.prefix_labels(w)?;
    Ok(CountVector::from_labels(labels))
}

/// Exact compatibility: every outcome occurs exactly `mu(p) * n` times.
/// `counts` must describe a complete series of length `n`.
pub fn is_sigma_compatible(
    counts: &CountVector,
    sigma: &Distribution,
    n: u64,
) -> Result<bool, SemanticsError> {
    let total = counts.total();
    if total != n {
        return Err(SemanticsError::TotalMismatch { total, expected: n });
    }
    for outcome in counts.outcomes() {
        sigma.mu(outcome)?;
    }
    for outcome in sigma.outcomes() {
        let quota = sigma.mu(outcome)? * BigRational::from_integer(BigInt::from(n));
        let have = BigRational::from_integer(BigInt::from(counts.get(outcome)));
        if have != quota {
            return Ok(false);
        }
    }
    Ok(true)
}

fn factorial(k: u64) -> BigUint {
    let mut out = BigUint::one();
    for i in 2..=k {
        out *= BigUint::from(i);
    }
    out
}

/// Multinomial coefficient `total! / prod(parts!)`; zero unless the parts sum
/// to `total`.
fn multinomial(total: u64, parts: &[u64]) -> BigUint {
    if parts.iter().sum::<u64>() != total {
        return BigUint::zero();
    }
    let mut out = factorial(total);
    for &p in parts {
        out /= factorial(p);
    }
    out
}

/// Number of completions of a prefix with the given counts that end in an
/// exactly compatible complete series: the multinomial coefficient
/// `(n - i)! / prod_p (mu(p) * n - counts[p])!` when every residual quota is a
/// non-negative integer, and 0 otherwise.
///
/// This equals the number of compatible paths through any world at level `i`
/// with these prefix counts, under the canonical sibling labeling.
pub fn sigma_completions(
    counts: &CountVector,
    sigma: &Distribution,
    n: u64,
) -> Result<BigUint, SemanticsError> {
    let total = counts.total();
    if total > n {
        return Err(SemanticsError::TotalExceedsHorizon { total, horizon: n });
    }
    for outcome in counts.outcomes() {
        sigma.mu(outcome)?;
    }
    let mut residuals = Vec::with_capacity(sigma.len());
    for outcome in sigma.outcomes() {
        let quota = sigma.mu(outcome)? * BigRational::from_integer(BigInt::from(n));
        if !quota.is_integer() {
            return Ok(BigUint::zero());
        }
        let quota = quota
            .to_integer()
            .to_u64()
            .ok_or_else(|| SemanticsError::InvalidDistribution("quota overflow".to_string()))?;
        let have = counts.get(outcome);
        if have > quota {
            return Ok(BigUint::zero());
        }
        residuals.push(quota - have);
    }
    Ok(multinomial(n - total, &residuals))
}

/// World-aware completion count: under canonical labeling this is
/// [`sigma_completions`] of the world's prefix counts; under an explicit
/// labeling the completions are enumerated.
pub fn sigma_completions_from(
    w: &WorldId,
    spec: &ModelSpec,
    sigma: &Distribution,
) -> Result<BigUint, SemanticsError> {
    sigma.validate_against(spec)?;
    if spec.is_canonical() {
        let counts = prefix_counts(w, spec)?;
        return sigma_completions(&counts, sigma, u64::from(spec.n()));
    }
    let n = u64::from(spec.n());
    let mut compatible = BigUint::zero();
    for_each_completion(spec, w, &mut |suffix| {
        let mut labels = spec.prefix_labels(w)?;
        for u in suffix {
            labels.push(spec.label_of(u)?.to_string());
        }
        let counts = CountVector::from_labels(labels);
        if is_sigma_compatible(&counts, sigma, n)? {
            compatible += BigUint::one();
        }
        Ok(())
    })?;
    Ok(compatible)
}

/// Visits every continuation of `w` down to the leaves, as the world list
/// strictly below `w` (empty when `w` is a leaf: the closure runs once with
/// an empty suffix). Capped by the model's enumeration cap.
fn for_each_completion(
    spec: &ModelSpec,
    w: &WorldId,
    visit: &mut dyn FnMut(&[WorldId]) -> Result<(), SemanticsError>,
) -> Result<(), SemanticsError> {
    let remaining = spec.count_paths_from(w)?;
    if remaining > BigUint::from(spec.enumeration_cap()) {
        return Err(SemanticsError::Model(ModelError::CapExceeded {
            required: remaining,
            cap: spec.enumeration_cap(),
        }));
    }
    let mut suffix: Vec<WorldId> = Vec::new();
    descend(spec, w, &mut suffix, visit)
}

fn descend(
    spec: &ModelSpec,
    at: &WorldId,
    suffix: &mut Vec<WorldId>,
    visit: &mut dyn FnMut(&[WorldId]) -> Result<(), SemanticsError>,
) -> Result<(), SemanticsError> {
    if at.level() == spec.n() {
        return visit(suffix);
    }
    for child in spec.children_of(at)? {
        suffix.push(child.clone());
        descend(spec, &child, suffix, visit)?;
        suffix.pop();
    }
    Ok(())
}

/// Result of a detailed check: the verdict, the exact ratio the operator
/// compared against its threshold (when one exists), and a witness path for
/// the existential operators.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub holds: bool,
    pub ratio: Option<BigRational>,
    pub witness: Option<Path>,
}

impl Evaluation {
    fn plain(holds: bool) -> Self {
        Evaluation {
            holds,
            ratio: None,
            witness: None,
        }
    }
}

/// How much of a hypothetical path a formula's truth value depends on.
/// Formulas at or below `Edge` can be evaluated at an abstract point
/// `(level, counts, last label)`, which is what the count-lattice search
/// for BBOX and TRI needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Det {
    /// Depends only on the world's own label.
    Label,
    /// Depends only on the level.
    Level,
    /// Depends on level and prefix counts.
    Count,
    /// Depends on level, prefix counts, and the world's own label.
    Edge,
    /// Depends on the full label sequence of the root path.
    Trajectory,
}

impl Det {
    fn abstractable(self) -> bool {
        !matches!(self, Det::Trajectory)
    }

    fn join(self, other: Det) -> Det {
        use Det::*;
        match (self, other) {
            (Trajectory, _) | (_, Trajectory) => Trajectory,
            (Label, Label) => Label,
            (Level, Level) => Level,
            (Count, Count) | (Count, Level) | (Level, Count) => Count,
            _ => Edge,
        }
    }
}

fn determinacy(f: &StateFormula) -> Det {
    match f {
        StateFormula::Atom(_) => Det::Label,
        StateFormula::Not(inner) => determinacy(inner),
        StateFormula::And(a, b) | StateFormula::Or(a, b) => determinacy(a).join(determinacy(b)),
        StateFormula::Box(_, inner) | StateFormula::Circ(_, inner) => match determinacy(inner) {
            Det::Label => Det::Count,
            Det::Level => Det::Level,
            _ => Det::Trajectory,
        },
        StateFormula::BlackBox(_, inner) => {
            if determinacy(inner).abstractable() {
                Det::Level
            } else {
                Det::Trajectory
            }
        }
        StateFormula::Tri(_, inner) => {
            if determinacy(inner).abstractable() {
                Det::Count
            } else {
                Det::Trajectory
            }
        }
    }
}

enum SigmaState {
    Missing,
    /// Some quota `mu(p) * n` is non-integral, so no compatible path exists.
    NonIntegral,
    Quotas(Vec<u64>),
}

/// Evaluator with per-instance caches for the existential operators.
/// BBOX outcomes depend only on the level; TRI outcomes only on level and
/// prefix counts; both are independent of the threshold, so the caches
/// store the maximal achievable satisfaction count.
pub struct Evaluator<'a> {
    spec: &'a ModelSpec,
    sigma: Option<&'a Distribution>,
    sigma_state: SigmaState,
    bbox_cache: RefCell<HashMap<(String, u32), Option<(u64, Vec<usize>)>>>,
    tri_cache: RefCell<HashMap<(String, u32, Vec<u64>), Option<(u64, Vec<usize>)>>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        spec: &'a ModelSpec,
        sigma: Option<&'a Distribution>,
    ) -> Result<Self, SemanticsError> {
        let sigma_state = match sigma {
            None => SigmaState::Missing,
            Some(dist) => {
                dist.validate_against(spec)?;
                match dist.integral_quotas(u64::from(spec.n()), spec.alphabet()) {
                    Some(quotas) => SigmaState::Quotas(quotas),
                    None => SigmaState::NonIntegral,
                }
            }
        };
        Ok(Evaluator {
            spec,
            sigma,
            sigma_state,
            bbox_cache: RefCell::new(HashMap::new()),
            tri_cache: RefCell::new(HashMap::new()),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        self.spec
    }

    fn atom_position(&self, name: &str) -> Result<usize, SemanticsError> {
        self.spec
            .alphabet()
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| SemanticsError::UnknownAtom(name.to_string()))
    }

    /// Quotas when a distribution is present and all quotas are integral;
    /// `Ok(None)` when the compatible-path set is empty.
    fn quotas(&self) -> Result<Option<&[u64]>, SemanticsError> {
        match &self.sigma_state {
            SigmaState::Missing => Err(SemanticsError::MissingDistribution),
            SigmaState::NonIntegral => Ok(None),
            SigmaState::Quotas(q) => Ok(Some(q)),
        }
    }

    /// Plain truth value of a state formula at a world.
    pub fn eval_state(&self, w: &WorldId, f: &StateFormula) -> Result<bool, SemanticsError> {
        Ok(self.check_state(w, f)?.holds)
    }

    /// Truth value plus ratio and witness for the outermost operator.
    pub fn check_state(&self, w: &WorldId, f: &StateFormula) -> Result<Evaluation, SemanticsError> {
        self.spec.check_world(w)?;
        match f {
            StateFormula::Atom(p) => {
                self.atom_position(p)?;
                Ok(Evaluation::plain(self.spec.label_of(w)? == p))
            }
            StateFormula::Not(inner) => {
                Ok(Evaluation::plain(!self.check_state(w, inner)?.holds))
            }
            StateFormula::And(a, b) => Ok(Evaluation::plain(
                self.check_state(w, a)?.holds && self.check_state(w, b)?.holds,
            )),
            StateFormula::Or(a, b) => Ok(Evaluation::plain(
                self.check_state(w, a)?.holds || self.check_state(w, b)?.holds,
            )),
            StateFormula::Box(q, inner) => {
                let (sat, len) = self.path_sat_count(w, inner)?;
                let ratio = BigRational::new(BigInt::from(sat), BigInt::from(len));
                Ok(Evaluation {
                    holds: &ratio >= q.as_ratio(),
                    ratio: Some(ratio),
                    witness: None,
                })
            }
            StateFormula::Circ(q, inner) => {
                let (sat, _) = self.path_sat_count(w, inner)?;
                let n = u64::from(self.spec.n());
                let ratio = BigRational::new(BigInt::from(sat), BigInt::from(n));
                Ok(Evaluation {
                    holds: &ratio >= q.as_ratio(),
                    ratio: Some(ratio),
                    witness: None,
                })
            }
            StateFormula::BlackBox(q, inner) => self.check_black_box(w.level(), q, inner),
            StateFormula::Tri(q, inner) => self.check_tri(w, q, inner),
        }
    }

    /// Plain truth value of a path formula.
    pub fn eval_path(&self, path: &Path, f: &PathFormula) -> Result<bool, SemanticsError> {
        Ok(self.check_path(path, f)?.holds)
    }

    pub fn check_path(&self, path: &Path, f: &PathFormula) -> Result<Evaluation, SemanticsError> {
        match f {
            PathFormula::Nabla(q, inner) => {
                if !path.is_complete(self.spec) {
                    return Err(SemanticsError::IncompletePath);
                }
                let mut sat = 0u64;
                for u in path.worlds() {
                    if self.check_state(u, inner)?.holds {
                        sat += 1;
                    }
                }
                let n = u64::from(self.spec.n());
                let ratio = BigRational::new(BigInt::from(sat), BigInt::from(n));
                Ok(Evaluation {
                    holds: &ratio >= q.as_ratio(),
                    ratio: Some(ratio),
                    witness: None,
                })
            }
            PathFormula::Dagger(q, inner) => {
                if !path.starts_at_root() {
                    return Err(SemanticsError::PathNotFromRoot);
                }
                // Validate the inner formula's atoms even though the
                // compatible-completion ratio does not depend on them.
                for atom in inner.atoms() {
                    self.atom_position(atom)?;
                }
                let sigma = self.sigma.ok_or(SemanticsError::MissingDistribution)?;
                let end = path.end();
                let compatible = sigma_completions_from(end, self.spec, sigma)?;
                let total = self.spec.count_paths_from(end)?;
                let ratio = BigRational::new(
                    BigInt::from(compatible.clone()),
                    BigInt::from(total.clone()),
                );
                let holds = !compatible.is_zero() && &ratio >= q.as_ratio();
                let witness = if holds {
                    self.compatible_completion(end)?
                } else {
                    None
                };
                Ok(Evaluation {
                    holds,
                    ratio: Some(ratio),
                    witness,
                })
            }
        }
    }

    /// Satisfying-world count along the root path of `w`, with the path length.
    fn path_sat_count(&self, w: &WorldId, f: &StateFormula) -> Result<(u64, u64), SemanticsError> {
        let path = self.spec.root_path(w)?;
        let mut sat = 0u64;
        for u in path.worlds() {
            if self.check_state(u, f)?.holds {
                sat += 1;
            }
        }
        Ok((sat, path.len() as u64))
    }

    // BBOX at level i: does some world at level i that lies on a compatible
    // complete path reach a satisfaction share >= q along its root path?
    fn check_black_box(
        &self,
        level: u32,
        q: &Threshold,
        inner: &StateFormula,
    ) -> Result<Evaluation, SemanticsError> {
        for atom in inner.atoms() {
            self.atom_position(atom)?;
        }
        let Some(quotas) = self.quotas()? else {
            return Ok(Evaluation::plain(false));
        };
        let quotas = quotas.to_vec();
        let key = (inner.to_string(), level);
        let cached = self.bbox_cache.borrow().get(&key).cloned();
        let best = match cached {
            Some(hit) => hit,
            None => {
                let computed = if self.spec.is_canonical() && determinacy(inner).abstractable() {
                    self.bbox_best_by_lattice(level, &quotas, inner)?
                } else if self.spec.is_canonical() {
                    self.bbox_best_by_level_scan(level, &quotas, inner)?
                } else {
                    self.bbox_best_by_path_scan(level, inner)?
                };
                self.bbox_cache.borrow_mut().insert(key, computed.clone());
                computed
            }
        };
        match best {
            None => Ok(Evaluation::plain(false)),
            Some((sat, labels)) => {
                let ratio = BigRational::new(BigInt::from(sat), BigInt::from(u64::from(level)));
                let holds = &ratio >= q.as_ratio();
                let witness = if holds && self.spec.is_canonical() {
                    let names: Vec<String> = labels
                        .iter()
                        .map(|&o| self.spec.alphabet()[o].clone())
                        .collect();
                    let end = self.spec.world_for_labels(&names)?;
                    Some(self.spec.root_path(&end)?)
                } else {
                    None
                };
                Ok(Evaluation {
                    holds,
                    ratio: Some(ratio),
                    witness,
                })
            }
        }
    }

    // Forward search over the count lattice. State: counts after t steps,
    // kept within the quotas; value: maximal number of satisfying steps so
    // far, with backtracking labels for the witness.
    fn bbox_best_by_lattice(
        &self,
        level: u32,
        quotas: &[u64],
        inner: &StateFormula,
    ) -> Result<Option<(u64, Vec<usize>)>, SemanticsError> {
        let l = self.spec.alphabet().len();
        let mut frontier: HashMap<Vec<u64>, (u64, Vec<usize>)> = HashMap::new();
        frontier.insert(vec![0; l], (0, Vec::new()));
        for t in 1..=level {
            let mut next: HashMap<Vec<u64>, (u64, Vec<usize>)> = HashMap::new();
            for (counts, (sat, trail)) in &frontier {
                for o in 0..l {
                    if counts[o] + 1 > quotas[o] {
                        continue;
                    }
                    let mut c2 = counts.clone();
                    c2[o] += 1;
                    let inc = u64::from(self.eval_abstract(inner, t, &c2, o)?);
                    let cand = sat + inc;
                    let entry = next.entry(c2);
                    match entry {
                        std::collections::hash_map::Entry::Occupied(mut e) => {
                            if cand > e.get().0 {
                                let mut trail2 = trail.clone();
                                trail2.push(o);
                                e.insert((cand, trail2));
                            }
                        }
                        std::collections::hash_map::Entry::Vacant(e) => {
                            let mut trail2 = trail.clone();
                            trail2.push(o);
                            e.insert((cand, trail2));
                        }
                    }
                }
            }
            frontier = next;
        }
        Ok(frontier.into_values().max_by_key(|(sat, _)| *sat))
    }

    // Fallback for canonical models whose inner formula needs the full label
    // sequence: scan every world at the level. Capped.
    fn bbox_best_by_level_scan(
        &self,
        level: u32,
        quotas: &[u64],
        inner: &StateFormula,
    ) -> Result<Option<(u64, Vec<usize>)>, SemanticsError> {
        let width = self.spec.level_width(level);
        if width > BigUint::from(self.spec.enumeration_cap()) {
            return Err(SemanticsError::Model(ModelError::CapExceeded {
                required: width,
                cap: self.spec.enumeration_cap(),
            }));
        }
        let mut best: Option<(u64, Vec<usize>)> = None;
        let mut index = BigUint::one();
        while index <= width {
            let w = WorldId::new(level, index.clone());
            let counts = prefix_counts(&w, self.spec)?;
            let ordered = counts.to_ordered(self.spec.alphabet())?;
            let extendable = ordered.iter().zip(quotas).all(|(c, q)| c <= q);
            if extendable {
                let (sat, _) = self.path_sat_count(&w, inner)?;
                if best.as_ref().map_or(true, |(b, _)| sat > *b) {
                    let labels = self
                        .spec
                        .prefix_labels(&w)?
                        .iter()
                        .map(|name| self.atom_position(name))
                        .collect::<Result<Vec<_>, _>>()?;
                    best = Some((sat, labels));
                }
            }
            index += BigUint::one();
        }
        Ok(best)
    }

    // Explicit labelings: walk every compatible complete path and take its
    // level-i world, which is the literal reading of the side condition.
    fn bbox_best_by_path_scan(
        &self,
        level: u32,
        inner: &StateFormula,
    ) -> Result<Option<(u64, Vec<usize>)>, SemanticsError> {
        let sigma = self.sigma.ok_or(SemanticsError::MissingDistribution)?;
        let n = u64::from(self.spec.n());
        let mut best: Option<(u64, Vec<usize>)> = None;
        for path in self.spec.enumerate_complete_paths()? {
            let labels: Vec<String> = path
                .worlds()
                .iter()
                .map(|u| self.spec.label_of(u).map(str::to_string))
                .collect::<Result<_, _>>()?;
            let counts = CountVector::from_labels(&labels);
            if !is_sigma_compatible(&counts, sigma, n)? {
                continue;
            }
            let w = &path.worlds()[level as usize - 1];
            let (sat, _) = self.path_sat_count(w, inner)?;
            if best.as_ref().map_or(true, |(b, _)| sat > *b) {
                best = Some((sat, Vec::new()));
            }
        }
        Ok(best)
    }

    // TRI at w: does some compatible complete path through w carry the inner
    // formula in a share >= q of the steps strictly after w?
    fn check_tri(
        &self,
        w: &WorldId,
        q: &Threshold,
        inner: &StateFormula,
    ) -> Result<Evaluation, SemanticsError> {
        for atom in inner.atoms() {
            self.atom_position(atom)?;
        }
        let Some(quotas) = self.quotas()? else {
            return Ok(Evaluation::plain(false));
        };
        let quotas = quotas.to_vec();
        let n = self.spec.n();
        if w.level() == n {
            // No next step exists, so no witness path can qualify.
            return Ok(Evaluation::plain(false));
        }
        if self.spec.is_canonical() {
            let counts = prefix_counts(w, self.spec)?.to_ordered(self.spec.alphabet())?;
            if counts.iter().zip(&quotas).any(|(c, q)| c > q) {
                return Ok(Evaluation::plain(false));
            }
            let best = if determinacy(inner).abstractable() {
                let key = (inner.to_string(), w.level(), counts.clone());
                let cached = self.tri_cache.borrow().get(&key).cloned();
                match cached {
                    Some(hit) => hit,
                    None => {
                        let computed =
                            self.tri_best_by_lattice(w.level(), &counts, &quotas, inner)?;
                        self.tri_cache.borrow_mut().insert(key, computed.clone());
                        computed
                    }
                }
            } else {
                self.tri_best_by_completion_scan(w, &quotas, inner)?
            };
            self.tri_outcome(w, q, best)
        } else {
            let best = self.tri_best_by_path_scan(w, inner)?;
            self.tri_outcome(w, q, best)
        }
    }

    fn tri_outcome(
        &self,
        w: &WorldId,
        q: &Threshold,
        best: Option<(u64, Vec<usize>)>,
    ) -> Result<Evaluation, SemanticsError> {
        let remaining = u64::from(self.spec.n() - w.level());
        match best {
            None => Ok(Evaluation::plain(false)),
            Some((sat, trail)) => {
                let ratio = BigRational::new(BigInt::from(sat), BigInt::from(remaining));
                let holds = &ratio >= q.as_ratio();
                let witness = if holds && !trail.is_empty() {
                    Some(self.extend_by_offsets(w, &trail)?)
                } else {
                    None
                };
                Ok(Evaluation {
                    holds,
                    ratio: Some(ratio),
                    witness,
                })
            }
        }
    }

    // Backward-looking DP is unnecessary: walk forward from w's counts to the
    // quota vector, maximizing satisfying steps among levels after w.
    fn tri_best_by_lattice(
        &self,
        level: u32,
        start_counts: &[u64],
        quotas: &[u64],
        inner: &StateFormula,
    ) -> Result<Option<(u64, Vec<usize>)>, SemanticsError> {
        let l = self.spec.alphabet().len();
        let n = self.spec.n();
        let mut frontier: HashMap<Vec<u64>, (u64, Vec<usize>)> = HashMap::new();
        frontier.insert(start_counts.to_vec(), (0, Vec::new()));
        for t in (level + 1)..=n {
            let mut next: HashMap<Vec<u64>, (u64, Vec<usize>)> = HashMap::new();
            for (counts, (sat, trail)) in &frontier {
                for o in 0..l {
                    if counts[o] + 1 > quotas[o] {
                        continue;
                    }
                    let mut c2 = counts.clone();
                    c2[o] += 1;
                    let inc = u64::from(self.eval_abstract(inner, t, &c2, o)?);
                    let cand = sat + inc;
                    match next.entry(c2) {
                        std::collections::hash_map::Entry::Occupied(mut e) => {
                            if cand > e.get().0 {
                                let mut trail2 = trail.clone();
                                trail2.push(o);
                                e.insert((cand, trail2));
                            }
                        }
                        std::collections::hash_map::Entry::Vacant(e) => {
                            let mut trail2 = trail.clone();
                            trail2.push(o);
                            e.insert((cand, trail2));
                        }
                    }
                }
            }
            frontier = next;
        }
        // Every surviving endpoint has total n with counts <= quotas, hence
        // counts == quotas: exactly the compatible completions.
        Ok(frontier.into_values().max_by_key(|(sat, _)| *sat))
    }

    // Canonical labeling, trajectory-dependent inner formula: enumerate the
    // completions of w directly. Capped by l^(n - level).
    fn tri_best_by_completion_scan(
        &self,
        w: &WorldId,
        quotas: &[u64],
        inner: &StateFormula,
    ) -> Result<Option<(u64, Vec<usize>)>, SemanticsError> {
        let prefix = prefix_counts(w, self.spec)?.to_ordered(self.spec.alphabet())?;
        let mut best: Option<(u64, Vec<usize>)> = None;
        for_each_completion(self.spec, w, &mut |suffix| {
            let mut counts = prefix.clone();
            let mut sat = 0u64;
            for u in suffix {
                let o = self.atom_position(self.spec.label_of(u)?)?;
                counts[o] += 1;
            }
            if counts.iter().zip(quotas).any(|(c, q)| c != q) {
                return Ok(());
            }
            for u in suffix {
                if self.check_state(u, inner)?.holds {
                    sat += 1;
                }
            }
            if best.as_ref().map_or(true, |(b, _)| sat > *b) {
                let trail = suffix
                    .iter()
                    .map(|u| self.atom_position(self.spec.label_of(u)?))
                    .collect::<Result<Vec<_>, _>>()?;
                best = Some((sat, trail));
            }
            Ok(())
        })?;
        Ok(best)
    }

    // Explicit labelings: literal scan of compatible complete paths through w.
    fn tri_best_by_path_scan(
        &self,
        w: &WorldId,
        inner: &StateFormula,
    ) -> Result<Option<(u64, Vec<usize>)>, SemanticsError> {
        let sigma = self.sigma.ok_or(SemanticsError::MissingDistribution)?;
        let n = u64::from(self.spec.n());
        let i = w.level() as usize;
        let mut best: Option<(u64, Vec<usize>)> = None;
        for path in self.spec.enumerate_complete_paths()? {
            if &path.worlds()[i - 1] != w {
                continue;
            }
            let labels: Vec<String> = path
                .worlds()
                .iter()
                .map(|u| self.spec.label_of(u).map(str::to_string))
                .collect::<Result<_, _>>()?;
            let counts = CountVector::from_labels(&labels);
            if !is_sigma_compatible(&counts, sigma, n)? {
                continue;
            }
            let mut sat = 0u64;
            for u in &path.worlds()[i..] {
                if self.check_state(u, inner)?.holds {
                    sat += 1;
                }
            }
            if best.as_ref().map_or(true, |(b, _)| sat > *b) {
                best = Some((sat, Vec::new()));
            }
        }
        Ok(best)
    }

    /// Evaluates an abstraction-friendly formula at a hypothetical path point:
    /// level `t`, prefix counts `counts` (including the step itself), last
    /// label `label`. Only called for formulas whose determinacy allows it.
    fn eval_abstract(
        &self,
        f: &StateFormula,
        t: u32,
        counts: &[u64],
        label: usize,
    ) -> Result<bool, SemanticsError> {
        match f {
            StateFormula::Atom(p) => Ok(self.atom_position(p)? == label),
            StateFormula::Not(inner) => Ok(!self.eval_abstract(inner, t, counts, label)?),
            StateFormula::And(a, b) => Ok(self.eval_abstract(a, t, counts, label)?
                && self.eval_abstract(b, t, counts, label)?),
            StateFormula::Or(a, b) => Ok(self.eval_abstract(a, t, counts, label)?
                || self.eval_abstract(b, t, counts, label)?),
            StateFormula::Box(q, inner) => {
                let sat = self.abstract_sat_count(inner, t, counts, label)?;
                Ok(ge_ratio(sat, u64::from(t), q))
            }
            StateFormula::Circ(q, inner) => {
                let sat = self.abstract_sat_count(inner, t, counts, label)?;
                Ok(ge_ratio(sat, u64::from(self.spec.n()), q))
            }
            StateFormula::BlackBox(q, inner) => Ok(self.check_black_box(t, q, inner)?.holds),
            StateFormula::Tri(q, inner) => {
                let Some(quotas) = self.quotas()? else {
                    return Ok(false);
                };
                let quotas = quotas.to_vec();
                if t == self.spec.n() {
                    return Ok(false);
                }
                if counts.iter().zip(&quotas).any(|(c, q)| c > q) {
                    return Ok(false);
                }
                let key = (inner.to_string(), t, counts.to_vec());
                let cached = self.tri_cache.borrow().get(&key).cloned();
                let best = match cached {
                    Some(hit) => hit,
                    None => {
                        let computed = self.tri_best_by_lattice(t, counts, &quotas, inner)?;
                        self.tri_cache.borrow_mut().insert(key, computed.clone());
                        computed
                    }
                };
                match best {
                    None => Ok(false),
                    Some((sat, _)) => Ok(ge_ratio(sat, u64::from(self.spec.n() - t), q)),
                }
            }
        }
    }

    /// Satisfying-step count along a hypothetical prefix known only through
    /// `(t, counts, label)`: exact for label-determined inner formulas (count
    /// the matching outcomes) and level-determined ones (count the levels).
    fn abstract_sat_count(
        &self,
        inner: &StateFormula,
        t: u32,
        counts: &[u64],
        label: usize,
    ) -> Result<u64, SemanticsError> {
        match determinacy(inner) {
            Det::Label => {
                let mut sat = 0u64;
                for o in 0..self.spec.alphabet().len() {
                    if self.eval_abstract(inner, t, counts, o)? {
                        sat += counts[o];
                    }
                }
                Ok(sat)
            }
            Det::Level => {
                let mut sat = 0u64;
                for s in 1..=t {
                    if self.eval_abstract(inner, s, counts, label)? {
                        sat += 1;
                    }
                }
                Ok(sat)
            }
            other => Err(SemanticsError::Unsupported(format!(
                "inner formula {inner} (determinacy {other:?}) inside a counting operator \
                 cannot be evaluated on the count lattice"
            ))),
        }
    }

    /// One compatible completion of `w`, greedily spending residual quotas.
    fn compatible_completion(&self, w: &WorldId) -> Result<Option<Path>, SemanticsError> {
        if !self.spec.is_canonical() {
            return Ok(None);
        }
        let Some(quotas) = self.quotas()? else {
            return Ok(None);
        };
        let quotas = quotas.to_vec();
        let mut counts = prefix_counts(w, self.spec)?.to_ordered(self.spec.alphabet())?;
        if counts.iter().zip(&quotas).any(|(c, q)| c > q) {
            return Ok(None);
        }
        let mut offsets = Vec::new();
        for _ in w.level()..self.spec.n() {
            let Some(o) = (0..counts.len()).find(|&o| counts[o] < quotas[o]) else {
                return Ok(None);
            };
            counts[o] += 1;
            offsets.push(o);
        }
        Ok(Some(self.extend_by_offsets(w, &offsets)?))
    }

    /// Path from the root through `w`, then down by the given child offsets.
    fn extend_by_offsets(&self, w: &WorldId, offsets: &[usize]) -> Result<Path, SemanticsError> {
        let mut worlds = self.spec.root_path(w)?.worlds().to_vec();
        let mut cur = w.clone();
        for &o in offsets {
            let children = self.spec.children_of(&cur)?;
            cur = children
                .get(o)
                .cloned()
                .ok_or_else(|| SemanticsError::Unsupported("child offset out of range".into()))?;
            worlds.push(cur.clone());
        }
        Ok(Path::from_worlds(worlds, self.spec)?)
    }
}

fn ge_ratio(count: u64, total: u64, q: &Threshold) -> bool {
    if total == 0 {
        return q.is_zero();
    }
    &BigRational::new(BigInt::from(count), BigInt::from(total)) >= q.as_ratio()
}

/// Evaluates a state formula at a world. `sigma` is only needed when the
/// formula contains `BBOX` or `TRI`.
pub fn eval_state(
    w: &WorldId,
    f: &StateFormula,
    spec: &ModelSpec,
    sigma: Option<&Distribution>,
) -> Result<bool, SemanticsError> {
    Evaluator::new(spec, sigma)?.eval_state(w, f)
}

/// Detailed state check with ratio and witness.
pub fn check_state(
    w: &WorldId,
    f: &StateFormula,
    spec: &ModelSpec,
    sigma: Option<&Distribution>,
) -> Result<Evaluation, SemanticsError> {
    Evaluator::new(spec, sigma)?.check_state(w, f)
}

/// Evaluates a path formula. `NAB` needs a complete path; `DAG` needs a
/// root-anchored prefix and a distribution.
pub fn eval_path(
    path: &Path,
    f: &PathFormula,
    spec: &ModelSpec,
    sigma: Option<&Distribution>,
) -> Result<bool, SemanticsError> {
    Evaluator::new(spec, sigma)?.eval_path(path, f)
}

/// Detailed path check with ratio and witness.
pub fn check_path(
    path: &Path,
    f: &PathFormula,
    spec: &ModelSpec,
    sigma: Option<&Distribution>,
) -> Result<Evaluation, SemanticsError> {
    Evaluator::new(spec, sigma)?.check_path(path, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_formula;
    use crate::Formula;

    fn w(level: u32, index: u64) -> WorldId {
        WorldId::new(level, index)
    }

    fn binary_spec(n: u32) -> ModelSpec {
        ModelSpec::new(2, n, vec!["M".to_string(), "F".to_string()]).unwrap()
    }

    fn fair() -> Distribution {
        Distribution::from_json(r#"{"M":"1/2","F":"1/2"}"#).unwrap()
    }

    fn state(text: &str) -> StateFormula {
        match parse_formula(text).unwrap() {
            Formula::State(f) => f,
            other => panic!("expected state formula, got {other:?}"),
        }
    }

    fn path_formula(text: &str) -> PathFormula {
        match parse_formula(text).unwrap() {
            Formula::Path(f) => f,
            other => panic!("expected path formula, got {other:?}"),
        }
    }

    fn eval(spec: &ModelSpec, sigma: &Distribution, world: &WorldId, text: &str) -> bool {
        eval_state(world, &state(text), spec, Some(sigma)).unwrap()
    }

    #[test]
    fn prefix_counts_examples() {
        let spec = binary_spec(6);
        let cv = prefix_counts(&w(3, 2), &spec).unwrap();
        assert_eq!(cv.get("M"), 2);
        assert_eq!(cv.get("F"), 1);

        let root = prefix_counts(&w(1, 1), &spec).unwrap();
        assert_eq!(root.get("M"), 1);
        assert_eq!(root.get("F"), 0);
        assert_eq!(root.total(), 1);

        let cv47 = prefix_counts(&w(4, 7), &spec).unwrap();
        assert_eq!((cv47.get("M"), cv47.get("F")), (2, 2));
    }

    #[test]
    fn sigma_compatibility_is_exact_equality() {
        let sigma = fair();
        let balanced = CountVector::from_pairs([("M", 3u64), ("F", 3u64)]);
        assert!(is_sigma_compatible(&balanced, &sigma, 6).unwrap());

        let skewed = CountVector::from_pairs([("M", 4u64), ("F", 2u64)]);
        assert!(!is_sigma_compatible(&skewed, &sigma, 6).unwrap());

        // Non-integral quota: nothing is compatible at n = 5.
        let five = CountVector::from_pairs([("M", 3u64), ("F", 2u64)]);
        assert!(!is_sigma_compatible(&five, &sigma, 5).unwrap());

        assert!(matches!(
            is_sigma_compatible(&balanced, &sigma, 7),
            Err(SemanticsError::TotalMismatch { .. })
        ));
    }

    #[test]
    fn completion_counts_match_worked_values() {
        let sigma = fair();
        let at47 = CountVector::from_pairs([("M", 2u64), ("F", 2u64)]);
        assert_eq!(sigma_completions(&at47, &sigma, 6).unwrap(), BigUint::from(2u32));

        let mmm = CountVector::from_pairs([("M", 3u64), ("F", 0u64)]);
        assert_eq!(sigma_completions(&mmm, &sigma, 6).unwrap(), BigUint::from(1u32));

        let over = CountVector::from_pairs([("M", 4u64), ("F", 0u64)]);
        assert_eq!(sigma_completions(&over, &sigma, 6).unwrap(), BigUint::zero());

        let one_m = CountVector::from_pairs([("M", 1u64)]);
        assert_eq!(sigma_completions(&one_m, &sigma, 6).unwrap(), BigUint::from(10u32));

        assert!(matches!(
            sigma_completions(&CountVector::from_pairs([("M", 9u64)]), &sigma, 6),
            Err(SemanticsError::TotalExceedsHorizon { .. })
        ));
    }

    #[test]
    fn box_and_circ_hold_at_worked_worlds() {
        let spec = binary_spec(6);
        let sigma = fair();
        assert!(eval(&spec, &sigma, &w(3, 1), "BOX 1 M"));
        assert!(eval(&spec, &sigma, &w(3, 2), "BOX 2/3 M"));
        assert!(!eval(&spec, &sigma, &w(3, 2), "BOX 1 M"));
        assert!(eval(&spec, &sigma, &w(3, 1), "CIRC 3/6 M AND CIRC 0 F"));
        assert!(eval(&spec, &sigma, &w(1, 1), "M"));
        assert!(eval(&spec, &sigma, &w(1, 1), "NOT F"));
    }

    #[test]
    fn black_box_reaches_other_prefixes() {
        let spec = binary_spec(6);
        let sigma = fair();
        assert!(eval(&spec, &sigma, &w(3, 1), "BBOX 1 F"));
        assert!(eval(&spec, &sigma, &w(3, 2), "BBOX 1 F"));
        // At level 4 only 3 of 4 steps can be F under the fair quota of 3.
        assert!(eval(&spec, &sigma, &w(4, 1), "BBOX 3/4 F"));
        assert!(!eval(&spec, &sigma, &w(4, 1), "BBOX 1 F"));
    }

    #[test]
    fn tri_tracks_residual_quotas() {
        let spec = binary_spec(6);
        let sigma = fair();
        assert!(eval(&spec, &sigma, &w(3, 1), "TRI 1 F"));
        assert!(eval(&spec, &sigma, &w(3, 2), "TRI 2/3 F"));
        assert!(eval(&spec, &sigma, &w(3, 2), "TRI 1/3 M"));
        assert!(!eval(&spec, &sigma, &w(3, 2), "TRI 1 F"));
        // Quota for M is exhausted after three M outputs.
        assert!(!eval(&spec, &sigma, &w(3, 1), "TRI 1/3 M"));
        assert!(eval(&spec, &sigma, &w(4, 7), "TRI 1/2 F AND TRI 1/2 M"));
        // Leaves have no next step.
        assert!(!eval(&spec, &sigma, &w(6, 1), "TRI 0 M"));
    }

    #[test]
    fn tri_false_when_prefix_not_extendable() {
        let spec = binary_spec(6);
        let sigma = fair();
        // Four M outputs exceed the fair quota of three.
        assert!(!eval(&spec, &sigma, &w(4, 1), "TRI 0 F"));
    }

    #[test]
    fn nabla_counts_on_complete_paths() {
        let spec = binary_spec(6);
        let sigma = fair();
        let leaf63 = spec.root_path(&w(6, 63)).unwrap();
        let f = path_formula("NAB 1/6 M");
        assert!(eval_path(&leaf63, &f, &spec, Some(&sigma)).unwrap());
        assert!(!eval_path(&leaf63, &path_formula("NAB 1/3 M"), &spec, Some(&sigma)).unwrap());

        let prefix = spec.root_path(&w(3, 1)).unwrap();
        assert!(matches!(
            eval_path(&prefix, &f, &spec, Some(&sigma)),
            Err(SemanticsError::IncompletePath)
        ));
    }

    #[test]
    fn dagger_measures_compatible_completions() {
        let spec = binary_spec(6);
        let sigma = fair();
        let prefix31 = spec.root_path(&w(3, 1)).unwrap();
        assert!(eval_path(&prefix31, &path_formula("DAG 1/8 M"), &spec, Some(&sigma)).unwrap());
        assert!(!eval_path(&prefix31, &path_formula("DAG 1/4 M"), &spec, Some(&sigma)).unwrap());

        let prefix47 = spec.root_path(&w(4, 7)).unwrap();
        assert!(eval_path(&prefix47, &path_formula("DAG 1/2 M"), &spec, Some(&sigma)).unwrap());
        assert!(!eval_path(&prefix47, &path_formula("DAG 5/8 M"), &spec, Some(&sigma)).unwrap());

        let ev = check_path(&prefix47, &path_formula("DAG 1/2 M"), &spec, Some(&sigma)).unwrap();
        assert_eq!(
            ev.ratio,
            Some(BigRational::new(BigInt::one(), BigInt::from(2)))
        );
        let witness = ev.witness.expect("witness for a holding DAG");
        assert!(witness.is_complete(&spec));
        assert_eq!(&witness.worlds()[3], &w(4, 7));
    }

    #[test]
    fn dagger_false_for_all_q_when_quota_non_integral() {
        let spec = binary_spec(5);
        let sigma = fair();
        let prefix = spec.root_path(&w(2, 2)).unwrap();
        assert!(!eval_path(&prefix, &path_formula("DAG 0 M"), &spec, Some(&sigma)).unwrap());
    }

    #[test]
    fn zero_thresholds() {
        let spec = binary_spec(6);
        let sigma = fair();
        for world in [w(1, 1), w(3, 5), w(6, 40)] {
            assert!(eval(&spec, &sigma, &world, "BOX 0 F"));
            assert!(eval(&spec, &sigma, &world, "CIRC 0 F"));
        }
        // Existence is still required at q = 0.
        assert!(eval(&spec, &sigma, &w(3, 1), "BBOX 0 F"));
        assert!(!eval(&spec, &sigma, &w(4, 1), "TRI 0 F"));
    }

    #[test]
    fn missing_distribution_is_reported() {
        let spec = binary_spec(6);
        assert!(matches!(
            eval_state(&w(3, 1), &state("BBOX 1 F"), &spec, None),
            Err(SemanticsError::MissingDistribution)
        ));
        assert!(eval_state(&w(3, 1), &state("BOX 1 M"), &spec, None).unwrap());
    }

    #[test]
    fn unknown_atoms_are_rejected_at_evaluation() {
        let spec = binary_spec(6);
        let sigma = fair();
        assert!(matches!(
            eval_state(&w(1, 1), &state("X"), &spec, Some(&sigma)),
            Err(SemanticsError::UnknownAtom(_))
        ));
        assert!(matches!(
            eval_state(&w(1, 1), &state("BBOX 1/2 X"), &spec, Some(&sigma)),
            Err(SemanticsError::UnknownAtom(_))
        ));
    }

    #[test]
    fn nested_modalities_evaluate_compositionally() {
        let spec = binary_spec(6);
        let sigma = fair();
        // Inner BOX 2/3 M holds at a world iff at least 2/3 of its prefix is M.
        assert!(eval(&spec, &sigma, &w(3, 1), "BOX 1 BOX 1/2 M"));
        // BBOX over a count-determined inner formula takes the lattice route.
        let f = state("BBOX 1/2 BOX 1/2 F");
        assert_eq!(determinacy(&f), Det::Level);
        assert!(eval_state(&w(4, 7), &f, &spec, Some(&sigma)).unwrap());
    }

    #[test]
    fn distribution_validation() {
        assert!(Distribution::from_json(r#"{"M":"1/2","F":"1/3"}"#).is_err());
        assert!(Distribution::from_json(r#"{"M":"3/2","F":"-1/2"}"#).is_err());
        let sigma = fair();
        let spec3 =
            ModelSpec::new(3, 2, vec!["a".into(), "b".into(), "c".into()]).unwrap();
        assert!(sigma.validate_against(&spec3).is_err());
    }
}
