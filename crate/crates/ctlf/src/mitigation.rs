//! Mitigation: the largest subset of an observed series whose counts realize
//! the target distribution exactly, which outputs to drop to get there, and
//! an online accept/reject policy.
//!
//! Subset fairness is exact (no tolerance band): the kept counts must hit
//! `mu(p) * k` for every outcome, so the subset size `k` must be a multiple
//! of the least common denominator of the target frequencies.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::formula::format_rational;
use crate::monitor::MonitorState;
use crate::semantics::{CountVector, Distribution, SemanticsError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MitigationError {
    #[error("outcome {0} is not in the target domain")]
    UnknownOutcome(String),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
}

/// Which occurrences of an over-represented outcome survive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KeepPolicy {
    /// Keep the earliest occurrences, drop the rest.
    #[default]
    KeepEarliest,
    /// Keep the latest occurrences.
    KeepLatest,
}

/// Online decision for the next output of a given outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Decision {
    Accept,
    Reject,
}

/// A removal plan over a 1-indexed observed series.
#[derive(Debug, Clone, PartialEq)]
pub struct MitigationPlan {
    pub keep: Vec<u64>,
    pub remove: Vec<u64>,
    pub kept_counts: CountVector,
    /// Achieved frequency per outcome over the kept subset (zero map when
    /// nothing can be kept).
    pub achieved: BTreeMap<String, BigRational>,
    pub optimal_size: u64,
    /// Set when the plan also dropped items of an outcome that was not
    /// over-represented, which integrality of the quotas can force.
    pub trimmed_underrepresented: bool,
}

impl MitigationPlan {
    pub fn to_json_value(&self) -> serde_json::Value {
        use serde_json::{Map, Value};
        let mut out = Map::new();
        out.insert(
            "keep".into(),
            Value::Array(self.keep.iter().map(|i| Value::from(*i)).collect()),
        );
        out.insert(
            "remove".into(),
            Value::Array(self.remove.iter().map(|i| Value::from(*i)).collect()),
        );
        out.insert(
            "achieved".into(),
            Value::Object(
                self.achieved
                    .iter()
                    .map(|(p, r)| (p.clone(), Value::String(format_rational(r))))
                    .collect(),
            ),
        );
        out.insert("optimal_size".into(), Value::from(self.optimal_size));
        if self.trimmed_underrepresented {
            out.insert("trimmed_underrepresented".into(), Value::Bool(true));
        }
        Value::Object(out)
    }
}

/// The largest `k` such that `mu(p) * k` is a non-negative integer not above
/// `counts[p]` for every outcome: the best exactly-fair subset size.
pub fn max_fair_subset_size(counts: &CountVector, target: &Distribution) -> u64 {
    let lcm = target.denominator_lcm();
    let mut bound: Option<BigUint> = None;
    for outcome in target.outcomes() {
        let mu = target.mu(outcome).expect("iterating the domain");
        if mu.is_zero() {
            continue;
        }
        // floor(counts[p] / mu(p)) = floor(counts[p] * den / num)
        let den = mu.denom().magnitude();
        let num = mu.numer().magnitude();
        let this = BigUint::from(counts.get(outcome)) * den / num;
        bound = Some(match bound {
            None => this,
            Some(b) => b.min(this),
        });
    }
    let bound = bound.unwrap_or_default();
    let k = &bound / &lcm * &lcm;
    k.to_u64().unwrap_or(0)
}

/// Computes the removal plan for an observed series: keep a maximal exactly-
/// fair subset, resolving ties inside each outcome by the keep policy.
pub fn plan_removals(
    observed: &[String],
    target: &Distribution,
    policy: KeepPolicy,
) -> Result<MitigationPlan, MitigationError> {
    for outcome in observed {
        target
            .mu(outcome)
            .map_err(|_| MitigationError::UnknownOutcome(outcome.clone()))?;
    }
    let counts = CountVector::from_labels(observed);
    let total = counts.total();
    let k = max_fair_subset_size(&counts, target);

    let mut quota: BTreeMap<&str, u64> = BTreeMap::new();
    for outcome in target.outcomes() {
        let mu = target.mu(outcome)?;
        let q = mu * BigRational::from_integer(BigInt::from(k));
        debug_assert!(q.is_integer());
        quota.insert(outcome, q.to_integer().to_u64().unwrap_or(0));
    }

    let mut keep_flags = vec![false; observed.len()];
    let mut used: BTreeMap<&str, u64> = BTreeMap::new();
    let order: Vec<usize> = match policy {
        KeepPolicy::KeepEarliest => (0..observed.len()).collect(),
        KeepPolicy::KeepLatest => (0..observed.len()).rev().collect(),
    };
    for idx in order {
        let outcome = observed[idx].as_str();
        let u = used.entry(outcome).or_insert(0);
        if *u < quota[outcome] {
            *u += 1;
            keep_flags[idx] = true;
        }
    }

    let mut keep = Vec::new();
    let mut remove = Vec::new();
    for (idx, kept) in keep_flags.iter().enumerate() {
        let seq = idx as u64 + 1;
        if *kept {
            keep.push(seq);
        } else {
            remove.push(seq);
        }
    }

    let kept_counts = CountVector::from_pairs(
        quota
            .iter()
            .map(|(p, q)| (p.to_string(), *q))
            .collect::<Vec<_>>(),
    );
    let achieved: BTreeMap<String, BigRational> = target
        .outcomes()
        .map(|p| {
            let value = if k == 0 {
                BigRational::zero()
            } else {
                BigRational::new(BigInt::from(quota[p]), BigInt::from(k))
            };
            (p.to_string(), value)
        })
        .collect();

    // An outcome was trimmed while at or below its proportional share.
    let trimmed_underrepresented = target.outcomes().any(|p| {
        let dropped = counts.get(p) > quota[p];
        let share = BigRational::new(BigInt::from(counts.get(p)), BigInt::from(total.max(1)));
        dropped && &share <= target.mu(p).expect("domain outcome")
    });

    Ok(MitigationPlan {
        keep,
        remove,
        kept_counts,
        achieved,
        optimal_size: k,
        trimmed_underrepresented,
    })
}

/// Online policy: reject an outcome once its quota within the best
/// achievable fair subset is exhausted.
///
/// The best achievable subset size is projected from the dataset when the
/// monitor has one covering the whole horizon (the urn's final counts are
/// then known exactly); otherwise it is the optimistic bound over all ways
/// the remaining steps could fall.
pub fn streaming_reject(
    state: &MonitorState,
) -> Result<BTreeMap<String, Decision>, MitigationError> {
    let target = state.target();
    let n = u64::from(state.spec().n());
    let i = state.len();
    let counts = state.counts();

    let k_star = match state.dataset() {
        Some(dataset) if dataset.total() == n => max_fair_subset_size(dataset, target),
        _ => optimistic_fair_size(counts, target, n, i),
    };

    let mut decisions = BTreeMap::new();
    for outcome in state.spec().alphabet() {
        let quota = target.mu(outcome)? * BigRational::from_integer(BigInt::from(k_star));
        let have = BigRational::from_integer(BigInt::from(counts.get(outcome)));
        let decision = if have >= quota {
            Decision::Reject
        } else {
            Decision::Accept
        };
        decisions.insert(outcome.clone(), decision);
    }
    Ok(decisions)
}

// Largest fair-subset size reachable at the horizon if the remaining
// `n - i` outputs fall as favourably as possible.
fn optimistic_fair_size(counts: &CountVector, target: &Distribution, n: u64, i: u64) -> u64 {
    let lcm = match target.denominator_lcm().to_u64() {
        Some(l) if l > 0 => l,
        _ => return 0,
    };
    let remaining = n - i;
    let mut k = n / lcm * lcm;
    loop {
        let mut needed: u64 = 0;
        let mut feasible = true;
        for outcome in target.outcomes() {
            let mu = target.mu(outcome).expect("iterating the domain");
            let quota = mu * BigRational::from_integer(BigInt::from(k));
            let quota = quota.to_integer().to_u64().unwrap_or(u64::MAX);
            let have = counts.get(outcome);
            if quota > have {
                needed = needed.saturating_add(quota - have);
                if needed > remaining {
                    feasible = false;
                    break;
                }
            }
        }
        if feasible {
            return k;
        }
        if k < lcm {
            return 0;
        }
        k -= lcm;
    }
}
