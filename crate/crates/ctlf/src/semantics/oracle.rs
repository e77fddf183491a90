//! Brute-force evaluator: the operator definitions read literally over the
//! enumerated set of complete paths.
//!
//! The closed forms in the parent module replace quantification over paths
//! with count-vector feasibility and multinomial coefficients; this module
//! does none of that. It materializes every complete path, filters the
//! compatible ones with [`is_sigma_compatible`], and evaluates each operator
//! by direct set construction. Results are memoized per world and per path
//! so sweeps stay fast, but every value is obtained by literal counting.
//!
//! Only usable when `l^n` is within the model's enumeration cap.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use num_bigint::BigInt;
use num_rational::BigRational;

use crate::formula::{PathFormula, StateFormula, Threshold};
use crate::model::{ModelSpec, Path, WorldId};

use super::{is_sigma_compatible, CountVector, Distribution, SemanticsError};

pub struct Oracle<'a> {
    spec: &'a ModelSpec,
    sigma: Option<&'a Distribution>,
    paths: Vec<Path>,
    compatible: Vec<bool>,
    world_sat: RefCell<HashMap<(String, WorldId), bool>>,
    /// Per formula: for every complete path, cumulative satisfying counts
    /// along its positions. Fetched once per evaluation, then O(1) per path.
    sat_profiles: RefCell<HashMap<String, Rc<Vec<Vec<u32>>>>>,
    prefix_census: RefCell<HashMap<WorldId, (u64, u64)>>,
}

impl<'a> Oracle<'a> {
    /// Enumerates all complete paths up front; fails with `CapExceeded` when
    /// the model is too large.
    pub fn new(
        spec: &'a ModelSpec,
        sigma: Option<&'a Distribution>,
    ) -> Result<Self, SemanticsError> {
        let paths: Vec<Path> = spec.enumerate_complete_paths()?.collect();
        let mut compatible = vec![false; paths.len()];
        if let Some(dist) = sigma {
            dist.validate_against(spec)?;
            let n = u64::from(spec.n());
            for (k, path) in paths.iter().enumerate() {
                let labels: Vec<&str> = path
                    .worlds()
                    .iter()
                    .map(|w| spec.label_of(w))
                    .collect::<Result<_, _>>()?;
                let counts = CountVector::from_labels(labels);
                compatible[k] = is_sigma_compatible(&counts, dist, n)?;
            }
        }
        Ok(Oracle {
            spec,
            sigma,
            paths,
            compatible,
            world_sat: RefCell::new(HashMap::new()),
            sat_profiles: RefCell::new(HashMap::new()),
            prefix_census: RefCell::new(HashMap::new()),
        })
    }

    pub fn complete_paths(&self) -> &[Path] {
        &self.paths
    }

    /// Number of enumerated compatible complete paths.
    pub fn compatible_path_count(&self) -> usize {
        self.compatible.iter().filter(|c| **c).count()
    }

    fn require_sigma(&self) -> Result<&Distribution, SemanticsError> {
        self.sigma.ok_or(SemanticsError::MissingDistribution)
    }

    fn atom_check(&self, name: &str) -> Result<(), SemanticsError> {
        if self.spec.alphabet().iter().any(|a| a == name) {
            Ok(())
        } else {
            Err(SemanticsError::UnknownAtom(name.to_string()))
        }
    }

    pub fn eval_state(&self, w: &WorldId, f: &StateFormula) -> Result<bool, SemanticsError> {
        self.spec.check_world(w)?;
        self.eval_state_uncached(w, f)
    }

    // Memoized variant for subformulas, which get asked for the same world
    // over and over while counting along paths.
    fn eval_state_memo(&self, w: &WorldId, f: &StateFormula) -> Result<bool, SemanticsError> {
        let key = (f.to_string(), w.clone());
        let hit = self.world_sat.borrow().get(&key).copied();
        if let Some(value) = hit {
            return Ok(value);
        }
        let value = self.eval_state_uncached(w, f)?;
        self.world_sat.borrow_mut().insert(key, value);
        Ok(value)
    }

    fn eval_state_uncached(&self, w: &WorldId, f: &StateFormula) -> Result<bool, SemanticsError> {
        match f {
            StateFormula::Atom(p) => {
                self.atom_check(p)?;
                Ok(self.spec.label_of(w)? == p)
            }
            StateFormula::Not(inner) => Ok(!self.eval_state_memo(w, inner)?),
            StateFormula::And(a, b) => {
                Ok(self.eval_state_memo(w, a)? && self.eval_state_memo(w, b)?)
            }
            StateFormula::Or(a, b) => {
                Ok(self.eval_state_memo(w, a)? || self.eval_state_memo(w, b)?)
            }
            StateFormula::Box(q, inner) => {
                // Count over the backward-reachable worlds: the root path.
                let (sat, len) = self.root_path_sat(w, inner)?;
                Ok(ratio_at_least(sat, len, q))
            }
            StateFormula::Circ(q, inner) => {
                // Existential over complete paths containing w; the count is
                // over the root path, the denominator the full horizon.
                let i = w.level() as usize;
                let n = u64::from(self.spec.n());
                let profile = self.sat_profile(inner)?;
                for (k, path) in self.paths.iter().enumerate() {
                    if &path.worlds()[i - 1] != w {
                        continue;
                    }
                    let sat = u64::from(profile[k][i - 1]);
                    return Ok(ratio_at_least(sat, n, q));
                }
                Ok(false)
            }
            StateFormula::BlackBox(q, inner) => {
                self.require_sigma()?;
                let i = w.level() as usize;
                let profile = self.sat_profile(inner)?;
                for k in 0..self.paths.len() {
                    if !self.compatible[k] {
                        continue;
                    }
                    let sat = u64::from(profile[k][i - 1]);
                    if ratio_at_least(sat, i as u64, q) {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            StateFormula::Tri(q, inner) => {
                self.require_sigma()?;
                let i = w.level() as usize;
                let n = self.spec.n() as usize;
                if i == n {
                    return Ok(false);
                }
                let profile = self.sat_profile(inner)?;
                for (k, path) in self.paths.iter().enumerate() {
                    if !self.compatible[k] || &path.worlds()[i - 1] != w {
                        continue;
                    }
                    let sat = u64::from(profile[k][n - 1] - profile[k][i - 1]);
                    if ratio_at_least(sat, (n - i) as u64, q) {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
        }
    }

    pub fn eval_path(&self, path: &Path, f: &PathFormula) -> Result<bool, SemanticsError> {
        match f {
            PathFormula::Nabla(q, inner) => {
                if !path.is_complete(self.spec) {
                    return Err(SemanticsError::IncompletePath);
                }
                let mut sat = 0u64;
                for u in path.worlds() {
                    if self.eval_state_memo(u, inner)? {
                        sat += 1;
                    }
                }
                Ok(ratio_at_least(sat, u64::from(self.spec.n()), q))
            }
            PathFormula::Dagger(q, inner) => {
                if !path.starts_at_root() {
                    return Err(SemanticsError::PathNotFromRoot);
                }
                for atom in inner.atoms() {
                    self.atom_check(atom)?;
                }
                self.require_sigma()?;
                let cached = self.prefix_census.borrow().get(path.end()).copied();
                let (through, compatible_through) = match cached {
                    Some(census) => census,
                    None => {
                        let i = path.len();
                        let mut through = 0u64;
                        let mut compatible_through = 0u64;
                        for (k, candidate) in self.paths.iter().enumerate() {
                            if candidate.worlds()[..i] != path.worlds()[..] {
                                continue;
                            }
                            through += 1;
                            if self.compatible[k] {
                                compatible_through += 1;
                            }
                        }
                        self.prefix_census
                            .borrow_mut()
                            .insert(path.end().clone(), (through, compatible_through));
                        (through, compatible_through)
                    }
                };
                Ok(compatible_through > 0 && ratio_at_least(compatible_through, through, q))
            }
        }
    }

    fn root_path_sat(&self, w: &WorldId, f: &StateFormula) -> Result<(u64, u64), SemanticsError> {
        let path = self.spec.root_path(w)?;
        let mut sat = 0u64;
        for u in path.worlds() {
            if self.eval_state_memo(u, f)? {
                sat += 1;
            }
        }
        Ok((sat, path.len() as u64))
    }

    /// Cumulative satisfying counts along every complete path: entry `[k][p]`
    /// holds the number of satisfying worlds among positions `0..=p` of path
    /// `k`. Computed once per formula.
    fn sat_profile(&self, f: &StateFormula) -> Result<Rc<Vec<Vec<u32>>>, SemanticsError> {
        let key = f.to_string();
        let hit = self.sat_profiles.borrow().get(&key).map(Rc::clone);
        if let Some(profile) = hit {
            return Ok(profile);
        }
        let mut profile = Vec::with_capacity(self.paths.len());
        for path in &self.paths {
            let mut acc = Vec::with_capacity(path.len());
            let mut running = 0u32;
            for u in path.worlds() {
                if self.eval_state_memo(u, f)? {
                    running += 1;
                }
                acc.push(running);
            }
            profile.push(acc);
        }
        let rc = Rc::new(profile);
        self.sat_profiles.borrow_mut().insert(key, Rc::clone(&rc));
        Ok(rc)
    }
}

fn ratio_at_least(count: u64, total: u64, q: &Threshold) -> bool {
    if total == 0 {
        return q.is_zero();
    }
    &BigRational::new(BigInt::from(count), BigInt::from(total)) >= q.as_ratio()
}

/// One-shot literal evaluation of a state formula.
pub fn eval_state_oracle(
    w: &WorldId,
    f: &StateFormula,
    spec: &ModelSpec,
    sigma: Option<&Distribution>,
) -> Result<bool, SemanticsError> {
    Oracle::new(spec, sigma)?.eval_state(w, f)
}

/// One-shot literal evaluation of a path formula.
pub fn eval_path_oracle(
    path: &Path,
    f: &PathFormula,
    spec: &ModelSpec,
    sigma: Option<&Distribution>,
) -> Result<bool, SemanticsError> {
    Oracle::new(spec, sigma)?.eval_path(path, f)
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

    fn path_f(text: &str) -> PathFormula {
        match parse_formula(text).unwrap() {
            Formula::Path(f) => f,
            other => panic!("expected path formula, got {other:?}"),
        }
    }

    #[test]
    fn reproduces_the_worked_state_evaluations() {
        let spec = binary_spec(6);
        let sigma = fair();
        let oracle = Oracle::new(&spec, Some(&sigma)).unwrap();

        assert!(oracle.eval_state(&w(1, 1), &state("M")).unwrap());
        assert!(oracle.eval_state(&w(1, 1), &state("NOT F")).unwrap());
        assert!(oracle.eval_state(&w(3, 1), &state("BOX 1 M")).unwrap());
        assert!(oracle.eval_state(&w(3, 2), &state("BOX 2/3 M")).unwrap());
        assert!(oracle.eval_state(&w(3, 1), &state("BBOX 1 F")).unwrap());
        assert!(oracle.eval_state(&w(3, 2), &state("BBOX 1 F")).unwrap());
        assert!(oracle
            .eval_state(&w(3, 1), &state("CIRC 3/6 M AND CIRC 0 F"))
            .unwrap());
        assert!(oracle.eval_state(&w(3, 1), &state("TRI 1 F")).unwrap());
        assert!(oracle.eval_state(&w(3, 2), &state("TRI 2/3 F")).unwrap());
        assert!(!oracle.eval_state(&w(3, 2), &state("BOX 1 M")).unwrap());
    }

    #[test]
    fn reproduces_the_worked_path_evaluations() {
        let spec = binary_spec(6);
        let sigma = fair();
        let oracle = Oracle::new(&spec, Some(&sigma)).unwrap();

        let leaf63 = spec.root_path(&w(6, 63)).unwrap();
        assert!(oracle.eval_path(&leaf63, &path_f("NAB 1/6 M")).unwrap());

        let prefix31 = spec.root_path(&w(3, 1)).unwrap();
        assert!(oracle.eval_path(&prefix31, &path_f("DAG 1/8 M")).unwrap());
        assert!(!oracle.eval_path(&prefix31, &path_f("DAG 1/4 M")).unwrap());

        let prefix47 = spec.root_path(&w(4, 7)).unwrap();
        assert!(oracle.eval_path(&prefix47, &path_f("DAG 1/2 M")).unwrap());
        assert!(!oracle.eval_path(&prefix47, &path_f("DAG 5/8 M")).unwrap());
    }

    #[test]
    fn compatible_path_census_matches_the_multinomial() {
        let spec = binary_spec(6);
        let sigma = fair();
        let oracle = Oracle::new(&spec, Some(&sigma)).unwrap();
        // 6 choose 3 balanced label sequences.
        assert_eq!(oracle.compatible_path_count(), 20);
    }

    #[test]
    fn empty_compatible_set_when_quotas_non_integral() {
        let spec = binary_spec(5);
        let sigma = fair();
        let oracle = Oracle::new(&spec, Some(&sigma)).unwrap();
        assert_eq!(oracle.compatible_path_count(), 0);
        for level in 1..=5u32 {
            assert!(!oracle.eval_state(&w(level, 1), &state("BBOX 0 M")).unwrap());
            assert!(!oracle.eval_state(&w(level, 1), &state("TRI 0 M")).unwrap());
        }
        let prefix = spec.root_path(&w(2, 1)).unwrap();
        assert!(!oracle.eval_path(&prefix, &path_f("DAG 0 M")).unwrap());
    }
}
