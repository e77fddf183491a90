//! The counting-world tree.
//!
//! A series of `n` events with `l` possible outcomes per event induces a
//! complete l-ary tree of depth `n`. Worlds are addressed as `(level i,
//! index j)` with both coordinates 1-based; level `i` holds `l^i` worlds.
//! The tree is never materialized: parents, children, and path counts come
//! from index arithmetic.
//!
//! - parent of `(i, j)` is `(i-1, ceil(j/l))`; roots are their own parent.
//! - children of `(i, j)` are `(i+1, (j-1)*l + 1) .. (i+1, (j-1)*l + l)`.
//! - `l^(n-i)` complete paths continue from a world at level `i`.
//!
//! Under the canonical labeling the `l` children of every world carry the
//! `l` distinct alphabet outcomes in alphabet order, so the label of
//! `(i, j)` is `alphabet[(j-1) mod l]`. An explicit per-world labeling is
//! accepted for small models.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default ceiling on `l^n` for operations that enumerate complete paths.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid world {world}: {reason}")]
    InvalidWorld { world: String, reason: String },
    #[error("enumeration needs {required} paths, above the cap of {cap}")]
    CapExceeded { required: BigUint, cap: u64 },
    #[error("invalid model: {0}")]
    InvalidSpec(String),
}

/// Coordinate of one world: level in `[1, n]`, index in `[1, l^level]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WorldId {
    level: u32,
    index: BigUint,
}

impl WorldId {
    pub fn new(level: u32, index: impl Into<BigUint>) -> Self {
        WorldId {
            level,
            index: index.into(),
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn index(&self) -> &BigUint {
        &self.index
    }
}

impl fmt::Display for WorldId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.level, self.index)
    }
}

impl FromStr for WorldId {
    type Err = ModelError;

    /// Parses the dotted `i.j` notation, e.g. `4.7`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::InvalidWorld {
            world: s.to_string(),
            reason: "expected `level.index` with positive integers".to_string(),
        };
        let (lvl, idx) = s.split_once('.').ok_or_else(bad)?;
        let level: u32 = lvl.trim().parse().map_err(|_| bad())?;
        let index = BigUint::from_str(idx.trim()).map_err(|_| bad())?;
        if level == 0 || index.is_zero() {
            return Err(bad());
        }
        Ok(WorldId { level, index })
    }
}

/// A downward chain of worlds, one per consecutive level.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Path {
    worlds: Vec<WorldId>,
}

impl Path {
    /// Builds a path after checking every consecutive pair against the
    /// parent/child arithmetic.
    pub fn from_worlds(worlds: Vec<WorldId>, spec: &ModelSpec) -> Result<Self, ModelError> {
        if worlds.is_empty() {
            return Err(ModelError::InvalidSpec("empty path".to_string()));
        }
        for w in &worlds {
            spec.check_world(w)?;
        }
        for pair in worlds.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if b.level != a.level + 1 || spec.parent_of(b)? != *a {
                return Err(ModelError::InvalidWorld {
                    world: b.to_string(),
                    reason: format!("not a direct child of {a}"),
                });
            }
        }
        Ok(Path { worlds })
    }

    pub fn worlds(&self) -> &[WorldId] {
        &self.worlds
    }

    pub fn start(&self) -> &WorldId {
        &self.worlds[0]
    }

    pub fn end(&self) -> &WorldId {
        &self.worlds[self.worlds.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.worlds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.worlds.is_empty()
    }

    /// A complete path runs from a root world to a leaf world.
    pub fn is_complete(&self, spec: &ModelSpec) -> bool {
        self.start().level == 1 && self.end().level == spec.n()
    }

    pub fn starts_at_root(&self) -> bool {
        self.start().level == 1
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for w in &self.worlds {
            if !first {
                write!(f, " -> ")?;
            }
            write!(f, "{w}")?;
            first = false;
        }
        Ok(())
    }
}

/// How worlds are labeled with outcomes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Labeling {
    /// Children of every world carry the alphabet outcomes in order.
    Canonical,
    /// Exhaustive per-world map keyed by `i.j`; only for enumeration-scale models.
    Explicit(BTreeMap<String, String>),
}

impl Default for Labeling {
    fn default() -> Self {
        Labeling::Canonical
    }
}

/// Tree parameters plus the labeling; immutable once built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    l: u32,
    n: u32,
    alphabet: Vec<String>,
    #[serde(default)]
    labeling: Labeling,
    #[serde(default = "default_cap", skip_serializing_if = "is_default_cap")]
    enumeration_cap: u64,
}

fn default_cap() -> u64 {
    DEFAULT_ENUMERATION_CAP
}

fn is_default_cap(cap: &u64) -> bool {
    *cap == DEFAULT_ENUMERATION_CAP
}

impl ModelSpec {
    pub fn new(l: u32, n: u32, alphabet: Vec<String>) -> Result<Self, ModelError> {
        Self::with_labeling(l, n, alphabet, Labeling::Canonical)
    }

    pub fn with_labeling(
        l: u32,
        n: u32,
        alphabet: Vec<String>,
        labeling: Labeling,
    ) -> Result<Self, ModelError> {
        let spec = ModelSpec {
            l,
            n,
            alphabet,
            labeling,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let spec: ModelSpec = serde_json::from_str(text)
            .map_err(|e| ModelError::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.l == 0 || self.n == 0 {
            return Err(ModelError::InvalidSpec(
                "l and n must be positive".to_string(),
            ));
        }
        if self.alphabet.len() != self.l as usize {
            return Err(ModelError::InvalidSpec(format!(
                "alphabet has {} entries, expected l = {}",
                self.alphabet.len(),
                self.l
            )));
        }
        let mut seen = self.alphabet.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.alphabet.len() {
            return Err(ModelError::InvalidSpec(
                "alphabet entries must be distinct".to_string(),
            ));
        }
        if let Labeling::Explicit(explicit) = &self.labeling {
            let leaves = self.leaf_count();
            if leaves > BigUint::from(self.enumeration_cap) {
                return Err(ModelError::CapExceeded {
                    required: leaves,
                    cap: self.enumeration_cap,
                });
            }
            for level in 1..=self.n {
                let width = self.level_width(level);
                let mut index = BigUint::one();
                while index <= width {
                    let key = format!("{level}.{index}");
                    match explicit.get(&key) {
                        Some(outcome) if self.alphabet.contains(outcome) => {}
                        Some(outcome) => {
                            return Err(ModelError::InvalidSpec(format!(
                                "world {key} labeled with unknown outcome {outcome}"
                            )))
                        }
                        None => {
                            return Err(ModelError::InvalidSpec(format!(
                                "explicit labeling is missing world {key}"
                            )))
                        }
                    }
                    index += BigUint::one();
                }
            }
        }
        Ok(())
    }

    pub fn l(&self) -> u32 {
        self.l
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn labeling(&self) -> &Labeling {
        &self.labeling
    }

    pub fn is_canonical(&self) -> bool {
        matches!(self.labeling, Labeling::Canonical)
    }

    pub fn enumeration_cap(&self) -> u64 {
        self.enumeration_cap
    }

    pub fn set_enumeration_cap(&mut self, cap: u64) {
        self.enumeration_cap = cap;
    }

    /// Number of worlds at `level`, i.e. `l^level`.
    pub fn level_width(&self, level: u32) -> BigUint {
        BigUint::from(self.l).pow(level)
    }

    /// Number of leaf worlds, `m = l^n`.
    pub fn leaf_count(&self) -> BigUint {
        self.level_width(self.n)
    }

    /// Total world count over all levels.
    pub fn world_count(&self) -> BigUint {
        let mut total = BigUint::zero();
        for level in 1..=self.n {
            total += self.level_width(level);
        }
        total
    }

    pub fn check_world(&self, w: &WorldId) -> Result<(), ModelError> {
        if w.level < 1 || w.level > self.n {
            return Err(ModelError::InvalidWorld {
                world: w.to_string(),
                reason: format!("level outside [1, {}]", self.n),
            });
        }
        if w.index.is_zero() || w.index > self.level_width(w.level) {
            return Err(ModelError::InvalidWorld {
                world: w.to_string(),
                reason: format!("index outside [1, {}]", self.level_width(w.level)),
            });
        }
        Ok(())
    }

    /// The unique direct parent: `(i-1, ceil(j/l))`. Root worlds are their
    /// own parent.
    pub fn parent_of(&self, w: &WorldId) -> Result<WorldId, ModelError> {
        self.check_world(w)?;
        if w.level == 1 {
            return Ok(w.clone());
        }
        let l = BigUint::from(self.l);
        // ceil(j/l) = (j + l - 1) / l
        let index = (&w.index + &l - BigUint::one()) / &l;
        Ok(WorldId {
            level: w.level - 1,
            index,
        })
    }

    /// The `l` direct children `(i+1, (j-1)*l + t)`, in alphabet order.
    /// Empty for leaf worlds.
    pub fn children_of(&self, w: &WorldId) -> Result<Vec<WorldId>, ModelError> {
        self.check_world(w)?;
        if w.level == self.n {
            return Ok(Vec::new());
        }
        let base = (&w.index - BigUint::one()) * BigUint::from(self.l);
        Ok((1..=self.l)
            .map(|t| WorldId {
                level: w.level + 1,
                index: &base + BigUint::from(t),
            })
            .collect())
    }

    /// The unique path from a root world down to `w`.
    pub fn root_path(&self, w: &WorldId) -> Result<Path, ModelError> {
        self.check_world(w)?;
        let mut worlds = Vec::with_capacity(w.level as usize);
        let mut cur = w.clone();
        loop {
            worlds.push(cur.clone());
            if cur.level == 1 {
                break;
            }
            cur = self.parent_of(&cur)?;
        }
        worlds.reverse();
        Ok(Path { worlds })
    }

    /// Number of complete paths through `w`: `l^(n - level)`.
    pub fn count_paths_from(&self, w: &WorldId) -> Result<BigUint, ModelError> {
        self.check_world(w)?;
        Ok(BigUint::from(self.l).pow(self.n - w.level))
    }

    /// Outcome carried by `w`.
    pub fn label_of(&self, w: &WorldId) -> Result<&str, ModelError> {
        self.check_world(w)?;
        match &self.labeling {
            Labeling::Canonical => {
                let offset = ((&w.index - BigUint::one()) % BigUint::from(self.l))
                    .to_usize()
                    .expect("offset below l");
                Ok(&self.alphabet[offset])
            }
            Labeling::Explicit(explicit) => {
                let key = w.to_string();
                explicit
                    .get(&key)
                    .map(String::as_str)
                    .ok_or_else(|| ModelError::InvalidWorld {
                        world: key,
                        reason: "missing from explicit labeling".to_string(),
                    })
            }
        }
    }

    /// Labels along the root path of `w`, oldest first.
    pub fn prefix_labels(&self, w: &WorldId) -> Result<Vec<String>, ModelError> {
        let path = self.root_path(w)?;
        path.worlds()
            .iter()
            .map(|u| self.label_of(u).map(str::to_string))
            .collect()
    }

    /// Under canonical labeling, the world reached from a root by following
    /// the given outcome sequence.
    pub fn world_for_labels(&self, labels: &[String]) -> Result<WorldId, ModelError> {
        if labels.is_empty() || labels.len() > self.n as usize {
            return Err(ModelError::InvalidSpec(format!(
                "label sequence length {} outside [1, {}]",
                labels.len(),
                self.n
            )));
        }
        let mut zero_based = BigUint::zero();
        for label in labels {
            let offset = self
                .alphabet
                .iter()
                .position(|a| a == label)
                .ok_or_else(|| ModelError::InvalidSpec(format!("unknown outcome {label}")))?;
            zero_based = zero_based * BigUint::from(self.l) + BigUint::from(offset);
        }
        Ok(WorldId {
            level: labels.len() as u32,
            index: zero_based + BigUint::one(),
        })
    }

    /// Iterator over all `l^n` complete paths. Fails with [`ModelError::CapExceeded`]
    /// when `l^n` is above the enumeration cap.
    pub fn enumerate_complete_paths(&self) -> Result<CompletePaths<'_>, ModelError> {
        let leaves = self.leaf_count();
        if leaves > BigUint::from(self.enumeration_cap) {
            return Err(ModelError::CapExceeded {
                required: leaves,
                cap: self.enumeration_cap,
            });
        }
        Ok(CompletePaths {
            spec: self,
            next: BigUint::one(),
            leaves,
        })
    }

    /// Best-effort GraphViz dump for enumeration-scale models.
    pub fn to_dot(&self) -> Result<String, ModelError> {
        let leaves = self.leaf_count();
        if leaves > BigUint::from(self.enumeration_cap) {
            return Err(ModelError::CapExceeded {
                required: leaves,
                cap: self.enumeration_cap,
            });
        }
        let mut out = String::from("digraph model {\n  rankdir=LR;\n");
        for level in 1..=self.n {
            let width = self.level_width(level);
            let mut index = BigUint::one();
            while index <= width {
                let w = WorldId {
                    level,
                    index: index.clone(),
                };
                let label = self.label_of(&w)?;
                out.push_str(&format!("  \"{w}\" [label=\"{w}: {label}\"];\n"));
                if level < self.n {
                    for child in self.children_of(&w)? {
                        out.push_str(&format!("  \"{w}\" -> \"{child}\";\n"));
                    }
                }
                index += BigUint::one();
            }
        }
        out.push_str("}\n");
        Ok(out)
    }
}

/// Iterator yielding every complete path exactly once, in leaf-index order.
pub struct CompletePaths<'a> {
    spec: &'a ModelSpec,
    next: BigUint,
    leaves: BigUint,
}

impl Iterator for CompletePaths<'_> {
    type Item = Path;

    fn next(&mut self) -> Option<Path> {
        if self.next > self.leaves {
            return None;
        }
        let leaf = WorldId {
            level: self.spec.n,
            index: self.next.clone(),
        };
        self.next += BigUint::one();
        Some(self.spec.root_path(&leaf).expect("leaf index in range"))
    }
}
