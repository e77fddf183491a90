//! Counting-semantics branching-time logic over series of categorical
//! outputs.
//!
//! A generation process emits a series of `n` outputs, each carrying one of
//! `l` outcomes of a protected attribute. The possible series form a
//! complete l-ary tree of worlds; six modal operators quantify over counts
//! of outcomes along paths of that tree, which makes statements like "the
//! observed prefix is still on track for a 50/50 split" or "half of the
//! remaining completions stay within the target distribution" checkable
//! exactly, with rational arithmetic end to end.
//!
//! The crate provides:
//!
//! - [`formula`]: formula AST, text syntax, parser, printer.
//! - [`model`]: the implicit world tree and its index arithmetic.
//! - [`semantics`]: closed-form evaluation of all six operators, plus a
//!   brute-force oracle that evaluates the definitions literally at small
//!   scale.
//! - [`monitor`]: streaming ingestion of an observed series with verdicts,
//!   completion probabilities, next-step outlooks, and residual odds.
//! - [`mitigation`]: largest fair subset, removal plans, and an online
//!   accept/reject policy.
//! - [`simulator`]: seeded Monte Carlo estimation used to validate the
//!   exact results.
//! - [`cli`]: the `ctlf` command-line front end.
//!
//! Most capabilities have a runnable demo under `examples/`.

pub mod cli;
pub mod formula;
pub mod mitigation;
pub mod model;
pub mod monitor;
pub mod semantics;
pub mod simulator;

pub use formula::{
    format_formula, parse_formula, Formula, FormulaError, PathFormula, StateFormula, Threshold,
};
pub use model::{Labeling, ModelError, ModelSpec, Path, WorldId};
pub use semantics::{
    check_path, check_state, eval_path, eval_state, is_sigma_compatible, prefix_counts,
    sigma_completions, sigma_completions_from, CountVector, Distribution, Evaluation, Evaluator,
    SemanticsError,
};
