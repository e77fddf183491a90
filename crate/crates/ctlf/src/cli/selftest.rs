//! Built-in golden suite: worked tree-arithmetic values, all state and path
//! operator evaluations from the six-step binary walkthrough, the monitor
//! answers, the residual-odds tally, the mitigation plan, and a reduced
//! closed-form versus brute-force cross-check. Exit 0 only when every case
//! passes; failing case ids are listed.

use num_rational::BigRational;
use serde_json::json;

use crate::formula::parse_formula;
use crate::mitigation::{max_fair_subset_size, plan_removals, streaming_reject, KeepPolicy};
use crate::model::{ModelSpec, WorldId};
use crate::monitor::{report_json, MonitorState};
use crate::semantics::oracle::Oracle;
use crate::semantics::{
    sigma_completions_from, CountVector, Distribution, Evaluator,
};
use crate::Formula;

use super::{decisions_to_string, Format};

struct Case {
    id: &'static str,
    reference: &'static str,
    expected: String,
    got: String,
}

impl Case {
    fn pass(&self) -> bool {
        self.expected == self.got
    }
}

fn outcome<F>(f: F) -> String
where
    F: FnOnce() -> Result<String, String>,
{
    match f() {
        Ok(value) => value,
        Err(message) => format!("error: {message}"),
    }
}

fn binary_spec(n: u32) -> ModelSpec {
    ModelSpec::new(2, n, vec!["M".to_string(), "F".to_string()]).expect("valid model")
}

fn fair() -> Distribution {
    Distribution::uniform(&["M".to_string(), "F".to_string()]).expect("valid distribution")
}

fn w(level: u32, index: u64) -> WorldId {
    WorldId::new(level, index)
}

fn eval_to_string(spec: &ModelSpec, sigma: &Distribution, world: WorldId, text: &str) -> String {
    outcome(|| {
        let formula = parse_formula(text).map_err(|e| e.to_string())?;
        let evaluator = Evaluator::new(spec, Some(sigma)).map_err(|e| e.to_string())?;
        match formula {
            Formula::State(f) => Ok(evaluator
                .eval_state(&world, &f)
                .map_err(|e| e.to_string())?
                .to_string()),
            Formula::Path(f) => {
                let path = spec.root_path(&world).map_err(|e| e.to_string())?;
                Ok(evaluator
                    .eval_path(&path, &f)
                    .map_err(|e| e.to_string())?
                    .to_string())
            }
        }
    })
}

fn monitor_after(outcomes: &[&str], dataset: Option<(u64, u64)>, n: u32) -> Result<MonitorState, String> {
    let dataset = dataset.map(|(m, f)| CountVector::from_pairs([("M", m), ("F", f)]));
    let mut state = MonitorState::new(
        binary_spec(n),
        fair(),
        BigRational::from_integer(0.into()),
        dataset,
    )
    .map_err(|e| e.to_string())?;
    for o in outcomes {
        state = state.ingest(o).map_err(|e| e.to_string())?;
    }
    Ok(state)
}

fn odds_m_f(outcomes: &[&str]) -> Result<String, String> {
    let state = monitor_after(outcomes, Some((15, 5)), 12)?;
    let odds = state.residual_odds().map_err(|e| e.to_string())?;
    Ok(odds[&("M".to_string(), "F".to_string())].to_string())
}

fn build_cases() -> Vec<Case> {
    let spec6 = binary_spec(6);
    let sigma = fair();
    let mut cases = Vec::new();

    cases.push(Case {
        id: "parent-of-3.5",
        reference: "tree-arithmetic",
        expected: "2.3".into(),
        got: outcome(|| {
            spec6
                .parent_of(&w(3, 5))
                .map(|p| p.to_string())
                .map_err(|e| e.to_string())
        }),
    });
    cases.push(Case {
        id: "children-of-2.3",
        reference: "tree-arithmetic",
        expected: "3.5 3.6".into(),
        got: outcome(|| {
            Ok(spec6
                .children_of(&w(2, 3))
                .map_err(|e| e.to_string())?
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(" "))
        }),
    });
    cases.push(Case {
        id: "paths-from-2.3",
        reference: "tree-arithmetic",
        expected: "16".into(),
        got: outcome(|| {
            spec6
                .count_paths_from(&w(2, 3))
                .map(|c| c.to_string())
                .map_err(|e| e.to_string())
        }),
    });
    cases.push(Case {
        id: "root-path-of-3.5",
        reference: "tree-arithmetic",
        expected: "1.2 2.3 3.5".into(),
        got: outcome(|| {
            Ok(spec6
                .root_path(&w(3, 5))
                .map_err(|e| e.to_string())?
                .worlds()
                .iter()
                .map(|u| u.to_string())
                .collect::<Vec<_>>()
                .join(" "))
        }),
    });
    cases.push(Case {
        id: "labels-along-6.63",
        reference: "labeling",
        expected: "F F F F F M".into(),
        got: outcome(|| {
            spec6
                .prefix_labels(&w(6, 63))
                .map(|l| l.join(" "))
                .map_err(|e| e.to_string())
        }),
    });

    let state_cases: [(&'static str, WorldId, &'static str); 9] = [
        ("atom-at-root", w(1, 1), "M"),
        ("negation-at-root", w(1, 1), "NOT F"),
        ("box-all-male", w(3, 1), "BOX 1 M"),
        ("box-two-thirds", w(3, 2), "BOX 2/3 M"),
        ("bbox-female-run-a", w(3, 1), "BBOX 1 F"),
        ("bbox-female-run-b", w(3, 2), "BBOX 1 F"),
        ("circ-conjunction", w(3, 1), "CIRC 3/6 M AND CIRC 0 F"),
        ("tri-forced-female", w(3, 1), "TRI 1 F"),
        ("tri-two-thirds", w(3, 2), "TRI 2/3 F"),
    ];
    for (id, world, text) in state_cases {
        cases.push(Case {
            id,
            reference: "state-operators",
            expected: "true".into(),
            got: eval_to_string(&spec6, &sigma, world, text),
        });
    }

    cases.push(Case {
        id: "nabla-one-in-six",
        reference: "path-operators",
        expected: "true".into(),
        got: eval_to_string(&spec6, &sigma, w(6, 63), "NAB 1/6 M"),
    });
    cases.push(Case {
        id: "dagger-one-in-eight",
        reference: "path-operators",
        expected: "true".into(),
        got: eval_to_string(&spec6, &sigma, w(3, 1), "DAG 1/8 M"),
    });

    cases.push(Case {
        id: "verdict-balanced-prefix",
        reference: "monitor",
        expected: "Compliant M=1/2 F=1/2".into(),
        got: outcome(|| {
            let state = monitor_after(&["M", "F", "F", "M"], None, 6)?;
            let verdict = state.q1_verdict().map_err(|e| e.to_string())?;
            Ok(format!(
                "{} M={} F={}",
                verdict.status,
                crate::formula::format_rational(&verdict.ratios["M"]),
                crate::formula::format_rational(&verdict.ratios["F"]),
            ))
        }),
    });
    cases.push(Case {
        id: "completion-prob-balanced",
        reference: "monitor",
        expected: "1/2".into(),
        got: outcome(|| {
            let state = monitor_after(&["M", "F", "F", "M"], None, 6)?;
            state
                .q2_completion_probability()
                .map(|r| crate::formula::format_rational(&r))
                .map_err(|e| e.to_string())
        }),
    });
    cases.push(Case {
        id: "completion-prob-male-run",
        reference: "monitor",
        expected: "1/8".into(),
        got: outcome(|| {
            let state = monitor_after(&["M", "M", "M"], None, 6)?;
            state
                .q2_completion_probability()
                .map(|r| crate::formula::format_rational(&r))
                .map_err(|e| e.to_string())
        }),
    });
    cases.push(Case {
        id: "outlook-balanced-prefix",
        reference: "monitor",
        expected: "F=1/2 M=1/2".into(),
        got: outcome(|| {
            let state = monitor_after(&["M", "F", "F", "M"], None, 6)?;
            let outlook = state.next_step_outlook().map_err(|e| e.to_string())?;
            Ok(outlook
                .iter()
                .map(|(p, r)| format!("{p}={}", crate::formula::format_rational(r)))
                .collect::<Vec<_>>()
                .join(" "))
        }),
    });
    cases.push(Case {
        id: "compatible-completions-of-4.7",
        reference: "monitor",
        expected: "2 of 4".into(),
        got: outcome(|| {
            let compatible = sigma_completions_from(&w(4, 7), &spec6, &sigma)
                .map_err(|e| e.to_string())?;
            let total = spec6.count_paths_from(&w(4, 7)).map_err(|e| e.to_string())?;
            Ok(format!("{compatible} of {total}"))
        }),
    });

    cases.push(Case {
        id: "odds-after-four",
        reference: "residual-odds",
        expected: "13/3".into(),
        got: outcome(|| odds_m_f(&["M", "F", "M", "F"])),
    });
    cases.push(Case {
        id: "odds-branch-male",
        reference: "residual-odds",
        expected: "12/3".into(),
        got: outcome(|| odds_m_f(&["M", "F", "M", "F", "M"])),
    });
    cases.push(Case {
        id: "odds-branch-female",
        reference: "residual-odds",
        expected: "13/2".into(),
        got: outcome(|| odds_m_f(&["M", "F", "M", "F", "F"])),
    });
    cases.push(Case {
        id: "odds-two-steps",
        reference: "residual-odds",
        expected: "11/3 12/2 13/1".into(),
        got: outcome(|| {
            Ok(format!(
                "{} {} {}",
                odds_m_f(&["M", "F", "M", "F", "M", "M"])?,
                odds_m_f(&["M", "F", "M", "F", "M", "F"])?,
                odds_m_f(&["M", "F", "M", "F", "F", "F"])?,
            ))
        }),
    });

    cases.push(Case {
        id: "fair-subset-size",
        reference: "mitigation",
        expected: "6".into(),
        got: outcome(|| {
            Ok(
                max_fair_subset_size(
                    &CountVector::from_pairs([("M", 9u64), ("F", 3u64)]),
                    &fair(),
                )
                .to_string(),
            )
        }),
    });
    cases.push(Case {
        id: "removal-plan-drops-males",
        reference: "mitigation",
        expected: "6 removed, all M, kept 3M/3F".into(),
        got: outcome(|| {
            let observed: Vec<String> =
                "MFFMMMMFMMMM".chars().map(|c| c.to_string()).collect();
            let plan = plan_removals(&observed, &fair(), KeepPolicy::KeepEarliest)
                .map_err(|e| e.to_string())?;
            let all_male = plan
                .remove
                .iter()
                .all(|i| observed[*i as usize - 1] == "M");
            Ok(format!(
                "{} removed, {}, kept {}M/{}F",
                plan.remove.len(),
                if all_male { "all M" } else { "not all M" },
                plan.kept_counts.get("M"),
                plan.kept_counts.get("F"),
            ))
        }),
    });
    cases.push(Case {
        id: "streaming-reject-male-cap",
        reference: "mitigation",
        expected: "F:Accept M:Reject".into(),
        got: outcome(|| {
            let state = monitor_after(&["M", "F", "M", "F", "M"], Some((9, 3)), 12)?;
            let decisions = streaming_reject(&state).map_err(|e| e.to_string())?;
            Ok(decisions_to_string(&decisions))
        }),
    });

    cases.push(Case {
        id: "cross-check-binary",
        reference: "evaluator-equivalence",
        expected: "0 disagreements".into(),
        got: outcome(|| sweep(2, 1, 5)),
    });
    cases.push(Case {
        id: "cross-check-ternary",
        reference: "evaluator-equivalence",
        expected: "0 disagreements".into(),
        got: outcome(|| sweep(3, 1, 3)),
    });

    cases.push(Case {
        id: "deterministic-replay",
        reference: "determinism",
        expected: "identical".into(),
        got: outcome(|| {
            let once = monitor_after(&["M", "F", "F", "M"], Some((15, 5)), 6)
                .and_then(|s| report_json(&s).map_err(|e| e.to_string()))?;
            let twice = monitor_after(&["M", "F", "F", "M"], Some((15, 5)), 6)
                .and_then(|s| report_json(&s).map_err(|e| e.to_string()))?;
            Ok(if once.to_string() == twice.to_string() {
                "identical".to_string()
            } else {
                "diverged".to_string()
            })
        }),
    });

    cases
}

// Reduced dual-evaluator sweep: all six operators over a small formula
// family, every world (and every root prefix and complete path), thresholds
// from the boundary-heavy set.
fn sweep(l: u32, n_lo: u32, n_hi: u32) -> Result<String, String> {
    let alphabet: Vec<String> = match l {
        2 => vec!["M".into(), "F".into()],
        3 => vec!["a".into(), "b".into(), "c".into()],
        _ => return Err("unsupported sweep arity".into()),
    };
    let qs = ["0", "1/4", "1/3", "1/2", "2/3", "3/4", "1"];
    let nested_qs = ["0", "1/2", "1"];
    let a0 = &alphabet[0];

    let mut atoms = vec![a0.clone(), format!("NOT {a0}")];
    if l > 1 {
        atoms.push(format!("{} AND {}", alphabet[0], alphabet[1]));
    }
    let mut depth1 = Vec::new();
    for op in ["BOX", "BBOX", "CIRC", "TRI"] {
        for q in nested_qs {
            for atom in &atoms {
                depth1.push(format!("{op} {q} {atom}"));
            }
        }
    }
    let mut state_formulas = atoms.clone();
    for op in ["BOX", "BBOX", "CIRC", "TRI"] {
        for q in qs {
            for inner in atoms.iter().chain(depth1.iter()) {
                state_formulas.push(format!("{op} {q} ({inner})"));
            }
        }
    }
    let mut path_formulas = Vec::new();
    for op in ["NAB", "DAG"] {
        for q in qs {
            path_formulas.push(format!("{op} {q} {a0}"));
        }
    }

    let mut checked = 0u64;
    for n in n_lo..=n_hi {
        let spec = ModelSpec::new(l, n, alphabet.clone()).map_err(|e| e.to_string())?;
        let sigma = Distribution::uniform(&alphabet).map_err(|e| e.to_string())?;
        let evaluator = Evaluator::new(&spec, Some(&sigma)).map_err(|e| e.to_string())?;
        let oracle = Oracle::new(&spec, Some(&sigma)).map_err(|e| e.to_string())?;

        let mut worlds = Vec::new();
        for level in 1..=n {
            let width: u64 = spec
                .level_width(level)
                .try_into()
                .map_err(|_| "level too wide".to_string())?;
            for index in 1..=width {
                worlds.push(WorldId::new(level, index));
            }
        }

        for text in &state_formulas {
            let formula = match parse_formula(text).map_err(|e| e.to_string())? {
                Formula::State(f) => f,
                _ => unreachable!(),
            };
            for world in &worlds {
                let fast = evaluator
                    .eval_state(world, &formula)
                    .map_err(|e| e.to_string())?;
                let slow = oracle
                    .eval_state(world, &formula)
                    .map_err(|e| e.to_string())?;
                if fast != slow {
                    return Ok(format!(
                        "disagreement: {text} at {world} (l={l}, n={n}): closed={fast} oracle={slow}"
                    ));
                }
                checked += 1;
            }
        }
        for text in &path_formulas {
            let formula = match parse_formula(text).map_err(|e| e.to_string())? {
                Formula::Path(f) => f,
                _ => unreachable!(),
            };
            let is_nabla = text.starts_with("NAB");
            for world in &worlds {
                if is_nabla && world.level() != n {
                    continue;
                }
                let path = spec.root_path(world).map_err(|e| e.to_string())?;
                let fast = evaluator
                    .eval_path(&path, &formula)
                    .map_err(|e| e.to_string())?;
                let slow = oracle
                    .eval_path(&path, &formula)
                    .map_err(|e| e.to_string())?;
                if fast != slow {
                    return Ok(format!(
                        "disagreement: {text} on prefix to {world} (l={l}, n={n})"
                    ));
                }
                checked += 1;
            }
        }
        let _ = checked;
    }
    Ok("0 disagreements".into())
}

pub(super) fn run(format: Format) -> i32 {
    let cases = build_cases();
    let mut failing = Vec::new();
    match format {
        Format::Table => {
            println!(
                "{:<28} {:<24} {:<26} {:<26} {}",
                "case-id", "ref", "expected", "got", "pass"
            );
            for case in &cases {
                let pass = case.pass();
                println!(
                    "{:<28} {:<24} {:<26} {:<26} {}",
                    case.id,
                    case.reference,
                    case.expected,
                    case.got,
                    if pass { "yes" } else { "NO" }
                );
                if !pass {
                    failing.push(case.id);
                }
            }
        }
        Format::Json => {
            for case in &cases {
                let pass = case.pass();
                println!(
                    "{}",
                    json!({
                        "case": case.id,
                        "ref": case.reference,
                        "expected": case.expected,
                        "got": case.got,
                        "pass": pass,
                    })
                );
                if !pass {
                    failing.push(case.id);
                }
            }
        }
    }
    if failing.is_empty() {
        println!("selftest: {} cases passed", cases.len());
        0
    } else {
        println!(
            "selftest: {} of {} cases failed: {}",
            failing.len(),
            cases.len(),
            failing.join(", ")
        );
        1
    }
}
