//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measurements (run with `cargo test --test acceptance -- --nocapture`
//! to see them). Every tolerance and threshold is pinned in the assertions.

use std::collections::BTreeMap;
use std::time::Instant;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use ctlf::mitigation::{
    max_fair_subset_size, plan_removals, streaming_reject, Decision, KeepPolicy,
};
use ctlf::monitor::{MonitorState, Status};
use ctlf::semantics::oracle::Oracle;
use ctlf::semantics::{
    is_sigma_compatible, sigma_completions_from, CountVector, Distribution, Evaluator,
};
use ctlf::simulator::{estimate_completion_probability, Sampling, SimConfig};
use ctlf::{parse_formula, Formula, ModelSpec, PathFormula, StateFormula, WorldId};

fn binary_spec(n: u32) -> ModelSpec {
    ModelSpec::new(2, n, vec!["M".to_string(), "F".to_string()]).unwrap()
}

fn uniform(alphabet: &[String]) -> Distribution {
    Distribution::uniform(alphabet).unwrap()
}

fn fair() -> Distribution {
    uniform(&["M".to_string(), "F".to_string()])
}

fn w(level: u32, index: u64) -> WorldId {
    WorldId::new(level, index)
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

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn monitor_after(outcomes: &[&str], dataset: Option<(u64, u64)>, n: u32) -> MonitorState {
    let dataset = dataset.map(|(m, f)| CountVector::from_pairs([("M", m), ("F", f)]));
    let mut st = MonitorState::new(binary_spec(n), fair(), BigRational::zero(), dataset).unwrap();
    for o in outcomes {
        st = st.ingest(o).unwrap();
    }
    st
}

/// Criterion 1: the nine worked evaluations of the six-step binary model
/// reproduce exactly, in under a second.
#[test]
fn criterion_1_worked_example_golden_suite() {
    let started = Instant::now();
    let spec = binary_spec(6);
    let sigma = fair();
    let evaluator = Evaluator::new(&spec, Some(&sigma)).unwrap();

    let state_cases = [
        (w(1, 1), "M"),
        (w(1, 1), "NOT F"),
        (w(3, 1), "BOX 1 M"),
        (w(3, 2), "BOX 2/3 M"),
        (w(3, 1), "BBOX 1 F"),
        (w(3, 2), "BBOX 1 F"),
        (w(3, 1), "CIRC 3/6 M AND CIRC 0 F"),
        (w(3, 1), "TRI 1 F"),
        (w(3, 2), "TRI 2/3 F"),
    ];
    for (world, text) in &state_cases {
        assert!(
            evaluator.eval_state(world, &state(text)).unwrap(),
            "{text} must hold at {world}"
        );
    }

    let complete_to_63 = spec.root_path(&w(6, 63)).unwrap();
    assert!(evaluator
        .eval_path(&complete_to_63, &path_formula("NAB 1/6 M"))
        .unwrap());
    let prefix_to_31 = spec.root_path(&w(3, 1)).unwrap();
    assert!(evaluator
        .eval_path(&prefix_to_31, &path_formula("DAG 1/8 M"))
        .unwrap());

    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs_f64() < 1.0,
        "golden suite took {elapsed:?}, budget 1 s"
    );
    println!(
        "criterion 1: PASS - 11 worked evaluations exact in {:.0} ms",
        elapsed.as_secs_f64() * 1000.0
    );
}

/// Criterion 2: the balanced four-step prefix: verdict, completion
/// probability, outlook, and the 2-of-4 completion census.
#[test]
fn criterion_2_balanced_prefix_values() {
    let st = monitor_after(&["M", "F", "F", "M"], None, 6);
    assert_eq!(st.current_world(), Some(&w(4, 7)));

    let verdict = st.q1_verdict().unwrap();
    assert_eq!(verdict.status, Status::Compliant);
    assert_eq!(verdict.ratios["M"], rat(1, 2));
    assert_eq!(verdict.ratios["F"], rat(1, 2));

    assert_eq!(st.q2_completion_probability().unwrap(), rat(1, 2));

    let outlook = st.next_step_outlook().unwrap();
    assert_eq!(outlook["M"], rat(1, 2));
    assert_eq!(outlook["F"], rat(1, 2));

    let spec = binary_spec(6);
    let sigma = fair();
    let compatible = sigma_completions_from(&w(4, 7), &spec, &sigma).unwrap();
    let total = spec.count_paths_from(&w(4, 7)).unwrap();
    assert_eq!(compatible, BigUint::from(2u32));
    assert_eq!(total, BigUint::from(4u32));

    println!("criterion 2: PASS - Compliant 1/2,1/2; q2=1/2; outlook 1/2,1/2; 2 of 4 completions");
}

/// Criterion 3: residual odds over a 15M/5F dataset follow the worked tally
/// exactly, including both one-step branches and all three two-step values.
#[test]
fn criterion_3_residual_odds_sequence() {
    let mf = |outcomes: &[&str]| {
        monitor_after(outcomes, Some((15, 5)), 12)
            .residual_odds()
            .unwrap()[&("M".to_string(), "F".to_string())]
            .to_string()
    };
    assert_eq!(mf(&["M", "F", "M", "F"]), "13/3");
    assert_eq!(mf(&["M", "F", "M", "F", "M"]), "12/3");
    assert_eq!(mf(&["M", "F", "M", "F", "F"]), "13/2");
    assert_eq!(mf(&["M", "F", "M", "F", "M", "M"]), "11/3");
    assert_eq!(mf(&["M", "F", "M", "F", "M", "F"]), "12/2");
    assert_eq!(mf(&["M", "F", "M", "F", "F", "M"]), "12/2");
    assert_eq!(mf(&["M", "F", "M", "F", "F", "F"]), "13/1");
    println!("criterion 3: PASS - odds 13/3; 12/3|13/2; 11/3|12/2|13/1 exact");
}

/// Criterion 4: the 12-output 9M/3F series mitigates to a compatible
/// 6-element subset by removing exactly six male outputs, and the online
/// policy rejects M from the 3M/2F state onward.
#[test]
fn criterion_4_mitigation_plan_and_streaming_policy() {
    let observed: Vec<String> = "MFFMMMMFMMMM".chars().map(|c| c.to_string()).collect();
    let counts = CountVector::from_labels(&observed);
    assert_eq!((counts.get("M"), counts.get("F")), (9, 3));

    let plan = plan_removals(&observed, &fair(), KeepPolicy::KeepEarliest).unwrap();
    assert_eq!(plan.optimal_size, 6);
    assert_eq!(plan.remove.len(), 6);
    for idx in &plan.remove {
        assert_eq!(observed[*idx as usize - 1], "M", "removed item {idx} must be male");
    }
    assert!(is_sigma_compatible(&plan.kept_counts, &fair(), 6).unwrap());

    // Stream the §-style scenario: dataset projects 9M/3F over 12 outputs.
    let series = ["M", "F", "M", "F", "M", "M", "M", "F", "M", "M", "M", "M"];
    let mut st = monitor_after(&[], Some((9, 3)), 12);
    let mut male_rejected_from = None;
    for (step, outcome) in series.iter().enumerate() {
        st = st.ingest(outcome).unwrap();
        let decisions = streaming_reject(&st).unwrap();
        let counts = st.counts();
        if counts.get("M") >= 3 && counts.get("F") >= 2 && male_rejected_from.is_none() {
            male_rejected_from = Some(step + 1);
        }
        if let Some(from) = male_rejected_from {
            if step + 1 >= from {
                assert_eq!(
                    decisions["M"],
                    Decision::Reject,
                    "M must stay rejected from step {from} (at step {})",
                    step + 1
                );
            }
        }
    }
    assert_eq!(male_rejected_from, Some(5), "3M/2F is reached at step 5");
    println!("criterion 4: PASS - optimal 6, six males removed, M rejected from 3M/2F onward");
}

// The depth-<=2 formula family used by criterion 5: atoms and their boolean
// combinations, every modal operator over those, and every modal operator
// over the depth-1 layer, all thresholds drawn from the boundary-heavy set.
fn sweep_family(alphabet: &[String]) -> (Vec<String>, Vec<String>) {
    let qs = ["0", "1/4", "1/3", "1/2", "2/3", "3/4", "1"];
    let ops = ["BOX", "BBOX", "CIRC", "TRI"];
    let a0 = &alphabet[0];
    let a1 = alphabet.get(1).unwrap_or(a0);

    let atoms = vec![
        a0.clone(),
        a1.clone(),
        format!("NOT {a0}"),
        format!("{a0} AND {a1}"),
        format!("{a0} OR {a1}"),
    ];
    let mut depth1 = Vec::new();
    for op in ops {
        for q in qs {
            for atom in &atoms {
                depth1.push(format!("{op} {q} ({atom})"));
            }
        }
    }
    let mut states = atoms.clone();
    states.extend(depth1.iter().cloned());
    for op in ops {
        for q in qs {
            for inner in &depth1 {
                states.push(format!("{op} {q} ({inner})"));
            }
        }
    }

    let mut paths = Vec::new();
    for op in ["NAB", "DAG"] {
        for q in qs {
            for inner in atoms.iter().chain(depth1.iter()) {
                paths.push(format!("{op} {q} ({inner})"));
            }
        }
    }
    (states, paths)
}

fn sweep_config(l: u32, n: u32, alphabet: &[String]) -> (u64, u64) {
    let spec = ModelSpec::new(l, n, alphabet.to_vec()).unwrap();
    let sigma = uniform(alphabet);
    let evaluator = Evaluator::new(&spec, Some(&sigma)).unwrap();
    let oracle = Oracle::new(&spec, Some(&sigma)).unwrap();
    let (state_texts, path_texts) = sweep_family(alphabet);

    let mut worlds = Vec::new();
    for level in 1..=n {
        let width: u64 = spec.level_width(level).to_u64().unwrap();
        for index in 1..=width {
            worlds.push(WorldId::new(level, index));
        }
    }

    let mut state_checks = 0u64;
    for text in &state_texts {
        let formula = state(text);
        for world in &worlds {
            let fast = evaluator.eval_state(world, &formula).unwrap();
            let slow = oracle.eval_state(world, &formula).unwrap();
            assert_eq!(
                fast, slow,
                "closed form and oracle disagree on {text} at {world} (l={l}, n={n})"
            );
            state_checks += 1;
        }
    }

    let mut path_checks = 0u64;
    for text in &path_texts {
        let formula = path_formula(text);
        let nabla = text.starts_with("NAB");
        for world in &worlds {
            if nabla && world.level() != n {
                continue;
            }
            let path = spec.root_path(world).unwrap();
            let fast = evaluator.eval_path(&path, &formula).unwrap();
            let slow = oracle.eval_path(&path, &formula).unwrap();
            assert_eq!(
                fast, slow,
                "closed form and oracle disagree on {text} for the prefix to {world} (l={l}, n={n})"
            );
            path_checks += 1;
        }
    }
    (state_checks, path_checks)
}

/// Criterion 5: the closed-form evaluator and the literal oracle agree on
/// every world and every formula of the depth-<=2 family, across both model
/// shapes, with zero disagreements, within the runtime budget.
#[test]
fn criterion_5_closed_form_matches_oracle() {
    let started = Instant::now();
    let mut state_checks = 0u64;
    let mut path_checks = 0u64;

    let binary: Vec<String> = vec!["M".into(), "F".into()];
    for n in 1..=8 {
        let (s, p) = sweep_config(2, n, &binary);
        state_checks += s;
        path_checks += p;
    }
    let ternary: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
    for n in 1..=5 {
        let (s, p) = sweep_config(3, n, &ternary);
        state_checks += s;
        path_checks += p;
    }

    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs_f64() < 60.0,
        "sweep took {elapsed:?}, budget 60 s"
    );
    println!(
        "criterion 5: PASS - {state_checks} state and {path_checks} path comparisons, zero disagreements, {:.1} s",
        elapsed.as_secs_f64()
    );
}

/// Criterion 6: parent/child inverse laws hold everywhere, and the
/// closed-form path count equals the enumerated census, for every model
/// with at most 4096 complete paths.
#[test]
fn criterion_6_index_arithmetic_laws() {
    let mut configs = 0u64;
    let mut worlds_checked = 0u64;
    for l in 1..=6u32 {
        for n in 1..=12u32 {
            let leaves = (l as u64).checked_pow(n);
            match leaves {
                Some(count) if count <= 4096 => {}
                _ => continue,
            }
            let alphabet: Vec<String> = (0..l).map(|i| format!("o{i}")).collect();
            let spec = ModelSpec::new(l, n, alphabet).unwrap();

            // Census of complete paths through every world.
            let mut through: BTreeMap<WorldId, u64> = BTreeMap::new();
            for path in spec.enumerate_complete_paths().unwrap() {
                for world in path.worlds() {
                    *through.entry(world.clone()).or_insert(0) += 1;
                }
            }

            for level in 1..=n {
                let width = spec.level_width(level).to_u64().unwrap();
                for index in 1..=width {
                    let world = WorldId::new(level, index);
                    let children = spec.children_of(&world).unwrap();
                    if level == n {
                        assert!(children.is_empty());
                    } else {
                        assert_eq!(children.len(), l as usize);
                        for child in &children {
                            assert_eq!(spec.parent_of(child).unwrap(), world);
                        }
                    }
                    if level == 1 {
                        assert_eq!(spec.parent_of(&world).unwrap(), world);
                    } else {
                        let parent = spec.parent_of(&world).unwrap();
                        assert!(spec.children_of(&parent).unwrap().contains(&world));
                    }
                    let counted = spec.count_paths_from(&world).unwrap().to_u64().unwrap();
                    assert_eq!(
                        counted,
                        through[&world],
                        "path count mismatch at {world} (l={l}, n={n})"
                    );
                    worlds_checked += 1;
                }
            }
            configs += 1;
        }
    }
    println!(
        "criterion 6: PASS - inverse laws and path census on {worlds_checked} worlds across {configs} models"
    );
}

/// Criterion 7: Monte Carlo completion estimates bracket the exact values,
/// and over 100 fixed-seed replicas the 95% interval covers the exact value
/// at least 95 times, for both reference prefixes, within the budget.
#[test]
fn criterion_7_monte_carlo_bracketing() {
    let started = Instant::now();
    let spec = binary_spec(6);
    let sigma = fair();
    let cases = [(w(4, 7), 0.5f64), (w(3, 1), 0.125f64)];

    for (world, exact) in &cases {
        let prefix = spec.root_path(world).unwrap();
        let cfg = SimConfig::new(spec.clone(), Sampling::TreeUniform, 100_000, 42).unwrap();
        let est = estimate_completion_probability(&prefix, &sigma, &cfg).unwrap();
        assert!(
            (est.estimate - exact).abs() <= est.ci95,
            "estimate {} (ci {}) does not bracket {exact} at {world}",
            est.estimate,
            est.ci95
        );
    }

    for (world, exact) in &cases {
        let prefix = spec.root_path(world).unwrap();
        let mut covered = 0u32;
        for seed in 0..100u64 {
            let cfg = SimConfig::new(spec.clone(), Sampling::TreeUniform, 100_000, seed).unwrap();
            let est = estimate_completion_probability(&prefix, &sigma, &cfg).unwrap();
            if (est.estimate - exact).abs() <= est.ci95 {
                covered += 1;
            }
        }
        assert!(
            covered >= 95,
            "coverage {covered}/100 below 95 for exact {exact} at {world}"
        );
    }

    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs_f64() < 30.0,
        "Monte Carlo suite took {elapsed:?}, budget 30 s"
    );
    println!(
        "criterion 7: PASS - both estimates bracket exactly; coverage >= 95/100; {:.1} s",
        elapsed.as_secs_f64()
    );
}

// Brute force for criterion 8: the true maximum over all subsets. Subset
// fairness depends only on how many of each outcome are kept, so the
// maximum is a function of the series counts; the enumeration below still
// walks every bitmask of a representative series of each count class.
fn brute_force_max_fair(m_count: u32, f_count: u32) -> u64 {
    let len = m_count + f_count;
    let fair = fair();
    let mut best = 0u64;
    for mask in 0u32..(1u32 << len) {
        let mut kept_m = 0u64;
        let mut kept_f = 0u64;
        for bit in 0..len {
            if mask & (1 << bit) != 0 {
                if bit < m_count {
                    kept_m += 1;
                } else {
                    kept_f += 1;
                }
            }
        }
        let size = kept_m + kept_f;
        if size <= best || size == 0 {
            continue;
        }
        let counts = CountVector::from_pairs([("M", kept_m), ("F", kept_f)]);
        if is_sigma_compatible(&counts, &fair, size).unwrap() {
            best = size;
        }
    }
    best
}

/// Criterion 8: for every binary series of length <= 12 the closed-form
/// subset size is maximal (brute-force subset enumeration per count class)
/// and the returned plan is sound; streaming agrees with the offline plan.
#[test]
fn criterion_8_mitigation_optimality() {
    let fair = fair();

    // Optimality per count class, subsets enumerated exhaustively.
    let mut classes = 0u64;
    for len in 1..=12u32 {
        for m_count in 0..=len {
            let f_count = len - m_count;
            let counts =
                CountVector::from_pairs([("M", u64::from(m_count)), ("F", u64::from(f_count))]);
            let closed = max_fair_subset_size(&counts, &fair);
            let brute = brute_force_max_fair(m_count, f_count);
            assert_eq!(
                closed, brute,
                "subset size mismatch for {m_count}M/{f_count}F"
            );
            classes += 1;
        }
    }

    // Soundness and streaming/offline agreement on every series up to
    // length 10 (every arrangement, not just counts).
    let mut series_checked = 0u64;
    for len in 1..=10u32 {
        for word in 0u32..(1u32 << len) {
            let observed: Vec<String> = (0..len)
                .map(|bit| {
                    if word & (1 << bit) != 0 { "F" } else { "M" }.to_string()
                })
                .collect();
            let plan = plan_removals(&observed, &fair, KeepPolicy::KeepEarliest).unwrap();
            assert_eq!(plan.keep.len() as u64, plan.optimal_size);
            if plan.optimal_size > 0 {
                let kept = CountVector::from_labels(
                    plan.keep.iter().map(|i| observed[*i as usize - 1].clone()),
                );
                assert!(is_sigma_compatible(&kept, &fair, plan.optimal_size).unwrap());
            }

            let final_counts = CountVector::from_labels(&observed);
            let mut st = MonitorState::new(
                binary_spec(len),
                fair.clone(),
                BigRational::zero(),
                Some(final_counts),
            )
            .unwrap();
            let mut accepted: Vec<String> = Vec::new();
            for outcome in &observed {
                let decisions = streaming_reject(&st).unwrap();
                if decisions[outcome] == Decision::Accept {
                    accepted.push(outcome.clone());
                }
                st = st.ingest(outcome).unwrap();
            }
            assert_eq!(
                CountVector::from_labels(accepted),
                plan.kept_counts,
                "streaming and offline plans disagree on {observed:?}"
            );
            series_checked += 1;
        }
    }
    println!(
        "criterion 8: PASS - optimal on {classes} count classes (exhaustive subsets), sound and streaming-consistent on {series_checked} series"
    );
}
