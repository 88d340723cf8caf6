//! Problem-file loading, schema errors, and the bundled fixtures.

mod common;

use bilevel::fixtures::random_finite;
use bilevel::harness::{parse_problem_json, problem_to_json, HarnessError, LoadedProblem};
use bilevel::lowerlevel::probe_truncation_divergence;
use bilevel::model::{build_instance, BilevelProblem, YNuRule};

use common::load_bundled;

#[test]
fn bundled_fixtures_load() {
    for name in [
        "example_sec3.json",
        "noncompact_counterexample.json",
        "random_finite_seed42.json",
    ] {
        let loaded = load_bundled(name);
        assert!(!loaded.problem.master_y().is_empty(), "{name}");
        assert!(!loaded.problem.x_grid().is_empty(), "{name}");
    }
}

#[test]
fn bundled_random_fixture_matches_generator() {
    let bundled = load_bundled("random_finite_seed42.json");
    let (problem, family, schedule) = random_finite(42);
    let regenerated = LoadedProblem {
        problem,
        family,
        schedule,
    };
    assert_eq!(problem_to_json(&bundled), problem_to_json(&regenerated));
}

#[test]
fn malformed_norm_names_the_field() {
    let mut text =
        std::fs::read_to_string(common::problems_dir().join("example_sec3.json")).unwrap();
    text = text.replace("\"l1\"", "\"l7\"");
    match parse_problem_json(&text) {
        Err(HarnessError::Schema { pointer, .. }) => {
            assert_eq!(pointer, "/norm", "schema error must point at the norm tag");
        }
        other => panic!("expected schema error, got {other:?}"),
    }
}

#[test]
fn bad_expression_names_the_field() {
    let text = std::fs::read_to_string(common::problems_dir().join("example_sec3.json"))
        .unwrap()
        .replace("-x1 * y1\"", "-x1 * * y1\"");
    match parse_problem_json(&text) {
        Err(HarnessError::Schema { pointer, message }) => {
            assert!(
                pointer.contains("/objectives/g") || pointer.contains("/family/g_nu"),
                "pointer {pointer}: {message}"
            );
        }
        other => panic!("expected schema error, got {other:?}"),
    }
}

#[test]
fn prefix_rule_clamps_with_flag() {
    let mut loaded = load_bundled("example_sec3.json");
    loaded.family.y_rule = YNuRule::Prefix { c: 5.0, p: 1.0 };
    let inst = build_instance(&loaded.problem, &loaded.family, &loaded.schedule, 3).unwrap();
    assert!(inst.y_rule_clamped());
    assert_eq!(inst.y_nu().len(), loaded.problem.master_y().len());
}

#[test]
fn noncompact_fixture_diverges_under_truncation_growth() {
    // The bundled file carries the radius-8 truncation; rebuild the smaller
    // ones from the same data to mimic the growing family.
    let base = load_bundled("noncompact_counterexample.json");
    let truncation = |radius: f64, steps: usize| {
        let mut data = base.problem.data().clone();
        data.y_set =
            bilevel::geometry::SetSpec::IntervalBox(vec![bilevel::geometry::Interval::new(
                -radius, radius,
            )
            .unwrap()]);
        data.y_grid = Some(bilevel::geometry::GridSpec::new(vec![steps]).unwrap());
        BilevelProblem::new(data).unwrap()
    };
    let family = vec![
        truncation(2.0, 17),
        truncation(4.0, 33),
        base.problem.clone(),
    ];
    // The constrained minimum sits still while the penalized value slides.
    for p in &family {
        let v = bilevel::lowerlevel::value_function_v(p, &[0.0], &[0.0]).unwrap();
        assert_eq!(v.as_f64(), Some(1.0));
    }
    let probe = probe_truncation_divergence(&family, &[0.0], 4.0).unwrap();
    assert!(probe.diverging, "{:?}", probe.mu_values);
}

#[test]
fn upper_domain_block_parses_and_restricts() {
    let text = std::fs::read_to_string(common::problems_dir().join("example_sec3.json"))
        .unwrap()
        .replace(
            "\"constraints\": { \"H\": [\"y1 - 1\"] },",
            "\"constraints\": { \"H\": [\"y1 - 1\"] },\n  \"upper_domain\": [{ \"expr\": \"x1 + y1\", \"interval\": [null, 1.2] }],",
        );
    let loaded = parse_problem_json(&text).unwrap();
    assert_eq!(loaded.problem.upper_domain().len(), 1);
    assert!(loaded.problem.domain_ok(&[1.0], &[0.0]).unwrap());
    assert!(!loaded.problem.domain_ok(&[1.0], &[1.0]).unwrap());
    // The oracle respects the domain constraint: (1, 1) is gone and the
    // argmin-constrained problem has no admissible pair left.
    let sol = bilevel::baselines::solve_oracle(&loaded.problem, 1e-9).unwrap();
    assert_eq!(sol.record.status, bilevel::solver::SolveStatus::Infeasible);
}

#[test]
fn problem_json_round_trips() {
    let loaded = load_bundled("example_sec3.json");
    let text = problem_to_json(&loaded);
    let back = parse_problem_json(&text).unwrap();
    assert_eq!(problem_to_json(&back), text);
}
