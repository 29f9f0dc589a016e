use adalloc_bench::{
    builtin_scenario, check_instance, load_scenario, run_bench, run_property_suite, trial_instance,
    SuiteOptions, BUILTIN_SCENARIOS, CHECKS,
};
use adalloc_core::formats::{read_campaigns, read_subscribers, DEFAULT_MAX_ROW_ERRORS};
use adalloc_core::{FairnessConfig, Instance};

#[test]
fn suite_passes_on_the_correct_model() {
    let report = run_property_suite(11, 200, SuiteOptions::default());
    assert!(report.passed(), "{:?}", report.first_counterexample);
    assert_eq!(report.checks.len(), CHECKS.len());
    for tally in &report.checks {
        assert_eq!(tally.passed, 200, "{}", tally.check);
    }
}

#[test]
fn dropping_the_member_bound_is_caught_and_replayable() {
    let report = run_property_suite(
        11,
        200,
        SuiteOptions {
            member_bound: false,
        },
    );
    assert!(!report.passed());
    assert!(report.tally("oracle_equivalence").unwrap().failed > 0);

    let cx = report
        .first_counterexample
        .expect("counterexample recorded");
    let (schema, subscribers) = read_subscribers(
        cx.instance.subscribers_csv.as_bytes(),
        DEFAULT_MAX_ROW_ERRORS,
    )
    .unwrap();
    let json = serde_json::to_vec(&cx.instance.campaigns_json).unwrap();
    let campaigns = read_campaigns(json.as_slice(), &schema).unwrap();
    let replay = Instance {
        schema,
        subscribers,
        campaigns,
        fairness: FairnessConfig::disabled(),
    };
    let outcome = check_instance(
        &replay,
        SuiteOptions {
            member_bound: false,
        },
    );
    let (_, failed) = outcome.iter().find(|(name, _)| *name == cx.check).unwrap();
    assert!(
        failed.is_err(),
        "replayed instance no longer fails {}",
        cx.check
    );
}

#[test]
fn trials_are_independent_of_trial_count() {
    let a = trial_instance(5, 17);
    let b = trial_instance(5, 17);
    assert_eq!(a, b);
    assert_ne!(trial_instance(5, 17), trial_instance(5, 18));
    let short = run_property_suite(5, 3, SuiteOptions::default());
    let long = run_property_suite(5, 6, SuiteOptions::default());
    assert!(short.passed() && long.passed());
}

#[test]
fn tiny_scenario_reports_each_repetition() {
    let report = run_bench(&builtin_scenario("tiny").unwrap()).unwrap();
    assert_eq!(report.rows.len(), 3);
    for row in &report.rows {
        assert_eq!(row.subscribers, 200);
        assert!(row.variable_count_scaled <= row.variable_count_unscaled);
        assert!(row.unscaled_mps_bytes.unwrap() >= row.scaled_mps_bytes);
        assert!(row.group_count <= row.distinct_signatures * row.distinct_caps);
    }
    // Same generator seed, so repetitions agree on everything but timing.
    assert!(report
        .rows
        .windows(2)
        .all(|w| w[0].objective == w[1].objective));
}

#[test]
fn unique_scenario_gains_nothing() {
    let report = run_bench(&builtin_scenario("unique").unwrap()).unwrap();
    let row = &report.rows[0];
    assert_eq!(row.distinct_caps, 2_000);
    assert_eq!(row.variable_count_scaled, row.variable_count_unscaled);
    assert_eq!(row.reduction_ratio, 1.0);
}

#[test]
fn scenarios_load_by_name_or_file() {
    for name in BUILTIN_SCENARIOS {
        assert_eq!(load_scenario(name).unwrap().name, name);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("small.json");
    std::fs::write(
        &path,
        r#"{"name": "small", "generator": {"seed": 3, "subscribers": 50, "campaigns": 4}}"#,
    )
    .unwrap();
    let scenario = load_scenario(path.to_str().unwrap()).unwrap();
    assert_eq!(scenario.repetitions, 1);
    assert_eq!(scenario.generator.subscribers, 50);
    assert_eq!(run_bench(&scenario).unwrap().rows.len(), 1);

    let err = load_scenario("no-such-scenario").unwrap_err();
    assert!(err.contains("pooled-1m"), "{err}");
}
