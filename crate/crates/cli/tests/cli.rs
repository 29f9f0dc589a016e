use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use adalloc_cli::{
    compare_scaled_unscaled, load_instance, run, InputPaths, MetricsReport, ProblemType, RunConfig,
};
use adalloc_core::Money;
use tempfile::TempDir;

const WORKED_SUBSCRIBERS: &str = "id,fc,x\ns1,1,0\ns2,1,0\ns3,1,1\ns4,1,1\ns5,1,1\n";
const WORKED_CAMPAIGNS: &str = r#"[
  {"id": "A", "predicate": "TRUE", "price": "2", "frequency_cap": 3},
  {"id": "B", "predicate": "x >= 1", "price": 1, "frequency_cap": 4}
]"#;

fn write_inputs(dir: &Path, subscribers: &str, campaigns: &str) -> (PathBuf, PathBuf) {
    let subs = dir.join("subscribers.csv");
    let camps = dir.join("campaigns.json");
    fs::write(&subs, subscribers).unwrap();
    fs::write(&camps, campaigns).unwrap();
    (subs, camps)
}

fn adalloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adalloc"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn worked_example_through_the_binary() {
    let dir = TempDir::new().unwrap();
    let (subs, camps) = write_inputs(dir.path(), WORKED_SUBSCRIBERS, WORKED_CAMPAIGNS);
    let out_dir = dir.path().join("out");
    let out = adalloc(&[
        "run",
        "--subscribers",
        p(&subs),
        "--campaigns",
        p(&camps),
        "--out",
        p(&out_dir),
        "--oracle",
        "--export-mps",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let allocations = fs::read_to_string(out_dir.join("allocations.csv")).unwrap();
    let rows: Vec<&str> = allocations.lines().skip(1).collect();
    assert_eq!(
        allocations.lines().next(),
        Some("subscriber_id,campaign_id")
    );
    assert_eq!(rows.len(), 5);
    assert_eq!(rows.iter().filter(|r| r.ends_with(",A")).count(), 3);
    assert_eq!(rows.iter().filter(|r| r.ends_with(",B")).count(), 2);
    // s1 and s2 only qualify for A, so they must hold two of its three slots.
    assert!(rows.contains(&"s1,A") && rows.contains(&"s2,A"));

    let metrics: MetricsReport =
        serde_json::from_str(&fs::read_to_string(out_dir.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics.objective, Money::from_units(8));
    assert_eq!(metrics.oracle_objective, Some(Money::from_units(8)));
    assert_eq!(metrics.group_count, 2);
    assert_eq!(metrics.variable_count_scaled, 3);
    assert_eq!(metrics.variable_count_unscaled, 8);
    assert_eq!(metrics.per_campaign_fill_rates["A"], 1.0);
    assert_eq!(metrics.per_campaign_fill_rates["B"], 0.5);
    assert_eq!(metrics.solve_wall_time_ms, None);
    assert!(metrics.mps_bytes_unscaled.unwrap() > metrics.mps_bytes_scaled);

    let ranked = fs::read_to_string(out_dir.join("ranked.jsonl")).unwrap();
    assert_eq!(ranked.lines().count(), 5);
    let mps = fs::read_to_string(out_dir.join("model.mps")).unwrap();
    assert_eq!(mps.len() as u64, metrics.mps_bytes_scaled);
    assert!(mps.ends_with("ENDATA\n"));
}

#[test]
fn ranked_lists_order_by_price() {
    let dir = TempDir::new().unwrap();
    let subs = "id,fc,x\ns1,2,1\n";
    let camps = r#"[
      {"id": "cheap", "predicate": "TRUE", "price": "0.5", "frequency_cap": 1},
      {"id": "dear", "predicate": "TRUE", "price": "3", "frequency_cap": 1}
    ]"#;
    let (subs, camps) = write_inputs(dir.path(), subs, camps);
    let config = RunConfig {
        input: InputPaths::new(subs, camps),
        out: dir.path().join("out"),
        export_mps: false,
        oracle: false,
        record_timing: true,
    };
    let report = run(&config).unwrap();
    assert_eq!(report.objective, Money::from_micros(3_500_000));
    assert!(report.solve_wall_time_ms.is_some());
    let line = fs::read_to_string(config.out.join("ranked.jsonl")).unwrap();
    let record: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    let ads: Vec<&str> = record["ads"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["campaign"].as_str().unwrap())
        .collect();
    assert_eq!(ads, ["dear", "cheap"]);
}

#[test]
fn fairness_flag_forces_floors() {
    let dir = TempDir::new().unwrap();
    // Two slots; without floors the dear campaign takes both.
    let subs = "id,fc,x\ns1,1,1\ns2,1,1\n";
    let camps = r#"[
      {"id": "cheap", "predicate": "TRUE", "price": "1", "frequency_cap": 4},
      {"id": "dear", "predicate": "TRUE", "price": "2", "frequency_cap": 2}
    ]"#;
    let (subs, camps) = write_inputs(dir.path(), subs, camps);
    let out = dir.path().join("out");
    let metrics = |extra: &[&str]| -> MetricsReport {
        let mut args = vec![
            "run",
            "--subscribers",
            p(&subs),
            "--campaigns",
            p(&camps),
            "--out",
            p(&out),
        ];
        args.extend_from_slice(extra);
        let run = adalloc(&args);
        assert!(run.status.success(), "{}", stderr(&run));
        serde_json::from_slice(&fs::read(out.join("metrics.json")).unwrap()).unwrap()
    };
    let unfair = metrics(&[]);
    assert_eq!(unfair.objective, Money::from_units(4));
    assert_eq!(unfair.per_campaign_fill_rates["cheap"], 0.0);

    // floor(cheap) = ⌊0.5 · 4 · 1/2⌋ = 1, floor(dear) = ⌊0.5 · 2 · 2/2⌋ = 1.
    let fair = metrics(&["--fairness", "--min-fill", "0.5"]);
    assert_eq!(fair.objective, Money::from_units(3));
    assert_eq!(fair.per_campaign_fill_rates["cheap"], 0.25);
    assert_eq!(fair.per_campaign_fill_rates["dear"], 0.5);
}

#[test]
fn infeasible_floors_name_the_stage() {
    let dir = TempDir::new().unwrap();
    let subs = "id,fc,x\ns1,1,1\n";
    let camps = r#"[
      {"id": "a", "predicate": "TRUE", "price": "1", "frequency_cap": 1},
      {"id": "b", "predicate": "TRUE", "price": "1", "frequency_cap": 1}
    ]"#;
    let (subs, camps) = write_inputs(dir.path(), subs, camps);
    let out = adalloc(&[
        "run",
        "--subscribers",
        p(&subs),
        "--campaigns",
        p(&camps),
        "--out",
        p(&dir.path().join("out")),
        "--fairness",
        "--min-fill",
        "1",
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("[solve]"), "{}", stderr(&out));
}

#[test]
fn unreadable_input_is_named() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.csv");
    let (_, camps) = write_inputs(dir.path(), WORKED_SUBSCRIBERS, WORKED_CAMPAIGNS);
    let out = adalloc(&[
        "run",
        "--subscribers",
        p(&missing),
        "--campaigns",
        p(&camps),
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("[load]") && err.contains("nope.csv"), "{err}");
}

#[test]
fn bad_rows_are_reported_with_line_numbers() {
    let dir = TempDir::new().unwrap();
    let (subs, camps) = write_inputs(
        dir.path(),
        "id,fc,x:num\ns1,1,0\ns2,-1,0\ns3,1,abc\n",
        WORKED_CAMPAIGNS,
    );
    let out = adalloc(&[
        "validate",
        "--subscribers",
        p(&subs),
        "--campaigns",
        p(&camps),
    ]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("line 3") && err.contains("line 4"), "{err}");
}

#[test]
fn bad_predicate_is_a_load_error() {
    let dir = TempDir::new().unwrap();
    let camps = r#"[{"id": "A", "predicate": "x >=", "price": "1", "frequency_cap": 1}]"#;
    let (subs, camps) = write_inputs(dir.path(), WORKED_SUBSCRIBERS, camps);
    let out = adalloc(&[
        "validate",
        "--subscribers",
        p(&subs),
        "--campaigns",
        p(&camps),
    ]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(
        err.contains("[load]") && err.contains("campaign A"),
        "{err}"
    );
}

#[test]
fn validate_accepts_good_input() {
    let dir = TempDir::new().unwrap();
    let (subs, camps) = write_inputs(dir.path(), WORKED_SUBSCRIBERS, WORKED_CAMPAIGNS);
    let out = adalloc(&[
        "validate",
        "--subscribers",
        p(&subs),
        "--campaigns",
        p(&camps),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(String::from_utf8_lossy(&out.stdout), "ok\n");
}

#[test]
fn compare_agrees_on_tiny_instances() {
    let dir = TempDir::new().unwrap();
    let (subs, camps) = write_inputs(dir.path(), WORKED_SUBSCRIBERS, WORKED_CAMPAIGNS);
    let instance = load_instance(&InputPaths::new(&subs, &camps)).unwrap();
    let rows = compare_scaled_unscaled(&instance).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].problem_type, ProblemType::Scaled);
    assert_eq!(rows[0].objective, rows[1].objective);
    assert!(rows[1].mps_bytes > rows[0].mps_bytes);

    let out = adalloc(&[
        "compare",
        "--subscribers",
        p(&subs),
        "--campaigns",
        p(&camps),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "problem_type,mps_bytes,solve_time_ms,objective");
    assert!(lines[1].starts_with("scaled,") && lines[1].ends_with(",8"));
    assert!(lines[2].starts_with("unscaled,") && lines[2].ends_with(",8"));
}

#[test]
fn compare_leaves_large_unscaled_problems_unsolved() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("gen");
    let out = adalloc(&[
        "gen",
        "--seed",
        "4",
        "--subscribers",
        "500",
        "--campaigns",
        "6",
        "--out",
        p(&input),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = adalloc(&[
        "compare",
        "--subscribers",
        p(&input.join("subscribers.csv")),
        "--campaigns",
        p(&input.join("campaigns.json")),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    let unscaled = text.lines().nth(2).unwrap();
    assert!(unscaled.ends_with(",unsolved,"), "{unscaled}");
}

#[test]
fn gen_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = adalloc(&[
            "gen",
            "--seed",
            "21",
            "--subscribers",
            "200",
            "--campaigns",
            "5",
            "--out",
            p(d),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for file in ["subscribers.csv", "campaigns.json"] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
    let subs = fs::read_to_string(a.join("subscribers.csv")).unwrap();
    assert_eq!(subs.lines().count(), 201);
}

#[test]
fn bench_runs_the_property_suite() {
    let out = adalloc(&["bench", "--trials", "25", "--seed", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["properties"]["trials"], 25);
    assert!(report.get("bench").is_none());
}

#[test]
fn bench_rejects_unknown_scenarios() {
    let out = adalloc(&["bench", "--scenario", "no-such-thing"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("[bench]"));
}

#[test]
fn gen_handles_empty_and_seed_changes() {
    let dir = TempDir::new().unwrap();
    let gen = |seed: &str, n: &str, out: &Path| {
        let o = adalloc(&[
            "gen",
            "--seed",
            seed,
            "--subscribers",
            n,
            "--campaigns",
            "3",
            "--out",
            p(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(out.join("subscribers.csv")).unwrap()
    };
    let empty = gen("1", "0", &dir.path().join("empty"));
    assert_eq!(String::from_utf8(empty).unwrap().lines().count(), 1);
    let one = gen("1", "10", &dir.path().join("one"));
    let two = gen("2", "10", &dir.path().join("two"));
    assert_ne!(one, two);
}

#[test]
fn compare_on_an_empty_instance_reports_zero() {
    let dir = TempDir::new().unwrap();
    let (subs, camps) = write_inputs(dir.path(), "id,fc,x\n", WORKED_CAMPAIGNS);
    let instance = load_instance(&InputPaths::new(&subs, &camps)).unwrap();
    let rows = compare_scaled_unscaled(&instance).unwrap();
    for row in rows {
        assert_eq!(row.objective, Some(Money::ZERO), "{:?}", row.problem_type);
    }
}

#[test]
fn missing_campaign_file_is_named_before_parsing() {
    let dir = TempDir::new().unwrap();
    let (subs, _) = write_inputs(dir.path(), "garbage without header structure", "[]");
    let missing = dir.path().join("absent.json");
    let out = adalloc(&[
        "validate",
        "--subscribers",
        p(&subs),
        "--campaigns",
        p(&missing),
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("absent.json"), "{}", stderr(&out));
}
