//! Benchmark scenarios comparing the grouped and ungrouped programs, and a
//! seeded suite that checks the cross-module invariants on small instances.

use std::collections::BTreeSet;
use std::time::Instant;

use adalloc_core::disaggregation::{assemble, plans_from_solution};
use adalloc_core::formats::{write_campaigns, write_subscribers};
use adalloc_core::grouping::build_groups;
use adalloc_core::optimizer::{
    brute_force_solve, export_mps_to_string, formulate_unscaled, formulate_with, import_mps,
    mps_size, solve, solve_lp_relaxation, FormulateOptions, INTEGRALITY_TOL,
};
use adalloc_core::synth::{generate, random_small_instance, CapSpec, SyntheticSpec};
use adalloc_core::targeting::{eligibility_signature, signatures};
use adalloc_core::{FairnessConfig, Instance, Money};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchScenario {
    pub name: String,
    pub generator: SyntheticSpec,
    #[serde(default = "one")]
    pub repetitions: u32,
    /// Also build the ungrouped program to size its MPS file.
    #[serde(default)]
    pub measure_unscaled: bool,
}

fn one() -> u32 {
    1
}

pub const BUILTIN_SCENARIOS: [&str; 4] = ["pooled-1m", "pooled-100k", "unique", "tiny"];

pub fn builtin_scenario(name: &str) -> Option<BenchScenario> {
    let pooled = |subscribers, caps| SyntheticSpec {
        seed: 7,
        subscribers,
        campaigns: 50,
        predicate_pool: Some(10),
        target_fraction: 0.2,
        caps,
        ..SyntheticSpec::default()
    };
    let (generator, repetitions, measure_unscaled) = match name {
        // One cap value keeps the group count under 2^10.
        "pooled-1m" => (pooled(1_000_000, CapSpec::Constant { value: 2 }), 1, true),
        "pooled-100k" => (
            pooled(100_000, CapSpec::Uniform { min: 1, max: 3 }),
            3,
            true,
        ),
        "unique" => (
            SyntheticSpec {
                seed: 7,
                subscribers: 2_000,
                campaigns: 20,
                caps: CapSpec::Distinct,
                ..SyntheticSpec::default()
            },
            1,
            true,
        ),
        "tiny" => (
            SyntheticSpec {
                seed: 7,
                subscribers: 200,
                campaigns: 5,
                predicate_pool: Some(3),
                ..SyntheticSpec::default()
            },
            3,
            true,
        ),
        _ => return None,
    };
    Some(BenchScenario {
        name: name.to_string(),
        generator,
        repetitions,
        measure_unscaled,
    })
}

/// A built-in name or a path to a scenario JSON file.
pub fn load_scenario(name_or_path: &str) -> Result<BenchScenario, String> {
    if let Some(s) = builtin_scenario(name_or_path) {
        return Ok(s);
    }
    let text = std::fs::read_to_string(name_or_path).map_err(|e| {
        format!(
            "{name_or_path:?} is neither a built-in scenario ({}) nor a readable file: {e}",
            BUILTIN_SCENARIOS.join(", ")
        )
    })?;
    let scenario: BenchScenario =
        serde_json::from_str(&text).map_err(|e| format!("{name_or_path}: {e}"))?;
    if scenario.repetitions == 0 {
        return Err(format!("{name_or_path}: repetitions must be at least 1"));
    }
    Ok(scenario)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub repetition: u32,
    pub subscribers: u64,
    pub campaigns: u64,
    pub distinct_signatures: u64,
    pub distinct_caps: u64,
    pub group_count: u64,
    pub variable_count_scaled: u64,
    pub variable_count_unscaled: u64,
    pub reduction_ratio: f64,
    pub scaled_mps_bytes: u64,
    pub unscaled_mps_bytes: Option<u64>,
    pub objective: Money,
    pub solve_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub scenario: String,
    pub rows: Vec<BenchRow>,
    pub median_group_count: u64,
    pub median_scaled_mps_bytes: u64,
    pub median_solve_ms: f64,
    pub median_reduction_ratio: f64,
}

fn median_f64(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    match values.len() {
        0 => 0.0,
        n if n % 2 == 1 => values[n / 2],
        n => (values[n / 2 - 1] + values[n / 2]) / 2.0,
    }
}

fn median_u64(mut values: Vec<u64>) -> u64 {
    values.sort_unstable();
    match values.len() {
        0 => 0,
        n if n % 2 == 1 => values[n / 2],
        n => (values[n / 2 - 1] + values[n / 2]) / 2,
    }
}

/// Measures one instance. Errors carry the failing stage.
pub fn measure(
    instance: &Instance,
    repetition: u32,
    measure_unscaled: bool,
) -> Result<BenchRow, String> {
    let sigs = signatures(&instance.subscribers, &instance.campaigns);
    let distinct_signatures = sigs.iter().collect::<BTreeSet<_>>().len() as u64;
    let distinct_caps = instance
        .subscribers
        .iter()
        .map(|s| s.frequency_cap)
        .collect::<BTreeSet<_>>()
        .len() as u64;
    let unscaled_mps_bytes = if measure_unscaled {
        let caps: Vec<u32> = instance
            .subscribers
            .iter()
            .map(|s| s.frequency_cap)
            .collect();
        let model = formulate_unscaled(&caps, &sigs, &instance.campaigns, &instance.fairness)
            .map_err(|e| format!("formulate (unscaled): {e}"))?;
        Some(mps_size(&model))
    } else {
        None
    };
    let grouping = adalloc_core::grouping::build_groups_from_signatures(instance, sigs);
    let stats = grouping.stats();
    let model = formulate_with(
        &grouping.groups,
        &instance.campaigns,
        &instance.fairness,
        FormulateOptions::default(),
    )
    .map_err(|e| format!("formulate: {e}"))?;
    let started = Instant::now();
    let allocation = solve(&model).map_err(|e| format!("solve: {e}"))?;
    let solve_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(BenchRow {
        repetition,
        subscribers: instance.subscribers.len() as u64,
        campaigns: instance.campaigns.len() as u64,
        distinct_signatures,
        distinct_caps,
        group_count: stats.group_count,
        variable_count_scaled: stats.variable_count_scaled,
        variable_count_unscaled: stats.variable_count_unscaled,
        reduction_ratio: stats.reduction_ratio(),
        scaled_mps_bytes: mps_size(&model),
        unscaled_mps_bytes,
        objective: allocation.objective,
        solve_ms,
    })
}

pub fn run_bench(scenario: &BenchScenario) -> Result<BenchReport, String> {
    let mut rows = Vec::new();
    for rep in 0..scenario.repetitions.max(1) {
        let instance = generate(&scenario.generator);
        rows.push(measure(&instance, rep, scenario.measure_unscaled)?);
    }
    Ok(BenchReport {
        scenario: scenario.name.clone(),
        median_group_count: median_u64(rows.iter().map(|r| r.group_count).collect()),
        median_scaled_mps_bytes: median_u64(rows.iter().map(|r| r.scaled_mps_bytes).collect()),
        median_solve_ms: median_f64(rows.iter().map(|r| r.solve_ms).collect()),
        median_reduction_ratio: median_f64(rows.iter().map(|r| r.reduction_ratio).collect()),
        rows,
    })
}

/// Names of the invariants checked per trial.
pub const CHECKS: [&str; 7] = [
    "partition",
    "oracle_equivalence",
    "lp_integrality",
    "disaggregation",
    "monotonicity",
    "mps_round_trip",
    "fairness_sandwich",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteOptions {
    /// Passed to formulation; `false` injects the known-bad naive model.
    pub member_bound: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions { member_bound: true }
    }
}

/// Files that recreate an instance through the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayInstance {
    pub subscribers_csv: String,
    pub campaigns_json: serde_json::Value,
}

impl ReplayInstance {
    pub fn from_instance(instance: &Instance) -> Self {
        let mut csv = Vec::new();
        write_subscribers(&mut csv, &instance.schema, &instance.subscribers)
            .expect("in-memory write");
        let mut json = Vec::new();
        write_campaigns(&mut json, &instance.campaigns).expect("in-memory write");
        ReplayInstance {
            subscribers_csv: String::from_utf8(csv).expect("CSV output is UTF-8"),
            campaigns_json: serde_json::from_slice(&json).expect("round trip of our own JSON"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub trial: u64,
    pub check: String,
    pub message: String,
    pub instance: ReplayInstance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckTally {
    pub check: String,
    pub passed: u64,
    pub failed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub seed: u64,
    pub trials: u64,
    pub checks: Vec<CheckTally>,
    pub first_counterexample: Option<Counterexample>,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.failed == 0)
    }

    pub fn tally(&self, check: &str) -> Option<&CheckTally> {
        self.checks.iter().find(|c| c.check == check)
    }
}

/// The instance for one trial; each trial owns a ChaCha stream so any trial
/// can be regenerated alone.
pub fn trial_instance(seed: u64, trial: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    random_small_instance(&mut rng)
}

fn ensure(cond: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(message())
    }
}

fn check_partition(instance: &Instance) -> Result<(), String> {
    let grouping = build_groups(instance);
    let mut seen = vec![0u32; instance.subscribers.len()];
    for &i in grouping
        .groups
        .iter()
        .flat_map(|g| &g.members)
        .chain(&grouping.null_group)
    {
        seen[i] += 1;
    }
    if let Some(i) = seen.iter().position(|&n| n != 1) {
        return Err(format!(
            "subscriber {} appears {} times",
            instance.subscribers[i].id, seen[i]
        ));
    }
    for group in &grouping.groups {
        for &i in &group.members {
            let sub = &instance.subscribers[i];
            ensure(
                eligibility_signature(sub, &instance.campaigns) == group.key.signature,
                || format!("{} does not match its group signature", sub.id),
            )?;
            ensure(sub.frequency_cap == group.key.cap_bucket, || {
                format!("{} cap differs from its group", sub.id)
            })?;
        }
        let fc: u64 = group
            .members
            .iter()
            .map(|&i| instance.subscribers[i].frequency_cap as u64)
            .sum();
        ensure(fc == group.frequency_cap, || {
            "group cap is not the member sum".into()
        })?;
    }
    Ok(())
}

fn scaled_objective(instance: &Instance, options: SuiteOptions) -> Result<Money, String> {
    let grouping = build_groups(instance);
    let model = formulate_with(
        &grouping.groups,
        &instance.campaigns,
        &instance.fairness,
        FormulateOptions {
            member_bound: options.member_bound,
        },
    )
    .map_err(|e| e.to_string())?;
    solve(&model)
        .map(|a| a.objective)
        .map_err(|e| e.to_string())
}

fn check_oracle(instance: &Instance, options: SuiteOptions) -> Result<(), String> {
    let oracle = brute_force_solve(instance).map_err(|e| format!("oracle: {e}"))?;
    let scaled = scaled_objective(instance, options)?;
    ensure(scaled == oracle.objective, || {
        format!("scaled {scaled} != oracle {}", oracle.objective)
    })
}

fn check_lp(instance: &Instance, options: SuiteOptions) -> Result<(), String> {
    let grouping = build_groups(instance);
    let model = formulate_with(
        &grouping.groups,
        &instance.campaigns,
        &FairnessConfig::disabled(),
        FormulateOptions {
            member_bound: options.member_bound,
        },
    )
    .map_err(|e| e.to_string())?;
    let lp = solve_lp_relaxation(&model).map_err(|e| e.to_string())?;
    ensure(lp.max_integrality_gap() <= INTEGRALITY_TOL, || {
        format!("fractional vertex, gap {}", lp.max_integrality_gap())
    })?;
    let ip = solve(&model).map_err(|e| e.to_string())?;
    ensure(lp.objective.round() as i64 == ip.objective.micros(), || {
        format!("LP {} vs IP {}", lp.objective, ip.objective.micros())
    })
}

fn check_disaggregation(instance: &Instance, options: SuiteOptions) -> Result<(), String> {
    let grouping = build_groups(instance);
    let model = formulate_with(
        &grouping.groups,
        &instance.campaigns,
        &instance.fairness,
        FormulateOptions {
            member_bound: options.member_bound,
        },
    )
    .map_err(|e| e.to_string())?;
    let allocation = solve(&model).map_err(|e| e.to_string())?;
    let plans = plans_from_solution(instance, &grouping, &model, &allocation);
    let result = assemble(instance, &plans).map_err(|e| e.to_string())?;
    ensure(result.objective == allocation.objective, || {
        format!(
            "assembled {} vs solved {}",
            result.objective, allocation.objective
        )
    })
}

fn check_monotonicity(instance: &Instance, options: SuiteOptions) -> Result<(), String> {
    let base = scaled_objective(instance, options)?;
    for j in 0..instance.campaigns.len() {
        let mut bumped = instance.clone();
        bumped.campaigns[j].frequency_cap += 1;
        let more = scaled_objective(&bumped, options)?;
        ensure(more >= base, || {
            format!(
                "raising cap of {} lowered the optimum {base} -> {more}",
                instance.campaigns[j].id
            )
        })?;
    }
    Ok(())
}

fn check_mps(instance: &Instance, options: SuiteOptions) -> Result<(), String> {
    let grouping = build_groups(instance);
    let model = formulate_with(
        &grouping.groups,
        &instance.campaigns,
        &FairnessConfig::with_fraction("0.5").expect("valid fraction"),
        FormulateOptions {
            member_bound: options.member_bound,
        },
    )
    .or_else(|_| {
        formulate_with(
            &grouping.groups,
            &instance.campaigns,
            &FairnessConfig::disabled(),
            FormulateOptions {
                member_bound: options.member_bound,
            },
        )
    })
    .map_err(|e| e.to_string())?;
    let text = export_mps_to_string(&model);
    let back = import_mps(&text).map_err(|e| e.to_string())?;
    ensure(back == model, || {
        "import differs from the exported model".into()
    })?;
    ensure(export_mps_to_string(&back) == text, || {
        "re-export is not byte-identical".into()
    })
}

fn check_fairness(instance: &Instance, options: SuiteOptions) -> Result<(), String> {
    if instance.campaigns.iter().all(|c| c.price == Money::ZERO) {
        return Ok(());
    }
    let mut fair = instance.clone();
    fair.fairness = FairnessConfig::with_fraction("0.5").expect("valid fraction");
    let grouping = build_groups(&fair);
    let model = formulate_with(
        &grouping.groups,
        &fair.campaigns,
        &fair.fairness,
        FormulateOptions {
            member_bound: options.member_bound,
        },
    )
    .map_err(|e| e.to_string())?;
    let oracle = brute_force_solve(&fair);
    let solved = solve(&model);
    let (solved, oracle) = match (solved, oracle) {
        (Ok(s), Ok(o)) => (s, o),
        (Err(_), Err(_)) => return Ok(()),
        (s, o) => return Err(format!("feasibility disagrees: scaled {s:?}, oracle {o:?}")),
    };
    let unconstrained = scaled_objective(instance, options)?;
    ensure(solved.objective <= unconstrained, || {
        format!(
            "fair {} above unconstrained {unconstrained}",
            solved.objective
        )
    })?;
    ensure(solved.objective >= oracle.objective, || {
        format!(
            "fair {} below oracle {}",
            solved.objective, oracle.objective
        )
    })?;
    model.check_feasible(&solved.counts)
}

/// Runs every check on one instance, in [`CHECKS`] order.
pub fn check_instance(
    instance: &Instance,
    options: SuiteOptions,
) -> Vec<(&'static str, Result<(), String>)> {
    let mut plain = instance.clone();
    plain.fairness = FairnessConfig::disabled();
    vec![
        (CHECKS[0], check_partition(&plain)),
        (CHECKS[1], check_oracle(&plain, options)),
        (CHECKS[2], check_lp(&plain, options)),
        (CHECKS[3], check_disaggregation(&plain, options)),
        (CHECKS[4], check_monotonicity(&plain, options)),
        (CHECKS[5], check_mps(&plain, options)),
        (CHECKS[6], check_fairness(&plain, options)),
    ]
}

pub fn run_property_suite(seed: u64, trials: u64, options: SuiteOptions) -> PropertyReport {
    let mut checks: Vec<CheckTally> = CHECKS
        .iter()
        .map(|c| CheckTally {
            check: c.to_string(),
            passed: 0,
            failed: 0,
        })
        .collect();
    let mut first_counterexample = None;
    for trial in 0..trials {
        let instance = trial_instance(seed, trial);
        for (k, (name, outcome)) in check_instance(&instance, options).into_iter().enumerate() {
            match outcome {
                Ok(()) => checks[k].passed += 1,
                Err(message) => {
                    checks[k].failed += 1;
                    first_counterexample.get_or_insert_with(|| Counterexample {
                        trial,
                        check: name.to_string(),
                        message,
                        instance: ReplayInstance::from_instance(&instance),
                    });
                }
            }
        }
    }
    PropertyReport {
        seed,
        trials,
        checks,
        first_counterexample,
    }
}
