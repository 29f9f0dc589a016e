//! Batch driver behind the `adalloc` binary.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use adalloc_core::formats::{
    read_campaigns, read_subscribers, write_allocations, write_campaigns, write_ranked,
    write_subscribers, DEFAULT_MAX_ROW_ERRORS,
};
use adalloc_core::grouping::build_groups;
use adalloc_core::optimizer::{
    brute_force_solve, export_mps, formulate, formulate_unscaled, mps_size, solve, OracleError,
};
use adalloc_core::pipeline::{allocate, Stage};
use adalloc_core::synth::{generate, SyntheticSpec};
use adalloc_core::targeting::signatures;
use adalloc_core::{validate_instance, FairnessConfig, Instance, Money, Violation};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageError {
    pub stage: &'static str,
    pub message: String,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.message)
    }
}

impl std::error::Error for StageError {}

fn stage(stage: &'static str) -> impl Fn(String) -> StageError {
    move |message| StageError { stage, message }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputPaths {
    pub subscribers: PathBuf,
    pub campaigns: PathBuf,
    pub fairness: FairnessConfig,
    pub max_row_errors: usize,
}

impl InputPaths {
    pub fn new(subscribers: impl Into<PathBuf>, campaigns: impl Into<PathBuf>) -> Self {
        InputPaths {
            subscribers: subscribers.into(),
            campaigns: campaigns.into(),
            fairness: FairnessConfig::disabled(),
            max_row_errors: DEFAULT_MAX_ROW_ERRORS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: InputPaths,
    pub out: PathBuf,
    pub export_mps: bool,
    pub oracle: bool,
    /// Write the measured solve time into metrics.json. Off by default so
    /// repeated runs produce identical files.
    pub record_timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub subscriber_count: u64,
    pub campaign_count: u64,
    pub group_count: u64,
    pub variable_count_unscaled: u64,
    pub variable_count_scaled: u64,
    pub reduction_ratio: f64,
    pub objective: Money,
    pub per_campaign_fill_rates: BTreeMap<String, f64>,
    pub solve_wall_time_ms: Option<f64>,
    pub mps_bytes_scaled: u64,
    pub mps_bytes_unscaled: Option<u64>,
    pub oracle_objective: Option<Money>,
}

fn open(path: &Path, what: &str) -> Result<BufReader<File>, String> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| format!("cannot read {what} file {}: {e}", path.display()))
}

/// Reads both input files. Both are opened before either is parsed.
pub fn load_instance(input: &InputPaths) -> Result<Instance, StageError> {
    let load = stage("load");
    let subscriber_file = open(&input.subscribers, "subscribers").map_err(&load)?;
    let campaign_file = open(&input.campaigns, "campaigns").map_err(&load)?;
    let (schema, subscribers) = read_subscribers(subscriber_file, input.max_row_errors)
        .map_err(|e| load(format!("{}:\n{e}", input.subscribers.display())))?;
    let campaigns = read_campaigns(campaign_file, &schema)
        .map_err(|e| load(format!("{}: {e}", input.campaigns.display())))?;
    Ok(Instance {
        schema,
        subscribers,
        campaigns,
        fairness: input.fairness,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, StageError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| stage("write")(format!("cannot create {}: {e}", path.display())))
}

fn write_err(path: &Path) -> impl Fn(String) -> StageError + '_ {
    move |e| stage("write")(format!("{}: {e}", path.display()))
}

fn unscaled_mps_bytes(instance: &Instance) -> Result<u64, StageError> {
    let sigs = signatures(&instance.subscribers, &instance.campaigns);
    let caps: Vec<u32> = instance
        .subscribers
        .iter()
        .map(|s| s.frequency_cap)
        .collect();
    let model = formulate_unscaled(&caps, &sigs, &instance.campaigns, &instance.fairness)
        .map_err(|e| stage("formulate")(e.to_string()))?;
    Ok(mps_size(&model))
}

/// load → group → formulate → solve → disaggregate → write.
pub fn run(config: &RunConfig) -> Result<MetricsReport, StageError> {
    let instance = load_instance(&config.input)?;
    let solved = allocate(&instance).map_err(|e| StageError {
        stage: match e.stage {
            Stage::Validate => "validate",
            Stage::Formulate => "formulate",
            Stage::Solve => "solve",
            Stage::Disaggregate => "disaggregate",
        },
        message: e.message,
    })?;

    let oracle_objective = if config.oracle {
        match brute_force_solve(&instance) {
            Ok(r) => Some(r.objective),
            Err(e @ OracleError::OverBudget { .. }) => {
                log::warn!("oracle skipped: {e}");
                None
            }
            Err(e) => return Err(stage("oracle")(e.to_string())),
        }
    } else {
        None
    };
    let mps_bytes_unscaled = if config.oracle {
        Some(unscaled_mps_bytes(&instance)?)
    } else {
        None
    };

    fs::create_dir_all(&config.out)
        .map_err(|e| stage("write")(format!("cannot create {}: {e}", config.out.display())))?;
    let path = config.out.join("allocations.csv");
    write_allocations(create(&path)?, &instance, &solved.result)
        .map_err(|e| write_err(&path)(e.to_string()))?;
    let path = config.out.join("ranked.jsonl");
    write_ranked(create(&path)?, &instance, &solved.result)
        .map_err(|e| write_err(&path)(e.to_string()))?;
    if config.export_mps {
        let path = config.out.join("model.mps");
        let mut w = create(&path)?;
        export_mps(&solved.model, &mut w)
            .and_then(|_| w.flush())
            .map_err(|e| write_err(&path)(e.to_string()))?;
    }

    let stats = solved.grouping.stats();
    let per_campaign_fill_rates = instance
        .campaigns
        .iter()
        .map(|c| {
            let count = solved
                .result
                .per_campaign_counts
                .get(&c.id)
                .copied()
                .unwrap_or(0);
            let rate = if c.frequency_cap == 0 {
                0.0
            } else {
                count as f64 / c.frequency_cap as f64
            };
            (c.id.clone(), rate)
        })
        .collect();
    let report = MetricsReport {
        subscriber_count: instance.subscribers.len() as u64,
        campaign_count: instance.campaigns.len() as u64,
        group_count: stats.group_count,
        variable_count_unscaled: stats.variable_count_unscaled,
        variable_count_scaled: stats.variable_count_scaled,
        reduction_ratio: stats.reduction_ratio(),
        objective: solved.result.objective,
        per_campaign_fill_rates,
        solve_wall_time_ms: config
            .record_timing
            .then_some(solved.solve_time.as_secs_f64() * 1e3),
        mps_bytes_scaled: mps_size(&solved.model),
        mps_bytes_unscaled,
        oracle_objective,
    };
    let path = config.out.join("metrics.json");
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &report)
        .map_err(|e| e.to_string())
        .and_then(|_| {
            writeln!(w)
                .and_then(|_| w.flush())
                .map_err(|e| e.to_string())
        })
        .map_err(write_err(&path))?;
    Ok(report)
}

/// Writes `subscribers.csv` and `campaigns.json` for a synthetic instance.
pub fn generate_synthetic(
    spec: &SyntheticSpec,
    out: &Path,
) -> Result<(PathBuf, PathBuf), StageError> {
    let instance = generate(spec);
    fs::create_dir_all(out)
        .map_err(|e| stage("write")(format!("cannot create {}: {e}", out.display())))?;
    let subs = out.join("subscribers.csv");
    write_subscribers(create(&subs)?, &instance.schema, &instance.subscribers)
        .map_err(|e| write_err(&subs)(e.to_string()))?;
    let camps = out.join("campaigns.json");
    write_campaigns(create(&camps)?, &instance.campaigns)
        .map_err(|e| write_err(&camps)(e.to_string()))?;
    Ok((subs, camps))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemType {
    Scaled,
    Unscaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub problem_type: ProblemType,
    pub mps_bytes: u64,
    /// `None` when the problem was not solved.
    pub solve_time_ms: Option<f64>,
    pub objective: Option<Money>,
}

impl ComparisonRow {
    pub fn solve_time_text(&self) -> String {
        self.solve_time_ms
            .map_or_else(|| "unsolved".to_string(), |ms| format!("{ms:.3}"))
    }
}

/// Sizes both programs; solves the grouped one always and the ungrouped one
/// by enumeration when it fits the oracle budget.
pub fn compare_scaled_unscaled(instance: &Instance) -> Result<Vec<ComparisonRow>, StageError> {
    let violations = validate_instance(instance);
    if !violations.is_empty() {
        return Err(stage("validate")(render_violations(&violations)));
    }
    let grouping = build_groups(instance);
    let model = formulate(&grouping.groups, &instance.campaigns, &instance.fairness)
        .map_err(|e| stage("formulate")(e.to_string()))?;
    let started = Instant::now();
    let scaled = solve(&model).map_err(|e| stage("solve")(e.to_string()))?;
    let scaled_ms = started.elapsed().as_secs_f64() * 1e3;

    let started = Instant::now();
    let (unscaled_ms, unscaled_objective) = match brute_force_solve(instance) {
        Ok(r) => (
            Some(started.elapsed().as_secs_f64() * 1e3),
            Some(r.objective),
        ),
        Err(OracleError::OverBudget { .. }) => (None, None),
        Err(e) => return Err(stage("oracle")(e.to_string())),
    };
    Ok(vec![
        ComparisonRow {
            problem_type: ProblemType::Scaled,
            mps_bytes: mps_size(&model),
            solve_time_ms: Some(scaled_ms),
            objective: Some(scaled.objective),
        },
        ComparisonRow {
            problem_type: ProblemType::Unscaled,
            mps_bytes: unscaled_mps_bytes(instance)?,
            solve_time_ms: unscaled_ms,
            objective: unscaled_objective,
        },
    ])
}

pub fn render_comparison(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("problem_type,mps_bytes,solve_time_ms,objective\n");
    for r in rows {
        let kind = match r.problem_type {
            ProblemType::Scaled => "scaled",
            ProblemType::Unscaled => "unscaled",
        };
        let objective = r.objective.map(|m| m.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{kind},{},{},{objective}\n",
            r.mps_bytes,
            r.solve_time_text()
        ));
    }
    out
}

pub fn render_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("\n")
}

/// Loads the files and lists every invariant breach.
pub fn validate(input: &InputPaths) -> Result<Vec<Violation>, StageError> {
    let instance = load_instance(input)?;
    Ok(validate_instance(&instance))
}
