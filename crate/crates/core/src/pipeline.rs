//! Group → formulate → solve → disaggregate, with stage-tagged errors.

use std::fmt;
use std::time::{Duration, Instant};

use crate::disaggregation::{assemble, plans_from_solution};
use crate::domain::{validate_instance, AllocationResult, Instance};
use crate::grouping::{build_groups, Grouping};
use crate::optimizer::{formulate_with, solve, FormulateOptions, GroupAllocation, IpModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Validate,
    Formulate,
    Solve,
    Disaggregate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Validate => "validate",
            Stage::Formulate => "formulate",
            Stage::Solve => "solve",
            Stage::Disaggregate => "disaggregate",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.message)
    }
}

impl std::error::Error for PipelineError {}

fn fail(stage: Stage) -> impl FnOnce(String) -> PipelineError {
    move |message| PipelineError { stage, message }
}

#[derive(Debug, Clone)]
pub struct Solved {
    pub grouping: Grouping,
    pub model: IpModel,
    pub allocation: GroupAllocation,
    pub result: AllocationResult,
    pub solve_time: Duration,
}

pub fn allocate(instance: &Instance) -> Result<Solved, PipelineError> {
    allocate_with(instance, FormulateOptions::default())
}

pub fn allocate_with(
    instance: &Instance,
    options: FormulateOptions,
) -> Result<Solved, PipelineError> {
    let violations = validate_instance(instance);
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(fail(Stage::Validate)(text.join("; ")));
    }
    let grouping = build_groups(instance);
    log::info!(
        "{} subscribers in {} groups ({} in the null group)",
        instance.subscribers.len(),
        grouping.groups.len(),
        grouping.null_group.len()
    );
    let model = formulate_with(
        &grouping.groups,
        &instance.campaigns,
        &instance.fairness,
        options,
    )
    .map_err(|e| fail(Stage::Formulate)(e.to_string()))?;
    let started = Instant::now();
    let allocation = solve(&model).map_err(|e| fail(Stage::Solve)(e.to_string()))?;
    let solve_time = started.elapsed();
    log::info!(
        "solved {} variables in {:.3} ms ({} nodes)",
        model.variables.len(),
        solve_time.as_secs_f64() * 1e3,
        allocation.nodes
    );
    let plans = plans_from_solution(instance, &grouping, &model, &allocation);
    let result =
        assemble(instance, &plans).map_err(|e| fail(Stage::Disaggregate)(e.to_string()))?;
    if result.objective != allocation.objective {
        return Err(fail(Stage::Disaggregate)(format!(
            "disaggregated objective {} differs from group objective {}",
            result.objective, allocation.objective
        )));
    }
    Ok(Solved {
        grouping,
        model,
        allocation,
        result,
        solve_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{
        Campaign, FairnessConfig, KpiKind, KpiSchema, KpiValue, KpiVector, Money, Subscriber,
    };
    use crate::targeting::parse_predicate;

    /// s1, s2 see only A; s3..s5 see A and B.
    fn worked_instance() -> Instance {
        let schema = KpiSchema::from_pairs([("x", KpiKind::Numeric)]);
        let subscribers = [
            ("s1", 0.0),
            ("s2", 0.0),
            ("s3", 1.0),
            ("s4", 1.0),
            ("s5", 1.0),
        ]
        .iter()
        .map(|&(id, x)| Subscriber {
            id: id.into(),
            kpis: KpiVector(vec![KpiValue::Numeric(x)]),
            frequency_cap: 1,
        })
        .collect();
        let campaigns = vec![
            Campaign {
                id: "A".into(),
                predicate: parse_predicate("TRUE", &schema).unwrap(),
                price: Money::from_units(2),
                frequency_cap: 3,
            },
            Campaign {
                id: "B".into(),
                predicate: parse_predicate("x >= 1", &schema).unwrap(),
                price: Money::from_units(1),
                frequency_cap: 4,
            },
        ];
        Instance {
            schema,
            subscribers,
            campaigns,
            fairness: FairnessConfig::disabled(),
        }
    }

    #[test]
    fn worked_example_end_to_end() {
        let inst = worked_instance();
        let solved = allocate(&inst).unwrap();
        assert_eq!(solved.result.objective, Money::from_units(8));
        assert_eq!(solved.result.per_campaign_counts["A"], 3);
        assert_eq!(solved.result.per_campaign_counts["B"], 2);
        assert_eq!(solved.result.total_impressions(), 5);
    }

    #[test]
    fn validation_failures_are_tagged() {
        let mut inst = worked_instance();
        inst.campaigns.clear();
        let err = allocate(&inst).unwrap_err();
        assert_eq!(err.stage, Stage::Validate);
        assert!(err.to_string().starts_with("[validate]"));
    }
}
