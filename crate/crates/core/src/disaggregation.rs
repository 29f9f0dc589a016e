//! Expands group-level counts into per-subscriber assignments.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::domain::{AllocationResult, Instance, Money};
use crate::grouping::Grouping;
use crate::optimizer::{GroupAllocation, IpModel};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CampaignDemand {
    pub campaign: usize,
    pub id: String,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupAssignmentPlan {
    pub group: usize,
    pub demands: Vec<CampaignDemand>,
    /// (subscriber index, frequency cap), descending cap then ascending id.
    pub roster: Vec<(usize, u32)>,
}

impl GroupAssignmentPlan {
    pub fn frequency_cap(&self) -> u64 {
        self.roster.iter().map(|&(_, c)| c as u64).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DisaggregationError {
    #[error("group {group}: campaign {campaign} needs {needed} members with spare capacity, {available} left")]
    Exhausted {
        group: usize,
        campaign: String,
        needed: u64,
        available: u64,
    },
    #[error("assembled allocation breaks an invariant: {0}")]
    Invariant(String),
}

/// Campaign sets for each roster entry, in roster order. Campaign indices
/// come out ascending.
pub fn disaggregate_group(
    plan: &GroupAssignmentPlan,
) -> Result<Vec<Vec<usize>>, DisaggregationError> {
    let mut order: Vec<&CampaignDemand> = plan.demands.iter().filter(|d| d.n > 0).collect();
    order.sort_by(|a, b| b.n.cmp(&a.n).then_with(|| a.id.cmp(&b.id)));

    let mut out = vec![Vec::new(); plan.roster.len()];
    // (remaining capacity, roster position), kept sorted by remaining desc then position.
    let mut queue: Vec<(u32, usize)> = plan
        .roster
        .iter()
        .enumerate()
        .filter(|(_, &(_, cap))| cap > 0)
        .map(|(pos, &(_, cap))| (cap, pos))
        .collect();
    queue.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut merged = Vec::with_capacity(queue.len());
    for demand in order {
        let n = demand.n as usize;
        if n > queue.len() {
            return Err(DisaggregationError::Exhausted {
                group: plan.group,
                campaign: demand.id.clone(),
                needed: demand.n,
                available: queue.len() as u64,
            });
        }
        let (taken, rest) = queue.split_at(n);
        merged.clear();
        let mut a = taken
            .iter()
            .map(|&(r, pos)| {
                out[pos].push(demand.campaign);
                (r - 1, pos)
            })
            .filter(|&(r, _)| r > 0)
            .peekable();
        let mut b = rest.iter().copied().peekable();
        loop {
            let next = match (a.peek(), b.peek()) {
                (Some(x), Some(y)) => {
                    if (y.0, x.1) < (x.0, y.1) {
                        a.next()
                    } else {
                        b.next()
                    }
                }
                (Some(_), None) => a.next(),
                (None, Some(_)) => b.next(),
                (None, None) => break,
            };
            merged.extend(next);
        }
        std::mem::swap(&mut queue, &mut merged);
    }
    for list in &mut out {
        list.sort_unstable();
    }
    Ok(out)
}

/// One plan per non-null group, with demands taken from the solved counts.
pub fn plans_from_solution(
    instance: &Instance,
    grouping: &Grouping,
    model: &IpModel,
    allocation: &GroupAllocation,
) -> Vec<GroupAssignmentPlan> {
    let mut plans: Vec<GroupAssignmentPlan> = grouping
        .groups
        .iter()
        .enumerate()
        .map(|(g, group)| GroupAssignmentPlan {
            group: g,
            demands: Vec::new(),
            roster: group
                .members
                .iter()
                .map(|&i| (i, instance.subscribers[i].frequency_cap))
                .collect(),
        })
        .collect();
    for (v, &count) in model.variables.iter().zip(&allocation.counts) {
        if count > 0 {
            plans[v.group].demands.push(CampaignDemand {
                campaign: v.campaign,
                id: instance.campaigns[v.campaign].id.clone(),
                n: count,
            });
        }
    }
    plans
}

/// Disaggregates every plan (in parallel) and checks the combined result
/// against the instance.
pub fn assemble(
    instance: &Instance,
    plans: &[GroupAssignmentPlan],
) -> Result<AllocationResult, DisaggregationError> {
    let per_group: Vec<Vec<Vec<usize>>> = plans
        .par_iter()
        .map(disaggregate_group)
        .collect::<Result<_, _>>()?;

    let mut assignments = vec![Vec::new(); instance.subscribers.len()];
    let mut counts = vec![0u64; instance.campaigns.len()];
    for (plan, lists) in plans.iter().zip(per_group) {
        for (&(i, _), list) in plan.roster.iter().zip(lists) {
            for &j in &list {
                counts[j] += 1;
            }
            assignments[i] = list;
        }
    }
    let objective: Money = instance
        .campaigns
        .iter()
        .zip(&counts)
        .map(|(c, &n)| c.price.times(n))
        .sum();
    let per_campaign_counts: BTreeMap<String, u64> = instance
        .campaigns
        .iter()
        .zip(&counts)
        .map(|(c, &n)| (c.id.clone(), n))
        .collect();
    let result = AllocationResult {
        assignments,
        objective,
        per_campaign_counts,
    };
    result
        .verify(instance)
        .map_err(DisaggregationError::Invariant)?;
    Ok(result)
}
