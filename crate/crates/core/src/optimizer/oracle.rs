//! Exhaustive solver for the original subscriber-level binary program.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{fairness_floors, FormulateError};
use crate::domain::{AllocationResult, Instance, Money};
use crate::targeting::signatures;

/// Largest number of eligible (subscriber, campaign) pairs the oracle accepts.
pub const ORACLE_PAIR_BUDGET: u64 = 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("{pairs} eligible pairs exceed the oracle budget of {ORACLE_PAIR_BUDGET}; use the scaled solve")]
    OverBudget { pairs: u64 },
    #[error("no assignment meets the fairness floors")]
    Infeasible,
    #[error(transparent)]
    Formulate(#[from] FormulateError),
}

struct Search<'a> {
    /// (subscriber, campaign) pairs in subscriber-major order.
    pairs: &'a [(usize, usize)],
    prices: Vec<i64>,
    /// Σ positive prices of pairs[k..], for pruning.
    suffix_gain: Vec<i64>,
    sub_room: Vec<u64>,
    campaign_room: Vec<u64>,
    delivered: Vec<u64>,
    floors: Option<Vec<u64>>,
    chosen: Vec<bool>,
    value: i64,
    best: Option<(i64, Vec<bool>)>,
}

impl Search<'_> {
    fn run(&mut self, k: usize) {
        if let Some((best, _)) = &self.best {
            if self.value + self.suffix_gain[k] <= *best {
                return;
            }
        }
        if k == self.pairs.len() {
            let floors_met = self.floors.as_ref().is_none_or(|f| {
                f.iter()
                    .zip(&self.delivered)
                    .all(|(&floor, &got)| got >= floor)
            });
            if floors_met {
                self.best = Some((self.value, self.chosen.clone()));
            }
            return;
        }
        let (i, j) = self.pairs[k];
        if self.sub_room[i] > 0 && self.campaign_room[j] > 0 {
            self.sub_room[i] -= 1;
            self.campaign_room[j] -= 1;
            self.delivered[j] += 1;
            self.value += self.prices[k];
            self.chosen[k] = true;
            self.run(k + 1);
            self.chosen[k] = false;
            self.value -= self.prices[k];
            self.delivered[j] -= 1;
            self.campaign_room[j] += 1;
            self.sub_room[i] += 1;
        }
        self.run(k + 1);
    }
}

/// Solves the unscaled program by enumeration. When fairness is on, floors use
/// the same formula as the group model with reachable supply counted per
/// subscriber.
pub fn brute_force_solve(instance: &Instance) -> Result<AllocationResult, OracleError> {
    let sigs = signatures(&instance.subscribers, &instance.campaigns);
    let pairs_total: u64 = sigs.iter().map(|s| s.count_ones()).sum();
    if pairs_total > ORACLE_PAIR_BUDGET {
        return Err(OracleError::OverBudget { pairs: pairs_total });
    }
    let pairs: Vec<(usize, usize)> = sigs
        .iter()
        .enumerate()
        .flat_map(|(i, s)| s.ones().map(move |j| (i, j)))
        .collect();

    let floors = if instance.fairness.enabled {
        let mut reachable = vec![0u64; instance.campaigns.len()];
        for &(i, j) in &pairs {
            if instance.subscribers[i].frequency_cap > 0 {
                reachable[j] += 1;
            }
        }
        Some(fairness_floors(
            &instance.campaigns,
            &reachable,
            &instance.fairness,
        )?)
    } else {
        None
    };

    let prices: Vec<i64> = pairs
        .iter()
        .map(|&(_, j)| instance.campaigns[j].price.micros())
        .collect();
    let mut suffix_gain = vec![0i64; pairs.len() + 1];
    for k in (0..pairs.len()).rev() {
        suffix_gain[k] = suffix_gain[k + 1] + prices[k].max(0);
    }
    let mut search = Search {
        pairs: &pairs,
        prices,
        suffix_gain,
        sub_room: instance
            .subscribers
            .iter()
            .map(|s| s.frequency_cap as u64)
            .collect(),
        campaign_room: instance.campaigns.iter().map(|c| c.frequency_cap).collect(),
        delivered: vec![0; instance.campaigns.len()],
        floors,
        chosen: vec![false; pairs.len()],
        value: 0,
        best: None,
    };
    search.run(0);
    let (value, chosen) = search.best.ok_or(OracleError::Infeasible)?;

    let mut assignments = vec![Vec::new(); instance.subscribers.len()];
    let mut counts: BTreeMap<String, u64> = instance
        .campaigns
        .iter()
        .map(|c| (c.id.clone(), 0))
        .collect();
    for (&(i, j), _) in pairs.iter().zip(&chosen).filter(|(_, &c)| c) {
        assignments[i].push(j);
        *counts
            .get_mut(&instance.campaigns[j].id)
            .expect("campaign present") += 1;
    }
    Ok(AllocationResult {
        assignments,
        objective: Money::from_micros(value),
        per_campaign_counts: counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Campaign, FairnessConfig, KpiSchema, KpiVector, Subscriber};
    use crate::targeting::TargetPredicate;

    fn inst(fcs: &[u32], campaigns: &[(i64, u64)]) -> Instance {
        Instance {
            schema: KpiSchema::default(),
            subscribers: fcs
                .iter()
                .enumerate()
                .map(|(i, &fc)| Subscriber {
                    id: format!("s{}", i + 1),
                    kpis: KpiVector(Vec::new()),
                    frequency_cap: fc,
                })
                .collect(),
            campaigns: campaigns
                .iter()
                .enumerate()
                .map(|(j, &(p, cap))| Campaign {
                    id: ((b'A' + j as u8) as char).to_string(),
                    predicate: TargetPredicate::True,
                    price: Money::from_units(p),
                    frequency_cap: cap,
                })
                .collect(),
            fairness: FairnessConfig::disabled(),
        }
    }

    #[test]
    fn single_variable() {
        let r = brute_force_solve(&inst(&[1], &[(5, 10)])).unwrap();
        assert_eq!(r.objective, Money::from_units(5));
    }

    #[test]
    fn two_subscribers_two_campaigns() {
        let i = inst(&[1, 1], &[(2, 1), (1, 2)]);
        let r = brute_force_solve(&i).unwrap();
        r.verify(&i).unwrap();
        // Hand check over all 16 subsets: A once plus B once.
        assert_eq!(r.objective, Money::from_units(3));
    }

    #[test]
    fn empty_instance() {
        let r = brute_force_solve(&inst(&[], &[(1, 1)])).unwrap();
        assert_eq!(r.objective, Money::ZERO);
        assert!(r.assignments.is_empty());
    }

    #[test]
    fn over_budget_is_refused() {
        let i = inst(&[1; 13], &[(1, 1), (1, 1)]);
        assert_eq!(
            brute_force_solve(&i),
            Err(OracleError::OverBudget { pairs: 26 })
        );
    }

    #[test]
    fn floors_force_cheaper_campaign() {
        let mut i = inst(&[1, 1], &[(2, 2), (1, 4)]);
        assert_eq!(
            brute_force_solve(&i).unwrap().objective,
            Money::from_units(4)
        );
        i.fairness = FairnessConfig::with_fraction("0.5").unwrap();
        // floor_B = ⌊0.5 · 4 · 1/2⌋ = 1, so one subscriber must take B.
        let r = brute_force_solve(&i).unwrap();
        assert_eq!(r.objective, Money::from_units(3));
        assert_eq!(r.per_campaign_counts["B"], 1);
    }
}
