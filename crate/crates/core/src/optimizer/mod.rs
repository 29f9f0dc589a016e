//! Group-level integer program: formulation, exact solve, MPS I/O, and the
//! exhaustive subscriber-level oracle used to certify the reduction.
//!
//! The model has one integer variable `y[g][j]` per eligible (group, campaign)
//! pair with `0 ≤ y ≤ min(FC(g), size(g), cap_j)`, and maximizes
//! `Σ price_j · y[g][j]` subject to
//!
//! * group rows    `Σ_j y[g][j] ≤ FC(g)`
//! * campaign rows `Σ_g y[g][j] ≤ cap_j`
//! * floor rows    `Σ_g y[g][j] ≥ floor_j` (fairness only)
//!
//! The `size(g)` term in the variable bound encodes that a campaign reaches a
//! subscriber at most once; without it the group optimum can exceed the
//! subscriber-level optimum.

mod branch;
mod mps;
mod oracle;
pub mod simplex;

use std::fmt;

use thiserror::Error;

use crate::domain::{Campaign, FairnessConfig, Money};
use crate::grouping::{Grouping, SubscriberGroup};
use crate::targeting::EligibilitySignature;

pub use branch::INTEGRALITY_TOL;
pub use mps::{export_mps, export_mps_to_string, import_mps, mps_size, MpsError};
pub use oracle::{brute_force_solve, OracleError, ORACLE_PAIR_BUDGET};

use branch::{branch_and_bound, MipError, MipOutcome};
use simplex::{solve_lp, LpOutcome, LpProblem, LpRow, RowSense};

const NODE_LIMIT: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variable {
    pub group: usize,
    pub campaign: usize,
    pub upper: u64,
    pub price: Money,
}

/// Canonical group-level program. Variables are ordered group-major,
/// campaign-minor.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IpModel {
    pub name: String,
    /// Right-hand side of each group row (FC(g)).
    pub group_caps: Vec<u64>,
    /// Right-hand side of each campaign row.
    pub campaign_caps: Vec<u64>,
    /// One floor per campaign when fairness is on.
    pub floors: Option<Vec<u64>>,
    pub variables: Vec<Variable>,
}

/// Identifies a constraint row of an [`IpModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowRef {
    Group(usize),
    Campaign(usize),
    Floor(usize),
}

impl RowRef {
    pub fn name(self) -> String {
        self.to_string()
    }
}

impl fmt::Display for RowRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowRef::Group(g) => write!(f, "G{g}"),
            RowRef::Campaign(j) => write!(f, "C{j}"),
            RowRef::Floor(j) => write!(f, "F{j}"),
        }
    }
}

pub const DEFAULT_MODEL_NAME: &str = "ADALLOC";

impl IpModel {
    pub fn row_count(&self) -> usize {
        self.group_caps.len() + self.campaign_caps.len() + self.floors.as_ref().map_or(0, Vec::len)
    }

    /// Rows in canonical order: groups, campaigns, floors.
    pub fn rows(&self) -> Vec<RowRef> {
        let mut rows: Vec<RowRef> = (0..self.group_caps.len()).map(RowRef::Group).collect();
        rows.extend((0..self.campaign_caps.len()).map(RowRef::Campaign));
        if let Some(f) = &self.floors {
            rows.extend((0..f.len()).map(RowRef::Floor));
        }
        rows
    }

    pub fn floor_row_count(&self) -> usize {
        self.floors.as_ref().map_or(0, Vec::len)
    }

    /// Exact integer objective of a count vector aligned with `variables`.
    pub fn objective_of(&self, counts: &[u64]) -> Money {
        self.variables
            .iter()
            .zip(counts)
            .map(|(v, &c)| v.price.times(c))
            .sum()
    }

    /// Checks bounds and every row in exact integer arithmetic.
    pub fn check_feasible(&self, counts: &[u64]) -> Result<(), String> {
        if counts.len() != self.variables.len() {
            return Err(format!(
                "{} values for {} variables",
                counts.len(),
                self.variables.len()
            ));
        }
        let mut group_load = vec![0u64; self.group_caps.len()];
        let mut campaign_load = vec![0u64; self.campaign_caps.len()];
        for (v, &c) in self.variables.iter().zip(counts) {
            if c > v.upper {
                return Err(format!(
                    "y[{}][{}] = {c} exceeds bound {}",
                    v.group, v.campaign, v.upper
                ));
            }
            group_load[v.group] += c;
            campaign_load[v.campaign] += c;
        }
        for (g, (&load, &cap)) in group_load.iter().zip(&self.group_caps).enumerate() {
            if load > cap {
                return Err(format!("row G{g}: {load} > {cap}"));
            }
        }
        for (j, (&load, &cap)) in campaign_load.iter().zip(&self.campaign_caps).enumerate() {
            if load > cap {
                return Err(format!("row C{j}: {load} > {cap}"));
            }
        }
        if let Some(floors) = &self.floors {
            for (j, (&load, &floor)) in campaign_load.iter().zip(floors).enumerate() {
                if load < floor {
                    return Err(format!("row F{j}: {load} < {floor}"));
                }
            }
        }
        Ok(())
    }

    fn to_lp(&self) -> LpProblem {
        let n = self.variables.len();
        let mut rows: Vec<LpRow> = self
            .group_caps
            .iter()
            .map(|&cap| LpRow {
                entries: Vec::new(),
                sense: RowSense::Le,
                rhs: cap as f64,
            })
            .collect();
        let campaign_base = rows.len();
        rows.extend(self.campaign_caps.iter().map(|&cap| LpRow {
            entries: Vec::new(),
            sense: RowSense::Le,
            rhs: cap as f64,
        }));
        let floor_base = rows.len();
        if let Some(floors) = &self.floors {
            rows.extend(floors.iter().map(|&f| LpRow {
                entries: Vec::new(),
                sense: RowSense::Ge,
                rhs: f as f64,
            }));
        }
        for (k, v) in self.variables.iter().enumerate() {
            rows[v.group].entries.push((k, 1.0));
            rows[campaign_base + v.campaign].entries.push((k, 1.0));
            if self.floors.is_some() {
                rows[floor_base + v.campaign].entries.push((k, 1.0));
            }
        }
        LpProblem {
            objective: self
                .variables
                .iter()
                .map(|v| v.price.micros() as f64)
                .collect(),
            lower: vec![0.0; n],
            upper: self.variables.iter().map(|v| v.upper as f64).collect(),
            rows,
        }
    }

    fn row_at(&self, index: usize) -> Option<RowRef> {
        self.rows().get(index).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulateError {
    #[error("no campaigns to allocate")]
    NoCampaigns,
    #[error("fairness is enabled but every campaign price is zero")]
    ZeroMaxPrice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FormulateOptions {
    /// Bound each variable by its group's member count. Turning this off
    /// reproduces the naive group model and breaks equivalence with the
    /// subscriber-level program; it exists for mutation testing.
    pub member_bound: bool,
}

impl Default for FormulateOptions {
    fn default() -> Self {
        FormulateOptions { member_bound: true }
    }
}

/// Price-proportional floors: `min(⌊frac · cap_j · p_j / p_max⌋, reachable_j)`.
pub fn fairness_floors(
    campaigns: &[Campaign],
    reachable: &[u64],
    fairness: &FairnessConfig,
) -> Result<Vec<u64>, FormulateError> {
    let p_max = campaigns
        .iter()
        .map(|c| c.price.micros())
        .max()
        .ok_or(FormulateError::NoCampaigns)?;
    if p_max <= 0 {
        return Err(FormulateError::ZeroMaxPrice);
    }
    Ok(campaigns
        .iter()
        .zip(reachable)
        .map(|(c, &reach)| {
            let numerator = fairness.min_fill_ppm as u128
                * c.frequency_cap as u128
                * c.price.micros().max(0) as u128;
            let denominator = FairnessConfig::PPM as u128 * p_max as u128;
            ((numerator / denominator) as u64).min(reach)
        })
        .collect())
}

/// One row of the program before it becomes a model: a supply node with its
/// cap, member count and eligible campaigns.
struct Supply<'a> {
    cap: u64,
    size: u64,
    signature: &'a EligibilitySignature,
}

fn build_model<'a>(
    supplies: impl Iterator<Item = Supply<'a>>,
    campaigns: &[Campaign],
    fairness: &FairnessConfig,
    options: FormulateOptions,
) -> Result<IpModel, FormulateError> {
    if campaigns.is_empty() {
        return Err(FormulateError::NoCampaigns);
    }
    let mut model = IpModel {
        name: DEFAULT_MODEL_NAME.to_string(),
        campaign_caps: campaigns.iter().map(|c| c.frequency_cap).collect(),
        ..IpModel::default()
    };
    let mut reachable = vec![0u64; campaigns.len()];
    for (g, supply) in supplies.enumerate() {
        model.group_caps.push(supply.cap);
        let per_campaign = if options.member_bound {
            supply.cap.min(supply.size)
        } else {
            supply.cap
        };
        for j in supply.signature.ones() {
            reachable[j] += supply.cap.min(supply.size);
            model.variables.push(Variable {
                group: g,
                campaign: j,
                upper: per_campaign.min(campaigns[j].frequency_cap),
                price: campaigns[j].price,
            });
        }
    }
    if fairness.enabled {
        model.floors = Some(fairness_floors(campaigns, &reachable, fairness)?);
    }
    Ok(model)
}

/// Builds the group allocation program from non-null groups.
pub fn formulate(
    groups: &[SubscriberGroup],
    campaigns: &[Campaign],
    fairness: &FairnessConfig,
) -> Result<IpModel, FormulateError> {
    formulate_with(groups, campaigns, fairness, FormulateOptions::default())
}

pub fn formulate_with(
    groups: &[SubscriberGroup],
    campaigns: &[Campaign],
    fairness: &FairnessConfig,
    options: FormulateOptions,
) -> Result<IpModel, FormulateError> {
    build_model(
        groups.iter().map(|g| Supply {
            cap: g.frequency_cap,
            size: g.size(),
            signature: &g.key.signature,
        }),
        campaigns,
        fairness,
        options,
    )
}

/// The original subscriber-level program written in the same shape: one
/// "group" per subscriber with at least one eligible campaign.
pub fn formulate_unscaled(
    caps: &[u32],
    signatures: &[EligibilitySignature],
    campaigns: &[Campaign],
    fairness: &FairnessConfig,
) -> Result<IpModel, FormulateError> {
    build_model(
        caps.iter()
            .zip(signatures)
            .filter(|(_, s)| !s.is_zero())
            .map(|(&cap, signature)| Supply {
                cap: cap as u64,
                size: 1,
                signature,
            }),
        campaigns,
        fairness,
        FormulateOptions::default(),
    )
}

/// Convenience: formulate straight from a [`Grouping`].
pub fn formulate_grouping(
    grouping: &Grouping,
    campaigns: &[Campaign],
    fairness: &FairnessConfig,
) -> Result<IpModel, FormulateError> {
    formulate(&grouping.groups, campaigns, fairness)
}

/// Integral solution of an [`IpModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct GroupAllocation {
    /// `y` values aligned with `IpModel::variables`.
    pub counts: Vec<u64>,
    pub objective: Money,
    /// LP relaxation bound at the root, in micro-units.
    pub root_bound: f64,
    pub nodes: u64,
}

impl GroupAllocation {
    pub fn count(&self, model: &IpModel, group: usize, campaign: usize) -> u64 {
        model
            .variables
            .iter()
            .zip(&self.counts)
            .find(|(v, _)| v.group == group && v.campaign == campaign)
            .map_or(0, |(_, &c)| c)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("model is infeasible: row {row} cannot be satisfied")]
    Infeasible { row: String },
    #[error("model is unbounded")]
    Unbounded,
    #[error("branch-and-bound node limit {0} reached")]
    NodeLimit(u64),
    #[error("{0}")]
    Numerical(String),
}

impl From<MipError> for SolveError {
    fn from(e: MipError) -> Self {
        match e {
            MipError::Lp(e) => SolveError::Numerical(e.to_string()),
            MipError::NodeLimit(n) => SolveError::NodeLimit(n),
        }
    }
}

fn infeasible(model: &IpModel, row: usize) -> SolveError {
    SolveError::Infeasible {
        row: model
            .row_at(row)
            .map_or_else(|| "<integrality>".to_string(), RowRef::name),
    }
}

/// Fractional optimum of the relaxation.
#[derive(Debug, Clone, PartialEq)]
pub struct LpRelaxation {
    pub values: Vec<f64>,
    /// In micro-units.
    pub objective: f64,
}

impl LpRelaxation {
    pub fn max_integrality_gap(&self) -> f64 {
        self.values
            .iter()
            .map(|v| (v - v.round()).abs())
            .fold(0.0, f64::max)
    }
}

pub fn solve_lp_relaxation(model: &IpModel) -> Result<LpRelaxation, SolveError> {
    match solve_lp(&model.to_lp()).map_err(|e| SolveError::Numerical(e.to_string()))? {
        LpOutcome::Optimal(s) => Ok(LpRelaxation {
            values: s.values,
            objective: s.objective,
        }),
        LpOutcome::Infeasible { row } => Err(infeasible(model, row)),
        LpOutcome::Unbounded => Err(SolveError::Unbounded),
    }
}

/// Exact optimum of the integer program. The incumbent is re-verified and its
/// objective recomputed in integer micro-units.
pub fn solve(model: &IpModel) -> Result<GroupAllocation, SolveError> {
    let lp = model.to_lp();
    let solution = match branch_and_bound(&lp, 1.0, NODE_LIMIT)? {
        MipOutcome::Optimal(s) => s,
        MipOutcome::Infeasible { row } => return Err(infeasible(model, row)),
        MipOutcome::Unbounded => return Err(SolveError::Unbounded),
    };
    let counts: Vec<u64> = solution
        .values
        .iter()
        .map(|&v| {
            u64::try_from(v).map_err(|_| SolveError::Numerical(format!("negative value {v}")))
        })
        .collect::<Result<_, _>>()?;
    model
        .check_feasible(&counts)
        .map_err(|e| SolveError::Numerical(format!("rounded incumbent violates {e}")))?;
    let objective = model.objective_of(&counts);
    // Certificate: the incumbent meets the relaxation bound up to one micro-unit.
    if (objective.micros() as f64) < solution.root_bound - 1.0 && solution.nodes == 1 {
        return Err(SolveError::Numerical(format!(
            "incumbent {} below root bound {}",
            objective.micros(),
            solution.root_bound
        )));
    }
    Ok(GroupAllocation {
        counts,
        objective,
        root_bound: solution.root_bound,
        nodes: solution.nodes,
    })
}
