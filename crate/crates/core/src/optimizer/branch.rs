//! Best-bound branch-and-bound over the simplex relaxation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::simplex::{solve_lp, LpError, LpOutcome, LpProblem};

pub const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MipSolution {
    pub values: Vec<i64>,
    /// Objective of the incumbent, evaluated in floating point.
    pub objective: f64,
    /// Root relaxation bound.
    pub root_bound: f64,
    pub nodes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MipOutcome {
    Optimal(MipSolution),
    Infeasible { row: usize },
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MipError {
    Lp(LpError),
    NodeLimit(u64),
}

impl From<LpError> for MipError {
    fn from(e: LpError) -> Self {
        MipError::Lp(e)
    }
}

struct Node {
    bound: f64,
    seq: u64,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Highest bound first; among equal bounds, the earliest created node.
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Variable whose fractional part is closest to one half; lowest index on ties.
fn most_fractional(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &v) in values.iter().enumerate() {
        let frac = v - v.floor();
        let score = frac.min(1.0 - frac);
        if score > INTEGRALITY_TOL && best.is_none_or(|(_, s)| score > s) {
            best = Some((j, score));
        }
    }
    best.map(|(j, _)| j)
}

/// Maximizes over integer points. `objective_step` is the granularity of
/// integral objective values (1.0 when all costs are integers), used to prune
/// nodes that cannot beat the incumbent by a full step.
pub fn branch_and_bound(
    problem: &LpProblem,
    objective_step: f64,
    node_limit: u64,
) -> Result<MipOutcome, MipError> {
    let root = match solve_lp(problem)? {
        LpOutcome::Optimal(s) => s,
        LpOutcome::Infeasible { row } => return Ok(MipOutcome::Infeasible { row }),
        LpOutcome::Unbounded => return Ok(MipOutcome::Unbounded),
    };
    let root_bound = root.objective;
    let mut incumbent: Option<(Vec<i64>, f64)> = None;
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let mut nodes = 1u64;
    let mut pending = Some((problem.lower.clone(), problem.upper.clone(), root));

    loop {
        if let Some((lower, upper, sol)) = pending.take() {
            match most_fractional(&sol.values) {
                None => {
                    let rounded: Vec<i64> = sol.values.iter().map(|v| v.round() as i64).collect();
                    if incumbent
                        .as_ref()
                        .is_none_or(|(_, obj)| sol.objective > *obj)
                    {
                        incumbent = Some((rounded, sol.objective));
                    }
                }
                Some(j) => {
                    let v = sol.values[j];
                    let mut down_upper = upper.clone();
                    down_upper[j] = v.floor();
                    let mut up_lower = lower.clone();
                    up_lower[j] = v.ceil();
                    for (lo, hi) in [(lower.clone(), down_upper), (up_lower, upper)] {
                        seq += 1;
                        heap.push(Node {
                            bound: sol.objective,
                            seq,
                            lower: lo,
                            upper: hi,
                        });
                    }
                }
            }
        }

        let Some(node) = heap.pop() else { break };
        if let Some((_, best)) = &incumbent {
            if node.bound < best + objective_step - INTEGRALITY_TOL {
                // Best-bound order: every remaining node is dominated too.
                break;
            }
        }
        nodes += 1;
        if nodes > node_limit {
            return Err(MipError::NodeLimit(node_limit));
        }
        let child = LpProblem {
            objective: problem.objective.clone(),
            lower: node.lower.clone(),
            upper: node.upper.clone(),
            rows: problem.rows.clone(),
        };
        if let LpOutcome::Optimal(sol) = solve_lp(&child)? {
            pending = Some((node.lower, node.upper, sol));
        }
    }

    match incumbent {
        Some((values, objective)) => Ok(MipOutcome::Optimal(MipSolution {
            values,
            objective,
            root_bound,
            nodes,
        })),
        // The relaxation was feasible but no integer point is.
        None => Ok(MipOutcome::Infeasible { row: usize::MAX }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::simplex::{LpRow, RowSense};

    #[test]
    fn branches_on_fractional_knapsack() {
        // max 5a + 4b + 3c, 2a + 3b + c ≤ 5, 4a + b + 2c ≤ 11, 3a + 4b + 2c ≤ 8, binary
        let p = LpProblem {
            objective: vec![5.0, 4.0, 3.0],
            lower: vec![0.0; 3],
            upper: vec![1.0; 3],
            rows: vec![
                LpRow {
                    entries: vec![(0, 2.0), (1, 3.0), (2, 1.0)],
                    sense: RowSense::Le,
                    rhs: 5.0,
                },
                LpRow {
                    entries: vec![(0, 4.0), (1, 1.0), (2, 2.0)],
                    sense: RowSense::Le,
                    rhs: 11.0,
                },
                LpRow {
                    entries: vec![(0, 3.0), (1, 4.0), (2, 2.0)],
                    sense: RowSense::Le,
                    rhs: 8.0,
                },
            ],
        };
        let MipOutcome::Optimal(s) = branch_and_bound(&p, 1.0, 1000).unwrap() else {
            panic!()
        };
        // brute force over 8 points: a+b → 2+3=5 ≤5, 4+1=5, 3+4=7 → 9; a+c → 8; a+b+c: 6 > 5
        assert_eq!(s.values, vec![1, 1, 0]);
        assert_eq!(s.objective, 9.0);
    }

    #[test]
    fn integer_infeasible_after_branching() {
        // 2x = 1 with x integer in [0, 1]
        let p = LpProblem {
            objective: vec![1.0],
            lower: vec![0.0],
            upper: vec![1.0],
            rows: vec![LpRow {
                entries: vec![(0, 2.0)],
                sense: RowSense::Eq,
                rhs: 1.0,
            }],
        };
        assert!(matches!(
            branch_and_bound(&p, 1.0, 100).unwrap(),
            MipOutcome::Infeasible { .. }
        ));
    }

    #[test]
    fn picks_most_fractional() {
        assert_eq!(most_fractional(&[1.0, 0.2, 0.5, 2.7]), Some(2));
        assert_eq!(most_fractional(&[1.0, 2.0]), None);
        assert_eq!(most_fractional(&[0.25, 0.75]), Some(0));
    }
}
