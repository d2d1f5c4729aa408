//! Exhaustive search over integer partitions for small instances.

use thiserror::Error;

use crate::cost::evaluate;
use crate::par::Execution;
use crate::partition::{validate_plan, PartitionPlan, PlannerKind};
use crate::scenario::Scenario;

pub const MAX_DEVICES: usize = 4;
pub const MAX_ROWS: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("instance too large for enumeration: {devices} devices, {rows} rows (limits {MAX_DEVICES}, {MAX_ROWS})")]
    InstanceTooLarge { devices: usize, rows: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleOutcome {
    Optimal {
        plan: PartitionPlan,
        energy_j: f64,
        latency_s: f64,
        compositions: usize,
    },
    Infeasible {
        compositions: usize,
    },
}

impl OracleOutcome {
    pub fn energy(&self) -> Option<f64> {
        match self {
            OracleOutcome::Optimal { energy_j, .. } => Some(*energy_j),
            OracleOutcome::Infeasible { .. } => None,
        }
    }

    pub fn compositions(&self) -> usize {
        match self {
            OracleOutcome::Optimal { compositions, .. } | OracleOutcome::Infeasible { compositions } => *compositions,
        }
    }
}

/// All ordered ways to write `h` as `n` non-negative parts, lexicographic.
pub fn compositions(h: usize, n: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, slots: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for a in 0..=left {
            cur.push(a);
            rec(left - a, slots - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        rec(h, n, &mut Vec::with_capacity(n), &mut out);
    }
    out
}

pub fn ilp_oracle(scenario: &Scenario) -> Result<OracleOutcome, OracleError> {
    ilp_oracle_with(scenario, Execution::default())
}

/// Minimum-energy plan among all compositions and aggregators that pass the
/// plan validator and meet the deadline. Ties keep the first candidate in
/// enumeration order.
pub fn ilp_oracle_with(scenario: &Scenario, exec: Execution) -> Result<OracleOutcome, OracleError> {
    let n = scenario.num_devices();
    let h = scenario.input_rows();
    if n > MAX_DEVICES || h > MAX_ROWS {
        return Err(OracleError::InstanceTooLarge { devices: n, rows: h });
    }
    let all = compositions(h, n);
    let best_per: Vec<Option<(usize, f64, f64)>> = exec.map(&all, |rows| {
        let mut best: Option<(usize, f64, f64)> = None;
        for g in 0..n {
            let plan = PartitionPlan::from_rows(PlannerKind::Oracle, rows.clone(), g);
            if validate_plan(scenario, &plan).is_err() {
                continue;
            }
            let Ok(b) = evaluate(scenario, rows, g) else { continue };
            if b.t_total > scenario.deadline_s {
                continue;
            }
            if best.is_none_or(|(_, e, _)| b.energy() < e) {
                best = Some((g, b.energy(), b.t_total));
            }
        }
        best
    });
    let mut winner: Option<(usize, usize, f64, f64)> = None;
    for (idx, cand) in best_per.iter().enumerate() {
        if let Some((g, e, t)) = *cand {
            if winner.is_none_or(|(_, _, we, _)| e < we) {
                winner = Some((idx, g, e, t));
            }
        }
    }
    Ok(match winner {
        Some((idx, g, energy_j, latency_s)) => OracleOutcome::Optimal {
            plan: PartitionPlan::from_rows(PlannerKind::Oracle, all[idx].clone(), g),
            energy_j,
            latency_s,
            compositions: all.len(),
        },
        None => OracleOutcome::Infeasible {
            compositions: all.len(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition_counts() {
        assert_eq!(compositions(4, 2).len(), 5);
        assert_eq!(compositions(4, 1), vec![vec![4]]);
        // C(24 + 2, 2)
        assert_eq!(compositions(24, 3).len(), 325);
        assert!(compositions(6, 3).iter().all(|c| c.iter().sum::<usize>() == 6));
    }
}
