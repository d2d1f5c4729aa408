//! Partition plans, their validator and the planners that produce them.

mod baselines;
mod coedge;
mod p2;
mod round;

pub use baselines::{fallback_full_offload, plan_local, plan_modnn, plan_musical_chair, select_aggregator};
pub use coedge::{plan_coedge, plan_coedge_with, CoEdgeConfig};
pub use p2::{build_p2, solve_p2, solve_p2_best, HaloMode, P2Instance, P2Solution};
pub use round::{round_plan, RoundError};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{evaluate, CostBreakdown, CostError};
use crate::model::layer1_threshold;
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Coedge,
    Modnn,
    MusicalChair,
    Local,
    FallbackFullOffload,
    Oracle,
    Manual,
}

impl PlannerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PlannerKind::Coedge => "coedge",
            PlannerKind::Modnn => "modnn",
            PlannerKind::MusicalChair => "musical_chair",
            PlannerKind::Local => "local",
            PlannerKind::FallbackFullOffload => "fallback_full_offload",
            PlannerKind::Oracle => "oracle",
            PlannerKind::Manual => "manual",
        }
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Planner choice accepted on the command line and by sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Planner {
    Coedge,
    Modnn,
    MusicalChair,
    Local,
}

impl Planner {
    pub const ALL: [Planner; 4] = [Planner::Coedge, Planner::Modnn, Planner::MusicalChair, Planner::Local];

    pub fn name(&self) -> &'static str {
        match self {
            Planner::Coedge => "coedge",
            Planner::Modnn => "modnn",
            Planner::MusicalChair => "musical_chair",
            Planner::Local => "local",
        }
    }

    pub fn plan(&self, scenario: &Scenario) -> Result<PartitionPlan, PlanError> {
        match self {
            Planner::Coedge => plan_coedge(scenario),
            Planner::Modnn => plan_modnn(scenario),
            Planner::MusicalChair => plan_musical_chair(scenario),
            Planner::Local => plan_local(scenario),
        }
    }
}

impl FromStr for Planner {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "coedge" => Ok(Planner::Coedge),
            "modnn" => Ok(Planner::Modnn),
            "musical_chair" | "musical-chair" => Ok(Planner::MusicalChair),
            "local" => Ok(Planner::Local),
            other => Err(format!("unknown planner `{other}`")),
        }
    }
}

/// A partition `pi`: fractions and integer layer-1 rows per device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub planner: PlannerKind,
    pub lambda: Vec<f64>,
    pub rows: Vec<usize>,
    pub aggregator: usize,
    /// LP objective (joules) of the relaxation the plan came from.
    pub lp_objective: Option<f64>,
    /// `D - sum_l t_l` at the LP solution.
    pub deadline_slack: Option<f64>,
    /// Relaxations solved before the plan was accepted.
    pub recursions: usize,
}

impl PartitionPlan {
    /// Plan with `lambda = rows / H`.
    pub fn from_rows(planner: PlannerKind, rows: Vec<usize>, aggregator: usize) -> Self {
        let h: usize = rows.iter().sum();
        let lambda = rows.iter().map(|&a| a as f64 / h.max(1) as f64).collect();
        Self {
            planner,
            lambda,
            rows,
            aggregator,
            lp_objective: None,
            deadline_slack: None,
            recursions: 0,
        }
    }

    /// Every row on `device`, which also aggregates.
    pub fn single_device(planner: PlannerKind, n: usize, device: usize, h: usize) -> Self {
        let mut rows = vec![0; n];
        rows[device] = h;
        Self::from_rows(planner, rows, device)
    }

    pub fn active(&self) -> Vec<usize> {
        (0..self.rows.len()).filter(|&i| self.rows[i] > 0).collect()
    }

    pub fn is_fallback(&self) -> bool {
        self.planner == PlannerKind::FallbackFullOffload
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("plan has {got} entries, cluster has {expected} devices")]
    Length { got: usize, expected: usize },
    #[error("rows sum to {got}, expected H = {expected}")]
    RowSum { got: usize, expected: usize },
    #[error("fractions sum to {0}, expected 1")]
    LambdaSum(f64),
    #[error("fraction for device {device} is {value}")]
    NegativeLambda { device: usize, value: f64 },
    #[error("device {device} holds {rows} rows, below the threshold of {threshold}")]
    Threshold { device: usize, rows: usize, threshold: usize },
    #[error("layer {layer}: device {device} needs {needed} KB but has {available} KB")]
    Memory { layer: usize, device: usize, needed: f64, available: f64 },
    #[error("layer {layer}: device {device} cannot pull its halo from device {neighbour}")]
    HaloSpan { layer: usize, device: usize, neighbour: usize },
    #[error("aggregator {0} out of range")]
    Aggregator(usize),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Lp(#[from] crate::lp::LpError),
}

/// Checks the integer-plan constraints: non-negative integer rows summing to
/// H, fractions summing to one, the neighbour threshold, per-layer memory
/// and halo reachability at every depth.
///
/// The threshold applies to every active device whenever two or more
/// devices are active: each one is either pulled from or pulls from its
/// neighbour.
pub fn validate_plan(scenario: &Scenario, plan: &PartitionPlan) -> Result<(), PlanError> {
    checked_costs(scenario, plan).map(|_| ())
}

/// `validate_plan` that hands back the cost breakdown it computed.
pub fn checked_costs(scenario: &Scenario, plan: &PartitionPlan) -> Result<CostBreakdown, PlanError> {
    let n = scenario.num_devices();
    if plan.rows.len() != n || plan.lambda.len() != n {
        return Err(PlanError::Length {
            got: plan.rows.len().max(plan.lambda.len()),
            expected: n,
        });
    }
    let h = scenario.input_rows();
    let got: usize = plan.rows.iter().sum();
    if got != h {
        return Err(PlanError::RowSum { got, expected: h });
    }
    for (device, &value) in plan.lambda.iter().enumerate() {
        if !(value >= -1e-9) {
            return Err(PlanError::NegativeLambda { device, value });
        }
    }
    let lambda_sum: f64 = plan.lambda.iter().sum();
    if (lambda_sum - 1.0).abs() > 1e-6 {
        return Err(PlanError::LambdaSum(lambda_sum));
    }
    if plan.aggregator >= n {
        return Err(PlanError::Aggregator(plan.aggregator));
    }
    let active = plan.active();
    let threshold = layer1_threshold(&scenario.model);
    if active.len() >= 2 {
        for &device in &active {
            if plan.rows[device] < threshold {
                return Err(PlanError::Threshold {
                    device,
                    rows: plan.rows[device],
                    threshold,
                });
            }
        }
    }
    let breakdown = match evaluate(scenario, &plan.rows, plan.aggregator) {
        Ok(b) => b,
        Err(CostError::HaloSpanViolation {
            layer,
            device,
            neighbour,
            ..
        }) => {
            return Err(PlanError::HaloSpan {
                layer,
                device,
                neighbour,
            })
        }
        Err(e) => return Err(e.into()),
    };
    for (layer, cells) in breakdown.cells.iter().enumerate() {
        for (device, cell) in cells.iter().enumerate() {
            let available = scenario.cluster.devices[device].m;
            if cell.workload_kb > available {
                return Err(PlanError::Memory {
                    layer,
                    device,
                    needed: cell.workload_kb,
                    available,
                });
            }
        }
    }
    Ok(breakdown)
}
