use crate::cost::evaluate;
use crate::model::layer1_threshold;
use crate::scenario::Scenario;

use super::{round_plan, validate_plan, PartitionPlan, PlanError, PlannerKind};

/// Active device whose aggregation gives the lowest end-to-end latency.
/// Only the gather, the FC-stage compute and the result return depend on the
/// choice, so this is the gather-plus-FC minimiser. Ties go to the lowest
/// index.
pub fn select_aggregator(scenario: &Scenario, rows: &[usize]) -> Result<usize, PlanError> {
    let mut best: Option<(usize, f64)> = None;
    let mut first_err = None;
    for g in (0..rows.len()).filter(|&i| rows[i] > 0) {
        match evaluate(scenario, rows, g) {
            Ok(b) => {
                if best.is_none_or(|(_, t)| b.t_total < t) {
                    best = Some((g, b.t_total));
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match (best, first_err) {
        (Some((g, _)), _) => Ok(g),
        (None, Some(e)) => Err(e.into()),
        (None, None) => Err(PlanError::RowSum {
            got: 0,
            expected: scenario.input_rows(),
        }),
    }
}

/// All rows on the single device with the lowest end-to-end latency,
/// counting the master's hand-off and the result return. Ties go to the
/// lowest index.
pub fn fallback_full_offload(scenario: &Scenario) -> Result<PartitionPlan, PlanError> {
    let n = scenario.num_devices();
    let h = scenario.input_rows();
    let mut best: Option<(PartitionPlan, f64)> = None;
    let mut first_err = None;
    for d in 0..n {
        let plan = PartitionPlan::single_device(PlannerKind::FallbackFullOffload, n, d, h);
        let outcome = validate_plan(scenario, &plan).and_then(|_| Ok(evaluate(scenario, &plan.rows, d)?));
        match outcome {
            Ok(b) => {
                if best.as_ref().is_none_or(|(_, t)| b.t_total < *t) {
                    best = Some((plan, b.t_total));
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match (best, first_err) {
        (Some((plan, _)), _) => Ok(plan),
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!("validated clusters have at least one device"),
    }
}

pub fn plan_local(scenario: &Scenario) -> Result<PartitionPlan, PlanError> {
    let plan = PartitionPlan::single_device(
        PlannerKind::Local,
        scenario.num_devices(),
        scenario.master(),
        scenario.input_rows(),
    );
    validate_plan(scenario, &plan)?;
    Ok(plan)
}

/// Fractions proportional to throughput `f / rho`.
pub fn plan_modnn(scenario: &Scenario) -> Result<PartitionPlan, PlanError> {
    let weights: Vec<f64> = scenario.cluster.devices.iter().map(|d| d.f / d.rho).collect();
    finalize_fixed_split(scenario, PlannerKind::Modnn, weights)
}

/// Equal fractions.
pub fn plan_musical_chair(scenario: &Scenario) -> Result<PartitionPlan, PlanError> {
    finalize_fixed_split(scenario, PlannerKind::MusicalChair, vec![1.0; scenario.num_devices()])
}

/// Rounds a weight vector to rows and picks the aggregator. When rounding
/// or validation fails, the device with the smallest weight is dropped and
/// the split recomputed over the rest.
fn finalize_fixed_split(scenario: &Scenario, kind: PlannerKind, mut weights: Vec<f64>) -> Result<PartitionPlan, PlanError> {
    let h = scenario.input_rows();
    let threshold = layer1_threshold(&scenario.model);
    loop {
        let total: f64 = weights.iter().sum();
        let lambda: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let attempt = round_plan(&lambda, h, threshold)
            .map_err(|e| e.to_string())
            .and_then(|rows| {
                let g = select_aggregator(scenario, &rows).map_err(|e| e.to_string())?;
                let plan = PartitionPlan {
                    planner: kind,
                    lambda: lambda.clone(),
                    rows,
                    aggregator: g,
                    lp_objective: None,
                    deadline_slack: None,
                    recursions: 0,
                };
                validate_plan(scenario, &plan).map_err(|e| e.to_string())?;
                Ok(plan)
            });
        match attempt {
            Ok(plan) => return Ok(plan),
            Err(reason) => {
                let live: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
                if live.len() <= 1 {
                    // nothing left to drop; surface the single-device error
                    let d = live.first().copied().unwrap_or(scenario.master());
                    let plan = PartitionPlan::single_device(kind, weights.len(), d, h);
                    validate_plan(scenario, &plan)?;
                    return Ok(plan);
                }
                let weakest = live
                    .iter()
                    .copied()
                    .min_by(|&a, &b| weights[a].total_cmp(&weights[b]).then(a.cmp(&b)))
                    .expect("non-empty");
                log::debug!("{kind}: dropping device {weakest} ({reason})");
                weights[weakest] = 0.0;
            }
        }
    }
}
