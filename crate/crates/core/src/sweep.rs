//! Parameter sweeps over scenarios and their CSV tables.

use std::io::Write;

use serde::Serialize;

use crate::cost::evaluate;
use crate::par::Execution;
use crate::partition::{select_aggregator, solve_p2_best, HaloMode, PartitionPlan, Planner, PlannerKind};
use crate::sim::{simulate, EpochRecord, SimError};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioPoint {
    pub ratio: f64,
    pub rows: [usize; 2],
    pub aggregator: usize,
    pub latency_s: f64,
    pub energy_j: f64,
}

/// Two-device split with `ratio` of the rows offloaded to device 2, for
/// `steps` evenly spaced ratios from 0 to 1 inclusive.
pub fn sweep_offloading_ratio(scenario: &Scenario, steps: usize) -> Result<Vec<RatioPoint>, SimError> {
    sweep_offloading_ratio_with(scenario, steps, Execution::default())
}

pub fn sweep_offloading_ratio_with(
    scenario: &Scenario,
    steps: usize,
    exec: Execution,
) -> Result<Vec<RatioPoint>, SimError> {
    if scenario.num_devices() != 2 {
        return Err(SimError::Invalid(format!(
            "ratio sweep needs exactly 2 devices, got {}",
            scenario.num_devices()
        )));
    }
    if steps < 2 {
        return Err(SimError::Invalid("ratio sweep needs at least 2 steps".into()));
    }
    let h = scenario.input_rows();
    exec.map_range(steps, |k| {
        let ratio = k as f64 / (steps - 1) as f64;
        let offloaded = ((ratio * h as f64).round() as usize).min(h);
        let rows = vec![h - offloaded, offloaded];
        let aggregator = select_aggregator(scenario, &rows)?;
        let plan = PartitionPlan::from_rows(PlannerKind::Manual, rows.clone(), aggregator);
        let (trace, breakdown) = simulate(scenario, &plan)?;
        Ok(RatioPoint {
            ratio,
            rows: [rows[0], rows[1]],
            aggregator,
            latency_s: trace.finish_time,
            energy_j: breakdown.energy(),
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    /// Swept value: deadline in seconds or device count.
    pub x: f64,
    pub planner: &'static str,
    pub plan: PartitionPlan,
    pub latency_s: f64,
    pub energy_j: f64,
    pub deadline_met: bool,
}

impl RunRow {
    pub fn fallback(&self) -> bool {
        self.plan.is_fallback()
    }
}

fn run(scenario: &Scenario, planner: Planner, x: f64) -> Result<RunRow, SimError> {
    let plan = planner.plan(scenario)?;
    let (trace, breakdown) = simulate(scenario, &plan)?;
    Ok(RunRow {
        x,
        planner: planner.name(),
        plan,
        latency_s: trace.finish_time,
        energy_j: breakdown.energy(),
        deadline_met: trace.finish_time <= scenario.deadline_s,
    })
}

/// Every planner at every deadline (seconds); rows ordered deadline-major.
pub fn sweep_deadline(
    scenario: &Scenario,
    deadlines_s: &[f64],
    planners: &[Planner],
    exec: Execution,
) -> Result<Vec<RunRow>, SimError> {
    let jobs: Vec<(f64, Planner)> = deadlines_s
        .iter()
        .flat_map(|&d| planners.iter().map(move |&p| (d, p)))
        .collect();
    exec.map(&jobs, |&(d, p)| run(&scenario.with_deadline(d), p, d))
        .into_iter()
        .collect()
}

/// Every planner on the first `k` devices for `k = 1..=N`.
pub fn sweep_prefix(scenario: &Scenario, planners: &[Planner], exec: Execution) -> Result<Vec<RunRow>, SimError> {
    let n = scenario.num_devices();
    let jobs: Vec<(usize, Planner)> = (1..=n).flat_map(|k| planners.iter().map(move |&p| (k, p))).collect();
    exec.map(&jobs, |&(k, p)| {
        let cluster = scenario.cluster.prefix(k).map_err(crate::scenario::ScenarioError::from)?;
        run(&scenario.with_cluster(cluster)?, p, k as f64)
    })
    .into_iter()
    .collect()
}

/// Continuous relaxation optimum (halo terms dropped) on each device prefix.
/// `None` where the relaxation is infeasible.
pub fn relaxation_by_prefix(scenario: &Scenario) -> Result<Vec<Option<f64>>, SimError> {
    let mut out = Vec::new();
    for k in 1..=scenario.num_devices() {
        let cluster = scenario.cluster.prefix(k).map_err(crate::scenario::ScenarioError::from)?;
        let s = scenario.with_cluster(cluster)?;
        let devices: Vec<usize> = (0..k).collect();
        out.push(solve_p2_best(&s, &devices, HaloMode::Relaxed)?.map(|sol| sol.objective));
    }
    Ok(out)
}

pub fn write_ratio_csv<W: Write>(points: &[RatioPoint], out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["ratio", "rows_device1", "rows_device2", "aggregator", "latency_s", "energy_j"])?;
    for p in points {
        w.write_record([
            p.ratio.to_string(),
            p.rows[0].to_string(),
            p.rows[1].to_string(),
            p.aggregator.to_string(),
            p.latency_s.to_string(),
            p.energy_j.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `x_name` heads the swept column. Energy is left empty when the deadline
/// is missed.
pub fn write_run_csv<W: Write>(rows: &[RunRow], x_name: &str, out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([x_name, "planner", "latency_s", "energy_j", "deadline_met", "fallback", "rows", "aggregator"])?;
    for r in rows {
        w.write_record([
            r.x.to_string(),
            r.planner.to_string(),
            r.latency_s.to_string(),
            if r.deadline_met { r.energy_j.to_string() } else { String::new() },
            r.deadline_met.to_string(),
            r.fallback().to_string(),
            join(&r.plan.rows),
            r.plan.aggregator.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_epoch_csv<W: Write>(records: &[EpochRecord], out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "link_bytes_per_s", "latency_s", "energy_j", "deadline_met", "replanned", "rows", "aggregator"])?;
    for r in records {
        w.write_record([
            r.epoch.to_string(),
            r.link_bytes_per_s.map(|b| b.to_string()).unwrap_or_default(),
            r.latency_s.to_string(),
            r.energy_j.to_string(),
            r.deadline_met.to_string(),
            r.replanned.to_string(),
            join(&r.plan.rows),
            r.plan.aggregator.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn join(rows: &[usize]) -> String {
    rows.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(";")
}

/// Energy and latency of a fixed plan, without the trace.
pub fn plan_costs(scenario: &Scenario, plan: &PartitionPlan) -> Result<(f64, f64), SimError> {
    let b = evaluate(scenario, &plan.rows, plan.aggregator)?;
    Ok((b.t_total, b.energy()))
}
