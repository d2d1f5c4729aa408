//! Threshold-based recursive partitioning.
//!
//! Solve the relaxation over the candidate set; if the fractional solution
//! leaves an active device below the neighbour threshold, drop every
//! zero-share device together with the smallest positive share and try
//! again. An empty candidate set (or an infeasible relaxation) hands over to
//! the full-offload fallback.
//!
//! The rounded plan is refined by a short local search over integer row
//! moves between candidates and over the aggregator, first towards meeting
//! the deadline and then towards lower energy.

use crate::model::layer1_threshold;
use crate::scenario::Scenario;

use super::{
    checked_costs, fallback_full_offload, round_plan, solve_p2_best, HaloMode, P2Solution, PartitionPlan, PlanError,
    PlannerKind,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoEdgeConfig {
    pub halo_mode: HaloMode,
    /// Re-solves with a tightened deadline when the rounded plan overshoots.
    pub tighten_rounds: usize,
    /// Improving moves allowed in the integer local search; 0 disables it.
    pub polish_steps: usize,
}

impl Default for CoEdgeConfig {
    fn default() -> Self {
        Self {
            halo_mode: HaloMode::Conservative,
            tighten_rounds: 4,
            polish_steps: 32,
        }
    }
}

pub fn plan_coedge(scenario: &Scenario) -> Result<PartitionPlan, PlanError> {
    plan_coedge_with(scenario, &CoEdgeConfig::default())
}

const ZERO_ROWS: f64 = 1e-9;

fn active_share(sol: &P2Solution, candidates: &[usize], h: usize) -> Vec<usize> {
    candidates
        .iter()
        .copied()
        .filter(|&i| sol.lambda[i] * h as f64 > ZERO_ROWS)
        .collect()
}

fn meets_threshold(sol: &P2Solution, active: &[usize], h: usize, threshold: usize) -> bool {
    active.len() < 2 || active.iter().all(|&i| sol.lambda[i] * h as f64 >= threshold as f64 - 1e-9)
}

/// Zero-share devices and the smallest positive share leave the set.
fn shrink(sol: &P2Solution, active: &[usize]) -> Vec<usize> {
    let weakest = active
        .iter()
        .copied()
        .min_by(|&a, &b| sol.lambda[a].total_cmp(&sol.lambda[b]).then(a.cmp(&b)));
    active.iter().copied().filter(|&i| Some(i) != weakest).collect()
}

pub fn plan_coedge_with(scenario: &Scenario, config: &CoEdgeConfig) -> Result<PartitionPlan, PlanError> {
    let h = scenario.input_rows();
    let threshold = layer1_threshold(&scenario.model);
    let mut candidates: Vec<usize> = (0..scenario.num_devices()).collect();
    let mut recursions = 0;
    loop {
        if candidates.is_empty() {
            let mut plan = rescue(scenario, config)?;
            plan.recursions = recursions;
            return Ok(plan);
        }
        recursions += 1;
        let sol = match solve_p2_best(scenario, &candidates, config.halo_mode)? {
            Some(sol) => Some(sol),
            // Halo constants can make the conservative relaxation infeasible
            // although an integer plan exists; start from the relaxed one.
            None if config.halo_mode == HaloMode::Conservative => {
                solve_p2_best(scenario, &candidates, HaloMode::Relaxed)?
            }
            None => None,
        };
        let Some(sol) = sol else {
            log::info!("relaxation infeasible over {candidates:?}");
            candidates.clear();
            continue;
        };
        let active = active_share(&sol, &candidates, h);
        if !meets_threshold(&sol, &active, h, threshold) {
            log::debug!("threshold {threshold} violated by {:?}", sol.lambda);
            candidates = shrink(&sol, &active);
            continue;
        }
        match realise(scenario, &candidates, sol.clone(), threshold, config) {
            Ok(mut plan) => {
                if config.halo_mode == HaloMode::Conservative && config.polish_steps > 0 {
                    if let Some(alt) = relaxed_start(scenario, &candidates, threshold, config)? {
                        plan = cheaper(scenario, plan, alt);
                    }
                }
                plan.recursions = recursions;
                return Ok(plan);
            }
            Err(reason) => {
                log::debug!("rounded plan rejected over {candidates:?}: {reason}");
                candidates = shrink(&sol, &active);
            }
        }
    }
}

/// The relaxed optimum rounded and searched from, as a second starting
/// point; the two relaxations bracket the halo cost.
fn relaxed_start(
    scenario: &Scenario,
    candidates: &[usize],
    threshold: usize,
    config: &CoEdgeConfig,
) -> Result<Option<PartitionPlan>, PlanError> {
    let Some(sol) = solve_p2_best(scenario, candidates, HaloMode::Relaxed)? else {
        return Ok(None);
    };
    let relaxed = CoEdgeConfig {
        tighten_rounds: 0,
        ..*config
    };
    Ok(realise(scenario, candidates, sol, threshold, &relaxed).ok())
}

/// Lower-energy of two deadline-meeting plans; the first wins ties.
fn cheaper(scenario: &Scenario, a: PartitionPlan, b: PartitionPlan) -> PartitionPlan {
    let energy = |p: &PartitionPlan| checked_costs(scenario, p).map_or(f64::INFINITY, |c| c.energy());
    if energy(&b) < energy(&a) {
        PartitionPlan {
            lp_objective: a.lp_objective,
            deadline_slack: a.deadline_slack,
            ..b
        }
    } else {
        a
    }
}

/// Last resort before the fallback: search outward from the full-offload
/// plan over every device. The fallback stands unless the search reaches a
/// plan that meets the deadline.
fn rescue(scenario: &Scenario, config: &CoEdgeConfig) -> Result<PartitionPlan, PlanError> {
    let fallback = fallback_full_offload(scenario)?;
    if config.polish_steps > 0 {
        let all: Vec<usize> = (0..scenario.num_devices()).collect();
        let start = checked_costs(scenario, &fallback).map(|b| (b.t_total, b.energy()));
        let (t, e) = start.unwrap_or((f64::INFINITY, f64::INFINITY));
        let mut seed = fallback.clone();
        seed.planner = PlannerKind::Coedge;
        let (plan, latency) = polish(scenario, &all, seed, t, e, config.polish_steps);
        if latency <= scenario.deadline_s {
            log::info!("relaxation gave no usable partition; local search found {:?}", plan.rows);
            return Ok(plan);
        }
    }
    log::info!("no feasible cooperative partition; falling back to full offload");
    Ok(fallback)
}

/// Rounds a fractional solution and checks it against the integer model.
/// A deadline overshoot caused by rounding or by halo terms is absorbed by
/// re-solving against a deadline reduced by the overshoot.
fn realise(
    scenario: &Scenario,
    candidates: &[usize],
    mut sol: P2Solution,
    threshold: usize,
    config: &CoEdgeConfig,
) -> Result<PartitionPlan, String> {
    let h = scenario.input_rows();
    let deadline = scenario.deadline_s;
    let mut effective = deadline;
    for _ in 0..=config.tighten_rounds {
        let rows = round_plan(&sol.lambda, h, threshold).map_err(|e| e.to_string())?;
        let plan = PartitionPlan {
            planner: PlannerKind::Coedge,
            lambda: sol.lambda.clone(),
            rows,
            aggregator: sol.aggregator,
            lp_objective: Some(sol.objective),
            deadline_slack: Some(sol.deadline_slack + (deadline - effective)),
            recursions: 0,
        };
        // An invalid rounding is only a starting point for the search.
        let start = checked_costs(scenario, &plan).map(|b| (b.t_total, b.energy()));
        let (plan, latency) = match start {
            Ok((t, e)) => polish(scenario, candidates, plan, t, e, config.polish_steps),
            Err(e) if config.polish_steps == 0 => return Err(e.to_string()),
            Err(_) => polish(scenario, candidates, plan, f64::INFINITY, f64::INFINITY, config.polish_steps),
        };
        if !latency.is_finite() {
            return Err("no valid plan near the rounded solution".into());
        }
        if latency <= deadline {
            return Ok(plan);
        }
        effective -= latency - deadline;
        if effective <= 0.0 {
            break;
        }
        let tightened = scenario.with_deadline(effective);
        sol = solve_p2_best(&tightened, candidates, config.halo_mode)
            .map_err(|e| e.to_string())?
            .ok_or_else(|| format!("infeasible at tightened deadline {effective}"))?;
        let active = active_share(&sol, candidates, h);
        if !meets_threshold(&sol, &active, h, threshold) {
            return Err("threshold violated at tightened deadline".into());
        }
    }
    Err(format!("rounded plan misses the {deadline} s deadline"))
}

/// Steepest descent on `(deadline overshoot, energy)`. A move either
/// shifts rows from one candidate to another (powers of two, everything,
/// everything but one row or everything but the threshold), optionally
/// handing aggregation to the receiver, or just moves the aggregation. Only plans passing the validator are
/// visited. Returns the final plan and its latency.
fn polish(
    scenario: &Scenario,
    candidates: &[usize],
    mut plan: PartitionPlan,
    mut latency: f64,
    mut energy: f64,
    steps: usize,
) -> (PartitionPlan, f64) {
    let h = scenario.input_rows();
    let threshold = layer1_threshold(&scenario.model);
    let deadline = scenario.deadline_s;
    let key = |t: f64, e: f64| ((t - deadline).max(0.0), e);
    for _ in 0..steps {
        let mut neighbours: Vec<(Vec<usize>, usize)> = candidates
            .iter()
            .filter(|&&g| g != plan.aggregator)
            .map(|&g| (plan.rows.clone(), g))
            .collect();
        for &from in candidates {
            let held = plan.rows[from];
            let mut amounts: Vec<usize> = std::iter::successors(Some(1), |d| Some(d * 2))
                .take_while(|&d| d <= held)
                .chain([held, held.saturating_sub(1), held.saturating_sub(threshold)])
                .filter(|&d| d > 0)
                .collect();
            amounts.sort_unstable();
            amounts.dedup();
            for &to in candidates {
                if from == to {
                    continue;
                }
                for &d in &amounts {
                    let mut rows = plan.rows.clone();
                    rows[from] -= d;
                    rows[to] += d;
                    if to != plan.aggregator {
                        neighbours.push((rows.clone(), to));
                    }
                    neighbours.push((rows, plan.aggregator));
                }
            }
        }
        let mut best: Option<(Vec<usize>, usize, f64, f64)> = None;
        let mut best_key = key(latency, energy);
        for (rows, g) in neighbours {
            let trial = PartitionPlan::from_rows(PlannerKind::Coedge, rows, g);
            let Ok(b) = checked_costs(scenario, &trial) else { continue };
            let k = key(b.t_total, b.energy());
            if k.0 < best_key.0 || (k.0 == best_key.0 && k.1 < best_key.1 * (1.0 - 1e-12)) {
                best_key = k;
                best = Some((trial.rows, g, b.t_total, b.energy()));
            }
        }
        let Some((rows, g, t, e)) = best else { break };
        plan.lambda = rows.iter().map(|&a| a as f64 / h as f64).collect();
        plan.rows = rows;
        plan.aggregator = g;
        latency = t;
        energy = e;
    }
    (plan, latency)
}
