//! The continuous relaxation P2 over fractions `lambda`.
//!
//! Variables are `(lambda_1..lambda_k, t_1..t_L)` for a candidate device set
//! of size `k` and a fixed aggregator. Row counts at every layer are taken
//! proportional to `lambda` (`a_li = lambda_i H_l`). Transfer terms that do
//! not depend on `lambda` (halo pulls, the layer-1 halo in the initial
//! distribution, the result return) enter as constants; `HaloMode::Relaxed`
//! drops the halo constants so the optimum bounds every integer plan from
//! below.

use crate::cost::{row_bytes, CostError};
use crate::lp::{solve, LpProblem, LpStatus};
use crate::model::halo_rows;
use crate::scenario::Scenario;

use super::PlanError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HaloMode {
    /// Every candidate with a successor in the set pays its halo terms.
    Conservative,
    /// Halo terms are dropped.
    Relaxed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct P2Instance {
    pub problem: LpProblem,
    /// Cluster indices of the candidate devices, in neighbour order.
    pub devices: Vec<usize>,
    pub aggregator: usize,
    pub num_layers: usize,
    /// Energy not captured by the LP objective (joules).
    pub constant_energy: f64,
    /// Index of the `sum_l t_l <= D` row in `problem.a_ub`.
    pub deadline_row: usize,
    latency_coeff: Vec<Vec<f64>>,
    latency_const: Vec<Vec<f64>>,
}

impl P2Instance {
    /// `sum_l max_i` of the modelled per-layer latency at `lambda` (candidate order).
    pub fn latency(&self, lambda: &[f64]) -> f64 {
        let mut total = 0.0;
        for (coeff, constant) in self.latency_coeff.iter().zip(&self.latency_const) {
            let step = coeff
                .iter()
                .zip(constant)
                .zip(lambda)
                .fold(0.0f64, |m, ((a, c), x)| m.max(a * x + c));
            total += step;
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct P2Solution {
    pub status: LpStatus,
    /// Fractions over the whole cluster (zero outside the candidate set).
    pub lambda: Vec<f64>,
    pub t: Vec<f64>,
    /// LP objective plus the constant energy, joules.
    pub objective: f64,
    /// `D` minus the smallest `sum_l t_l` compatible with `lambda`.
    pub deadline_slack: f64,
    pub aggregator: usize,
}

fn link(scenario: &Scenario, from: usize, to: usize) -> Result<f64, CostError> {
    let b = scenario.cluster.bandwidth.get(from, to);
    if b <= 0.0 {
        return Err(CostError::MissingBandwidth { from, to });
    }
    Ok(b)
}

pub fn build_p2(
    scenario: &Scenario,
    devices: &[usize],
    aggregator: usize,
    mode: HaloMode,
) -> Result<P2Instance, PlanError> {
    let cluster = &scenario.cluster;
    let model = &scenario.model;
    let shapes = scenario.shapes();
    let k = devices.len();
    let layers = model.layers.len();
    let n_vars = k + layers;
    let master = cluster.master;
    let first_fc = model.first_fc();
    let eb = scenario.elem_bytes;
    if !devices.contains(&aggregator) {
        return Err(PlanError::Aggregator(aggregator));
    }

    let mut c = vec![0.0; n_vars];
    let mut constant_energy = 0.0;
    let mut latency_coeff = vec![vec![0.0; k]; layers];
    let mut latency_const = vec![vec![0.0; k]; layers];
    let mut memory = Vec::with_capacity(k * layers);

    for (l, layer) in model.layers.iter().enumerate() {
        let shape = &shapes[l];
        let rb = row_bytes(shape, eb);
        let row_kb = rb / 1024.0;
        let h_l = shape.h as f64;
        for (idx, &i) in devices.iter().enumerate() {
            let dev = &cluster.devices[i];
            let has_successor = idx + 1 < k;
            let (work_coeff, work_const) = if layer.is_conv() {
                (h_l * row_kb, 0.0)
            } else if i == aggregator {
                (0.0, h_l * row_kb)
            } else {
                (0.0, 0.0)
            };
            let spk = dev.seconds_per_kb();
            let mut tx_coeff = 0.0;
            let mut tx_const = 0.0;
            if l == 0 {
                if layer.is_conv() {
                    tx_coeff += h_l * rb / link(scenario, master, i)?;
                    if mode == HaloMode::Conservative && has_successor {
                        tx_const += halo_rows(layer) as f64 * rb / link(scenario, master, i)?;
                    }
                } else if i == aggregator {
                    tx_const += h_l * rb / link(scenario, master, i)?;
                }
            } else if layer.is_conv() {
                let h = halo_rows(layer);
                if mode == HaloMode::Conservative && has_successor && h > 0 {
                    tx_const += h as f64 * rb / link(scenario, i, devices[idx + 1])?;
                }
            } else if Some(l) == first_fc && i != aggregator {
                tx_coeff += h_l * rb / link(scenario, i, aggregator)?;
            }
            if l + 1 == layers && i == aggregator && scenario.result_bytes > 0.0 {
                tx_const += scenario.result_bytes / link(scenario, aggregator, scenario.result_device)?;
            }

            let lat_coeff = spk * work_coeff + tx_coeff;
            let lat_const = spk * work_const + tx_const;
            latency_coeff[l][idx] = lat_coeff;
            latency_const[l][idx] = lat_const;
            c[idx] += dev.p_c * spk * work_coeff + dev.p_x * tx_coeff;
            constant_energy += dev.p_c * spk * work_const + dev.p_x * tx_const;
            memory.push((idx, work_coeff, dev.m - work_const));
        }
    }

    let mut problem = LpProblem::new(c);
    // Per-layer memory rows collapse to one upper bound per device; bounds
    // at or above 1 are implied by the simplex row.
    let mut cap = vec![f64::INFINITY; k];
    for (idx, coeff, rhs) in memory {
        if coeff > 0.0 {
            cap[idx] = cap[idx].min(rhs / coeff);
        } else if rhs < 0.0 {
            cap[idx] = f64::NEG_INFINITY;
        }
    }
    for (idx, &bound) in cap.iter().enumerate() {
        let mut row = vec![0.0; n_vars];
        if bound == f64::NEG_INFINITY {
            // A constant load that does not fit: `0 <= -1`.
            problem.add_le(row, -1.0);
        } else if bound < 1.0 {
            row[idx] = 1.0;
            problem.add_le(row, bound);
        }
    }
    for l in 0..layers {
        for idx in 0..k {
            if latency_coeff[l][idx] == 0.0 && latency_const[l][idx] <= 0.0 {
                continue;
            }
            let mut row = vec![0.0; n_vars];
            row[idx] = latency_coeff[l][idx];
            row[k + l] = -1.0;
            problem.add_le(row, -latency_const[l][idx]);
        }
    }
    let mut deadline = vec![0.0; n_vars];
    for l in 0..layers {
        deadline[k + l] = 1.0;
    }
    let deadline_row = problem.add_le(deadline, scenario.deadline_s);
    let mut sum = vec![0.0; n_vars];
    for v in sum.iter_mut().take(k) {
        *v = 1.0;
    }
    problem.add_eq(sum, 1.0);

    Ok(P2Instance {
        problem,
        devices: devices.to_vec(),
        aggregator,
        num_layers: layers,
        constant_energy,
        deadline_row,
        latency_coeff,
        latency_const,
    })
}

pub fn solve_p2(
    scenario: &Scenario,
    devices: &[usize],
    aggregator: usize,
    mode: HaloMode,
) -> Result<P2Solution, PlanError> {
    let inst = build_p2(scenario, devices, aggregator, mode)?;
    let sol = solve(&inst.problem)?;
    let k = devices.len();
    let mut lambda = vec![0.0; scenario.num_devices()];
    if sol.status != LpStatus::Optimal {
        return Ok(P2Solution {
            status: sol.status,
            lambda,
            t: vec![],
            objective: f64::INFINITY,
            deadline_slack: f64::NEG_INFINITY,
            aggregator,
        });
    }
    let local = &sol.x[..k];
    for (idx, &i) in devices.iter().enumerate() {
        lambda[i] = local[idx].max(0.0);
    }
    Ok(P2Solution {
        status: sol.status,
        deadline_slack: scenario.deadline_s - inst.latency(local),
        lambda,
        t: sol.x[k..].to_vec(),
        objective: sol.objective + inst.constant_energy,
        aggregator,
    })
}

/// Best P2 over every aggregator in `devices`; ties go to the lowest index.
/// `None` when every aggregator choice is infeasible.
pub fn solve_p2_best(scenario: &Scenario, devices: &[usize], mode: HaloMode) -> Result<Option<P2Solution>, PlanError> {
    let mut best: Option<P2Solution> = None;
    for &g in devices {
        let sol = solve_p2(scenario, devices, g, mode)?;
        if sol.status != LpStatus::Optimal {
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => sol.objective < b.objective - 1e-12 * b.objective.abs(),
        };
        if better {
            best = Some(sol);
        }
    }
    Ok(best)
}
