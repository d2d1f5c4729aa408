//! Logical-time replay of the bulk-synchronous execution.
//!
//! Every layer is one superstep. A device first receives what the layer
//! needs (initial partition, halo rows or fragments for aggregation), then
//! computes; the aggregator sends the result after the last layer. The next
//! superstep starts when the slowest device is done, so the finish time is
//! the sum of per-layer maxima, accumulated in the same order as the cost
//! model.

use std::io::Write;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::cost::{evaluate, CostBreakdown, CostError, TransferKind};
use crate::partition::{PartitionPlan, PlanError, Planner};
use crate::resources::BandwidthMatrix;
use crate::scenario::{Scenario, ScenarioError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Distribute,
    Compute,
    HaloPull,
    Aggregate,
    Result,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Distribute => "distribute",
            EventKind::Compute => "compute",
            EventKind::HaloPull => "halo_pull",
            EventKind::Aggregate => "aggregate",
            EventKind::Result => "result",
        }
    }

    pub fn is_transfer(&self) -> bool {
        !matches!(self, EventKind::Compute)
    }
}

impl From<TransferKind> for EventKind {
    fn from(kind: TransferKind) -> Self {
        match kind {
            TransferKind::Distribute => EventKind::Distribute,
            TransferKind::HaloPull => EventKind::HaloPull,
            TransferKind::Aggregate => EventKind::Aggregate,
            TransferKind::Result => EventKind::Result,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    /// Device charged with the event (the receiver for pulls and
    /// distribution, the sender for aggregation and the result).
    pub device: usize,
    pub layer: usize,
    pub kind: EventKind,
    pub start_s: f64,
    pub end_s: f64,
    /// Duration as priced by the cost model.
    pub seconds: f64,
    /// Bytes moved, or bytes of input processed for compute events.
    pub bytes: f64,
    pub energy_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub events: Vec<Event>,
    /// Start time of each superstep.
    pub superstep_start: Vec<f64>,
    pub finish_time: f64,
    /// Per-device sum of event durations.
    pub busy: Vec<f64>,
}

impl Trace {
    pub fn energy(&self) -> f64 {
        self.events.iter().map(|e| e.energy_j).sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["device", "layer", "kind", "start_s", "end_s", "bytes"])?;
        for e in &self.events {
            w.write_record([
                e.device.to_string(),
                e.layer.to_string(),
                e.kind.as_str().to_string(),
                e.start_s.to_string(),
                e.end_s.to_string(),
                e.bytes.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

pub fn simulate(scenario: &Scenario, plan: &PartitionPlan) -> Result<(Trace, CostBreakdown), SimError> {
    let breakdown = evaluate(scenario, &plan.rows, plan.aggregator)?;
    let n = scenario.num_devices();
    let mut events = Vec::new();
    let mut busy = vec![0.0; n];
    let mut starts = Vec::with_capacity(breakdown.cells.len());
    let mut clock = 0.0;
    for (l, cells) in breakdown.cells.iter().enumerate() {
        starts.push(clock);
        let mut step = Vec::new();
        for (i, cell) in cells.iter().enumerate() {
            let device = &scenario.cluster.devices[i];
            let mut cursor = clock;
            let mut push = |kind: EventKind, seconds: f64, bytes: f64, energy: f64, cursor: &mut f64| {
                let start = *cursor;
                *cursor += seconds;
                busy[i] += seconds;
                step.push(Event {
                    device: i,
                    layer: l,
                    kind,
                    start_s: start,
                    end_s: *cursor,
                    seconds,
                    bytes,
                    energy_j: energy,
                });
            };
            for t in cell.transfers.iter().filter(|t| t.kind.precedes_compute()) {
                push(t.kind.into(), t.seconds, t.bytes, device.p_x * t.seconds, &mut cursor);
            }
            if cell.rows > 0 {
                push(EventKind::Compute, cell.t_c, cell.workload_kb * 1024.0, cell.e_c, &mut cursor);
            }
            for t in cell.transfers.iter().filter(|t| !t.kind.precedes_compute()) {
                push(t.kind.into(), t.seconds, t.bytes, device.p_x * t.seconds, &mut cursor);
            }
        }
        step.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        events.extend(step);
        clock += breakdown.layer_latency[l];
    }
    let trace = Trace {
        events,
        superstep_start: starts,
        finish_time: clock,
        busy,
    };
    Ok((trace, breakdown))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BandwidthSetting {
    /// Every inter-device link, bytes/s.
    Uniform(f64),
    Matrix(BandwidthMatrix),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Epoch {
    pub bandwidth: BandwidthSetting,
    pub repetitions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochSchedule {
    epochs: Vec<Epoch>,
}

impl EpochSchedule {
    pub fn new(epochs: Vec<Epoch>) -> Result<Self, SimError> {
        if epochs.is_empty() {
            return Err(SimError::Invalid("schedule needs at least one epoch".into()));
        }
        for (k, e) in epochs.iter().enumerate() {
            if e.repetitions == 0 {
                return Err(SimError::Invalid(format!("epoch {k} has zero repetitions")));
            }
            let ok = match &e.bandwidth {
                BandwidthSetting::Uniform(b) => b.is_finite() && *b > 0.0,
                BandwidthSetting::Matrix(m) => m.rows().iter().flatten().all(|v| v.is_finite() && *v >= 0.0),
            };
            if !ok {
                return Err(SimError::Invalid(format!("epoch {k} has a non-positive bandwidth")));
            }
        }
        Ok(Self { epochs })
    }

    /// One epoch per entry, links in bytes/s.
    pub fn uniform(links: &[f64]) -> Result<Self, SimError> {
        Self::new(
            links
                .iter()
                .map(|&b| Epoch {
                    bandwidth: BandwidthSetting::Uniform(b),
                    repetitions: 1,
                })
                .collect(),
        )
    }

    pub fn epochs(&self) -> &[Epoch] {
        &self.epochs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Uniform link speed of the epoch, when it has one.
    pub link_bytes_per_s: Option<f64>,
    pub plan: PartitionPlan,
    pub latency_s: f64,
    pub energy_j: f64,
    pub deadline_met: bool,
    /// Whether the planner ran for this epoch (bandwidth changed).
    pub replanned: bool,
    /// Wall-clock planning time; zero when the previous plan was reused.
    #[serde(skip)]
    pub planning: Duration,
}

/// Replays the schedule, re-planning whenever the bandwidth differs from the
/// previous epoch. Planning time is measured but not added to latency.
pub fn run_epochs(scenario: &Scenario, schedule: &EpochSchedule, planner: Planner) -> Result<Vec<EpochRecord>, SimError> {
    let mut records = Vec::new();
    let mut previous: Option<(&BandwidthSetting, PartitionPlan)> = None;
    let mut index = 0;
    for epoch in schedule.epochs() {
        let cluster = match &epoch.bandwidth {
            BandwidthSetting::Uniform(b) => scenario.cluster.with_uniform_links(*b),
            BandwidthSetting::Matrix(m) => {
                let mut c = scenario.cluster.clone();
                c.bandwidth = m.clone();
                c
            }
        };
        let current = scenario.with_cluster(cluster)?;
        let (plan, planning, replanned) = match &previous {
            Some((bw, plan)) if *bw == &epoch.bandwidth => (plan.clone(), Duration::ZERO, false),
            _ => {
                let started = Instant::now();
                let plan = planner.plan(&current)?;
                (plan, started.elapsed(), true)
            }
        };
        log::info!("epoch {index}: planning took {:.3} ms", planning.as_secs_f64() * 1e3);
        let (trace, breakdown) = simulate(&current, &plan)?;
        for rep in 0..epoch.repetitions {
            records.push(EpochRecord {
                epoch: index,
                link_bytes_per_s: match epoch.bandwidth {
                    BandwidthSetting::Uniform(b) => Some(b),
                    BandwidthSetting::Matrix(_) => None,
                },
                plan: plan.clone(),
                latency_s: trace.finish_time,
                energy_j: breakdown.energy(),
                deadline_met: trace.finish_time <= current.deadline_s,
                replanned: replanned && rep == 0,
                planning: if rep == 0 { planning } else { Duration::ZERO },
            });
            index += 1;
        }
        previous = Some((&epoch.bandwidth, plan));
    }
    Ok(records)
}
