//! Random scenarios and plans for property checks and the `fuzz` command.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::cost::evaluate;
use crate::model::{LayerConfig, ModelDescriptor, Shape};
use crate::oracle::compositions;
use crate::partition::{select_aggregator, PartitionPlan, PlannerKind};
use crate::resources::{BandwidthMatrix, Cluster, DeviceProfile};
use crate::scenario::Scenario;
use crate::sim::{simulate, SimError};

/// Size bounds for generated instances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuzzLimits {
    pub max_devices: usize,
    pub min_rows: usize,
    pub max_rows: usize,
    /// Total layers, a fully-connected tail included.
    pub max_layers: usize,
    /// Allow strides above one.
    pub strided: bool,
}

impl FuzzLimits {
    /// Instances small enough for exhaustive search.
    pub const SMALL: FuzzLimits = FuzzLimits {
        max_devices: 3,
        min_rows: 8,
        max_rows: 24,
        max_layers: 4,
        strided: false,
    };

    pub const MEDIUM: FuzzLimits = FuzzLimits {
        max_devices: 6,
        min_rows: 8,
        max_rows: 64,
        max_layers: 8,
        strided: true,
    };
}

/// Same-padded convolutions followed by one or two fully-connected layers.
pub fn random_model<R: Rng>(rng: &mut R, limits: &FuzzLimits) -> ModelDescriptor {
    let h = rng.gen_range(limits.min_rows..=limits.max_rows);
    let w = rng.gen_range(4..=16);
    let c = rng.gen_range(1..=4);
    let total = rng.gen_range(2..=limits.max_layers.max(2));
    let fc = if total >= 3 { rng.gen_range(1..=2) } else { 1 };
    let convs = total - fc;
    let mut layers = Vec::with_capacity(total);
    let mut c_in = c;
    let mut rows = h;
    for _ in 0..convs {
        let k = *[1, 3, 3, 5].choose(rng).expect("non-empty");
        let s = if limits.strided && rows >= 8 && rng.gen_bool(0.3) { 2 } else { 1 };
        let c_out = rng.gen_range(2..=32);
        layers.push(LayerConfig::conv(k, c_in, c_out, s, k / 2));
        rows = (rows - 1) / s + 1;
        c_in = c_out;
    }
    for _ in 0..fc {
        let c_out = rng.gen_range(8..=256);
        layers.push(LayerConfig::fully_connected(c_in, c_out));
        c_in = c_out;
    }
    ModelDescriptor::new("fuzz", Shape::new(h, w, c), layers).expect("generated stacks are well formed")
}

pub fn random_device<R: Rng>(rng: &mut R, name: String) -> DeviceProfile {
    DeviceProfile {
        name,
        rho: rng.gen_range(1.0e5..1.0e6),
        f: rng.gen_range(0.8e9..3.6e9),
        m: rng.gen_range(64.0..4096.0),
        p_c: rng.gen_range(1.0..12.0),
        p_x: rng.gen_range(0.1..2.0),
    }
}

/// Heterogeneous links between 0.25 and 5 MB/s; the master is random.
pub fn random_cluster<R: Rng>(rng: &mut R, n: usize) -> Cluster {
    let devices = (0..n).map(|i| random_device(rng, format!("dev-{i}"))).collect();
    let mut bw = BandwidthMatrix::new(n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                bw.set(i, j, rng.gen_range(0.25e6..5.0e6));
            }
        }
    }
    let master = rng.gen_range(0..n);
    Cluster::new(devices, bw, master).expect("generated clusters are valid")
}

/// Deadline between 0.3x and 1.5x the fastest single-device latency.
pub fn random_scenario<R: Rng>(rng: &mut R, limits: &FuzzLimits) -> Scenario {
    let model = random_model(rng, limits);
    let n = rng.gen_range(1..=limits.max_devices);
    let cluster = random_cluster(rng, n);
    let elem_bytes = *[1, 4].choose(rng).expect("non-empty");
    let base = Scenario::new(model, cluster, 1.0e9)
        .and_then(|s| s.with_elem_bytes(elem_bytes))
        .expect("generated scenarios are valid");
    let h = base.input_rows();
    let fastest = (0..n)
        .filter_map(|i| {
            let plan = PartitionPlan::single_device(PlannerKind::Manual, n, i, h);
            evaluate(&base, &plan.rows, i).ok().map(|b| b.t_total)
        })
        .fold(f64::INFINITY, f64::min);
    base.with_deadline(fastest * rng.gen_range(0.3..1.5))
}

/// A random composition of H with a latency-minimising aggregator, redrawn
/// until the cost model accepts it.
pub fn random_plan<R: Rng>(rng: &mut R, scenario: &Scenario) -> PartitionPlan {
    let n = scenario.num_devices();
    let h = scenario.input_rows();
    loop {
        let mut cuts: Vec<usize> = (0..n - 1).map(|_| rng.gen_range(0..=h)).collect();
        cuts.sort_unstable();
        let mut rows = Vec::with_capacity(n);
        let mut prev = 0;
        for &c in &cuts {
            rows.push(c - prev);
            prev = c;
        }
        rows.push(h - prev);
        let aggregator = if rng.gen_bool(0.5) {
            match select_aggregator(scenario, &rows) {
                Ok(g) => g,
                Err(_) => continue,
            }
        } else {
            rng.gen_range(0..n)
        };
        if evaluate(scenario, &rows, aggregator).is_ok() {
            return PartitionPlan::from_rows(PlannerKind::Manual, rows, aggregator);
        }
    }
}

/// Number of plans the exhaustive search would visit.
pub fn search_space(scenario: &Scenario) -> usize {
    compositions(scenario.input_rows(), scenario.num_devices()).len() * scenario.num_devices()
}

/// Agreement between the simulator and the closed-form cost model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub finish_time: f64,
    pub t_total: f64,
    pub event_energy: f64,
    pub model_energy: f64,
}

impl IdentityCheck {
    pub fn latency_exact(&self) -> bool {
        self.finish_time.to_bits() == self.t_total.to_bits()
    }

    pub fn energy_rel_err(&self) -> f64 {
        let scale = self.model_energy.abs().max(f64::MIN_POSITIVE);
        (self.event_energy - self.model_energy).abs() / scale
    }
}

pub fn check_identity(scenario: &Scenario, plan: &PartitionPlan) -> Result<IdentityCheck, SimError> {
    let (trace, breakdown) = simulate(scenario, plan)?;
    Ok(IdentityCheck {
        finish_time: trace.finish_time,
        t_total: breakdown.t_total,
        event_energy: trace.energy(),
        model_energy: breakdown.energy(),
    })
}
