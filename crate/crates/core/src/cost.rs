//! Per-layer, per-device latency and dynamic-energy model.
//!
//! Layer `l` on device `i` costs `T_c = rho_i * r_li / f_i` to compute and
//! `T_x` to receive its inputs: the initial partition (plus first-layer halo)
//! from the master at `l = 0`, a `floor(k/2)`-row halo pull from the next
//! active device for later convolutions (cut short where the image ends),
//! and the fragment hand-off to the aggregator at the first fully-connected
//! layer. The aggregator also pays the result return in the last layer.
//! Energies are `P_c T_c` and `P_x T_x`; the end-to-end latency sums the
//! per-layer maximum of `T_c + T_x`.

use serde::Serialize;
use thiserror::Error;

use crate::model::{halo_rows, ModelDescriptor, Shape};
use crate::partition::PartitionPlan;
use crate::resources::{Cluster, DeviceProfile};
use crate::scenario::Scenario;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("partition rows sum to {got}, expected {expected}")]
    BadPartition { got: usize, expected: usize },
    #[error("plan covers {got} devices, cluster has {expected}")]
    DeviceCount { got: usize, expected: usize },
    #[error("no bandwidth defined from device {from} to device {to}")]
    MissingBandwidth { from: usize, to: usize },
    #[error(
        "layer {layer}: device {device} needs {needed} halo rows but neighbour {neighbour} holds only {available}"
    )]
    HaloSpanViolation {
        layer: usize,
        device: usize,
        neighbour: usize,
        needed: usize,
        available: usize,
    },
    #[error("aggregator index {0} out of range")]
    BadAggregator(usize),
}

/// Rows per layer and device.
///
/// `held[l][i]` is the slice of layer `l`'s input that device `i` owns after
/// propagating the layer-1 partition; `compute[l][i]` is what it actually
/// processes. The two differ only for fully-connected layers, which run
/// entirely on the aggregator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowAssignment {
    pub held: Vec<Vec<usize>>,
    pub compute: Vec<Vec<usize>>,
    pub aggregator: usize,
}

/// Output-row distribution of one convolution: output row `j` belongs to the
/// device whose input segment contains row `min(j * s, H_in - 1)`.
pub fn anchor_rows(input: &[usize], h_in: usize, h_out: usize, stride: usize) -> Vec<usize> {
    let mut out = vec![0usize; input.len()];
    if h_in == 0 {
        return out;
    }
    let mut device = 0usize;
    let mut seg_end = input.first().copied().unwrap_or(0);
    for j in 0..h_out {
        let anchor = (j * stride).min(h_in - 1);
        while anchor >= seg_end && device + 1 < input.len() {
            device += 1;
            seg_end += input[device];
        }
        out[device] += 1;
    }
    out
}

pub fn propagate_rows(
    model: &ModelDescriptor,
    shapes: &[Shape],
    rows: &[usize],
    aggregator: usize,
) -> Result<RowAssignment, CostError> {
    let expected = model.input_shape.h;
    let got: usize = rows.iter().sum();
    if got != expected {
        return Err(CostError::BadPartition { got, expected });
    }
    if aggregator >= rows.len() {
        return Err(CostError::BadAggregator(aggregator));
    }
    let n = rows.len();
    let mut held = Vec::with_capacity(model.layers.len());
    let mut compute = Vec::with_capacity(model.layers.len());
    let mut current = rows.to_vec();
    for (l, layer) in model.layers.iter().enumerate() {
        held.push(current.clone());
        if layer.is_conv() {
            compute.push(current.clone());
            let h_in = shapes[l].h;
            let h_out = shapes.get(l + 1).map(|s| s.h).unwrap_or_else(|| {
                crate::model::layer_output(layer, shapes[l], l)
                    .expect("validated model")
                    .h
            });
            current = anchor_rows(&current, h_in, h_out, layer.s);
        } else {
            let mut all = vec![0usize; n];
            all[aggregator] = shapes[l].h;
            compute.push(all.clone());
            // FC output is a single row on the aggregator.
            all[aggregator] = 1;
            current = all;
        }
    }
    Ok(RowAssignment {
        held,
        compute,
        aggregator,
    })
}

/// Size of `rows` rows of `shape` in KB.
pub fn workload_size(shape: &Shape, rows: usize, elem_bytes: usize) -> f64 {
    row_bytes(shape, elem_bytes) * rows as f64 / 1024.0
}

pub fn row_bytes(shape: &Shape, elem_bytes: usize) -> f64 {
    (shape.row_elems() * elem_bytes) as f64
}

pub fn compute_time(workload_kb: f64, device: &DeviceProfile) -> f64 {
    device.rho * workload_kb / device.f
}

pub fn compute_energy(t_c: f64, device: &DeviceProfile) -> f64 {
    device.p_c * t_c
}

pub fn transmission_energy(t_x: f64, device: &DeviceProfile) -> f64 {
    device.p_x * t_x
}

/// Seconds to move `bytes` from `from` to `to`.
pub fn transfer_time(cluster: &Cluster, from: usize, to: usize, bytes: f64) -> Result<f64, CostError> {
    if bytes == 0.0 {
        return Ok(0.0);
    }
    let b = cluster.bandwidth.get(from, to);
    if b <= 0.0 {
        return Err(CostError::MissingBandwidth { from, to });
    }
    Ok(bytes / b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferKind {
    Distribute,
    HaloPull,
    Aggregate,
    Result,
}

impl TransferKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TransferKind::Distribute => "distribute",
            TransferKind::HaloPull => "halo_pull",
            TransferKind::Aggregate => "aggregate",
            TransferKind::Result => "result",
        }
    }

    /// Whether the transfer completes before the layer's compute starts.
    pub fn precedes_compute(&self) -> bool {
        !matches!(self, TransferKind::Result)
    }
}

/// One data movement charged to a device's `T_x`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transfer {
    pub kind: TransferKind,
    pub from: usize,
    pub to: usize,
    pub bytes: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct CellCost {
    pub rows: usize,
    pub workload_kb: f64,
    pub t_c: f64,
    pub t_x: f64,
    pub e_c: f64,
    pub e_x: f64,
    pub transfers: Vec<Transfer>,
}

impl CellCost {
    pub fn busy(&self) -> f64 {
        self.t_c + self.t_x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostBreakdown {
    /// `cells[l][i]`.
    pub cells: Vec<Vec<CellCost>>,
    /// `max_i (T_c + T_x)` per layer.
    pub layer_latency: Vec<f64>,
    pub e_c_total: f64,
    pub e_x_total: f64,
    pub t_total: f64,
    pub rows: RowAssignment,
}

impl CostBreakdown {
    pub fn energy(&self) -> f64 {
        self.e_c_total + self.e_x_total
    }
}

/// Superstep duration: the slowest device's compute plus exchange.
pub fn superstep_duration(cells: &[CellCost]) -> f64 {
    cells.iter().fold(0.0f64, |acc, c| acc.max(c.busy()))
}

/// Next device after `i` that holds rows, if any.
fn successor(rows: &[usize], i: usize) -> Option<usize> {
    (i + 1..rows.len()).find(|&j| rows[j] > 0)
}

/// Costs of an explicit row partition with a given aggregator.
pub fn evaluate(scenario: &Scenario, rows: &[usize], aggregator: usize) -> Result<CostBreakdown, CostError> {
    let cluster = &scenario.cluster;
    let n = cluster.len();
    if rows.len() != n {
        return Err(CostError::DeviceCount {
            got: rows.len(),
            expected: n,
        });
    }
    let model = &scenario.model;
    let shapes = scenario.shapes();
    let assignment = propagate_rows(model, &shapes, rows, aggregator)?;
    let eb = scenario.elem_bytes;
    let master = cluster.master;
    let first_fc = model.first_fc();
    let last = model.layers.len() - 1;

    let mut cells = Vec::with_capacity(model.layers.len());
    for (l, layer) in model.layers.iter().enumerate() {
        let shape = &shapes[l];
        let rb = row_bytes(shape, eb);
        let compute = &assignment.compute[l];
        let held = &assignment.held[l];
        let mut layer_cells = Vec::with_capacity(n);
        for (i, device) in cluster.devices.iter().enumerate() {
            let mut transfers = Vec::new();
            let own = compute[i];

            if l == 0 && own > 0 {
                // rows below the segment up to the halo depth; past the last
                // segment the image ends and padding needs no transfer
                let below: usize = compute[i + 1..].iter().sum();
                let halo = if layer.is_conv() { halo_rows(layer).min(below) } else { 0 };
                let bytes = (own + halo) as f64 * rb;
                transfers.push(Transfer {
                    kind: TransferKind::Distribute,
                    from: master,
                    to: i,
                    bytes,
                    seconds: transfer_time(cluster, master, i, bytes)?,
                });
            } else if l > 0 && layer.is_conv() && own > 0 {
                let h = halo_rows(layer);
                if h > 0 {
                    if let Some(next) = successor(compute, i) {
                        // a short neighbour is fine when it is the last active
                        // device: the rest of the halo is bottom padding
                        if compute[next] < h && successor(compute, next).is_some() {
                            return Err(CostError::HaloSpanViolation {
                                layer: l,
                                device: i,
                                neighbour: next,
                                needed: h,
                                available: compute[next],
                            });
                        }
                        let bytes = h.min(compute[next]) as f64 * rb;
                        transfers.push(Transfer {
                            kind: TransferKind::HaloPull,
                            from: next,
                            to: i,
                            bytes,
                            // priced on the puller's link b[i][next]
                            seconds: transfer_time(cluster, i, next, bytes)?,
                        });
                    }
                }
            } else if l > 0 && Some(l) == first_fc && i != aggregator && held[i] > 0 {
                let bytes = held[i] as f64 * rb;
                transfers.push(Transfer {
                    kind: TransferKind::Aggregate,
                    from: i,
                    to: aggregator,
                    bytes,
                    seconds: transfer_time(cluster, i, aggregator, bytes)?,
                });
            }

            if l == last && i == aggregator {
                let bytes = scenario.result_bytes;
                transfers.push(Transfer {
                    kind: TransferKind::Result,
                    from: aggregator,
                    to: scenario.result_device,
                    bytes,
                    seconds: transfer_time(cluster, aggregator, scenario.result_device, bytes)?,
                });
            }

            let workload_kb = workload_size(shape, own, eb);
            let t_c = compute_time(workload_kb, device);
            let t_x = transfers.iter().map(|t| t.seconds).sum::<f64>();
            layer_cells.push(CellCost {
                rows: own,
                workload_kb,
                t_c,
                t_x,
                e_c: compute_energy(t_c, device),
                e_x: transmission_energy(t_x, device),
                transfers,
            });
        }
        cells.push(layer_cells);
    }

    let layer_latency: Vec<f64> = cells.iter().map(|c| superstep_duration(c)).collect();
    let mut t_total = 0.0;
    for d in &layer_latency {
        t_total += d;
    }
    let mut e_c_total = 0.0;
    let mut e_x_total = 0.0;
    for layer in &cells {
        for c in layer {
            e_c_total += c.e_c;
            e_x_total += c.e_x;
        }
    }
    Ok(CostBreakdown {
        cells,
        layer_latency,
        e_c_total,
        e_x_total,
        t_total,
        rows: assignment,
    })
}

pub fn total_costs(scenario: &Scenario, plan: &PartitionPlan) -> Result<CostBreakdown, CostError> {
    evaluate(scenario, &plan.rows, plan.aggregator)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LayerConfig, ModelDescriptor};
    use crate::resources::BandwidthMatrix;

    fn device(rho: f64, f: f64, p_c: f64, p_x: f64) -> DeviceProfile {
        DeviceProfile {
            name: "d".into(),
            rho,
            f,
            m: 1e9,
            p_c,
            p_x,
        }
    }

    #[test]
    fn anchor_rule_same_conv() {
        assert_eq!(anchor_rows(&[6, 6], 12, 12, 1), vec![6, 6]);
    }

    #[test]
    fn anchor_rule_strided() {
        // anchors 0,2,4,6,8 split at row 6
        assert_eq!(anchor_rows(&[6, 6], 12, 5, 2), vec![3, 2]);
    }

    #[test]
    fn anchor_rule_skips_empty_devices() {
        assert_eq!(anchor_rows(&[4, 0, 8], 12, 12, 1), vec![4, 0, 8]);
        assert_eq!(anchor_rows(&[0, 12], 12, 6, 2), vec![0, 6]);
    }

    #[test]
    fn single_device_keeps_everything() {
        let model = ModelDescriptor::new(
            "m",
            Shape::new(12, 12, 1),
            vec![
                LayerConfig::conv(3, 1, 1, 1, 1),
                LayerConfig::conv(3, 1, 1, 2, 0),
                LayerConfig::conv(1, 1, 1, 1, 0),
            ],
        )
        .unwrap();
        let shapes = crate::model::propagate_shape(&model).unwrap();
        let ra = propagate_rows(&model, &shapes, &[12], 0).unwrap();
        assert_eq!(ra.compute, vec![vec![12], vec![12], vec![5]]);
    }

    #[test]
    fn bad_partition_sum() {
        let model = ModelDescriptor::new("m", Shape::new(12, 12, 1), vec![LayerConfig::conv(3, 1, 1, 1, 1)]).unwrap();
        let shapes = crate::model::propagate_shape(&model).unwrap();
        assert_eq!(
            propagate_rows(&model, &shapes, &[5, 6], 0),
            Err(CostError::BadPartition { got: 11, expected: 12 })
        );
    }

    #[test]
    fn workload_sizes() {
        assert_eq!(workload_size(&Shape::new(6, 6, 1), 0, 4), 0.0);
        assert_eq!(workload_size(&Shape::new(6, 6, 1), 3, 4), 0.0703125);
        assert_eq!(workload_size(&Shape::new(224, 224, 3), 224, 4), 588.0);
    }

    #[test]
    fn compute_and_energy() {
        let pi = device(615.0, 1.2e9, 3.0, 1.0);
        assert_eq!(compute_time(0.0, &pi), 0.0);
        let t = compute_time(100.0, &pi);
        assert!((t - 5.125e-5).abs() < 1e-18);
        assert!((compute_energy(5.125e-5, &pi) - 1.5375e-4).abs() < 1e-18);
        assert!((transmission_energy(2.0, &pi) - 2.0).abs() < 1e-18);
    }

    #[test]
    fn transfer_paths() {
        let devs = vec![device(1.0, 1.0, 1.0, 1.0), device(1.0, 1.0, 1.0, 1.0)];
        let mut bw = BandwidthMatrix::new(2);
        bw.set(0, 1, 1e6);
        let cluster = Cluster::new(devs, bw, 0).unwrap();
        // master to itself rides the memory bus
        assert_eq!(transfer_time(&cluster, 0, 0, 12.8e9).unwrap(), 1.0);
        // 1 row x 6 cols x 1 ch x 4 B halo
        assert!((transfer_time(&cluster, 0, 1, 24.0).unwrap() - 2.4e-5).abs() < 1e-18);
        assert_eq!(
            transfer_time(&cluster, 1, 0, 24.0),
            Err(CostError::MissingBandwidth { from: 1, to: 0 })
        );
    }
}
