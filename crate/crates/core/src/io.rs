//! Model, cluster and plan documents.
//!
//! Models and clusters are TOML; plans are JSON.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{evaluate, CostError};
use crate::model::{LayerConfig, ModelDescriptor, ModelError, Shape};
use crate::partition::PartitionPlan;
use crate::resources::{BandwidthMatrix, Cluster, DeviceProfile, ResourceError, DEFAULT_MEMORY_BANDWIDTH};
use crate::scenario::{Scenario, ScenarioError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: std::io::Error },
    #[error("parse error in {origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("{origin}: {source}")]
    Model { origin: String, source: ModelError },
    #[error("{origin}: {source}")]
    Resource { origin: String, source: ResourceError },
    #[error("{origin}: {source}")]
    Scenario { origin: String, source: ScenarioError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    name: String,
    /// Bytes per feature-map element, when the model fixes it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    elem_bytes: Option<usize>,
    input_shape: Shape,
    layers: Vec<LayerConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceEntry {
    name: String,
    rho: f64,
    f_hz: f64,
    m_kb: f64,
    p_c_watts: f64,
    p_x_watts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkEntry {
    from: usize,
    to: usize,
    bytes_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClusterFile {
    #[serde(default)]
    master: usize,
    /// Diagonal override, bytes/s.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mem_bandwidth: Option<f64>,
    /// Applied to every inter-device pair before explicit entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    default_bytes_per_s: Option<f64>,
    /// Mirror each entry to the reverse direction unless given explicitly.
    #[serde(default)]
    symmetric: bool,
    devices: Vec<DeviceEntry>,
    #[serde(default)]
    bandwidth: Vec<LinkEntry>,
}

fn parse_err(origin: &str, e: impl std::fmt::Display) -> IoError {
    IoError::Parse {
        origin: origin.to_string(),
        message: e.to_string(),
    }
}

fn read(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// A model file: the descriptor plus an optional element width.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDocument {
    pub model: ModelDescriptor,
    pub elem_bytes: Option<usize>,
}

pub fn parse_model_document(text: &str, origin: &str) -> Result<ModelDocument, IoError> {
    let file: ModelFile = toml::from_str(text).map_err(|e| parse_err(origin, e))?;
    let model = ModelDescriptor::new(file.name, file.input_shape, file.layers).map_err(|source| IoError::Model {
        origin: origin.to_string(),
        source,
    })?;
    Ok(ModelDocument {
        model,
        elem_bytes: file.elem_bytes,
    })
}

pub fn parse_model(text: &str, origin: &str) -> Result<ModelDescriptor, IoError> {
    parse_model_document(text, origin).map(|d| d.model)
}

pub fn load_model_document(path: &Path) -> Result<ModelDocument, IoError> {
    parse_model_document(&read(path)?, &path.display().to_string())
}

pub fn load_model(path: &Path) -> Result<ModelDescriptor, IoError> {
    load_model_document(path).map(|d| d.model)
}

pub fn model_to_toml(model: &ModelDescriptor, elem_bytes: Option<usize>) -> String {
    let file = ModelFile {
        elem_bytes,
        name: model.name.clone(),
        input_shape: model.input_shape,
        layers: model.layers.clone(),
    };
    toml::to_string(&file).expect("model documents always serialize")
}

pub fn parse_cluster(text: &str, origin: &str) -> Result<Cluster, IoError> {
    let file: ClusterFile = toml::from_str(text).map_err(|e| parse_err(origin, e))?;
    let resource = |source| IoError::Resource {
        origin: origin.to_string(),
        source,
    };
    let invariant = |field: String, reason: String| resource(ResourceError::InvariantViolation { field, reason });
    let n = file.devices.len();
    let mem = file.mem_bandwidth.unwrap_or(DEFAULT_MEMORY_BANDWIDTH);
    let mut bw = BandwidthMatrix::with_memory_bandwidth(n, mem);
    if let Some(link) = file.default_bytes_per_s {
        if !(link.is_finite() && link > 0.0) {
            return Err(invariant("default_bytes_per_s".into(), format!("must be > 0, got {link}")));
        }
        bw.set_all_links(link);
    }
    let mut explicit = vec![false; n * n];
    for (k, e) in file.bandwidth.iter().enumerate() {
        if e.from >= n || e.to >= n {
            return Err(invariant(
                format!("bandwidth[{k}]"),
                format!("pair ({}, {}) out of range for {n} devices", e.from, e.to),
            ));
        }
        if !(e.bytes_per_s.is_finite() && e.bytes_per_s > 0.0) {
            return Err(invariant(
                format!("bandwidth[{k}].bytes_per_s"),
                format!("must be > 0, got {}", e.bytes_per_s),
            ));
        }
        bw.set(e.from, e.to, e.bytes_per_s);
        explicit[e.from * n + e.to] = true;
    }
    if file.symmetric {
        for e in &file.bandwidth {
            if !explicit[e.to * n + e.from] {
                bw.set(e.to, e.from, e.bytes_per_s);
            }
        }
    }
    let devices = file
        .devices
        .into_iter()
        .map(|d| DeviceProfile {
            name: d.name,
            rho: d.rho,
            f: d.f_hz,
            m: d.m_kb,
            p_c: d.p_c_watts,
            p_x: d.p_x_watts,
        })
        .collect();
    Cluster::new(devices, bw, file.master).map_err(resource)
}

pub fn load_cluster(path: &Path) -> Result<Cluster, IoError> {
    parse_cluster(&read(path)?, &path.display().to_string())
}

/// Explicit form: every non-zero pair is listed, diagonals included only
/// when they differ from each other.
pub fn cluster_to_toml(cluster: &Cluster) -> String {
    let n = cluster.len();
    let diag: Vec<f64> = (0..n).map(|i| cluster.bandwidth.get(i, i)).collect();
    let uniform_diag = diag.iter().all(|&d| d == diag[0]);
    let mut bandwidth = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let v = cluster.bandwidth.get(i, j);
            if (i != j && v > 0.0) || (i == j && !uniform_diag) {
                bandwidth.push(LinkEntry {
                    from: i,
                    to: j,
                    bytes_per_s: v,
                });
            }
        }
    }
    let file = ClusterFile {
        master: cluster.master,
        mem_bandwidth: if uniform_diag { Some(diag[0]) } else { None },
        default_bytes_per_s: None,
        symmetric: false,
        devices: cluster
            .devices
            .iter()
            .map(|d| DeviceEntry {
                name: d.name.clone(),
                rho: d.rho,
                f_hz: d.f,
                m_kb: d.m,
                p_c_watts: d.p_c,
                p_x_watts: d.p_x,
            })
            .collect(),
        bandwidth,
    };
    toml::to_string(&file).expect("cluster documents always serialize")
}

pub fn save_cluster(cluster: &Cluster, path: &Path) -> Result<(), IoError> {
    write(path, &cluster_to_toml(cluster))
}

/// A scenario document: model and cluster paths (relative to the document)
/// plus the query parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    model: PathBuf,
    cluster: PathBuf,
    deadline_ms: f64,
    #[serde(default)]
    elem_bytes: Option<usize>,
    #[serde(default)]
    result_bytes: Option<f64>,
    #[serde(default)]
    result_device: Option<usize>,
}

/// Element width precedence: the scenario file, then the model file, then
/// the crate default.
pub fn load_scenario(path: &Path) -> Result<Scenario, IoError> {
    let origin = path.display().to_string();
    let file: ScenarioFile = toml::from_str(&read(path)?).map_err(|e| parse_err(&origin, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let doc = load_model_document(&base.join(&file.model))?;
    let cluster = load_cluster(&base.join(&file.cluster))?;
    let scenario_err = |source| IoError::Scenario {
        origin: origin.clone(),
        source,
    };
    let mut scenario = Scenario::new(doc.model, cluster, file.deadline_ms / 1e3).map_err(scenario_err)?;
    if let Some(b) = file.elem_bytes.or(doc.elem_bytes) {
        scenario = scenario.with_elem_bytes(b).map_err(scenario_err)?;
    }
    if let Some(b) = file.result_bytes {
        scenario = scenario.with_result_bytes(b).map_err(scenario_err)?;
    }
    if let Some(d) = file.result_device {
        scenario = scenario.with_result_device(d).map_err(scenario_err)?;
    }
    Ok(scenario)
}

/// Serialized plan with its predicted cost under the cost model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub planner: String,
    pub lambda: Vec<f64>,
    pub rows: Vec<usize>,
    pub aggregator: usize,
    pub objective_energy_j: f64,
    pub predicted_latency_s: f64,
}

impl PlanDocument {
    pub fn new(scenario: &Scenario, plan: &PartitionPlan) -> Result<Self, CostError> {
        let b = evaluate(scenario, &plan.rows, plan.aggregator)?;
        Ok(Self {
            planner: plan.planner.as_str().to_string(),
            lambda: plan.lambda.clone(),
            rows: plan.rows.clone(),
            aggregator: plan.aggregator,
            objective_energy_j: b.energy(),
            predicted_latency_s: b.t_total,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan documents always serialize")
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, IoError> {
        serde_json::from_str(text).map_err(|e| parse_err(origin, e))
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        write(path, &(self.to_json() + "\n"))
    }
}
