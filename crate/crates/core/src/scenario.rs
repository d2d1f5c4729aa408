use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{propagate_shape, ModelDescriptor, ModelError, Shape};
use crate::resources::{Cluster, ResourceError};

pub const DEFAULT_ELEM_BYTES: usize = 4;
/// A 1000-class probability vector of f32.
pub const DEFAULT_RESULT_BYTES: f64 = 4096.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Resource(#[from] ResourceError),
    #[error("invalid scenario field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

/// One inference query: model, cluster, deadline and transfer sizing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub model: ModelDescriptor,
    pub cluster: Cluster,
    pub deadline_s: f64,
    pub elem_bytes: usize,
    pub result_device: usize,
    pub result_bytes: f64,
}

impl Scenario {
    pub fn new(model: ModelDescriptor, cluster: Cluster, deadline_s: f64) -> Result<Self, ScenarioError> {
        let result_device = cluster.master;
        let scenario = Self {
            model,
            cluster,
            deadline_s,
            elem_bytes: DEFAULT_ELEM_BYTES,
            result_device,
            result_bytes: DEFAULT_RESULT_BYTES,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn with_elem_bytes(mut self, elem_bytes: usize) -> Result<Self, ScenarioError> {
        self.elem_bytes = elem_bytes;
        self.validate()?;
        Ok(self)
    }

    pub fn with_result_device(mut self, device: usize) -> Result<Self, ScenarioError> {
        self.result_device = device;
        self.validate()?;
        Ok(self)
    }

    pub fn with_result_bytes(mut self, bytes: f64) -> Result<Self, ScenarioError> {
        self.result_bytes = bytes;
        self.validate()?;
        Ok(self)
    }

    pub fn with_deadline(&self, deadline_s: f64) -> Self {
        let mut out = self.clone();
        out.deadline_s = deadline_s;
        out
    }

    pub fn with_cluster(&self, cluster: Cluster) -> Result<Self, ScenarioError> {
        let mut out = self.clone();
        if out.result_device >= cluster.len() {
            out.result_device = cluster.master;
        }
        out.cluster = cluster;
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.model.validate()?;
        self.cluster.validate()?;
        if !(self.deadline_s.is_finite() && self.deadline_s > 0.0) {
            return Err(ScenarioError::Invalid {
                field: "deadline",
                reason: format!("must be > 0, got {}", self.deadline_s),
            });
        }
        if self.elem_bytes == 0 {
            return Err(ScenarioError::Invalid {
                field: "elem_bytes",
                reason: "must be >= 1".into(),
            });
        }
        if self.result_device >= self.cluster.len() {
            return Err(ScenarioError::Invalid {
                field: "result_device",
                reason: format!("index {} out of range", self.result_device),
            });
        }
        if !(self.result_bytes.is_finite() && self.result_bytes >= 0.0) {
            return Err(ScenarioError::Invalid {
                field: "result_bytes",
                reason: format!("must be >= 0, got {}", self.result_bytes),
            });
        }
        Ok(())
    }

    pub fn shapes(&self) -> Vec<Shape> {
        propagate_shape(&self.model).expect("validated model")
    }

    /// Input height H: the number of rows to partition.
    pub fn input_rows(&self) -> usize {
        self.model.input_shape.h
    }

    pub fn num_devices(&self) -> usize {
        self.cluster.len()
    }

    pub fn master(&self) -> usize {
        self.cluster.master
    }
}
