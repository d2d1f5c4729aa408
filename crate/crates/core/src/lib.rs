//! Cooperative CNN inference planning for heterogeneous edge clusters.
//!
//! A model is partitioned row-wise across devices; the planner chooses the
//! split that minimises dynamic energy under an end-to-end deadline, and the
//! simulator replays the resulting bulk-synchronous timeline.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cost;
pub mod fuzz;
pub mod io;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod par;
pub mod partition;
pub mod resources;
pub mod scenario;
pub mod sim;
pub mod sweep;

pub use cost::{evaluate, total_costs, CostBreakdown, CostError};
pub use model::{LayerConfig, LayerKind, ModelDescriptor, ModelError, Shape};
pub use par::Execution;
pub use partition::{validate_plan, PartitionPlan, PlanError, Planner, PlannerKind};
pub use resources::{BandwidthMatrix, Cluster, DeviceProfile, ResourceError};
pub use scenario::{Scenario, ScenarioError};
