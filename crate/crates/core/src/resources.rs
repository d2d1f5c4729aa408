//! Device resource tuples, the directional bandwidth matrix and the cluster
//! they form.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default diagonal (device-to-itself) bandwidth: 12.8 GB/s.
pub const DEFAULT_MEMORY_BANDWIDTH: f64 = 12.8e9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResourceError {
    #[error("non-positive input `{0}`")]
    NonPositiveInput(&'static str),
    #[error("invariant violated on `{field}`: {reason}")]
    InvariantViolation { field: String, reason: String },
}

fn violation(field: impl Into<String>, reason: impl Into<String>) -> ResourceError {
    ResourceError::InvariantViolation {
        field: field.into(),
        reason: reason.into(),
    }
}

/// Resource tuple `(rho, f, m, P_c, P_x)` of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    /// Computing intensity, cycles per KB of layer input.
    pub rho: f64,
    /// CPU frequency, cycles per second.
    pub f: f64,
    /// Memory available to inference, KB.
    pub m: f64,
    /// Computation power, watts.
    pub p_c: f64,
    /// Transmission power, watts.
    pub p_x: f64,
}

impl DeviceProfile {
    pub fn validate(&self, index: usize) -> Result<(), ResourceError> {
        let field = |name: &str| format!("devices[{index}].{name}");
        let positive = [("rho", self.rho), ("f_hz", self.f), ("m_kb", self.m)];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(violation(field(name), format!("must be > 0, got {value}")));
            }
        }
        let non_negative = [("p_c_watts", self.p_c), ("p_x_watts", self.p_x)];
        for (name, value) in non_negative {
            if !(value.is_finite() && value >= 0.0) {
                return Err(violation(field(name), format!("must be >= 0, got {value}")));
            }
        }
        Ok(())
    }

    /// Seconds of compute per KB of input.
    pub fn seconds_per_kb(&self) -> f64 {
        self.rho / self.f
    }
}

/// Directional N x N bandwidth matrix in bytes/second. `b[i][i]` is the
/// memory bandwidth. Missing pairs are stored as 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthMatrix {
    n: usize,
    b: Vec<f64>,
}

impl BandwidthMatrix {
    /// Diagonal-only matrix with the default memory bandwidth.
    pub fn new(n: usize) -> Self {
        Self::with_memory_bandwidth(n, DEFAULT_MEMORY_BANDWIDTH)
    }

    pub fn with_memory_bandwidth(n: usize, mem: f64) -> Self {
        let mut b = vec![0.0; n * n];
        for i in 0..n {
            b[i * n + i] = mem;
        }
        Self { n, b }
    }

    /// Every off-diagonal pair set to `link`, diagonals to the default memory
    /// bandwidth.
    pub fn uniform(n: usize, link: f64) -> Self {
        let mut m = Self::new(n);
        m.set_all_links(link);
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.b[from * self.n + to]
    }

    pub fn set(&mut self, from: usize, to: usize, value: f64) {
        self.b[from * self.n + to] = value;
    }

    pub fn set_all_links(&mut self, link: f64) {
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    self.set(i, j, link);
                }
            }
        }
    }

    /// Square sub-matrix restricted to the first `k` devices.
    pub fn prefix(&self, k: usize) -> Self {
        let mut out = Self::with_memory_bandwidth(k, 0.0);
        for i in 0..k {
            for j in 0..k {
                out.set(i, j, self.get(i, j));
            }
        }
        out
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.b.chunks(self.n.max(1)).map(|r| r.to_vec()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Ordered devices; order defines the halo neighbour relation.
    pub devices: Vec<DeviceProfile>,
    pub bandwidth: BandwidthMatrix,
    /// Index of the master device.
    pub master: usize,
}

impl Cluster {
    pub fn new(
        devices: Vec<DeviceProfile>,
        bandwidth: BandwidthMatrix,
        master: usize,
    ) -> Result<Self, ResourceError> {
        let cluster = Self {
            devices,
            bandwidth,
            master,
        };
        cluster.validate()?;
        Ok(cluster)
    }

    pub fn validate(&self) -> Result<(), ResourceError> {
        if self.devices.is_empty() {
            return Err(violation("devices", "at least one device is required"));
        }
        for (i, d) in self.devices.iter().enumerate() {
            d.validate(i)?;
        }
        let n = self.devices.len();
        if self.bandwidth.n() != n {
            return Err(violation(
                "bandwidth",
                format!("matrix is {}x{} but there are {n} devices", self.bandwidth.n(), self.bandwidth.n()),
            ));
        }
        for i in 0..n {
            for j in 0..n {
                let v = self.bandwidth.get(i, j);
                if !v.is_finite() || v < 0.0 {
                    return Err(violation(format!("bandwidth[{i}][{j}]"), format!("invalid value {v}")));
                }
            }
            if self.bandwidth.get(i, i) <= 0.0 {
                return Err(violation(format!("bandwidth[{i}][{i}]"), "memory bandwidth must be > 0"));
            }
        }
        if self.master >= n {
            return Err(violation("master", format!("index {} out of range for {n} devices", self.master)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    /// The first `k` devices in neighbour order. The master must be among them.
    pub fn prefix(&self, k: usize) -> Result<Self, ResourceError> {
        if k == 0 || k > self.len() {
            return Err(violation("prefix", format!("{k} not in 1..={}", self.len())));
        }
        Self::new(
            self.devices[..k].to_vec(),
            self.bandwidth.prefix(k),
            self.master,
        )
    }

    /// Copy with every inter-device link set to `link` bytes/s.
    pub fn with_uniform_links(&self, link: f64) -> Self {
        let mut out = self.clone();
        out.bandwidth.set_all_links(link);
        out
    }
}

/// Computing intensity from one profiled run: `latency * f / size`.
pub fn derive_intensity(measured_latency_s: f64, f_hz: f64, input_kb: f64) -> Result<f64, ResourceError> {
    if !(measured_latency_s > 0.0) {
        return Err(ResourceError::NonPositiveInput("measured_latency"));
    }
    if !(f_hz > 0.0) {
        return Err(ResourceError::NonPositiveInput("f"));
    }
    if !(input_kb > 0.0) {
        return Err(ResourceError::NonPositiveInput("input_size"));
    }
    Ok(measured_latency_s * f_hz / input_kb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_intensity() {
        assert_eq!(derive_intensity(1.0, 1e9, 1000.0).unwrap(), 1e6);
    }

    #[test]
    fn table_intensity_is_in_kilocycles() {
        // 302 ms on a 1.2 GHz Pi over ~589.8 KB: 614.4 thousand cycles per KB.
        let rho = derive_intensity(0.302, 1.2e9, 589.8).unwrap();
        assert!((rho / 1e3 - 614.445).abs() < 1e-3, "{rho}");
        // Jetson: 89 ms at 2.0 GHz -> 301 kcycles/KB at ~591.4 KB.
        let rho = derive_intensity(0.089, 2.0e9, 591.4).unwrap();
        assert!((rho / 1e3 - 301.0).abs() < 0.05, "{rho}");
    }

    #[test]
    fn rejects_non_positive() {
        assert_eq!(
            derive_intensity(0.0, 1.0, 1.0),
            Err(ResourceError::NonPositiveInput("measured_latency"))
        );
        assert_eq!(derive_intensity(1.0, -1.0, 1.0), Err(ResourceError::NonPositiveInput("f")));
        assert_eq!(derive_intensity(1.0, 1.0, 0.0), Err(ResourceError::NonPositiveInput("input_size")));
    }

    #[test]
    fn zero_link_is_kept_but_memory_must_be_positive() {
        let dev = DeviceProfile {
            name: "d".into(),
            rho: 1.0,
            f: 1.0,
            m: 1.0,
            p_c: 0.0,
            p_x: 0.0,
        };
        let bw = BandwidthMatrix::with_memory_bandwidth(1, 0.0);
        assert!(Cluster::new(vec![dev], bw, 0).is_err());
    }

    proptest! {
        #[test]
        fn intensity_inverts_compute_time(lat in 1e-4f64..10.0, f in 1e8f64..5e9, kb in 1.0f64..1e5) {
            let rho = derive_intensity(lat, f, kb).unwrap();
            let back = rho * kb / f;
            prop_assert!(((back - lat) / lat).abs() <= 1e-9);
        }
    }
}
