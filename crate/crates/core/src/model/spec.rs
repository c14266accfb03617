use std::path::PathBuf;

use serde::{Deserialize, Serialize};

/// Compute backend a run executes on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlatformKind {
    SimulatedCloud,
    LocalProcess,
}

impl PlatformKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PlatformKind::SimulatedCloud => "simulated-cloud",
            PlatformKind::LocalProcess => "local-process",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "simulated-cloud" => Some(PlatformKind::SimulatedCloud),
            "local-process" => Some(PlatformKind::LocalProcess),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComputeSpec {
    pub desired_vms: u32,
    pub minimal_vms: u32,
    pub tasks_per_burst: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReliabilitySpec {
    /// Extra attempts per task beyond the first.
    pub max_retries: u32,
    pub reschedule_failed: bool,
}

/// Injected-failure probabilities of the simulated cloud. All zero by
/// default, which makes the simulated backend fault-free.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultModel {
    pub p_provision_fail: f64,
    pub p_task_crash: f64,
    pub p_transfer_timeout: f64,
    pub p_vm_loss_per_burst: f64,
    pub fault_seed: u64,
}

impl Default for FaultModel {
    fn default() -> Self {
        Self::none()
    }
}

impl FaultModel {
    pub const fn none() -> Self {
        Self {
            p_provision_fail: 0.0,
            p_task_crash: 0.0,
            p_transfer_timeout: 0.0,
            p_vm_loss_per_burst: 0.0,
            fault_seed: 0,
        }
    }
}

/// Domain parameters of the structure-fitting payload, its annealing
/// schedule and its convergence criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadParams {
    pub n_points: u32,
    pub steps_per_task: u32,
    pub bins: u32,
    pub r_max: f64,
    pub weight: f64,
    pub r0: f64,
    pub r_floor: f64,
    pub sigma: f64,
    pub t_initial: f64,
    pub t_final: f64,
    pub spread_factor: f64,
    pub cost_threshold: f64,
    pub max_iterations: u32,
    pub instance_seed: u64,
}

impl Default for PayloadParams {
    fn default() -> Self {
        Self {
            n_points: 16,
            steps_per_task: 500,
            bins: 20,
            r_max: 1.5,
            weight: 1e-3,
            r0: 0.1,
            r_floor: 1e-3,
            sigma: 0.05,
            t_initial: 1.0,
            t_final: 0.01,
            spread_factor: 2.0,
            cost_threshold: 0.05,
            max_iterations: 20,
            instance_seed: 7,
        }
    }
}

/// Declarative description of one connector execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub name: String,
    pub platform: PlatformKind,
    pub compute: ComputeSpec,
    pub reliability: ReliabilitySpec,
    pub faults: FaultModel,
    pub payload: PayloadParams,
    pub output_location: PathBuf,
    pub curate: bool,
    pub master_seed: u64,
}

impl RunSpec {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run spec serializes")
    }
}
