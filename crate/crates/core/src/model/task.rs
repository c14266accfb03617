use std::fmt;

use serde::{Deserialize, Serialize};

/// Dense identifier of a provisioned VM, assigned in request order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VmId(pub u32);

impl fmt::Display for VmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "vm{}", self.0)
    }
}

/// Injected infrastructure fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaultTag {
    Crash,
    VmLost,
    TransferTimeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttemptResult {
    Success,
    Fault(FaultTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub vm: VmId,
    pub result: AttemptResult,
    pub ticks: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskStatus {
    Pending,
    Running,
    Succeeded,
    Failed,
}

/// One map task of one burst.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_index: u32,
    pub iteration: u32,
    pub seed: u64,
    pub temperature: f64,
    pub assigned_vm: Option<VmId>,
    pub attempts: Vec<AttemptRecord>,
    pub status: TaskStatus,
    /// Set once the task has been relocated to another VM.
    pub rescheduled: bool,
}

impl TaskRecord {
    pub fn new(iteration: u32, task_index: u32, seed: u64, temperature: f64) -> Self {
        Self {
            task_index,
            iteration,
            seed,
            temperature,
            assigned_vm: None,
            attempts: Vec::new(),
            status: TaskStatus::Pending,
            rescheduled: false,
        }
    }

    /// Attempts made on the current placement (since the last relocation).
    pub fn attempts_on_current_vm(&self) -> u32 {
        match self.assigned_vm {
            Some(vm) => self
                .attempts
                .iter()
                .rev()
                .take_while(|a| a.vm == vm)
                .count() as u32,
            None => 0,
        }
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.status, TaskStatus::Succeeded | TaskStatus::Failed)
    }
}
