//! Compute-platform abstraction.
//!
//! Two backends share one contract: [`SimulatedCloud`] injects seeded
//! faults (provisioning failures, task crashes, VM loss, transfer
//! timeouts) and [`LocalProcess`] runs everything in-process without
//! faults. All fault decisions of the simulated cloud come from a single
//! SplitMix64 stream consumed in a fixed order: provisioning draws, then
//! one crash draw per executed attempt, then one loss draw per active VM at
//! the end of each burst, then one draw per transfer attempt. A fault fires
//! when its draw is below the configured probability.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::model::{FaultModel, FaultTag, PlatformKind, TaskRecord, VmId};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VmState {
    Requested,
    Active,
    Lost,
    Destroyed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VmHandle {
    pub id: VmId,
    pub state: VmState,
    pub configured: bool,
}

impl VmHandle {
    pub fn is_usable(&self) -> bool {
        self.state == VmState::Active && self.configured
    }
}

/// Audit trail entry of the fleet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VmEvent {
    ProvisionFailed { request: u32 },
    Provisioned { request: u32, vm: VmId },
    Configured { vm: VmId },
    Lost { vm: VmId, burst: u32 },
    Destroyed { vm: VmId },
}

/// Identifies a fault decision independently of stream position, so that
/// recorded schedules can be replayed against a different run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaultKey {
    Provision { request: u32 },
    Crash { iteration: u32, task_index: u32, attempt: u32 },
    VmLoss { burst: u32, vm: VmId },
    Transfer { attempt: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultDraw {
    pub key: FaultKey,
    pub value: f64,
}

/// Where fault draws come from.
#[derive(Debug, Clone)]
pub enum FaultSource {
    /// The sequential stream seeded by `fault_seed`.
    Stream(SplitMix64),
    /// Draws looked up by key; keys absent from the schedule never fault.
    Replay(HashMap<FaultKey, f64>),
}

impl FaultSource {
    pub fn replay(draws: &[FaultDraw]) -> Self {
        FaultSource::Replay(draws.iter().map(|d| (d.key, d.value)).collect())
    }

    fn draw(&mut self, key: FaultKey) -> f64 {
        match self {
            FaultSource::Stream(rng) => rng.next_f64(),
            FaultSource::Replay(map) => map.get(&key).copied().unwrap_or(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutcome<O> {
    pub task_index: u32,
    pub result: Result<O, FaultTag>,
    pub ticks: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferOutcome {
    Delivered,
    TimedOut,
}

#[derive(Debug, thiserror::Error)]
pub enum PlatformError {
    #[error("{op} is illegal on {vm} in state {state:?} (configured: {configured})")]
    IllegalState {
        op: &'static str,
        vm: VmId,
        state: VmState,
        configured: bool,
    },
    #[error("unknown vm {0}")]
    UnknownVm(VmId),
    #[error("artifact {0} does not exist")]
    MissingArtifact(PathBuf),
    #[error("transfer to {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Operations every compute backend provides.
pub trait Platform {
    fn kind(&self) -> PlatformKind;

    /// Requests `count` VMs; failed requests are absent from the result and
    /// successes get dense ids in request order.
    fn provision(&mut self, count: u32) -> Vec<VmHandle>;

    /// Marks an active VM configured. Idempotent.
    fn configure(&mut self, vm: &VmHandle, payload_setup: &serde_json::Value) -> Result<VmHandle, PlatformError>;

    /// Runs `payload` for `task` on `vm`. A crash discards the output.
    fn execute_task<O, F>(&mut self, vm: &VmHandle, task: &TaskRecord, ticks: u64, payload: F) -> Result<TaskOutcome<O>, PlatformError>
    where
        F: FnOnce() -> O;

    /// End-of-burst loss check over the active members of `vms`, in id order.
    fn end_burst_vm_loss(&mut self, vms: &[VmHandle]) -> Vec<VmHandle>;

    /// Copies `files` (relative to `source_root`) into `destination`,
    /// replacing it. All-or-nothing.
    fn transfer(&mut self, source_root: &Path, files: &[PathBuf], destination: &Path) -> Result<TransferOutcome, PlatformError>;

    /// Idempotent; a destroyed VM is never mutated again.
    fn destroy(&mut self, vm: &VmHandle) -> VmHandle;

    fn vms(&self) -> &[VmHandle];

    fn events(&self) -> &[VmEvent];

    fn payload_invocations(&self) -> u64;
}

/// VM registry shared by both backends.
#[derive(Debug, Clone, Default)]
struct Fleet {
    vms: Vec<VmHandle>,
    setups: Vec<Option<serde_json::Value>>,
    events: Vec<VmEvent>,
    requests: u32,
    bursts: u32,
    invocations: u64,
}

impl Fleet {
    fn get(&self, id: VmId) -> Result<VmHandle, PlatformError> {
        self.vms.get(id.0 as usize).copied().ok_or(PlatformError::UnknownVm(id))
    }

    fn provision(&mut self, count: u32, mut fails: impl FnMut(u32) -> bool) -> Vec<VmHandle> {
        let mut out = Vec::new();
        for _ in 0..count {
            let request = self.requests;
            self.requests += 1;
            if fails(request) {
                self.events.push(VmEvent::ProvisionFailed { request });
                continue;
            }
            let vm = VmHandle {
                id: VmId(self.vms.len() as u32),
                state: VmState::Active,
                configured: false,
            };
            self.vms.push(vm);
            self.setups.push(None);
            self.events.push(VmEvent::Provisioned { request, vm: vm.id });
            out.push(vm);
        }
        out
    }

    fn configure(&mut self, vm: &VmHandle, setup: &serde_json::Value) -> Result<VmHandle, PlatformError> {
        let current = self.get(vm.id)?;
        if current.state != VmState::Active {
            return Err(PlatformError::IllegalState {
                op: "configure",
                vm: vm.id,
                state: current.state,
                configured: current.configured,
            });
        }
        if current.configured {
            return Ok(current);
        }
        let slot = vm.id.0 as usize;
        self.vms[slot].configured = true;
        self.setups[slot] = Some(setup.clone());
        self.events.push(VmEvent::Configured { vm: vm.id });
        Ok(self.vms[slot])
    }

    fn check_executable(&self, vm: &VmHandle) -> Result<(), PlatformError> {
        let current = self.get(vm.id)?;
        if current.is_usable() {
            Ok(())
        } else {
            Err(PlatformError::IllegalState {
                op: "execute",
                vm: vm.id,
                state: current.state,
                configured: current.configured,
            })
        }
    }

    fn end_burst(&mut self, vms: &[VmHandle], mut lost: impl FnMut(u32, VmId) -> bool) -> Vec<VmHandle> {
        let burst = self.bursts;
        self.bursts += 1;
        let mut ids: Vec<VmId> = vms.iter().map(|v| v.id).collect();
        ids.sort();
        ids.dedup();
        for id in &ids {
            let slot = id.0 as usize;
            if self.vms.get(slot).map(|v| v.state) == Some(VmState::Active) && lost(burst, *id) {
                self.vms[slot].state = VmState::Lost;
                self.events.push(VmEvent::Lost { vm: *id, burst });
            }
        }
        ids.iter().filter_map(|id| self.get(*id).ok()).collect()
    }

    fn destroy(&mut self, vm: &VmHandle) -> VmHandle {
        match self.vms.get_mut(vm.id.0 as usize) {
            Some(v) if v.state != VmState::Destroyed => {
                v.state = VmState::Destroyed;
                self.events.push(VmEvent::Destroyed { vm: vm.id });
                *v
            }
            Some(v) => *v,
            None => VmHandle {
                state: VmState::Destroyed,
                ..*vm
            },
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PlatformError + '_ {
    move |source| PlatformError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Replaces `destination` with copies of `files`, staging into a sibling
/// directory first so a failure never leaves a partial destination.
fn copy_all_or_nothing(source_root: &Path, files: &[PathBuf], destination: &Path) -> Result<(), PlatformError> {
    for f in files {
        let src = source_root.join(f);
        if !src.is_file() {
            return Err(PlatformError::MissingArtifact(src));
        }
    }
    let name = destination
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "transfer".into());
    let parent = destination.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(io_err(parent))?;
    let staging = parent.join(format!(".{name}.partial"));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(io_err(&staging))?;
    }
    let result = (|| {
        fs::create_dir_all(&staging).map_err(io_err(&staging))?;
        for f in files {
            let target = staging.join(f);
            if let Some(dir) = target.parent() {
                fs::create_dir_all(dir).map_err(io_err(dir))?;
            }
            fs::copy(source_root.join(f), &target).map_err(io_err(&target))?;
        }
        if destination.exists() {
            fs::remove_dir_all(destination).map_err(io_err(destination))?;
        }
        fs::rename(&staging, destination).map_err(io_err(destination))
    })();
    if result.is_err() {
        let _ = fs::remove_dir_all(&staging);
    }
    result
}

/// Deterministic fault-injecting cloud.
#[derive(Debug, Clone)]
pub struct SimulatedCloud {
    faults: FaultModel,
    source: FaultSource,
    fleet: Fleet,
    draws: Vec<FaultDraw>,
    transfers: u32,
}

impl SimulatedCloud {
    pub fn new(faults: FaultModel) -> Self {
        Self::with_source(faults, FaultSource::Stream(SplitMix64::new(faults.fault_seed)))
    }

    pub fn with_source(faults: FaultModel, source: FaultSource) -> Self {
        Self {
            faults,
            source,
            fleet: Fleet::default(),
            draws: Vec::new(),
            transfers: 0,
        }
    }

    pub fn fault_model(&self) -> &FaultModel {
        &self.faults
    }

    /// Every fault draw consumed so far, in consumption order.
    pub fn draws(&self) -> &[FaultDraw] {
        &self.draws
    }

    fn fires(&mut self, key: FaultKey, p: f64) -> bool {
        let value = self.source.draw(key);
        self.draws.push(FaultDraw { key, value });
        value < p
    }
}

impl Platform for SimulatedCloud {
    fn kind(&self) -> PlatformKind {
        PlatformKind::SimulatedCloud
    }

    fn provision(&mut self, count: u32) -> Vec<VmHandle> {
        let p = self.faults.p_provision_fail;
        let mut fleet = std::mem::take(&mut self.fleet);
        let out = fleet.provision(count, |request| self.fires(FaultKey::Provision { request }, p));
        self.fleet = fleet;
        out
    }

    fn configure(&mut self, vm: &VmHandle, payload_setup: &serde_json::Value) -> Result<VmHandle, PlatformError> {
        self.fleet.configure(vm, payload_setup)
    }

    fn execute_task<O, F>(&mut self, vm: &VmHandle, task: &TaskRecord, ticks: u64, payload: F) -> Result<TaskOutcome<O>, PlatformError>
    where
        F: FnOnce() -> O,
    {
        self.fleet.check_executable(vm)?;
        self.fleet.invocations += 1;
        let output = payload();
        let key = FaultKey::Crash {
            iteration: task.iteration,
            task_index: task.task_index,
            attempt: task.attempts.len() as u32,
        };
        let result = if self.fires(key, self.faults.p_task_crash) {
            Err(FaultTag::Crash)
        } else {
            Ok(output)
        };
        Ok(TaskOutcome {
            task_index: task.task_index,
            result,
            ticks,
        })
    }

    fn end_burst_vm_loss(&mut self, vms: &[VmHandle]) -> Vec<VmHandle> {
        let p = self.faults.p_vm_loss_per_burst;
        let mut fleet = std::mem::take(&mut self.fleet);
        let out = fleet.end_burst(vms, |burst, vm| self.fires(FaultKey::VmLoss { burst, vm }, p));
        self.fleet = fleet;
        out
    }

    fn transfer(&mut self, source_root: &Path, files: &[PathBuf], destination: &Path) -> Result<TransferOutcome, PlatformError> {
        let attempt = self.transfers;
        self.transfers += 1;
        if self.fires(FaultKey::Transfer { attempt }, self.faults.p_transfer_timeout) {
            return Ok(TransferOutcome::TimedOut);
        }
        copy_all_or_nothing(source_root, files, destination)?;
        Ok(TransferOutcome::Delivered)
    }

    fn destroy(&mut self, vm: &VmHandle) -> VmHandle {
        self.fleet.destroy(vm)
    }

    fn vms(&self) -> &[VmHandle] {
        &self.fleet.vms
    }

    fn events(&self) -> &[VmEvent] {
        &self.fleet.events
    }

    fn payload_invocations(&self) -> u64 {
        self.fleet.invocations
    }
}

/// In-process executor; never faults.
#[derive(Debug, Clone, Default)]
pub struct LocalProcess {
    fleet: Fleet,
}

impl LocalProcess {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Platform for LocalProcess {
    fn kind(&self) -> PlatformKind {
        PlatformKind::LocalProcess
    }

    fn provision(&mut self, count: u32) -> Vec<VmHandle> {
        self.fleet.provision(count, |_| false)
    }

    fn configure(&mut self, vm: &VmHandle, payload_setup: &serde_json::Value) -> Result<VmHandle, PlatformError> {
        self.fleet.configure(vm, payload_setup)
    }

    fn execute_task<O, F>(&mut self, vm: &VmHandle, task: &TaskRecord, ticks: u64, payload: F) -> Result<TaskOutcome<O>, PlatformError>
    where
        F: FnOnce() -> O,
    {
        self.fleet.check_executable(vm)?;
        self.fleet.invocations += 1;
        Ok(TaskOutcome {
            task_index: task.task_index,
            result: Ok(payload()),
            ticks,
        })
    }

    fn end_burst_vm_loss(&mut self, vms: &[VmHandle]) -> Vec<VmHandle> {
        self.fleet.end_burst(vms, |_, _| false)
    }

    fn transfer(&mut self, source_root: &Path, files: &[PathBuf], destination: &Path) -> Result<TransferOutcome, PlatformError> {
        copy_all_or_nothing(source_root, files, destination)?;
        Ok(TransferOutcome::Delivered)
    }

    fn destroy(&mut self, vm: &VmHandle) -> VmHandle {
        self.fleet.destroy(vm)
    }

    fn vms(&self) -> &[VmHandle] {
        &self.fleet.vms
    }

    fn events(&self) -> &[VmEvent] {
        &self.fleet.events
    }

    fn payload_invocations(&self) -> u64 {
        self.fleet.invocations
    }
}

/// Backend selected by a run spec.
#[derive(Debug, Clone)]
pub enum Backend {
    Simulated(SimulatedCloud),
    Local(LocalProcess),
}

impl Backend {
    pub fn for_spec(spec: &crate::model::RunSpec) -> Self {
        match spec.platform {
            PlatformKind::SimulatedCloud => Backend::Simulated(SimulatedCloud::new(spec.faults)),
            PlatformKind::LocalProcess => Backend::Local(LocalProcess::new()),
        }
    }

    pub fn fault_draws(&self) -> &[FaultDraw] {
        match self {
            Backend::Simulated(s) => s.draws(),
            Backend::Local(_) => &[],
        }
    }
}

macro_rules! delegate {
    ($self:ident, $b:ident => $e:expr) => {
        match $self {
            Backend::Simulated($b) => $e,
            Backend::Local($b) => $e,
        }
    };
}

impl Platform for Backend {
    fn kind(&self) -> PlatformKind {
        delegate!(self, b => b.kind())
    }

    fn provision(&mut self, count: u32) -> Vec<VmHandle> {
        delegate!(self, b => b.provision(count))
    }

    fn configure(&mut self, vm: &VmHandle, payload_setup: &serde_json::Value) -> Result<VmHandle, PlatformError> {
        delegate!(self, b => b.configure(vm, payload_setup))
    }

    fn execute_task<O, F>(&mut self, vm: &VmHandle, task: &TaskRecord, ticks: u64, payload: F) -> Result<TaskOutcome<O>, PlatformError>
    where
        F: FnOnce() -> O,
    {
        delegate!(self, b => b.execute_task(vm, task, ticks, payload))
    }

    fn end_burst_vm_loss(&mut self, vms: &[VmHandle]) -> Vec<VmHandle> {
        delegate!(self, b => b.end_burst_vm_loss(vms))
    }

    fn transfer(&mut self, source_root: &Path, files: &[PathBuf], destination: &Path) -> Result<TransferOutcome, PlatformError> {
        delegate!(self, b => b.transfer(source_root, files, destination))
    }

    fn destroy(&mut self, vm: &VmHandle) -> VmHandle {
        delegate!(self, b => b.destroy(vm))
    }

    fn vms(&self) -> &[VmHandle] {
        delegate!(self, b => b.vms())
    }

    fn events(&self) -> &[VmEvent] {
        delegate!(self, b => b.events())
    }

    fn payload_invocations(&self) -> u64 {
        delegate!(self, b => b.payload_invocations())
    }
}
