//! Drives a run spec through the connector lifecycle on a platform
//! backend.
//!
//! Canonical event order per run: provision `desired_vms`, quorum check,
//! configure survivors, then per burst: map, round-robin assignment, task
//! execution in ascending task index with retry/reschedule handling,
//! end-of-burst VM loss, collect, reduce, optional curation, convergence
//! check. Converged runs transfer their outputs (retrying timeouts up to
//! `max_retries` times). Every exit path destroys every VM.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::curation::{sha256_hex, Catalog};
use crate::mapreduce::{BurstInput, BurstTask};
use crate::model::{
    stage_transition, AttemptRecord, AttemptResult, ComputeSpec, FaultTag, ReliabilitySpec, RunSpec,
    SchedulerEvent, Stage, StageState, TaskRecord, TaskStatus, VmId,
};
use crate::platform::{Platform, PlatformError, TransferOutcome, VmEvent, VmHandle, VmState};

/// File name of the run report inside `output_location`.
pub const REPORT_FILE: &str = "report.json";

/// Directory inside `output_location` receiving transferred outputs.
pub const OUTPUTS_DIR: &str = "outputs";

/// The computation a run drives: how bursts are generated, executed,
/// reduced and judged converged.
pub trait Connector {
    type Output: Serialize;
    type Reduced: Serialize;
    type Error: std::error::Error;

    /// Setup document handed to every VM at configuration time.
    fn setup_document(&self) -> serde_json::Value;

    /// First burst when `previous` is `None`, otherwise the burst following
    /// `previous`.
    fn map_phase(&self, previous: Option<&Self::Reduced>) -> Result<BurstInput, Self::Error>;

    /// The payload of one task; must be pure.
    fn execute(&self, burst: &BurstInput, task: &BurstTask) -> Result<Self::Output, Self::Error>;

    fn reduce_phase(
        &self,
        iteration: u32,
        outputs: &[Self::Output],
        previous: Option<&Self::Reduced>,
    ) -> Result<Self::Reduced, Self::Error>;

    fn converged(&self, reduced: &Self::Reduced) -> bool;

    fn best_metric(&self, reduced: &Self::Reduced) -> f64;

    /// Simulated duration of one attempt of `task`.
    fn ticks(&self, task: &BurstTask) -> u64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quorum {
    Proceed,
    QuorumFailure { provisioned: u32, minimal: u32 },
}

pub fn check_quorum(provisioned: u32, compute: &ComputeSpec) -> Quorum {
    if provisioned >= compute.minimal_vms {
        Quorum::Proceed
    } else {
        Quorum::QuorumFailure {
            provisioned,
            minimal: compute.minimal_vms,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SchedulerError {
    #[error("no active VMs to schedule {tasks} task(s) on")]
    NoActiveVms { tasks: usize },
    #[error("cannot prepare output location {path}: {source}")]
    OutputLocation {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot write report {path}: {source}")]
    Report {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Round-robin of tasks (ascending index) over VMs (ascending id).
pub fn schedule_burst(tasks: &[TaskRecord], vms: &[VmHandle]) -> Result<BTreeMap<u32, VmId>, SchedulerError> {
    if vms.is_empty() {
        return Err(SchedulerError::NoActiveVms { tasks: tasks.len() });
    }
    let mut ids: Vec<VmId> = vms.iter().map(|v| v.id).collect();
    ids.sort();
    let mut indices: Vec<u32> = tasks.iter().map(|t| t.task_index).collect();
    indices.sort();
    Ok(indices
        .into_iter()
        .enumerate()
        .map(|(slot, task)| (task, ids[slot % ids.len()]))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureAction {
    Retry,
    Reschedule(VmId),
    MarkFailed,
}

/// Decides what to do after the last attempt of `task` failed with
/// `fault`.
///
/// Retries stay on the current VM while it is usable and the placement
/// has used at most `max_retries` attempts. Then, if enabled and not yet
/// done, the task moves once to the usable VM with the fewest unfinished
/// tasks in `burst` (lowest id on ties) with a fresh budget. Otherwise the
/// task fails.
pub fn handle_failure(
    task: &TaskRecord,
    fault: FaultTag,
    reliability: &ReliabilitySpec,
    vms: &[VmHandle],
    burst: &[TaskRecord],
) -> FailureAction {
    let current = task.assigned_vm;
    let current_usable = vms.iter().any(|v| Some(v.id) == current && v.is_usable());
    if fault != FaultTag::VmLost && current_usable && task.attempts_on_current_vm() <= reliability.max_retries {
        return FailureAction::Retry;
    }
    if reliability.reschedule_failed && !task.rescheduled {
        let load = |vm: VmId| {
            burst
                .iter()
                .filter(|t| t.task_index != task.task_index && t.assigned_vm == Some(vm) && !t.is_finished())
                .count()
        };
        let target = vms
            .iter()
            .filter(|v| v.is_usable() && Some(v.id) != current)
            .map(|v| (load(v.id), v.id))
            .min();
        if let Some((_, vm)) = target {
            return FailureAction::Reschedule(vm);
        }
    }
    FailureAction::MarkFailed
}

/// Why a run ended in `Failed`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunFailure {
    QuorumFailure { provisioned: u32, minimal: u32 },
    TaskFailed { iteration: u32, task_index: u32 },
    NoActiveVms { iteration: u32 },
    TransferFailed { attempts: u32 },
    Platform(String),
    Payload(String),
    Curation(String),
    Io(String),
    Contract(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub size: u64,
    pub sha256: String,
}

/// Outcome of one run, serialized as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub spec_name: String,
    pub final_stage: StageState,
    pub iterations_executed: u32,
    pub converged: bool,
    pub best_metric: Option<f64>,
    pub failure: Option<RunFailure>,
    pub vms_requested: u32,
    pub vms_provisioned: u32,
    pub vms_destroyed: u32,
    pub payload_invocations: u64,
    pub tasks: Vec<TaskRecord>,
    pub vm_events: Vec<VmEvent>,
    pub output_manifest: Vec<OutputFile>,
}

impl RunReport {
    pub fn is_complete(&self) -> bool {
        self.final_stage.stage == Stage::Complete
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

struct Progress {
    state: StageState,
    iterations: u32,
    converged: bool,
    best_metric: Option<f64>,
    tasks: Vec<TaskRecord>,
    output_manifest: Vec<OutputFile>,
}

impl Progress {
    fn advance(&mut self, event: SchedulerEvent) -> Result<(), RunFailure> {
        self.state = stage_transition(self.state, event).map_err(|e| RunFailure::Contract(e.to_string()))?;
        Ok(())
    }
}

fn platform_failure(e: PlatformError) -> RunFailure {
    RunFailure::Platform(e.to_string())
}

fn io_failure(path: &Path) -> impl FnOnce(io::Error) -> RunFailure + '_ {
    move |e| RunFailure::Io(format!("{}: {e}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), RunFailure> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| RunFailure::Io(e.to_string()))?;
    s.push('\n');
    fs::write(path, s).map_err(io_failure(path))
}

/// Files under `root`, relative and sorted.
fn list_files(root: &Path) -> Result<Vec<PathBuf>, RunFailure> {
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| RunFailure::Io(e.to_string()))?;
        if entry.file_type().is_file() {
            let rel = entry.path().strip_prefix(root).expect("walk stays under root");
            files.push(rel.to_path_buf());
        }
    }
    Ok(files)
}

fn iteration_dir(iteration: u32) -> String {
    format!("iter_{iteration:04}")
}

fn usable_vms<P: Platform>(platform: &P) -> Vec<VmHandle> {
    platform.vms().iter().copied().filter(VmHandle::is_usable).collect()
}

fn execute_burst<P: Platform, C: Connector>(
    spec: &RunSpec,
    platform: &mut P,
    connector: &C,
    burst: &BurstInput,
    records: &mut [TaskRecord],
) -> Result<Vec<C::Output>, RunFailure> {
    let iteration = burst.iteration;
    let active = usable_vms(platform);
    let assignment = schedule_burst(records, &active).map_err(|_| RunFailure::NoActiveVms { iteration })?;
    for r in records.iter_mut() {
        r.assigned_vm = assignment.get(&r.task_index).copied();
    }

    let mut outputs = Vec::with_capacity(records.len());
    for i in 0..records.len() {
        let task = &burst.tasks[i];
        let ticks = connector.ticks(task);
        loop {
            records[i].status = TaskStatus::Running;
            let vm_id = records[i].assigned_vm.expect("every task is assigned");
            let vm = platform.vms()[vm_id.0 as usize];
            let outcome = platform
                .execute_task(&vm, &records[i], ticks, || connector.execute(burst, task))
                .map_err(platform_failure)?;
            let fault = match outcome.result {
                Ok(Ok(output)) => {
                    records[i].attempts.push(AttemptRecord {
                        vm: vm_id,
                        result: AttemptResult::Success,
                        ticks: outcome.ticks,
                    });
                    records[i].status = TaskStatus::Succeeded;
                    outputs.push(output);
                    break;
                }
                Ok(Err(e)) => return Err(RunFailure::Payload(e.to_string())),
                Err(fault) => fault,
            };
            records[i].attempts.push(AttemptRecord {
                vm: vm_id,
                result: AttemptResult::Fault(fault),
                ticks: outcome.ticks,
            });
            let vms = platform.vms().to_vec();
            match handle_failure(&records[i], fault, &spec.reliability, &vms, records) {
                FailureAction::Retry => {}
                FailureAction::Reschedule(target) => {
                    log::debug!("rescheduling task {} of iteration {iteration} onto {target}", records[i].task_index);
                    records[i].assigned_vm = Some(target);
                    records[i].rescheduled = true;
                }
                FailureAction::MarkFailed => {
                    records[i].status = TaskStatus::Failed;
                    return Err(RunFailure::TaskFailed {
                        iteration,
                        task_index: records[i].task_index,
                    });
                }
            }
        }
    }
    platform.end_burst_vm_loss(&active);
    Ok(outputs)
}

fn drive<P: Platform, C: Connector>(
    spec: &RunSpec,
    platform: &mut P,
    connector: &C,
    mut catalog: Option<&mut Catalog>,
    staging: &Path,
    progress: &mut Progress,
) -> Result<(), RunFailure> {
    let provisioned = platform.provision(spec.compute.desired_vms);
    if let Quorum::QuorumFailure { provisioned, minimal } = check_quorum(provisioned.len() as u32, &spec.compute) {
        progress.advance(SchedulerEvent::ProvisionQuorumFail)?;
        return Err(RunFailure::QuorumFailure { provisioned, minimal });
    }
    progress.advance(SchedulerEvent::ProvisionOk)?;

    let setup = connector.setup_document();
    for vm in &provisioned {
        platform.configure(vm, &setup).map_err(platform_failure)?;
    }
    progress.advance(SchedulerEvent::ConfigOk)?;
    progress.advance(SchedulerEvent::BurstStart)?;

    let mut previous: Option<C::Reduced> = None;
    loop {
        let burst = connector
            .map_phase(previous.as_ref())
            .map_err(|e| RunFailure::Payload(e.to_string()))?;
        let iteration = burst.iteration;
        if iteration != progress.state.iteration {
            return Err(RunFailure::Contract(format!(
                "connector produced iteration {iteration} while the run is at iteration {}",
                progress.state.iteration
            )));
        }
        let mut records: Vec<TaskRecord> = burst
            .tasks
            .iter()
            .map(|t| TaskRecord::new(iteration, t.task_index, t.seed, t.temperature))
            .collect();
        let executed = execute_burst(spec, platform, connector, &burst, &mut records);
        progress.tasks.extend(records);
        let outputs = executed?;
        progress.advance(SchedulerEvent::BurstDone)?;

        let dir = staging.join(iteration_dir(iteration));
        fs::create_dir_all(&dir).map_err(io_failure(&dir))?;
        for (task, output) in burst.tasks.iter().zip(&outputs) {
            write_json(&dir.join(format!("map_{:04}.json", task.task_index)), output)?;
        }
        progress.advance(SchedulerEvent::CollectDone)?;

        let reduced = connector
            .reduce_phase(iteration, &outputs, previous.as_ref())
            .map_err(|e| RunFailure::Payload(e.to_string()))?;
        write_json(&dir.join("reduce.json"), &reduced)?;
        progress.iterations += 1;
        progress.best_metric = Some(connector.best_metric(&reduced));

        if spec.curate {
            if let Some(catalog) = catalog.as_deref_mut() {
                catalog
                    .ingest_with_registered(&dir, &spec.name, iteration)
                    .map_err(|e| RunFailure::Curation(e.to_string()))?;
            }
        }

        let converged = connector.converged(&reduced);
        progress.advance(SchedulerEvent::ReduceDone { converged })?;
        previous = Some(reduced);
        if converged {
            progress.converged = true;
            break;
        }
    }

    let files = list_files(staging)?;
    let destination = spec.output_location.join(OUTPUTS_DIR);
    let mut attempts = 0;
    loop {
        attempts += 1;
        match platform.transfer(staging, &files, &destination).map_err(platform_failure)? {
            TransferOutcome::Delivered => break,
            TransferOutcome::TimedOut if attempts <= spec.reliability.max_retries => {
                log::debug!("transfer attempt {attempts} timed out, retrying");
            }
            TransferOutcome::TimedOut => return Err(RunFailure::TransferFailed { attempts }),
        }
    }
    for f in &files {
        let path = destination.join(f);
        let bytes = fs::read(&path).map_err(io_failure(&path))?;
        progress.output_manifest.push(OutputFile {
            path: Path::new(OUTPUTS_DIR).join(f).to_string_lossy().replace('\\', "/"),
            size: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
    }
    progress.advance(SchedulerEvent::TransferOk)?;
    Ok(())
}

/// Executes `spec` end to end and writes `report.json` into its output
/// location. Iteration outputs are ingested into `catalog` when the spec
/// asks for curation and a catalog is given.
pub fn run<P: Platform, C: Connector>(
    spec: &RunSpec,
    platform: &mut P,
    connector: &C,
    catalog: Option<&mut Catalog>,
) -> Result<RunReport, SchedulerError> {
    let location_err = |source| SchedulerError::OutputLocation {
        path: spec.output_location.clone(),
        source,
    };
    fs::create_dir_all(&spec.output_location).map_err(location_err)?;
    let staging = tempfile::Builder::new()
        .prefix("kiln-staging-")
        .tempdir()
        .map_err(location_err)?;

    let mut progress = Progress {
        state: StageState::initial(),
        iterations: 0,
        converged: false,
        best_metric: None,
        tasks: Vec::new(),
        output_manifest: Vec::new(),
    };
    let failure = drive(spec, platform, connector, catalog, staging.path(), &mut progress).err();
    if failure.is_some() && !progress.state.stage.is_terminal() {
        progress.state = stage_transition(progress.state, SchedulerEvent::FatalError).expect("non-terminal stages accept FatalError");
    }
    if let Some(f) = &failure {
        log::info!("run {} failed: {f:?}", spec.name);
        progress.converged = false;
    }

    for vm in platform.vms().to_vec() {
        if vm.state != VmState::Destroyed {
            platform.destroy(&vm);
        }
    }

    let events = platform.events().to_vec();
    let count = |pred: fn(&VmEvent) -> bool| events.iter().filter(|e| pred(e)).count() as u32;
    let report = RunReport {
        spec_name: spec.name.clone(),
        final_stage: progress.state,
        iterations_executed: progress.iterations,
        converged: progress.converged,
        best_metric: progress.best_metric,
        failure,
        vms_requested: count(|e| matches!(e, VmEvent::Provisioned { .. } | VmEvent::ProvisionFailed { .. })),
        vms_provisioned: count(|e| matches!(e, VmEvent::Provisioned { .. })),
        vms_destroyed: count(|e| matches!(e, VmEvent::Destroyed { .. })),
        payload_invocations: platform.payload_invocations(),
        tasks: progress.tasks,
        vm_events: events,
        output_manifest: progress.output_manifest,
    };
    let path = spec.output_location.join(REPORT_FILE);
    fs::write(&path, report.to_json()).map_err(|source| SchedulerError::Report { path, source })?;
    Ok(report)
}
