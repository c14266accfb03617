//! Shared domain types: the run-spec schema and its validator, the
//! connector lifecycle state machine, and per-task bookkeeping.

mod spec;
mod stage;
mod task;
mod validate;

pub use spec::{ComputeSpec, FaultModel, PayloadParams, PlatformKind, ReliabilitySpec, RunSpec};
pub use stage::{stage_transition, SchedulerEvent, Stage, StageState, TransitionError};
pub use task::{AttemptRecord, AttemptResult, FaultTag, TaskRecord, TaskStatus, VmId};
pub use validate::{
    is_safe_name, is_writable_dir_path, validate_run_spec, FieldError, FieldErrorKind, ValidationErrors,
    MAX_ITERATIONS_LIMIT, MAX_RETRIES_LIMIT,
};
