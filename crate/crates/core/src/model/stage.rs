use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    Created,
    Provisioned,
    Configured,
    Executing,
    Collecting,
    Reduced,
    Transferring,
    Complete,
    Failed,
}

impl Stage {
    pub fn is_terminal(self) -> bool {
        matches!(self, Stage::Complete | Stage::Failed)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageState {
    pub stage: Stage,
    pub iteration: u32,
}

impl StageState {
    pub const fn initial() -> Self {
        Self {
            stage: Stage::Created,
            iteration: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchedulerEvent {
    ProvisionOk,
    ProvisionQuorumFail,
    ConfigOk,
    /// Configured fleet starts its first burst.
    BurstStart,
    BurstDone,
    /// Every outcome of the burst has been collected.
    CollectDone,
    ReduceDone { converged: bool },
    TransferOk,
    FatalError,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no transition from {state:?} on {event:?}")]
pub struct TransitionError {
    pub state: StageState,
    pub event: SchedulerEvent,
}

/// Successor of `state` on `event`, following the fixed connector
/// lifecycle. Terminal stages have no outgoing edges.
pub fn stage_transition(state: StageState, event: SchedulerEvent) -> Result<StageState, TransitionError> {
    use SchedulerEvent as E;
    use Stage as S;

    let next = |stage| StageState { stage, ..state };
    match (state.stage, event) {
        (S::Complete | S::Failed, _) => Err(TransitionError { state, event }),
        (_, E::FatalError) => Ok(next(S::Failed)),
        (S::Created, E::ProvisionOk) => Ok(next(S::Provisioned)),
        (S::Created, E::ProvisionQuorumFail) => Ok(next(S::Failed)),
        (S::Provisioned, E::ConfigOk) => Ok(next(S::Configured)),
        (S::Configured, E::BurstStart) => Ok(next(S::Executing)),
        (S::Executing, E::BurstDone) => Ok(next(S::Collecting)),
        (S::Collecting, E::CollectDone) => Ok(next(S::Reduced)),
        (S::Reduced, E::ReduceDone { converged: false }) => Ok(StageState {
            stage: S::Executing,
            iteration: state.iteration + 1,
        }),
        (S::Reduced, E::ReduceDone { converged: true }) => Ok(next(S::Transferring)),
        (S::Transferring, E::TransferOk) => Ok(next(S::Complete)),
        _ => Err(TransitionError { state, event }),
    }
}
