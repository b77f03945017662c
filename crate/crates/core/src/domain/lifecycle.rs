//! Deployment lifecycle state machine.

use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DeploymentStatus {
    New,
    Validating,
    Deploying,
    Ready,
    Stopped,
    Terminating,
    Terminated,
    Error,
}

impl DeploymentStatus {
    pub const ALL: [DeploymentStatus; 8] = [
        DeploymentStatus::New,
        DeploymentStatus::Validating,
        DeploymentStatus::Deploying,
        DeploymentStatus::Ready,
        DeploymentStatus::Stopped,
        DeploymentStatus::Terminating,
        DeploymentStatus::Terminated,
        DeploymentStatus::Error,
    ];

    /// Terminal states never receive a `Failure` edge.
    pub fn is_terminal(self) -> bool {
        matches!(self, DeploymentStatus::Terminated | DeploymentStatus::Error)
    }

    /// States whose deployment still holds resources.
    pub fn holds_resources(self) -> bool {
        matches!(
            self,
            DeploymentStatus::Deploying
                | DeploymentStatus::Ready
                | DeploymentStatus::Stopped
                | DeploymentStatus::Terminating
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DeploymentStatus::New => "NEW",
            DeploymentStatus::Validating => "VALIDATING",
            DeploymentStatus::Deploying => "DEPLOYING",
            DeploymentStatus::Ready => "READY",
            DeploymentStatus::Stopped => "STOPPED",
            DeploymentStatus::Terminating => "TERMINATING",
            DeploymentStatus::Terminated => "TERMINATED",
            DeploymentStatus::Error => "ERROR",
        }
    }
}

impl fmt::Display for DeploymentStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum LifecycleEvent {
    ValidateOk,
    ResourcesReserved,
    AllReady,
    Stop,
    Start,
    Terminate,
    AllTerminated,
    Failure,
}

impl LifecycleEvent {
    pub const ALL: [LifecycleEvent; 8] = [
        LifecycleEvent::ValidateOk,
        LifecycleEvent::ResourcesReserved,
        LifecycleEvent::AllReady,
        LifecycleEvent::Stop,
        LifecycleEvent::Start,
        LifecycleEvent::Terminate,
        LifecycleEvent::AllTerminated,
        LifecycleEvent::Failure,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("illegal transition: {event:?} in state {current}")]
pub struct IllegalTransition {
    pub current: DeploymentStatus,
    pub event: LifecycleEvent,
}

/// Returns the successor of `current` under `event`.
///
/// The edge set is closed: every pair not listed here is rejected.
pub fn next_state(
    current: DeploymentStatus,
    event: LifecycleEvent,
) -> Result<DeploymentStatus, IllegalTransition> {
    use DeploymentStatus::*;
    use LifecycleEvent::*;
    let next = match (current, event) {
        (New, ValidateOk) => Validating,
        (Validating, ResourcesReserved) => Deploying,
        (Deploying, AllReady) => Ready,
        (Ready, Stop) => Stopped,
        (Stopped, Start) => Ready,
        (Ready | Stopped | Error, Terminate) => Terminating,
        (Terminating, AllTerminated) => Terminated,
        (s, Failure) if !s.is_terminal() => Error,
        _ => return Err(IllegalTransition { current, event }),
    };
    Ok(next)
}
