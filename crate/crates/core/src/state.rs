//! SOFT/HARD state machine for hosts and services, suppression, and the
//! events emitted by state transitions.

use std::fmt::{self, Debug, Display};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plugin::PerfDatum;
use crate::status::{CheckResult, HostReachability, StatusCode, Target};
use crate::time::Timestamp;
use crate::topology::{classify_host, Topology};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StateError {
    #[error("result for {got} applied to state of {expected}")]
    TargetMismatch { expected: Target, got: Target },
    #[error("unknown host {0:?}")]
    UnknownHost(String),
    #[error("downtime must end after it starts")]
    InvalidDowntime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StateType {
    Soft,
    Hard,
}

impl StateType {
    pub fn as_str(self) -> &'static str {
        match self {
            StateType::Soft => "SOFT",
            StateType::Hard => "HARD",
        }
    }
}

impl Display for StateType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A status value that can be tracked by [`MonitorState`].
pub trait StateValue: Copy + Eq + Debug + Display + Send + Sync + 'static {
    const OK: Self;

    fn is_ok(self) -> bool {
        self == Self::OK
    }

    fn tagged(self) -> AnyStatus;
}

impl StateValue for StatusCode {
    const OK: Self = StatusCode::Ok;

    fn tagged(self) -> AnyStatus {
        AnyStatus::Service(self)
    }
}

impl StateValue for HostReachability {
    const OK: Self = HostReachability::Up;

    fn tagged(self) -> AnyStatus {
        AnyStatus::Host(self)
    }
}

/// Either kind of status, for events that cover hosts and services alike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnyStatus {
    Service(StatusCode),
    Host(HostReachability),
}

impl Display for AnyStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnyStatus::Service(s) => Display::fmt(s, f),
            AnyStatus::Host(h) => Display::fmt(h, f),
        }
    }
}

/// The retained per-target record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorState<S> {
    pub target: Target,
    pub current_status: S,
    /// Status as of the most recent HARD state; SOFT episodes leave it alone.
    pub last_hard_status: S,
    pub state_type: StateType,
    pub attempt: u32,
    pub last_check: Option<Timestamp>,
    pub last_state_change: Option<Timestamp>,
    pub notification_number: u32,
    pub acknowledged: bool,
    pub last_notification_at: Option<Timestamp>,
    /// Contacts reached by the latest problem notification of this episode.
    pub notified_contacts: Vec<String>,
    pub last_output: String,
}

pub type ServiceState = MonitorState<StatusCode>;
pub type HostState = MonitorState<HostReachability>;

impl<S: StateValue> MonitorState<S> {
    /// Fresh OK/HARD state, never checked.
    pub fn new(target: Target) -> Self {
        MonitorState {
            target,
            current_status: S::OK,
            last_hard_status: S::OK,
            state_type: StateType::Hard,
            attempt: 1,
            last_check: None,
            last_state_change: None,
            notification_number: 0,
            acknowledged: false,
            last_notification_at: None,
            notified_contacts: Vec::new(),
            last_output: String::new(),
        }
    }

    pub fn is_hard_problem(&self) -> bool {
        self.state_type == StateType::Hard && !self.current_status.is_ok()
    }
}

impl HostState {
    pub fn own_check_failed(&self) -> bool {
        self.current_status != HostReachability::Up
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NotificationReason {
    Problem,
    Recovery,
}

impl NotificationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            NotificationReason::Problem => "problem",
            NotificationReason::Recovery => "recovery",
        }
    }
}

impl Display for NotificationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EngineEvent {
    StateChange {
        target: Target,
        old: AnyStatus,
        new: AnyStatus,
        state_type: StateType,
    },
    NotificationCandidate {
        target: Target,
        reason: NotificationReason,
    },
    EventHandlerTrigger {
        target: Target,
        old: AnyStatus,
        new: AnyStatus,
    },
    MetricSample {
        target: Target,
        at: Timestamp,
        perfdata: Vec<PerfDatum>,
    },
}

impl EngineEvent {
    pub fn target(&self) -> &Target {
        match self {
            EngineEvent::StateChange { target, .. }
            | EngineEvent::NotificationCandidate { target, .. }
            | EngineEvent::EventHandlerTrigger { target, .. }
            | EngineEvent::MetricSample { target, .. } => target,
        }
    }
}

/// Scheduled notification blackout for a host or service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Downtime {
    pub id: u64,
    pub target: Target,
    pub start_at: Timestamp,
    pub end_at: Timestamp,
    pub author: String,
    pub comment: String,
}

impl Downtime {
    pub fn new(
        id: u64,
        target: Target,
        start_at: Timestamp,
        end_at: Timestamp,
        author: impl Into<String>,
        comment: impl Into<String>,
    ) -> Result<Self, StateError> {
        if end_at <= start_at {
            return Err(StateError::InvalidDowntime);
        }
        Ok(Downtime {
            id,
            target,
            start_at,
            end_at,
            author: author.into(),
            comment: comment.into(),
        })
    }

    /// Half-open window `[start_at, end_at)`.
    pub fn is_active(&self, now: Timestamp) -> bool {
        self.start_at <= now && now < self.end_at
    }
}

pub fn is_suppressed<S>(state: &MonitorState<S>, downtimes: &[Downtime], now: Timestamp) -> bool {
    state.acknowledged
        || downtimes
            .iter()
            .any(|d| d.target == state.target && d.is_active(now))
}

/// Core SOFT/HARD transition shared by hosts and services.
fn transition<S: StateValue>(
    state: &MonitorState<S>,
    value: S,
    max_attempts: u32,
    at: Timestamp,
    output: &str,
    events: &mut Vec<EngineEvent>,
) -> MonitorState<S> {
    let max_attempts = max_attempts.max(1);
    let old = state.current_status;
    let old_type = state.state_type;
    let mut next = state.clone();
    next.last_check = Some(at);
    next.last_output = output.to_string();
    next.current_status = value;

    let mut notify = None;
    if value.is_ok() {
        next.state_type = StateType::Hard;
        next.attempt = 1;
        next.last_hard_status = value;
        if !old.is_ok() {
            if old_type == StateType::Hard {
                notify = Some(NotificationReason::Recovery);
            }
            next.notification_number = 0;
            next.last_notification_at = None;
            next.notified_contacts.clear();
            next.acknowledged = false;
        }
    } else if old.is_ok() {
        next.attempt = 1;
        if max_attempts == 1 {
            next.state_type = StateType::Hard;
            next.last_hard_status = value;
            notify = Some(NotificationReason::Problem);
        } else {
            next.state_type = StateType::Soft;
        }
    } else if old_type == StateType::Soft {
        next.attempt = (state.attempt + 1).min(max_attempts);
        if next.attempt >= max_attempts {
            next.state_type = StateType::Hard;
            next.last_hard_status = value;
            notify = Some(NotificationReason::Problem);
        }
    } else {
        next.attempt = max_attempts;
        next.last_hard_status = value;
    }

    let value_changed = old != value;
    if value_changed {
        next.last_state_change = Some(at);
    }
    if value_changed || old_type != next.state_type {
        events.push(EngineEvent::StateChange {
            target: state.target.clone(),
            old: old.tagged(),
            new: value.tagged(),
            state_type: next.state_type,
        });
        events.push(EngineEvent::EventHandlerTrigger {
            target: state.target.clone(),
            old: old.tagged(),
            new: value.tagged(),
        });
    }
    if let Some(reason) = notify {
        events.push(EngineEvent::NotificationCandidate {
            target: state.target.clone(),
            reason,
        });
    }
    next
}

fn ensure_target<S>(state: &MonitorState<S>, result: &CheckResult) -> Result<(), StateError> {
    if state.target != result.target {
        return Err(StateError::TargetMismatch {
            expected: state.target.clone(),
            got: result.target.clone(),
        });
    }
    Ok(())
}

fn metric_event(result: &CheckResult, events: &mut Vec<EngineEvent>) {
    if !result.perfdata.is_empty() {
        events.push(EngineEvent::MetricSample {
            target: result.target.clone(),
            at: result.finished_at,
            perfdata: result.perfdata.clone(),
        });
    }
}

pub fn apply_service_result(
    state: &ServiceState,
    result: &CheckResult,
    max_attempts: u32,
) -> Result<(ServiceState, Vec<EngineEvent>), StateError> {
    ensure_target(state, result)?;
    let mut events = Vec::new();
    let next = transition(
        state,
        result.status,
        max_attempts,
        result.finished_at,
        &result.summary,
        &mut events,
    );
    metric_event(result, &mut events);
    Ok((next, events))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HostPolicy {
    /// Emit notification candidates for hosts that go HARD UNREACHABLE.
    pub notify_unreachable: bool,
}

/// Result of applying a host check: the host's new state plus any
/// descendants whose reachability changed as a consequence.
#[derive(Debug, Clone, PartialEq)]
pub struct HostUpdate {
    pub state: HostState,
    pub events: Vec<EngineEvent>,
    pub descendants: Vec<HostState>,
}

/// A host's own check passes on OK or WARNING.
pub fn host_check_passed(status: StatusCode) -> bool {
    matches!(status, StatusCode::Ok | StatusCode::Warning)
}

/// Runs the state machine for a host whose problem value comes from
/// [`classify_host`]. `others` looks up the current state of any other host.
pub fn apply_host_result(
    state: &HostState,
    result: &CheckResult,
    topology: &Topology,
    others: &dyn Fn(&str) -> Option<HostState>,
    max_attempts: u32,
    policy: HostPolicy,
) -> Result<HostUpdate, StateError> {
    ensure_target(state, result)?;
    let host = state.target.host_name().to_string();
    let own_failed = !host_check_passed(result.status);
    let failed = |h: &str| {
        if h == host {
            own_failed
        } else {
            others(h).is_some_and(|s| s.own_check_failed())
        }
    };
    let value = classify_host(topology, &failed, &host)?;

    let mut events = Vec::new();
    let next = transition(
        state,
        value,
        max_attempts,
        result.finished_at,
        &result.summary,
        &mut events,
    );
    if value == HostReachability::Unreachable && !policy.notify_unreachable {
        events.retain(|e| {
            !matches!(
                e,
                EngineEvent::NotificationCandidate {
                    reason: NotificationReason::Problem,
                    ..
                }
            )
        });
    }
    metric_event(result, &mut events);

    let mut descendants = Vec::new();
    let went_hard_problem = next.is_hard_problem()
        && (state.state_type != StateType::Hard || state.current_status != value);
    if went_hard_problem {
        for d in topology.descendants(&host) {
            let Some(ds) = others(&d) else { continue };
            if !ds.own_check_failed() {
                continue;
            }
            let reclassified = classify_host(topology, &failed, &d)?;
            if reclassified == ds.current_status {
                continue;
            }
            let mut updated = ds.clone();
            updated.current_status = reclassified;
            if updated.state_type == StateType::Hard {
                updated.last_hard_status = reclassified;
            }
            updated.last_state_change = Some(result.finished_at);
            events.push(EngineEvent::StateChange {
                target: ds.target.clone(),
                old: ds.current_status.tagged(),
                new: reclassified.tagged(),
                state_type: ds.state_type,
            });
            descendants.push(updated);
        }
    }

    Ok(HostUpdate {
        state: next,
        events,
        descendants,
    })
}
