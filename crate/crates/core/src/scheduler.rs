//! Time-ordered check queue and interval/retry scheduling.

use std::collections::{BTreeSet, HashMap};
use std::time::Duration;

use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Model;
use crate::state::{MonitorState, StateType, StateValue};
use crate::status::Target;
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchedulerError {
    #[error("unknown check target {0}")]
    UnknownTarget(Target),
    #[error("invalid scheduler policy: {0}")]
    InvalidPolicy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    Normal,
    Retry,
    Forced,
}

impl CheckKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckKind::Normal => "normal",
            CheckKind::Retry => "retry",
            CheckKind::Forced => "forced",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledCheck {
    pub target: Target,
    pub due_at: Timestamp,
    pub kind: CheckKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulerPolicy {
    pub max_parallel_checks: usize,
    pub check_timeout: Duration,
    /// Fraction of the interval, in [0, 0.1].
    pub jitter_fraction: f64,
}

impl Default for SchedulerPolicy {
    fn default() -> Self {
        SchedulerPolicy {
            max_parallel_checks: 8,
            check_timeout: Duration::from_secs(10),
            jitter_fraction: 0.0,
        }
    }
}

impl SchedulerPolicy {
    pub fn validate(&self) -> Result<(), SchedulerError> {
        if self.max_parallel_checks == 0 {
            return Err(SchedulerError::InvalidPolicy("max_parallel_checks must be >= 1".into()));
        }
        if !(0.0..=0.1).contains(&self.jitter_fraction) {
            return Err(SchedulerError::InvalidPolicy("jitter_fraction must be in [0, 0.1]".into()));
        }
        Ok(())
    }
}

/// One entry per target, ordered by `(due_at, target)`.
#[derive(Debug, Clone, Default)]
pub struct CheckQueue {
    order: BTreeSet<(Timestamp, Target)>,
    entries: HashMap<Target, ScheduledCheck>,
}

impl CheckQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `check`, replacing any entry already queued for its target.
    pub fn push(&mut self, check: ScheduledCheck) {
        self.remove(&check.target);
        self.order.insert((check.due_at, check.target.clone()));
        self.entries.insert(check.target.clone(), check);
    }

    pub fn remove(&mut self, target: &Target) -> Option<ScheduledCheck> {
        let old = self.entries.remove(target)?;
        self.order.remove(&(old.due_at, old.target.clone()));
        Some(old)
    }

    pub fn get(&self, target: &Target) -> Option<&ScheduledCheck> {
        self.entries.get(target)
    }

    /// Removes and returns the earliest entry due at or before `now`; ties
    /// go to the lexicographically smaller (host, service).
    pub fn next_due(&mut self, now: Timestamp) -> Option<ScheduledCheck> {
        let (due, target) = self.order.first()?.clone();
        if due > now {
            return None;
        }
        self.remove(&target)
    }

    pub fn next_due_at(&self) -> Option<Timestamp> {
        self.order.first().map(|(t, _)| *t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in dispatch order.
    pub fn iter(&self) -> impl Iterator<Item = &ScheduledCheck> {
        self.order.iter().map(|(_, t)| &self.entries[t])
    }
}

/// `offset(i) = i * interval / n` for `i in 0..n`.
pub fn initial_offsets(n: usize, interval: Duration) -> Vec<Duration> {
    let total = interval.as_nanos();
    (0..n)
        .map(|i| Duration::from_nanos((i as u128 * total / n.max(1) as u128) as u64))
        .collect()
}

/// First checks for every target in `model`, spread evenly over each
/// check interval among the targets sharing that interval.
pub fn initial_schedule(model: &Model, start: Timestamp) -> Vec<ScheduledCheck> {
    let mut groups: IndexMap<u64, Vec<Target>> = IndexMap::new();
    for t in model.check_targets() {
        let (interval, _) = model.intervals(&t).expect("target comes from the model");
        groups.entry(interval).or_default().push(t);
    }
    let mut out = Vec::new();
    for (interval, targets) in groups {
        let offsets = initial_offsets(targets.len(), Duration::from_secs(interval));
        out.extend(targets.into_iter().zip(offsets).map(|(target, off)| ScheduledCheck {
            target,
            due_at: start + off,
            kind: CheckKind::Normal,
        }));
    }
    out
}

/// Next check after a result: the retry interval while in a SOFT problem
/// state, the normal interval otherwise, with uniform jitter of up to
/// `±jitter_fraction * interval`.
pub fn reschedule<S: StateValue, R: Rng + ?Sized>(
    target: &Target,
    new_state: &MonitorState<S>,
    policy: &SchedulerPolicy,
    model: &Model,
    now: Timestamp,
    rng: &mut R,
) -> Result<ScheduledCheck, SchedulerError> {
    let (check, retry) = model
        .intervals(target)
        .ok_or_else(|| SchedulerError::UnknownTarget(target.clone()))?;
    let soft_problem = new_state.state_type == StateType::Soft && !new_state.current_status.is_ok();
    let (interval, kind) = if soft_problem {
        (retry, CheckKind::Retry)
    } else {
        (check, CheckKind::Normal)
    };
    let base_ms = interval as f64 * 1000.0;
    let jitter = if policy.jitter_fraction > 0.0 {
        rng.gen_range(-policy.jitter_fraction..=policy.jitter_fraction)
    } else {
        0.0
    };
    Ok(ScheduledCheck {
        target: target.clone(),
        due_at: Timestamp(now.0 + (base_ms * (1.0 + jitter)).round() as i64),
        kind,
    })
}

pub fn forced(target: Target, now: Timestamp) -> ScheduledCheck {
    ScheduledCheck {
        target,
        due_at: now,
        kind: CheckKind::Forced,
    }
}
