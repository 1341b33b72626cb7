//! The single state-application path: dispatches due checks, applies
//! results and external commands, drives notifications and metric history.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::command::{CommandKind, ExternalCommand};
use crate::config::{MetricKind, Model, DEFAULT_NOTIFICATION_INTERVAL_S};
use crate::notifier::{
    dispatch, effective_interval, select_contacts, should_send, ExecTransport, NotificationLog,
    NotificationMacros, NotificationRecord, Transport, TransportResult,
};
use crate::plugin::{
    expand, is_builtin_check, map_exit_code, parse_plugin_output, substitute_macros, BuiltinCheck,
    CheckOutput,
};
use crate::retention::{RetentionSnapshot, RngState, FORMAT_VERSION};
use crate::rollup::{map_rollups, site_rollup, RollupError, SiteRollup};
use crate::scheduler::{
    forced, initial_schedule, reschedule, CheckKind, CheckQueue, ScheduledCheck, SchedulerPolicy,
};
use crate::state::{
    apply_host_result, apply_service_result, is_suppressed, AnyStatus, Downtime, EngineEvent, HostPolicy,
    HostState, MonitorState, NotificationReason, ServiceState, StateError, StateValue,
};
use crate::status::{CheckResult, HostReachability, Origin, StatusCode, Target};
use crate::time::Timestamp;
use crate::timeseries::{SeriesKey, SeriesStore};
use crate::topology::Topology;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommandError {
    #[error("unknown target {0}")]
    UnknownTarget(Target),
    #[error("{0} is not in a HARD problem state")]
    NoProblem(Target),
    #[error("unknown downtime id {0}")]
    UnknownDowntime(u64),
    #[error("downtime end must be after its start")]
    InvalidDowntime,
    #[error("{0} has no check command")]
    NotCheckable(Target),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MonitorError {
    #[error("unknown target {0}")]
    UnknownTarget(Target),
    #[error(transparent)]
    State(#[from] StateError),
}

/// How one target is checked.
#[derive(Debug, Clone, PartialEq)]
pub enum CheckPlan {
    Builtin { check: BuiltinCheck, address: String },
    /// Command line with macros already substituted.
    External { command_line: String },
    Invalid(String),
}

impl CheckPlan {
    pub fn run(&self, timeout: Duration) -> CheckOutput {
        match self {
            CheckPlan::Builtin { check, address } => check.run(address, timeout),
            CheckPlan::External { command_line } => crate::plugin::run_plugin(command_line, timeout),
            CheckPlan::Invalid(why) => CheckOutput::new(StatusCode::Unknown, why),
        }
    }
}

/// Resolves the check command of `target`. `None` for unknown targets and
/// hosts without a check command.
pub fn plan_check(model: &Model, target: &Target) -> Option<CheckPlan> {
    let host = model.hosts.get(target.host_name())?;
    let cref = match target {
        Target::Host { .. } => host.check_command.as_ref()?,
        Target::Service { host, service } => &model.service(host, service)?.check_command,
    };
    if let Some(def) = model.commands.get(&cref.name) {
        return Some(CheckPlan::External {
            command_line: substitute_macros(&def.command_line, &host.address, &cref.args),
        });
    }
    if is_builtin_check(&cref.name) {
        return Some(match BuiltinCheck::parse(&cref.name, &cref.args) {
            Ok(check) => CheckPlan::Builtin {
                check,
                address: host.address.clone(),
            },
            Err(e) => CheckPlan::Invalid(format!("{}: {e}", cref.name)),
        });
    }
    Some(CheckPlan::Invalid(format!("undefined command {}", cref.name)))
}

#[derive(Debug, Clone, Copy)]
pub struct MonitorOptions {
    pub scheduler: SchedulerPolicy,
    pub host_policy: HostPolicy,
    pub seed: u64,
    pub history_limit: usize,
}

impl Default for MonitorOptions {
    fn default() -> Self {
        MonitorOptions {
            scheduler: SchedulerPolicy::default(),
            host_policy: HostPolicy::default(),
            seed: 0,
            history_limit: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MonitorStats {
    pub checks_dispatched: u64,
    pub checks_completed: u64,
    pub notifications_sent: u64,
    pub max_in_flight: usize,
}

pub struct Monitor {
    model: Arc<Model>,
    topology: Topology,
    options: MonitorOptions,
    hosts: BTreeMap<String, HostState>,
    services: BTreeMap<Target, ServiceState>,
    downtimes: Vec<Downtime>,
    next_downtime_id: u64,
    notifications_enabled: bool,
    queue: CheckQueue,
    in_flight: BTreeMap<Target, ScheduledCheck>,
    rng: ChaCha8Rng,
    history: VecDeque<NotificationRecord>,
    log: NotificationLog,
    transport: Box<dyn Transport>,
    series: SeriesStore<f64>,
    stats: MonitorStats,
}

impl Monitor {
    /// Fresh monitor with every target OK/HARD and first checks spread
    /// from `start`.
    pub fn new(model: Arc<Model>, options: MonitorOptions, start: Timestamp) -> Self {
        let topology = Topology::from_model(&model);
        let hosts = model
            .hosts
            .keys()
            .map(|h| (h.clone(), HostState::new(Target::host(h))))
            .collect();
        let services = model
            .services
            .values()
            .map(|s| (s.target(), ServiceState::new(s.target())))
            .collect();
        let mut queue = CheckQueue::new();
        for c in initial_schedule(&model, start) {
            queue.push(c);
        }
        Monitor {
            topology,
            hosts,
            services,
            downtimes: Vec::new(),
            next_downtime_id: 1,
            notifications_enabled: true,
            queue,
            in_flight: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(options.seed),
            history: VecDeque::new(),
            log: NotificationLog::in_memory(),
            transport: Box::new(ExecTransport::default()),
            series: SeriesStore::in_memory(),
            stats: MonitorStats::default(),
            options,
            model,
        }
    }

    pub fn with_log(mut self, log: NotificationLog) -> Self {
        self.log = log;
        self
    }

    pub fn with_transport(mut self, transport: Box<dyn Transport>) -> Self {
        self.transport = transport;
        self
    }

    pub fn with_series(mut self, series: SeriesStore<f64>) -> Self {
        self.series = series;
        self
    }

    pub fn model(&self) -> &Arc<Model> {
        &self.model
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn options(&self) -> &MonitorOptions {
        &self.options
    }

    pub fn hosts(&self) -> &BTreeMap<String, HostState> {
        &self.hosts
    }

    pub fn services(&self) -> &BTreeMap<Target, ServiceState> {
        &self.services
    }

    pub fn host_state(&self, host: &str) -> Option<&HostState> {
        self.hosts.get(host)
    }

    pub fn service_state(&self, host: &str, service: &str) -> Option<&ServiceState> {
        self.services.get(&Target::service(host, service))
    }

    pub fn downtimes(&self) -> &[Downtime] {
        &self.downtimes
    }

    pub fn notifications_enabled(&self) -> bool {
        self.notifications_enabled
    }

    pub fn history(&self) -> &VecDeque<NotificationRecord> {
        &self.history
    }

    pub fn log(&self) -> &NotificationLog {
        &self.log
    }

    pub fn series(&self) -> &SeriesStore<f64> {
        &self.series
    }

    pub fn queue(&self) -> &CheckQueue {
        &self.queue
    }

    pub fn in_flight(&self) -> &BTreeMap<Target, ScheduledCheck> {
        &self.in_flight
    }

    pub fn stats(&self) -> MonitorStats {
        self.stats
    }

    pub fn plan(&self, target: &Target) -> Option<CheckPlan> {
        plan_check(&self.model, target)
    }

    /// When the next queued check is due.
    pub fn next_due_at(&self) -> Option<Timestamp> {
        self.queue.next_due_at()
    }

    pub fn has_capacity(&self) -> bool {
        self.in_flight.len() < self.options.scheduler.max_parallel_checks
    }

    /// Pops due checks while fewer than `max_parallel_checks` are running.
    /// Returned entries carry the dispatch time in `due_at`.
    pub fn dispatch_due(&mut self, now: Timestamp) -> Vec<ScheduledCheck> {
        self.downtimes.retain(|d| d.end_at > now);
        let mut out = Vec::new();
        while self.has_capacity() {
            let Some(check) = self.queue.next_due(now) else { break };
            if self.in_flight.contains_key(&check.target) {
                continue;
            }
            let running = ScheduledCheck {
                due_at: now,
                ..check
            };
            self.in_flight.insert(running.target.clone(), running.clone());
            self.stats.checks_dispatched += 1;
            out.push(running);
        }
        self.stats.max_in_flight = self.stats.max_in_flight.max(self.in_flight.len());
        out
    }

    /// Puts every in-flight check back on the queue, due at `now`.
    pub fn requeue_in_flight(&mut self, now: Timestamp) {
        for (_, c) in std::mem::take(&mut self.in_flight) {
            self.queue.push(ScheduledCheck { due_at: now, ..c });
        }
    }

    /// Applies one check result through the state machine, notifications,
    /// metric history and rescheduling.
    pub fn complete(&mut self, result: CheckResult) -> Result<Vec<EngineEvent>, MonitorError> {
        if !self.model.contains(&result.target) {
            return Err(MonitorError::UnknownTarget(result.target.clone()));
        }
        let now = result.finished_at;
        let dispatched = self.in_flight.remove(&result.target);
        self.stats.checks_completed += 1;
        let events = match &result.target {
            Target::Host { host } => self.complete_host(host.clone(), &result)?,
            Target::Service { .. } => self.complete_service(&result)?,
        };
        if dispatched.is_some() || !self.queue.get(&result.target).is_some() {
            self.reschedule(&result.target, now);
        }
        Ok(events)
    }

    fn reschedule(&mut self, target: &Target, now: Timestamp) {
        if plan_check(&self.model, target).is_none() {
            return;
        }
        let next = match target {
            Target::Host { host } => reschedule(
                target,
                &self.hosts[host],
                &self.options.scheduler,
                &self.model,
                now,
                &mut self.rng,
            ),
            Target::Service { .. } => reschedule(
                target,
                &self.services[target],
                &self.options.scheduler,
                &self.model,
                now,
                &mut self.rng,
            ),
        };
        match next {
            Ok(c) => self.queue.push(c),
            Err(e) => log::warn!("cannot reschedule {target}: {e}"),
        }
    }

    fn force_if_due(&mut self, target: Target, since: Timestamp, now: Timestamp) {
        if self.in_flight.contains_key(&target) || plan_check(&self.model, &target).is_none() {
            return;
        }
        let checked_since = self
            .hosts
            .get(target.host_name())
            .and_then(|h| h.last_check)
            .is_some_and(|t| t >= since);
        let queued_sooner = self.queue.get(&target).is_some_and(|c| c.due_at <= now);
        if !checked_since && !queued_sooner {
            self.queue.push(forced(target, now));
        }
    }

    fn complete_service(&mut self, result: &CheckResult) -> Result<Vec<EngineEvent>, MonitorError> {
        let target = result.target.clone();
        let prev = self.services[&target].clone();
        let max_attempts = self.model.max_attempts(&target).unwrap_or(1);
        let (mut next, events) = apply_service_result(&prev, result, max_attempts)?;
        self.process_events(&events, &prev, &mut next, result.finished_at);
        self.services.insert(target.clone(), next);

        if result.status != StatusCode::Ok {
            let host = target.host_name().to_string();
            if self.hosts.get(&host).is_some_and(|h| h.current_status == HostReachability::Up) {
                self.force_if_due(Target::host(host), result.started_at, result.finished_at);
            }
        }
        Ok(events)
    }

    fn complete_host(&mut self, host: String, result: &CheckResult) -> Result<Vec<EngineEvent>, MonitorError> {
        let prev = self.hosts[&host].clone();
        let max_attempts = self.model.max_attempts(&result.target).unwrap_or(1);
        let update = {
            let hosts = &self.hosts;
            let others = |h: &str| hosts.get(h).cloned();
            apply_host_result(
                &prev,
                result,
                &self.topology,
                &others,
                max_attempts,
                self.options.host_policy,
            )?
        };
        let mut next = update.state;
        let events = update.events;
        let first_failure = prev.current_status == HostReachability::Up && next.current_status != HostReachability::Up;
        self.process_events(&events, &prev, &mut next, result.finished_at);
        self.hosts.insert(host.clone(), next);
        for d in update.descendants {
            self.hosts.insert(d.target.host_name().to_string(), d);
        }
        if first_failure {
            let parents: Vec<String> = self.topology.parents(&host).to_vec();
            for p in parents {
                if self.hosts.get(&p).is_some_and(|h| h.current_status == HostReachability::Up) {
                    self.force_if_due(Target::host(p), result.started_at, result.finished_at);
                }
            }
        }
        Ok(events)
    }

    fn process_events<S: StateValue>(
        &mut self,
        events: &[EngineEvent],
        prev: &MonitorState<S>,
        next: &mut MonitorState<S>,
        now: Timestamp,
    ) {
        let mut candidate = false;
        for e in events {
            match e {
                EngineEvent::NotificationCandidate { reason, .. } => {
                    candidate = true;
                    match reason {
                        NotificationReason::Problem => self.notify_problem(next, now),
                        NotificationReason::Recovery => self.notify_recovery(prev, next, now),
                    }
                }
                EngineEvent::MetricSample { target, at, perfdata } => {
                    if let Target::Service { host, service } = target {
                        for p in perfdata {
                            let key = SeriesKey::new(host, service, &p.label);
                            if let Err(e) = self.series.update(&key, *at, p.value) {
                                log::debug!("series {}/{}/{}: {e}", host, service, p.label);
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        if !candidate && next.is_hard_problem() && self.problem_notifiable(next) {
            self.notify_problem(next, now);
        }
    }

    fn problem_notifiable<S: StateValue>(&self, state: &MonitorState<S>) -> bool {
        let unreachable = state.current_status.tagged() == AnyStatus::Host(HostReachability::Unreachable);
        !unreachable || self.options.host_policy.notify_unreachable
    }

    pub fn in_downtime(&self, target: &Target, now: Timestamp) -> bool {
        let host = Target::host(target.host_name());
        self.downtimes
            .iter()
            .any(|d| d.is_active(now) && (d.target == *target || d.target == host))
    }

    /// Suppression shared by problem and recovery notifications.
    fn gated(&self, target: &Target, now: Timestamp) -> bool {
        !self.notifications_enabled || !self.model.notifications_enabled_for(target) || self.in_downtime(target, now)
    }

    fn notify_problem<S: StateValue>(&mut self, state: &mut MonitorState<S>, now: Timestamp) {
        if !state.is_hard_problem() {
            return;
        }
        let target = state.target.clone();
        let host_down = !target.is_host()
            && self
                .hosts
                .get(target.host_name())
                .is_some_and(|h| h.current_status != HostReachability::Up);
        let suppressed = self.gated(&target, now) || host_down || is_suppressed(state, &self.downtimes, now);
        let next_n = state.notification_number + 1;
        let default = self
            .model
            .notification_interval(&target)
            .unwrap_or(DEFAULT_NOTIFICATION_INTERVAL_S);
        let interval = effective_interval(&target, next_n, &self.model.escalations, default);
        if !should_send(state, NotificationReason::Problem, suppressed, now, interval) {
            return;
        }
        let contacts = select_contacts(
            &target,
            next_n,
            &self.model.escalations,
            self.model.default_groups(&target),
            &self.model,
        );
        if contacts.is_empty() {
            log::warn!("no contacts for notification {next_n} of {target}");
            return;
        }
        self.send(state, NotificationReason::Problem, next_n, contacts.clone(), now);
        state.notification_number = next_n;
        state.last_notification_at = Some(now);
        state.notified_contacts = contacts;
    }

    fn notify_recovery<S: StateValue>(
        &mut self,
        prev: &MonitorState<S>,
        next: &MonitorState<S>,
        now: Timestamp,
    ) {
        let suppressed = self.gated(&next.target, now);
        if !should_send(prev, NotificationReason::Recovery, suppressed, now, 0) || prev.notified_contacts.is_empty() {
            return;
        }
        self.send(
            next,
            NotificationReason::Recovery,
            prev.notification_number + 1,
            prev.notified_contacts.clone(),
            now,
        );
    }

    fn send<S: StateValue>(
        &mut self,
        state: &MonitorState<S>,
        reason: NotificationReason,
        number: u32,
        contacts: Vec<String>,
        now: Timestamp,
    ) {
        let mut record = NotificationRecord {
            target: state.target.clone(),
            reason,
            notification_number: number,
            contacts: contacts.clone(),
            sent_at: now,
            transport_result: TransportResult::Ok,
        };
        for name in &contacts {
            let contact = self.model.contacts.get(name);
            let cref = contact.and_then(|c| c.notify_command.as_ref());
            let command = cref.and_then(|r| self.model.commands.get(&r.name).map(|d| (d.command_line.as_str(), r)));
            let macros = NotificationMacros {
                contact_name: name.clone(),
                host_name: state.target.host_name().to_string(),
                service_desc: state.target.service_name().unwrap_or("").to_string(),
                state: state.current_status.to_string(),
                output: state.last_output.clone(),
                notification_number: number,
                notification_type: reason,
            };
            let result = dispatch(&record, name, command, &macros, self.transport.as_ref(), &mut self.log);
            if record.transport_result.is_ok() && !result.is_ok() {
                record.transport_result = result;
            }
        }
        self.stats.notifications_sent += 1;
        self.history.push_back(record);
        while self.history.len() > self.options.history_limit {
            self.history.pop_front();
        }
    }

    /// Command line of the event handler for `target`, with macros expanded.
    pub fn event_handler_line(&self, target: &Target) -> Option<String> {
        let host = self.model.hosts.get(target.host_name())?;
        let (cref, state, state_type) = match target {
            Target::Host { host: h } => {
                let s = self.hosts.get(h)?;
                (host.event_handler.as_ref()?, s.current_status.to_string(), s.state_type)
            }
            Target::Service { host: h, service } => {
                let s = self.services.get(target)?;
                let def = self.model.service(h, service)?;
                (def.event_handler.as_ref()?, s.current_status.to_string(), s.state_type)
            }
        };
        let def = self.model.commands.get(&cref.name)?;
        let line = substitute_macros(&def.command_line, &host.address, &cref.args);
        Some(expand(
            &line,
            &[
                ("HOSTNAME", target.host_name()),
                ("SERVICEDESC", target.service_name().unwrap_or("")),
                ("SERVICESTATE", &state),
                ("HOSTSTATE", &state),
                ("STATETYPE", state_type.as_str()),
            ],
        ))
    }

    pub fn apply_command(&mut self, cmd: &ExternalCommand, now: Timestamp) -> Result<Vec<EngineEvent>, CommandError> {
        let known = |t: &Target| {
            if self.model.contains(t) {
                Ok(())
            } else {
                Err(CommandError::UnknownTarget(t.clone()))
            }
        };
        match &cmd.kind {
            CommandKind::Acknowledge { target, .. } => {
                known(target)?;
                let hard_problem = match target {
                    Target::Host { host } => self.hosts[host].is_hard_problem(),
                    Target::Service { .. } => self.services[target].is_hard_problem(),
                };
                if !hard_problem {
                    return Err(CommandError::NoProblem(target.clone()));
                }
                self.set_ack(target, true);
            }
            CommandKind::RemoveAcknowledgement { target } => {
                known(target)?;
                self.set_ack(target, false);
            }
            CommandKind::ScheduleDowntime {
                target,
                start_at,
                end_at,
                author,
                comment,
            } => {
                known(target)?;
                let d = Downtime::new(self.next_downtime_id, target.clone(), *start_at, *end_at, author, comment)
                    .map_err(|_| CommandError::InvalidDowntime)?;
                self.next_downtime_id += 1;
                self.downtimes.push(d);
            }
            CommandKind::CancelDowntime { id } => {
                let before = self.downtimes.len();
                self.downtimes.retain(|d| d.id != *id);
                if self.downtimes.len() == before {
                    return Err(CommandError::UnknownDowntime(*id));
                }
            }
            CommandKind::EnableNotifications => self.notifications_enabled = true,
            CommandKind::DisableNotifications => self.notifications_enabled = false,
            CommandKind::ForceCheck { target } => {
                known(target)?;
                if plan_check(&self.model, target).is_none() {
                    return Err(CommandError::NotCheckable(target.clone()));
                }
                self.queue.push(forced(target.clone(), now));
            }
            CommandKind::ProcessServiceCheckResult {
                target,
                return_code,
                output,
            } => {
                known(target)?;
                let parsed = parse_plugin_output(output);
                let result = CheckResult::new(
                    target.clone(),
                    map_exit_code(*return_code),
                    &parsed.summary,
                    parsed.perfdata,
                    now,
                    now,
                    Origin::Passive,
                );
                return self
                    .complete(result)
                    .map_err(|_| CommandError::UnknownTarget(target.clone()));
            }
        }
        Ok(Vec::new())
    }

    fn set_ack(&mut self, target: &Target, value: bool) {
        match target {
            Target::Host { host } => self.hosts.get_mut(host).expect("checked").acknowledged = value,
            Target::Service { .. } => self.services.get_mut(target).expect("checked").acknowledged = value,
        }
    }

    pub fn map(&self, vo: Option<&str>, metric: Option<MetricKind>, now: Timestamp) -> Result<Vec<SiteRollup>, RollupError> {
        map_rollups(&self.model, &self.services, &self.downtimes, vo, metric, now)
    }

    pub fn site(&self, site: &str, vo: Option<&str>, metric: Option<MetricKind>, now: Timestamp) -> Result<SiteRollup, RollupError> {
        site_rollup(&self.model, &self.services, &self.downtimes, site, vo, metric, now)
    }

    pub fn snapshot(&self, now: Timestamp) -> RetentionSnapshot {
        RetentionSnapshot {
            format_version: FORMAT_VERSION,
            saved_at: now,
            hosts: self.hosts.values().cloned().collect(),
            services: self.services.values().cloned().collect(),
            downtimes: self.downtimes.clone(),
            next_downtime_id: self.next_downtime_id,
            notifications_enabled: self.notifications_enabled,
            notifications: self.history.iter().cloned().collect(),
            queue: self.queue.iter().cloned().collect(),
            in_flight: self.in_flight.values().cloned().collect(),
            rng: Some(RngState {
                seed: self.rng.get_seed(),
                stream: self.rng.get_stream(),
                word_pos: self.rng.get_word_pos(),
            }),
        }
    }

    /// Adopts retained state. Entries for targets missing from the model are
    /// skipped; returns how many were skipped.
    pub fn restore(&mut self, snap: RetentionSnapshot) -> usize {
        let mut dropped = 0;
        for h in snap.hosts {
            match self.hosts.get_mut(h.target.host_name()) {
                Some(slot) if h.target.is_host() => *slot = h,
                _ => dropped += 1,
            }
        }
        for s in snap.services {
            match self.services.get_mut(&s.target) {
                Some(slot) => *slot = s,
                None => dropped += 1,
            }
        }
        self.downtimes = snap
            .downtimes
            .into_iter()
            .filter(|d| self.model.contains(&d.target))
            .collect();
        self.next_downtime_id = snap.next_downtime_id.max(1);
        self.notifications_enabled = snap.notifications_enabled;
        self.history = snap.notifications.into_iter().collect();
        for c in snap.queue {
            if plan_check(&self.model, &c.target).is_some() {
                self.queue.push(c);
            }
        }
        self.in_flight.clear();
        for c in snap.in_flight {
            if plan_check(&self.model, &c.target).is_some() {
                self.queue.remove(&c.target);
                self.in_flight.insert(c.target.clone(), c);
            }
        }
        if let Some(r) = snap.rng {
            let mut rng = ChaCha8Rng::from_seed(r.seed);
            rng.set_stream(r.stream);
            rng.set_word_pos(r.word_pos);
            self.rng = rng;
        }
        dropped
    }
}

/// Produces check output for dispatched checks; `check.due_at` is the
/// dispatch time.
pub trait Executor {
    fn execute(&mut self, check: &ScheduledCheck, plan: &CheckPlan) -> CheckOutput;
}

/// Runs plans for real: TCP probes, GRIS queries, plugin processes.
#[derive(Debug, Clone)]
pub struct PluginExecutor {
    pub timeout: Duration,
}

impl Executor for PluginExecutor {
    fn execute(&mut self, _check: &ScheduledCheck, plan: &CheckPlan) -> CheckOutput {
        plan.run(self.timeout)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DispatchRecord {
    pub at: Timestamp,
    pub target: Target,
    pub kind: CheckKind,
    pub in_flight: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Pending {
    done_at: Timestamp,
    seq: u64,
    target: Target,
}

/// Discrete-event driver over virtual time. Every check takes `latency`.
pub struct VirtualRunner<E> {
    monitor: Monitor,
    executor: E,
    latency: Duration,
    now: Timestamp,
    pending: BTreeMap<Pending, CheckResult>,
    seq: u64,
    dispatch_log: Vec<DispatchRecord>,
    events: Vec<EngineEvent>,
}

impl<E: Executor> VirtualRunner<E> {
    /// Starts at `now`, re-issuing any checks the monitor has in flight
    /// (as after a restore) at their original dispatch times.
    pub fn new(monitor: Monitor, executor: E, latency: Duration, now: Timestamp) -> Self {
        let mut runner = VirtualRunner {
            monitor,
            executor,
            latency,
            now,
            pending: BTreeMap::new(),
            seq: 0,
            dispatch_log: Vec::new(),
            events: Vec::new(),
        };
        let running: Vec<ScheduledCheck> = runner.monitor.in_flight().values().cloned().collect();
        for c in running {
            runner.start(c);
        }
        runner
    }

    fn start(&mut self, check: ScheduledCheck) {
        let plan = self
            .monitor
            .plan(&check.target)
            .unwrap_or_else(|| CheckPlan::Invalid("not checkable".into()));
        let out = self.executor.execute(&check, &plan);
        let done_at = check.due_at + self.latency;
        let result = CheckResult::new(
            check.target.clone(),
            out.status,
            &out.summary,
            out.perfdata,
            check.due_at,
            done_at,
            Origin::Active,
        );
        self.seq += 1;
        self.pending.insert(
            Pending {
                done_at,
                seq: self.seq,
                target: check.target,
            },
            result,
        );
    }

    pub fn now(&self) -> Timestamp {
        self.now
    }

    pub fn monitor(&self) -> &Monitor {
        &self.monitor
    }

    pub fn monitor_mut(&mut self) -> &mut Monitor {
        &mut self.monitor
    }

    pub fn executor(&self) -> &E {
        &self.executor
    }

    pub fn executor_mut(&mut self) -> &mut E {
        &mut self.executor
    }

    pub fn into_parts(self) -> (Monitor, E) {
        (self.monitor, self.executor)
    }

    pub fn dispatch_log(&self) -> &[DispatchRecord] {
        &self.dispatch_log
    }

    /// Events produced by completed checks so far.
    pub fn events(&self) -> &[EngineEvent] {
        &self.events
    }

    /// Processes every completion and dispatch up to and including `until`.
    pub fn advance_to(&mut self, until: Timestamp) {
        loop {
            let next_done = self.pending.keys().next().map(|p| p.done_at);
            let next_due = if self.monitor.has_capacity() {
                self.monitor.next_due_at().map(|t| t.max(self.now))
            } else {
                None
            };
            let Some(t) = [next_done, next_due].into_iter().flatten().min() else { break };
            if t > until {
                break;
            }
            self.now = t;
            while let Some(entry) = self.pending.first_entry() {
                if entry.key().done_at > t {
                    break;
                }
                let result = entry.remove();
                match self.monitor.complete(result) {
                    Ok(ev) => self.events.extend(ev),
                    Err(e) => log::warn!("dropping result: {e}"),
                }
            }
            for c in self.monitor.dispatch_due(t) {
                self.dispatch_log.push(DispatchRecord {
                    at: t,
                    target: c.target.clone(),
                    kind: c.kind,
                    in_flight: self.monitor.in_flight().len(),
                });
                self.start(c);
            }
        }
        self.now = self.now.max(until);
    }

    pub fn apply_command(&mut self, cmd: &ExternalCommand) -> Result<Vec<EngineEvent>, CommandError> {
        let ev = self.monitor.apply_command(cmd, self.now)?;
        self.events.extend(ev.clone());
        Ok(ev)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::command::parse_external_command;
    use crate::config::load_str;
    use crate::state::StateType;

    const CFG: &str = "\
define command{\n command_name check_x\n command_line /bin/true $HOSTADDRESS$ $ARG1$\n}\n\
define contact{\n contact_name alice\n}\n\
define contactgroup{\n contactgroup_name ops\n members alice\n}\n\
define host{\n host_name h\n address 10.0.0.9\n check_command check_tcp!22\n contact_groups ops\n}\n\
define service{\n host_name h\n service_description S\n check_command check_x!7\n max_check_attempts 1\n contact_groups ops\n notification_interval 60\n}\n";

    fn monitor() -> Monitor {
        Monitor::new(Arc::new(load_str(CFG).unwrap()), MonitorOptions::default(), Timestamp::from_secs(0))
    }

    fn svc(status: StatusCode, t: i64) -> CheckResult {
        CheckResult::new(
            Target::service("h", "S"),
            status,
            "out",
            vec![],
            Timestamp::from_secs(t),
            Timestamp::from_secs(t),
            Origin::Active,
        )
    }

    #[test]
    fn plans() {
        let m = monitor();
        assert_eq!(
            m.plan(&Target::service("h", "S")),
            Some(CheckPlan::External {
                command_line: "/bin/true 10.0.0.9 7".into()
            })
        );
        assert!(matches!(m.plan(&Target::host("h")), Some(CheckPlan::Builtin { .. })));
        assert_eq!(m.plan(&Target::host("nope")), None);
    }

    #[test]
    fn renotification_and_recovery() {
        let mut m = monitor();
        for t in [0, 30, 60, 90, 120] {
            m.complete(svc(StatusCode::Critical, t)).unwrap();
        }
        let numbers: Vec<u32> = m.history().iter().map(|r| r.notification_number).collect();
        assert_eq!(numbers, [1, 2, 3]);
        m.complete(svc(StatusCode::Ok, 130)).unwrap();
        let last = m.history().back().unwrap();
        assert_eq!(
            (last.reason, last.notification_number, last.contacts.clone()),
            (NotificationReason::Recovery, 4, vec!["alice".to_string()])
        );
        assert_eq!(m.log().memory_lines().len(), 4);
    }

    #[test]
    fn ack_and_commands() {
        let mut m = monitor();
        let ack = parse_external_command("[1] ACKNOWLEDGE_SVC_PROBLEM;h;S;jdoe;x").unwrap();
        assert_eq!(m.apply_command(&ack, Timestamp(0)), Err(CommandError::NoProblem(Target::service("h", "S"))));
        m.complete(svc(StatusCode::Critical, 0)).unwrap();
        m.apply_command(&ack, Timestamp(0)).unwrap();
        m.apply_command(&ack, Timestamp(0)).unwrap();
        m.complete(svc(StatusCode::Critical, 100)).unwrap();
        assert_eq!(m.history().len(), 1);
        let cancel = parse_external_command("[1] CANCEL_DOWNTIME;9").unwrap();
        assert_eq!(m.apply_command(&cancel, Timestamp(0)), Err(CommandError::UnknownDowntime(9)));
    }

    #[test]
    fn passive_result_goes_hard() {
        let mut m = monitor();
        let cmd = parse_external_command("[1] PROCESS_SERVICE_CHECK_RESULT;h;S;2;BAD | x=1").unwrap();
        let events = m.apply_command(&cmd, Timestamp::from_secs(5)).unwrap();
        let s = m.service_state("h", "S").unwrap();
        assert_eq!((s.current_status, s.state_type), (StatusCode::Critical, StateType::Hard));
        assert!(events.iter().any(|e| matches!(e, EngineEvent::NotificationCandidate { .. })));
        assert_eq!(m.series().len(), 1);
    }

    struct Fixed(StatusCode);

    impl Executor for Fixed {
        fn execute(&mut self, _: &ScheduledCheck, _: &CheckPlan) -> CheckOutput {
            CheckOutput::new(self.0, "fixed")
        }
    }

    #[test]
    fn runner_respects_parallelism() {
        let mut text = String::from("define host{\n host_name h\n address a\n}\n");
        for i in 0..40 {
            text.push_str(&format!(
                "define service{{\n host_name h\n service_description s{i:02}\n check_command check_tcp!1\n}}\n"
            ));
        }
        let m = Monitor::new(Arc::new(load_str(&text).unwrap()), MonitorOptions::default(), Timestamp(0));
        let mut r = VirtualRunner::new(m, Fixed(StatusCode::Ok), Duration::from_secs(7), Timestamp(0));
        r.advance_to(Timestamp::from_secs(600));
        assert!(r.dispatch_log().iter().all(|d| d.in_flight <= 8));
        assert!(r.monitor().stats().checks_completed >= 40 * 8);
    }

    #[test]
    fn snapshot_restore_round_trip() {
        let mut m = monitor();
        m.complete(svc(StatusCode::Critical, 0)).unwrap();
        let snap = m.snapshot(Timestamp::from_secs(1));
        let mut fresh = monitor();
        assert_eq!(fresh.restore(snap.clone()), 0);
        assert_eq!(fresh.services(), m.services());
        assert_eq!(fresh.snapshot(Timestamp::from_secs(1)), snap);
    }
}
