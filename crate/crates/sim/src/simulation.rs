use std::sync::Arc;
use std::time::Duration;

use gridwatch_core::monitor::{CheckPlan, Executor, Monitor, MonitorOptions, VirtualRunner};
use gridwatch_core::plugin::{evaluate_agent, evaluate_gris, BuiltinCheck};
use gridwatch_core::{CheckOutput, Model, PerfDatum, ScheduledCheck, StatusCode, Timestamp};

use crate::scenario::{Action, Scenario};
use crate::world::{Probe, World};
use crate::SimError;

/// Virtual time every simulated check takes.
pub const CHECK_LATENCY: Duration = Duration::from_millis(500);

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub at: Timestamp,
    pub action: Action,
}

impl EventRecord {
    pub fn log_line(&self) -> String {
        format!("{}\t{}", self.at.to_iso8601(), self.action)
    }
}

/// Answers checks from the simulated world as it stood at dispatch time,
/// so results depend only on the target and the virtual time.
#[derive(Debug, Clone)]
pub struct SimExecutor {
    /// World after each event, in time order; the first entry is the initial world.
    timeline: Vec<(Timestamp, World)>,
    pub timeout: Duration,
}

impl SimExecutor {
    pub fn new(initial: World) -> Self {
        SimExecutor {
            timeline: vec![(Timestamp(i64::MIN), initial)],
            timeout: Duration::from_secs(10),
        }
    }

    pub fn world_at(&self, t: Timestamp) -> &World {
        let i = self.timeline.partition_point(|(at, _)| *at <= t);
        &self.timeline[i.saturating_sub(1)].1
    }

    /// Applies `action` from `at` on, on top of every later event.
    pub fn schedule(&mut self, at: Timestamp, action: &Action) -> Result<(), SimError> {
        let i = self.timeline.partition_point(|(t, _)| *t <= at);
        let mut world = self.timeline[i - 1].1.clone();
        world.apply(action)?;
        for (_, later) in &mut self.timeline[i..] {
            later.apply(action)?;
        }
        self.timeline.insert(i, (at, world));
        Ok(())
    }

    fn probe(&self, at: Timestamp, port: u16) -> Probe {
        match self.world_at(at).probe(port) {
            Probe::Open { latency, .. } if latency >= self.timeout => Probe::TimedOut,
            p => p,
        }
    }
}

fn unreachable_output(prefix: &str, probe: &Probe, address: &str, port: u16) -> CheckOutput {
    let why = match probe {
        Probe::TimedOut => "connection timed out",
        _ => "connection refused",
    };
    CheckOutput::new(StatusCode::Critical, &format!("{prefix} CRITICAL - {why} ({address}:{port})"))
}

impl Executor for SimExecutor {
    fn execute(&mut self, check: &ScheduledCheck, plan: &CheckPlan) -> CheckOutput {
        let CheckPlan::Builtin { check: builtin, address } = plan else {
            return plan.run(self.timeout);
        };
        let at = check.due_at;
        match builtin {
            BuiltinCheck::Tcp { port } => match self.probe(at, *port) {
                Probe::Open { latency, .. } => {
                    let secs = latency.as_secs_f64();
                    let mut out = CheckOutput::new(
                        StatusCode::Ok,
                        &format!("TCP OK - {secs:.3} second response time on {address} port {port}"),
                    );
                    out.perfdata.push(PerfDatum::new("time", secs).with_uom("s"));
                    out
                }
                p => unreachable_output("TCP", &p, address, *port),
            },
            BuiltinCheck::Gris { port, attribute, thresholds } => match self.probe(at, *port) {
                Probe::Open { document, .. } => evaluate_gris(&document, attribute, thresholds),
                p => unreachable_output("GRIS", &p, address, *port),
            },
            BuiltinCheck::Agent { port, metric, thresholds } => match self.probe(at, *port) {
                Probe::Open { document, .. } => evaluate_agent(&document, metric, thresholds),
                p => unreachable_output("AGENT", &p, address, *port),
            },
            BuiltinCheck::Dns { .. } => CheckOutput::new(StatusCode::Ok, &format!("DNS OK - {address} resolves")),
        }
    }
}

/// A monitor driven over virtual time against the simulated testbed, with
/// scenario events applied at their scripted times.
pub struct Simulation {
    runner: VirtualRunner<SimExecutor>,
    start: Timestamp,
    events: Vec<EventRecord>,
}

impl Simulation {
    /// Fresh monitor started at `start`, the scenario's time zero.
    pub fn new(model: Arc<Model>, scenario: &Scenario, options: MonitorOptions, start: Timestamp) -> Result<Self, SimError> {
        let monitor = Monitor::new(model, options, start);
        Self::with_monitor(monitor, scenario, start, start)
    }

    /// Drives an existing monitor (for instance one restored from a
    /// snapshot) from `now`, for a scenario that began at `start`.
    pub fn with_monitor(monitor: Monitor, scenario: &Scenario, start: Timestamp, now: Timestamp) -> Result<Self, SimError> {
        let mut exec = SimExecutor::new(World::new(scenario, monitor.model()));
        exec.timeout = monitor.options().scheduler.check_timeout;
        let mut events = Vec::new();
        for e in &scenario.events {
            let at = start.plus_secs(e.at_s);
            exec.schedule(at, &e.action)?;
            events.push(EventRecord { at, action: e.action.clone() });
        }
        Ok(Simulation {
            runner: VirtualRunner::new(monitor, exec, CHECK_LATENCY, now),
            start,
            events,
        })
    }

    pub fn start(&self) -> Timestamp {
        self.start
    }

    pub fn now(&self) -> Timestamp {
        self.runner.now()
    }

    pub fn monitor(&self) -> &Monitor {
        self.runner.monitor()
    }

    pub fn monitor_mut(&mut self) -> &mut Monitor {
        self.runner.monitor_mut()
    }

    pub fn runner(&self) -> &VirtualRunner<SimExecutor> {
        &self.runner
    }

    pub fn runner_mut(&mut self) -> &mut VirtualRunner<SimExecutor> {
        &mut self.runner
    }

    pub fn into_monitor(self) -> Monitor {
        self.runner.into_parts().0
    }

    pub fn world(&self) -> &World {
        self.runner.executor().world_at(self.now())
    }

    /// Adds an event at `at` (not before the current time).
    pub fn inject(&mut self, at: Timestamp, action: Action) -> Result<(), SimError> {
        if at < self.now() {
            return Err(SimError::InvalidScenario(format!("event at {at} is in the past")));
        }
        self.runner.executor_mut().schedule(at, &action)?;
        let i = self.events.partition_point(|e| e.at <= at);
        self.events.insert(i, EventRecord { at, action });
        Ok(())
    }

    pub fn advance_to(&mut self, until: Timestamp) {
        self.runner.advance_to(until);
    }

    pub fn advance_secs(&mut self, secs: u64) {
        let until = self.now().plus_secs(secs);
        self.advance_to(until);
    }

    /// Events whose time has come.
    pub fn applied_events(&self) -> &[EventRecord] {
        let n = self.events.partition_point(|e| e.at <= self.now());
        &self.events[..n]
    }

    pub fn event_log(&self) -> String {
        self.applied_events().iter().map(|e| e.log_line() + "\n").collect()
    }
}
