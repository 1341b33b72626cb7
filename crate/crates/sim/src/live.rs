use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use gridwatch_core::{load_paths, Clock, Model, ScaledClock, SystemClock, Timestamp};

use crate::agents::Agents;
use crate::scenario::{parse_scenario, Scenario};
use crate::simulation::EventRecord;
use crate::world::World;
use crate::SimError;

/// Reads `monitor.cfg` and `scenario.cfg` from a generated directory.
pub fn load_dir(dir: &Path) -> Result<(Model, Scenario), SimError> {
    let model = load_paths(&[dir.join("monitor.cfg")])?;
    let scenario = parse_scenario(&std::fs::read_to_string(dir.join("scenario.cfg"))?)?;
    for a in &scenario.agents {
        if !model.hosts.contains_key(&a.host) {
            return Err(SimError::InvalidScenario(format!("agent host {} is not in the monitor config", a.host)));
        }
    }
    Ok((model, scenario))
}

/// Live agents plus the real-time event driver.
pub struct LiveRun {
    agents: Agents,
    clock: ScaledClock,
    start: Timestamp,
    scenario: Scenario,
    next: usize,
    log: Option<File>,
}

impl LiveRun {
    pub fn start(model: &Model, scenario: Scenario, speed: f64, event_log: Option<PathBuf>) -> Result<Self, SimError> {
        if !(speed.is_finite() && speed > 0.0) {
            return Err(SimError::InvalidParams("speed must be positive".into()));
        }
        let agents = Agents::spawn(World::new(&scenario, model).into_shared())?;
        let log = match event_log {
            Some(p) => Some(OpenOptions::new().create(true).append(true).open(p)?),
            None => None,
        };
        let start = SystemClock.now();
        Ok(LiveRun {
            agents,
            clock: ScaledClock::new(start, speed),
            start,
            scenario,
            next: 0,
            log,
        })
    }

    pub fn agents(&self) -> &Agents {
        &self.agents
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    /// Applies every event that is due; returns how long to sleep before the
    /// next one, or `None` when none remain.
    pub fn step(&mut self) -> Result<Option<Duration>, SimError> {
        let now = self.clock.now();
        while let Some(e) = self.scenario.events.get(self.next) {
            let at = self.start.plus_secs(e.at_s);
            if at > now {
                let wait = Duration::from_millis((at.0 - now.0) as u64);
                return Ok(Some(self.clock.real_duration(wait)));
            }
            self.agents.apply(&e.action)?;
            let rec = EventRecord { at, action: e.action.clone() };
            log::info!("{}", rec.log_line());
            if let Some(f) = &mut self.log {
                writeln!(f, "{}", rec.log_line())?;
            }
            self.next += 1;
        }
        Ok(None)
    }

    /// Drives events until `duration_s` virtual seconds have passed, or
    /// forever when `None`.
    pub fn run(&mut self, duration_s: Option<u64>) -> Result<(), SimError> {
        let end = duration_s.map(|d| self.start.plus_secs(d));
        loop {
            let wait = self.step()?;
            let now = self.clock.now();
            if end.is_some_and(|e| now >= e) {
                return Ok(());
            }
            let until_end = end.map(|e| self.clock.real_duration(Duration::from_millis((e.0 - now.0) as u64)));
            let nap = [wait, until_end, Some(Duration::from_millis(200))].into_iter().flatten().min().unwrap_or_default();
            thread::sleep(nap);
        }
    }
}
