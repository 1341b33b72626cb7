//! The state thread: owns the monitor, dispatches checks to worker threads,
//! applies results and commands in one serialized path and publishes snapshots.

use std::path::PathBuf;
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, RwLock};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use gridwatch_core::monitor::{CheckPlan, CommandError, Monitor};
use gridwatch_core::retention::write_retention;
use gridwatch_core::{CheckResult, Clock, ExternalCommand, Origin, ScheduledCheck, Timestamp};
use thiserror::Error;
use tokio::sync::oneshot;

use crate::views::StatusSnapshot;

pub type SnapshotCell = Arc<RwLock<Arc<StatusSnapshot>>>;

type Reply = oneshot::Sender<Result<(), CommandError>>;

enum Msg {
    Done(CheckResult),
    Command(ExternalCommand, Reply),
    Shutdown,
}

#[derive(Debug, Error, PartialEq)]
pub enum SubmitError {
    #[error(transparent)]
    Rejected(#[from] CommandError),
    #[error("the monitor is shutting down")]
    Stopped,
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    /// Where retention snapshots go; `None` keeps state in memory only.
    pub state_file: Option<PathBuf>,
    /// Virtual time between retention snapshots.
    pub retention_interval: Duration,
    /// Real time between snapshot publications while results stream in.
    pub publish_interval: Duration,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            state_file: None,
            retention_interval: Duration::from_secs(60),
            publish_interval: Duration::from_millis(100),
        }
    }
}

/// Sends commands into the serialized state path.
#[derive(Clone)]
pub struct CommandSender(mpsc::Sender<Msg>);

impl CommandSender {
    /// Applies `cmd` and waits for the outcome.
    pub async fn submit(&self, cmd: ExternalCommand) -> Result<(), SubmitError> {
        let (tx, rx) = oneshot::channel();
        self.0.send(Msg::Command(cmd, tx)).map_err(|_| SubmitError::Stopped)?;
        Ok(rx.await.map_err(|_| SubmitError::Stopped)??)
    }

    pub fn submit_blocking(&self, cmd: ExternalCommand) -> Result<(), SubmitError> {
        let (tx, rx) = oneshot::channel();
        self.0.send(Msg::Command(cmd, tx)).map_err(|_| SubmitError::Stopped)?;
        Ok(rx.blocking_recv().map_err(|_| SubmitError::Stopped)??)
    }
}

pub struct EngineHandle {
    tx: mpsc::Sender<Msg>,
    snapshot: SnapshotCell,
    thread: Option<JoinHandle<Monitor>>,
}

impl EngineHandle {
    pub fn snapshot(&self) -> Arc<StatusSnapshot> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    pub fn snapshot_cell(&self) -> SnapshotCell {
        self.snapshot.clone()
    }

    pub fn commands(&self) -> CommandSender {
        CommandSender(self.tx.clone())
    }

    /// Stops the state thread after a final retention snapshot and returns the monitor.
    pub fn shutdown(mut self) -> Monitor {
        let _ = self.tx.send(Msg::Shutdown);
        self.thread.take().expect("joined once").join().expect("state thread panicked")
    }
}

impl Drop for EngineHandle {
    fn drop(&mut self) {
        if let Some(t) = self.thread.take() {
            let _ = self.tx.send(Msg::Shutdown);
            let _ = t.join();
        }
    }
}

pub fn spawn(monitor: Monitor, clock: Arc<dyn Clock>, config: EngineConfig) -> EngineHandle {
    let (tx, rx) = mpsc::channel();
    let snapshot = Arc::new(RwLock::new(Arc::new(StatusSnapshot::capture(&monitor, clock.now()))));
    let engine = Engine {
        monitor,
        clock,
        config,
        tx: tx.clone(),
        snapshot: snapshot.clone(),
    };
    let thread = thread::Builder::new()
        .name("gridwatch-state".into())
        .spawn(move || engine.run(rx))
        .expect("spawn state thread");
    EngineHandle { tx, snapshot, thread: Some(thread) }
}

struct Engine {
    monitor: Monitor,
    clock: Arc<dyn Clock>,
    config: EngineConfig,
    tx: mpsc::Sender<Msg>,
    snapshot: SnapshotCell,
}

impl Engine {
    fn run(mut self, rx: mpsc::Receiver<Msg>) -> Monitor {
        let restored: Vec<ScheduledCheck> = self.monitor.in_flight().values().cloned().collect();
        for c in restored {
            self.start(c);
        }
        let mut last_retention = self.clock.now();
        let mut last_publish = Instant::now();
        let mut dirty = false;
        loop {
            let now = self.clock.now();
            for c in self.monitor.dispatch_due(now) {
                self.start(c);
            }
            if dirty && last_publish.elapsed() >= self.config.publish_interval {
                self.publish();
                last_publish = Instant::now();
                dirty = false;
            }
            if now.seconds_since(last_retention) >= self.config.retention_interval.as_secs_f64() {
                self.save(now);
                last_retention = now;
            }
            let msg = rx.recv_timeout(self.wait(now));
            match msg {
                Ok(Msg::Done(result)) => {
                    if let Err(e) = self.monitor.complete(result) {
                        log::warn!("dropping result: {e}");
                    }
                    dirty = true;
                }
                Ok(Msg::Command(cmd, reply)) => {
                    let outcome = self.monitor.apply_command(&cmd, self.clock.now()).map(drop);
                    if let Err(e) = &outcome {
                        log::info!("command {} rejected: {e}", cmd.verb);
                    }
                    self.publish();
                    let _ = reply.send(outcome);
                }
                Ok(Msg::Shutdown) | Err(RecvTimeoutError::Disconnected) => break,
                Err(RecvTimeoutError::Timeout) => {}
            }
        }
        let now = self.clock.now();
        self.save(now);
        self.publish();
        self.monitor
    }

    fn wait(&self, now: Timestamp) -> Duration {
        let cap = Duration::from_millis(50);
        let due = if self.monitor.has_capacity() { self.monitor.next_due_at() } else { None };
        match due {
            Some(t) if t <= now => Duration::from_millis(1),
            Some(t) => self.clock.real_duration(Duration::from_millis((t.0 - now.0) as u64)).clamp(Duration::from_millis(1), cap),
            None => cap,
        }
    }

    fn start(&mut self, check: ScheduledCheck) {
        let plan = self
            .monitor
            .plan(&check.target)
            .unwrap_or_else(|| CheckPlan::Invalid("not checkable".into()));
        let timeout = self
            .clock
            .real_duration(self.monitor.options().scheduler.check_timeout)
            .max(Duration::from_millis(50));
        let clock = self.clock.clone();
        let tx = self.tx.clone();
        thread::spawn(move || {
            let out = plan.run(timeout);
            let result = CheckResult::new(
                check.target,
                out.status,
                &out.summary,
                out.perfdata,
                check.due_at,
                clock.now(),
                Origin::Active,
            );
            let _ = tx.send(Msg::Done(result));
        });
    }

    fn publish(&self) {
        let snap = Arc::new(StatusSnapshot::capture(&self.monitor, self.clock.now()));
        *self.snapshot.write().expect("snapshot lock") = snap;
    }

    fn save(&self, now: Timestamp) {
        if let Some(path) = &self.config.state_file {
            if let Err(e) = write_retention(&self.monitor.snapshot(now), path) {
                log::error!("writing retention file {}: {e}", path.display());
            }
        }
        if let Err(e) = self.monitor.series().save_all() {
            log::error!("saving time series: {e}");
        }
    }
}
