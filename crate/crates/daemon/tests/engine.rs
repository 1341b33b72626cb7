use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use gridwatch_core::monitor::{Monitor, MonitorOptions};
use gridwatch_core::retention::read_retention;
use gridwatch_core::{load_str, Clock, ScaledClock, SystemClock};
use gridwatch_daemon::pipe::spawn_command_pipe;
use gridwatch_daemon::{spawn, EngineConfig, EngineHandle};

const CFG: &str = "\
define host{\n host_name h\n address 127.0.0.1\n check_command check_tcp!1\n}\n\
define service{\n host_name h\n service_description S\n check_command check_tcp!1\n check_interval 60\n retry_interval 10\n}\n";

fn engine(clock: Arc<dyn Clock>, config: EngineConfig) -> EngineHandle {
    let monitor = Monitor::new(Arc::new(load_str(CFG).unwrap()), MonitorOptions::default(), clock.now());
    spawn(monitor, clock, config)
}

fn wait_for(mut f: impl FnMut() -> bool) -> bool {
    let deadline = Instant::now() + Duration::from_secs(5);
    while Instant::now() < deadline {
        if f() {
            return true;
        }
        std::thread::sleep(Duration::from_millis(10));
    }
    false
}

#[test]
fn pipe_applies_complete_lines_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cmd");
    let e = engine(Arc::new(SystemClock), EngineConfig { publish_interval: Duration::from_millis(10), ..EngineConfig::default() });
    spawn_command_pipe(path.clone(), e.commands()).unwrap();
    assert!(path.exists());
    let mut f = std::fs::OpenOptions::new().append(true).open(&path).unwrap();

    writeln!(f, "garbage line").unwrap();
    writeln!(f, "[1] DISABLE_NOTIFICATIONS").unwrap();
    assert!(wait_for(|| !e.snapshot().notifications_enabled));

    write!(f, "[2] ENABLE_NOTIF").unwrap();
    f.flush().unwrap();
    std::thread::sleep(Duration::from_millis(300));
    assert!(!e.snapshot().notifications_enabled, "partial line applied");
    writeln!(f, "ICATIONS").unwrap();
    assert!(wait_for(|| e.snapshot().notifications_enabled));
    e.shutdown();
}

#[test]
fn shutdown_writes_restorable_retention() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("retention.dat");
    let clock = Arc::new(ScaledClock::new(SystemClock.now(), 120.0));
    let e = engine(
        clock,
        EngineConfig { state_file: Some(state.clone()), publish_interval: Duration::from_millis(10), ..EngineConfig::default() },
    );
    // port 1 refuses, so the service walks through its SOFT attempts
    assert!(wait_for(|| e.snapshot().services().iter().any(|s| s.attempt >= 2)));
    let monitor = e.shutdown();
    let loaded = read_retention(&state, monitor.model()).unwrap();
    assert_eq!(loaded.dropped, 0);
    let mut fresh = Monitor::new(monitor.model().clone(), MonitorOptions::default(), loaded.snapshot.saved_at);
    fresh.restore(loaded.snapshot);
    assert_eq!(fresh.services(), monitor.services());
    assert_eq!(fresh.hosts(), monitor.hosts());
}
