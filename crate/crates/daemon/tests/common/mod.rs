#![allow(dead_code)]

use std::sync::Arc;
use std::time::{Duration, Instant};

use gridwatch_core::monitor::{Monitor, MonitorOptions};
use gridwatch_core::{load_str, Clock, ScaledClock, SystemClock, Timestamp};
use gridwatch_daemon::{router, spawn, ApiState, EngineConfig, EngineHandle, Role, TokenTable};
use gridwatch_sim::{generate, pick_base_port, Agents, GenParams, Generated, SimError, World};
use serde_json::Value;

pub const VIEWER: &str = "viewer-token";
pub const OPERATOR: &str = "operator-token";
pub const ADMIN: &str = "admin-token";

pub fn tokens() -> TokenTable {
    TokenTable::from_pairs([(VIEWER, Role::Viewer), (OPERATOR, Role::Operator), (ADMIN, Role::Admin)])
}

/// Generated testbed with live agents, a running engine on a scaled clock
/// and the API served on an ephemeral loopback port.
pub struct LiveHarness {
    pub generated: Generated,
    pub agents: Agents,
    pub engine: Option<EngineHandle>,
    pub clock: Arc<ScaledClock>,
    pub base: String,
    pub client: reqwest::blocking::Client,
    pub started: Instant,
    rt: tokio::runtime::Runtime,
}

impl LiveHarness {
    pub fn start(sites: usize, hosts: usize, speed: f64) -> Self {
        let (generated, agents) = live_testbed(sites, hosts);
        let model = Arc::new(load_str(&generated.monitor_cfg).expect("generated config loads"));
        let clock = Arc::new(ScaledClock::new(SystemClock.now(), speed));
        let monitor = Monitor::new(model, MonitorOptions::default(), clock.now());
        let config = EngineConfig { publish_interval: Duration::from_millis(10), ..EngineConfig::default() };
        let engine = spawn(monitor, clock.clone(), config);
        Self::serve(generated, agents, engine, clock)
    }

    pub fn serve(generated: Generated, agents: Agents, engine: EngineHandle, clock: Arc<ScaledClock>) -> Self {
        let state = ApiState {
            snapshot: engine.snapshot_cell(),
            commands: engine.commands(),
            tokens: Arc::new(tokens()),
        };
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        listener.set_nonblocking(true).unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        rt.spawn(async move {
            let l = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(l, router(state)).await.unwrap();
        });
        LiveHarness {
            generated,
            agents,
            engine: Some(engine),
            clock,
            base,
            client: reqwest::blocking::Client::builder().timeout(Duration::from_secs(5)).build().unwrap(),
            started: Instant::now(),
            rt,
        }
    }

    pub fn engine(&self) -> &EngineHandle {
        self.engine.as_ref().unwrap()
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    /// Sleeps until the virtual clock reaches `start + secs`.
    pub fn sleep_until_virtual(&self, t: Timestamp) {
        let now = self.now();
        if t > now {
            std::thread::sleep(self.clock.real_duration(Duration::from_millis((t.0 - now.0) as u64)));
        }
    }

    pub fn get(&self, path: &str, token: Option<&str>) -> (u16, Value) {
        let mut req = self.client.get(format!("{}{path}", self.base));
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().unwrap_or(Value::Null))
    }

    pub fn post(&self, path: &str, token: Option<&str>, body: &str) -> (u16, Value) {
        let mut req = self.client.post(format!("{}{path}", self.base)).body(body.to_string());
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().unwrap_or(Value::Null))
    }

    /// Polls `f` every 10ms for up to `wall` real time.
    pub fn wait_until(&self, wall: Duration, mut f: impl FnMut(&Self) -> bool) -> bool {
        let deadline = Instant::now() + wall;
        while Instant::now() < deadline {
            if f(self) {
                return true;
            }
            std::thread::sleep(Duration::from_millis(10));
        }
        f(self)
    }

    pub fn shutdown(mut self) -> Monitor {
        let m = self.engine.take().unwrap().shutdown();
        self.rt.shutdown_background();
        m
    }
}

pub fn live_testbed(sites: usize, hosts: usize) -> (Generated, Agents) {
    let params = GenParams { sites, hosts_per_site: hosts, ..GenParams::default() };
    for _ in 0..8 {
        let base = pick_base_port(GenParams { base_port: 1, ..params }.listener_count()).expect("free ports");
        let generated = generate(42, &GenParams { base_port: base, ..params }).unwrap();
        let model = load_str(&generated.monitor_cfg).unwrap();
        match Agents::spawn(World::new(&generated.scenario, &model).into_shared()) {
            Ok(agents) => return (generated, agents),
            Err(SimError::PortInUse(_)) => continue,
            Err(e) => panic!("{e}"),
        }
    }
    panic!("no free port range for the testbed");
}

/// Entries of a JSON array field whose `key` equals `value`.
pub fn find<'a>(items: &'a Value, key: &str, value: &str) -> Vec<&'a Value> {
    items.as_array().map(|a| a.iter().filter(|v| v[key] == value).collect()).unwrap_or_default()
}
