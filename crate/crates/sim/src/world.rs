use std::collections::BTreeMap;
use std::fmt::Write;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use gridwatch_core::Model;

use crate::scenario::{Action, AgentKind, Scenario};
use crate::SimError;

pub type SharedWorld = Arc<RwLock<World>>;

/// What a client connecting to a port would see.
#[derive(Debug, Clone, PartialEq)]
pub enum Probe {
    Refused,
    /// Nothing answers: the host sits behind a router that is down.
    TimedOut,
    Open {
        kind: AgentKind,
        latency: Duration,
        document: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Listener {
    host: String,
    kind: AgentKind,
    up: bool,
    values: Vec<(String, String)>,
}

/// Mutable state of every simulated agent.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    parents: BTreeMap<String, Vec<String>>,
    /// First listener of each host; while it is down the host forwards no traffic.
    primary: BTreeMap<String, u16>,
    listeners: BTreeMap<u16, Listener>,
    extra_latency_ms: BTreeMap<String, u64>,
    base_latency: Duration,
}

impl World {
    pub fn new(scenario: &Scenario, model: &Model) -> Self {
        let mut primary = BTreeMap::new();
        let mut listeners = BTreeMap::new();
        for a in &scenario.agents {
            primary.entry(a.host.clone()).or_insert(a.port);
            listeners.insert(
                a.port,
                Listener {
                    host: a.host.clone(),
                    kind: a.kind,
                    up: true,
                    values: a.values.clone(),
                },
            );
        }
        World {
            parents: model.hosts.values().map(|h| (h.host_name.clone(), h.parents.clone())).collect(),
            primary,
            listeners,
            extra_latency_ms: BTreeMap::new(),
            base_latency: Duration::from_millis(2),
        }
    }

    pub fn into_shared(self) -> SharedWorld {
        Arc::new(RwLock::new(self))
    }

    fn forwards(&self, host: &str) -> bool {
        self.primary.get(host).is_none_or(|p| self.listeners[p].up)
    }

    /// Whether traffic from the monitor gets to `host`: a parentless host is
    /// adjacent to the monitor, otherwise some parent must be reachable and forwarding.
    pub fn reachable(&self, host: &str) -> bool {
        match self.parents.get(host) {
            None => true,
            Some(ps) if ps.is_empty() => true,
            Some(ps) => ps.iter().any(|p| self.reachable(p) && self.forwards(p)),
        }
    }

    pub fn latency(&self, host: &str) -> Duration {
        self.base_latency + Duration::from_millis(self.extra_latency_ms.get(host).copied().unwrap_or(0))
    }

    /// Ports with their listener host, and whether a connection would succeed.
    pub fn ports(&self) -> Vec<(u16, String, bool)> {
        self.listeners
            .iter()
            .map(|(p, l)| (*p, l.host.clone(), l.up && self.reachable(&l.host)))
            .collect()
    }

    /// Whether a connection to `port` would be accepted right now.
    pub fn port_open(&self, port: u16) -> bool {
        self.listeners.get(&port).is_some_and(|l| l.up && self.reachable(&l.host))
    }

    pub fn probe(&self, port: u16) -> Probe {
        let Some(l) = self.listeners.get(&port) else {
            return Probe::Refused;
        };
        if !self.reachable(&l.host) {
            return Probe::TimedOut;
        }
        if !l.up {
            return Probe::Refused;
        }
        Probe::Open {
            kind: l.kind,
            latency: self.latency(&l.host),
            document: self.document(port).unwrap_or_default(),
        }
    }

    /// Payload served on `port`: `name value` lines for metrics agents, an
    /// LDIF entry for a GRIS, nothing for plain TCP listeners.
    pub fn document(&self, port: u16) -> Option<String> {
        let l = self.listeners.get(&port)?;
        let mut out = String::new();
        match l.kind {
            AgentKind::Tcp => {}
            AgentKind::Metrics => {
                for (k, v) in &l.values {
                    let _ = writeln!(out, "{k} {v}");
                }
            }
            AgentKind::Gris => {
                let id = format!("{}:2119/jobmanager-pbs-default", l.host);
                let _ = writeln!(out, "dn: GlueCEUniqueID={id}, mds-vo-name=local, o=grid");
                let _ = writeln!(out, "objectClass: GlueCETop");
                let _ = writeln!(out, "objectClass: GlueCE");
                let _ = writeln!(out, "GlueCEUniqueID: {id}");
                let _ = writeln!(out, "GlueCEInfoHostName: {}", l.host);
                for (k, v) in &l.values {
                    let _ = writeln!(out, "{k}: {v}");
                }
            }
        }
        Some(out)
    }

    fn agent_of(&mut self, host: &str, kind: AgentKind) -> Result<&mut Listener, SimError> {
        self.listeners
            .values_mut()
            .find(|l| l.host == host && l.kind == kind)
            .ok_or_else(|| SimError::InvalidScenario(format!("{host} has no {} agent", kind.as_str())))
    }

    pub fn apply(&mut self, action: &Action) -> Result<(), SimError> {
        let set = |values: &mut Vec<(String, String)>, k: &str, v: String| match values.iter_mut().find(|(n, _)| n == k) {
            Some(slot) => slot.1 = v,
            None => values.push((k.to_string(), v)),
        };
        match action {
            Action::KillListener { host, port } | Action::RestoreListener { host, port } => {
                let l = self
                    .listeners
                    .get_mut(port)
                    .filter(|l| l.host == *host)
                    .ok_or_else(|| SimError::InvalidScenario(format!("{host} has no listener on {port}")))?;
                l.up = matches!(action, Action::RestoreListener { .. });
            }
            Action::SetMetric { host, name, value } => {
                set(&mut self.agent_of(host, AgentKind::Metrics)?.values, name, value.to_string())
            }
            Action::SetGrisAttr { host, attr, value } => {
                set(&mut self.agent_of(host, AgentKind::Gris)?.values, attr, value.clone())
            }
            Action::DegradeLatency { host, ms } => {
                if !self.primary.contains_key(host) {
                    return Err(SimError::InvalidScenario(format!("{host} has no agents")));
                }
                self.extra_latency_ms.insert(host.clone(), *ms);
            }
        }
        Ok(())
    }
}
