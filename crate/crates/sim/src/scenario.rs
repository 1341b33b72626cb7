use std::collections::BTreeSet;
use std::fmt::{self, Write};
use std::str::FromStr;

use gridwatch_core::config::{parse_blocks, RawBlock};

use crate::generate::GenParams;
use crate::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgentKind {
    /// Accepts and closes; stands in for a grid or network service port.
    Tcp,
    /// Serves `name value` lines.
    Metrics,
    /// Serves an LDIF document.
    Gris,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Tcp => "tcp",
            AgentKind::Metrics => "metrics",
            AgentKind::Gris => "gris",
        }
    }
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tcp" => Ok(AgentKind::Tcp),
            "metrics" => Ok(AgentKind::Metrics),
            "gris" => Ok(AgentKind::Gris),
            _ => Err(format!("unknown agent kind {s:?}")),
        }
    }
}

/// One listener of a simulated host.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub host: String,
    pub kind: AgentKind,
    pub port: u16,
    /// Metric values or GRIS attributes, in file order.
    pub values: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    KillListener { host: String, port: u16 },
    RestoreListener { host: String, port: u16 },
    SetMetric { host: String, name: String, value: f64 },
    SetGrisAttr { host: String, attr: String, value: String },
    DegradeLatency { host: String, ms: u64 },
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::KillListener { .. } => "kill_listener",
            Action::RestoreListener { .. } => "restore_listener",
            Action::SetMetric { .. } => "set_metric",
            Action::SetGrisAttr { .. } => "set_gris_attr",
            Action::DegradeLatency { .. } => "degrade_latency",
        }
    }

    pub fn host(&self) -> &str {
        match self {
            Action::KillListener { host, .. }
            | Action::RestoreListener { host, .. }
            | Action::SetMetric { host, .. }
            | Action::SetGrisAttr { host, .. }
            | Action::DegradeLatency { host, .. } => host,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}", self.name(), self.host())?;
        match self {
            Action::KillListener { port, .. } | Action::RestoreListener { port, .. } => write!(f, ", {port}")?,
            Action::SetMetric { name, value, .. } => write!(f, ", {name}, {value}")?,
            Action::SetGrisAttr { attr, value, .. } => write!(f, ", {attr}, {value}")?,
            Action::DegradeLatency { ms, .. } => write!(f, ", {ms}ms")?,
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEvent {
    /// Virtual seconds after the scenario start.
    pub at_s: u64,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub params: GenParams,
    pub agents: Vec<AgentSpec>,
    /// Sorted by `at_s`; ties keep file order.
    pub events: Vec<ScenarioEvent>,
}

impl Scenario {
    pub fn agent(&self, host: &str, port: u16) -> Option<&AgentSpec> {
        self.agents.iter().find(|a| a.host == host && a.port == port)
    }

    pub fn agent_of_kind(&self, host: &str, kind: AgentKind) -> Option<&AgentSpec> {
        self.agents.iter().find(|a| a.host == host && a.kind == kind)
    }

    /// Sorts the events and checks that every reference resolves.
    pub fn validate(&mut self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        let mut ports = BTreeSet::new();
        for a in &self.agents {
            if !ports.insert(a.port) {
                return bad(format!("port {} used twice", a.port));
            }
        }
        self.events.sort_by_key(|e| e.at_s);
        for e in &self.events {
            let host = e.action.host();
            let ok = match &e.action {
                Action::KillListener { port, .. } | Action::RestoreListener { port, .. } => {
                    self.agent(host, *port).is_some()
                }
                Action::SetMetric { .. } => self.agent_of_kind(host, AgentKind::Metrics).is_some(),
                Action::SetGrisAttr { .. } => self.agent_of_kind(host, AgentKind::Gris).is_some(),
                Action::DegradeLatency { .. } => self.agents.iter().any(|a| a.host == host),
            };
            if !ok {
                return bad(format!("event at {}s: {} does not match an agent", e.at_s, e.action));
            }
        }
        Ok(())
    }
}

fn parse_values(text: &str) -> Result<Vec<(String, String)>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| format!("expected name=value, got {kv:?}"))
        })
        .collect()
}

struct Block<'a>(&'a RawBlock);

impl Block<'_> {
    fn err(&self, msg: impl fmt::Display) -> SimError {
        let loc = &self.0.location;
        SimError::InvalidScenario(format!("{}:{}: {} block: {msg}", loc.file, loc.line, self.0.kind))
    }

    fn req(&self, attr: &str) -> Result<&str, SimError> {
        self.0
            .attributes
            .get(attr)
            .map(String::as_str)
            .ok_or_else(|| self.err(format!("missing {attr}")))
    }

    fn num<T: FromStr>(&self, attr: &str) -> Result<T, SimError> {
        let v = self.req(attr)?;
        v.parse().map_err(|_| self.err(format!("{attr} = {v:?} is not a valid number")))
    }

    fn num_or<T: FromStr>(&self, attr: &str, default: T) -> Result<T, SimError> {
        match self.0.attributes.get(attr) {
            Some(_) => self.num(attr),
            None => Ok(default),
        }
    }
}

/// Reads a scenario file: one `scenario` block, `agent` blocks and `event` blocks.
pub fn parse_scenario(text: &str) -> Result<Scenario, SimError> {
    let blocks = parse_blocks(text, "<scenario>", &["scenario", "agent", "event"])
        .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
    let mut head = None;
    let mut agents = Vec::new();
    let mut events = Vec::new();
    for raw in &blocks {
        let b = Block(raw);
        match raw.kind.as_str() {
            "scenario" => {
                if head.is_some() {
                    return Err(b.err("only one scenario block is allowed"));
                }
                let params = GenParams {
                    sites: b.num("sites")?,
                    hosts_per_site: b.num("hosts_per_site")?,
                    router_depth: b.num_or("router_depth", 1)?,
                    base_port: b.num("base_port")?,
                };
                head = Some((b.num::<u64>("seed")?, params));
            }
            "agent" => {
                let kind = b.req("kind")?.parse().map_err(|e| b.err(e))?;
                let values = match raw.attributes.get("values") {
                    Some(v) => parse_values(v).map_err(|e| b.err(e))?,
                    None => Vec::new(),
                };
                agents.push(AgentSpec {
                    host: b.req("host_name")?.to_string(),
                    kind,
                    port: b.num("port")?,
                    values,
                });
            }
            _ => {
                let host = b.req("host_name")?.to_string();
                let action = match b.req("action")? {
                    "kill_listener" => Action::KillListener { host, port: b.num("port")? },
                    "restore_listener" => Action::RestoreListener { host, port: b.num("port")? },
                    "set_metric" => {
                        let value: f64 = b.num("value")?;
                        if !value.is_finite() {
                            return Err(b.err("value must be finite"));
                        }
                        Action::SetMetric { host, name: b.req("name")?.to_string(), value }
                    }
                    "set_gris_attr" => Action::SetGrisAttr {
                        host,
                        attr: b.req("attribute")?.to_string(),
                        value: b.req("value")?.to_string(),
                    },
                    "degrade_latency" => Action::DegradeLatency { host, ms: b.num("ms")? },
                    other => return Err(b.err(format!("unknown action {other:?}"))),
                };
                events.push(ScenarioEvent { at_s: b.num("at")?, action });
            }
        }
    }
    let (seed, params) = head.ok_or_else(|| SimError::InvalidScenario("missing scenario block".into()))?;
    let mut s = Scenario { seed, params, agents, events };
    s.validate()?;
    Ok(s)
}

fn block(out: &mut String, kind: &str, attrs: &[(&str, String)]) {
    let _ = writeln!(out, "define {kind}{{");
    for (k, v) in attrs {
        let _ = writeln!(out, "    {k:<15} {v}");
    }
    out.push_str("}\n\n");
}

pub fn render_scenario(s: &Scenario) -> String {
    let mut out = String::from("# gridwatch-sim scenario\n\n");
    let p = &s.params;
    block(
        &mut out,
        "scenario",
        &[
            ("seed", s.seed.to_string()),
            ("sites", p.sites.to_string()),
            ("hosts_per_site", p.hosts_per_site.to_string()),
            ("router_depth", p.router_depth.to_string()),
            ("base_port", p.base_port.to_string()),
        ],
    );
    for a in &s.agents {
        let mut attrs = vec![
            ("host_name", a.host.clone()),
            ("kind", a.kind.as_str().to_string()),
            ("port", a.port.to_string()),
        ];
        if !a.values.is_empty() {
            let vals: Vec<String> = a.values.iter().map(|(k, v)| format!("{k}={v}")).collect();
            attrs.push(("values", vals.join(",")));
        }
        block(&mut out, "agent", &attrs);
    }
    for e in &s.events {
        let mut attrs = vec![
            ("at", e.at_s.to_string()),
            ("action", e.action.name().to_string()),
            ("host_name", e.action.host().to_string()),
        ];
        match &e.action {
            Action::KillListener { port, .. } | Action::RestoreListener { port, .. } => {
                attrs.push(("port", port.to_string()))
            }
            Action::SetMetric { name, value, .. } => {
                attrs.push(("name", name.clone()));
                attrs.push(("value", value.to_string()));
            }
            Action::SetGrisAttr { attr, value, .. } => {
                attrs.push(("attribute", attr.clone()));
                attrs.push(("value", value.clone()));
            }
            Action::DegradeLatency { ms, .. } => attrs.push(("ms", ms.to_string())),
        }
        block(&mut out, "event", &attrs);
    }
    out
}
