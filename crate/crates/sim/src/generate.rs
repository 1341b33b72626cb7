use std::fmt::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scenario::{render_scenario, Action, AgentKind, AgentSpec, Scenario, ScenarioEvent};
use crate::SimError;

/// LDIF attribute the generated GRIS checks watch.
pub const GRIS_ATTRIBUTE: &str = "GlueCEStateFreeCPUs";

const VOS: [&str; 4] = ["atlas", "cms", "alice", "lhcb"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenParams {
    pub sites: usize,
    /// Monitored hosts per site, not counting routers.
    pub hosts_per_site: usize,
    /// Length of the router chain in front of each site.
    pub router_depth: usize,
    /// Listeners take consecutive ports after this one.
    pub base_port: u16,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            sites: 5,
            hosts_per_site: 3,
            router_depth: 1,
            base_port: 20000,
        }
    }
}

impl GenParams {
    pub fn listener_count(&self) -> usize {
        // routers: 1; hosts: gatekeeper + metrics; first host: + GRIS
        self.sites * (self.router_depth + 2 * self.hosts_per_site + 1)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidParams(m.to_string()));
        if self.sites == 0 {
            return bad("at least one site is required");
        }
        if self.hosts_per_site == 0 {
            return bad("at least one host per site is required");
        }
        if self.router_depth == 0 {
            return bad("router depth must be at least 1");
        }
        if self.sites > 99 || self.hosts_per_site > 99 || self.router_depth > 9 {
            return bad("at most 99 sites, 99 hosts per site and 9 routers per chain");
        }
        if self.base_port == 0 || self.base_port as usize + self.listener_count() > u16::MAX as usize {
            return bad("port range does not fit below 65536");
        }
        Ok(())
    }
}

/// A generated testbed: the scenario plus the matching monitor configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub scenario: Scenario,
    pub monitor_cfg: String,
}

impl Generated {
    pub fn scenario_cfg(&self) -> String {
        render_scenario(&self.scenario)
    }

    /// Writes `monitor.cfg` and `scenario.cfg` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), SimError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("monitor.cfg"), &self.monitor_cfg)?;
        std::fs::write(dir.join("scenario.cfg"), self.scenario_cfg())?;
        Ok(())
    }

    /// Name of router `level` (1-based) of site `site` (0-based).
    pub fn router_name(site: usize, level: usize) -> String {
        format!("s{:02}-router{level}", site + 1)
    }

    pub fn host_name(site: usize, host: usize) -> String {
        format!("s{:02}-h{:02}", site + 1, host + 1)
    }

    pub fn site_name(site: usize) -> String {
        format!("SITE{:02}", site + 1)
    }
}

fn block(out: &mut String, kind: &str, attrs: &[(&str, String)]) {
    let _ = writeln!(out, "define {kind}{{");
    for (k, v) in attrs {
        let _ = writeln!(out, "    {k:<22} {v}");
    }
    out.push_str("}\n\n");
}

fn round(v: f64, places: i32) -> f64 {
    let m = 10f64.powi(places);
    (v * m).round() / m
}

/// Deterministic testbed for `seed`; equal inputs give byte-identical output.
pub fn generate(seed: u64, params: &GenParams) -> Result<Generated, SimError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = String::from("# gridwatch monitor configuration (generated)\n\n");
    let mut agents = Vec::new();
    let mut next_port = params.base_port;
    let mut port = || {
        next_port += 1;
        next_port
    };

    for vo in VOS {
        block(&mut cfg, "vo", &[("vo_name", vo.to_string())]);
    }
    block(&mut cfg, "contact", &[("contact_name", "oncall".into())]);
    block(&mut cfg, "contact", &[("contact_name", "gridadmin".into())]);
    block(&mut cfg, "contactgroup", &[("contactgroup_name", "ops".into()), ("members", "oncall".into())]);
    block(&mut cfg, "contactgroup", &[("contactgroup_name", "admins".into()), ("members", "gridadmin".into())]);

    for s in 0..params.sites {
        let site = Generated::site_name(s);
        let mut vos: Vec<&str> = VOS.iter().copied().filter(|_| rng.gen_bool(0.6)).collect();
        if vos.is_empty() {
            vos.push(VOS[rng.gen_range(0..VOS.len())]);
        }
        block(
            &mut cfg,
            "site",
            &[
                ("site_name", site.clone()),
                ("latitude", round(rng.gen_range(-60.0..70.0), 3).to_string()),
                ("longitude", round(rng.gen_range(-180.0..180.0), 3).to_string()),
                ("vos", vos.join(",")),
            ],
        );

        let mut parent: Option<String> = None;
        for level in 1..=params.router_depth {
            let name = Generated::router_name(s, level);
            let p = port();
            let mut attrs = vec![
                ("host_name", name.clone()),
                ("alias", format!("{site} router {level}")),
                ("address", "127.0.0.1".into()),
                ("site", site.clone()),
                ("check_command", format!("check_tcp!{p}")),
                ("check_interval", "60".into()),
                ("retry_interval", "10".into()),
                ("max_check_attempts", "3".into()),
                ("contact_groups", "ops".into()),
            ];
            if let Some(par) = &parent {
                attrs.push(("parents", par.clone()));
            }
            block(&mut cfg, "host", &attrs);
            agents.push(AgentSpec { host: name.clone(), kind: AgentKind::Tcp, port: p, values: vec![] });
            parent = Some(name);
        }
        let router = parent.expect("router_depth >= 1");

        for h in 0..params.hosts_per_site {
            let name = Generated::host_name(s, h);
            let gatekeeper = port();
            let metrics = port();
            block(
                &mut cfg,
                "host",
                &[
                    ("host_name", name.clone()),
                    ("address", "127.0.0.1".into()),
                    ("parents", router.clone()),
                    ("site", site.clone()),
                    ("check_command", format!("check_tcp!{gatekeeper}")),
                    ("check_interval", "60".into()),
                    ("retry_interval", "10".into()),
                    ("max_check_attempts", "3".into()),
                    ("contact_groups", "ops".into()),
                ],
            );
            let service_vos = {
                let mut v: Vec<&str> = vos.iter().copied().filter(|_| rng.gen_bool(0.7)).collect();
                if v.is_empty() {
                    v.push(vos.choose(&mut rng).copied().unwrap_or(VOS[0]));
                }
                v.join(",")
            };
            let mut services = vec![
                ("gatekeeper", format!("check_tcp!{gatekeeper}"), "grid_service"),
                ("cpu", format!("check_agent!{metrics}!cpu_load!4!8"), "cpu"),
                ("disk", format!("check_agent!{metrics}!disk_used_pct!85!95"), "disk"),
                ("mem", format!("check_agent!{metrics}!mem_used_pct!90!98"), "mem"),
                ("processes", format!("check_agent!{metrics}!processes!400!800"), "processes"),
            ];
            agents.push(AgentSpec { host: name.clone(), kind: AgentKind::Tcp, port: gatekeeper, values: vec![] });
            agents.push(AgentSpec {
                host: name.clone(),
                kind: AgentKind::Metrics,
                port: metrics,
                values: vec![
                    ("cpu_load".into(), round(rng.gen_range(0.05..2.5), 2).to_string()),
                    ("disk_used_pct".into(), round(rng.gen_range(10.0..70.0), 1).to_string()),
                    ("mem_used_pct".into(), round(rng.gen_range(20.0..75.0), 1).to_string()),
                    ("processes".into(), rng.gen_range(40..300).to_string()),
                ],
            });
            if h == 0 {
                let gris = port();
                let total: u32 = rng.gen_range(16..=128);
                let free: u32 = rng.gen_range(8..=total.min(64));
                services.push(("gris", format!("check_gris!{gris}!{GRIS_ATTRIBUTE}!5:!1:"), "info_service"));
                agents.push(AgentSpec {
                    host: name.clone(),
                    kind: AgentKind::Gris,
                    port: gris,
                    values: vec![
                        (GRIS_ATTRIBUTE.into(), free.to_string()),
                        ("GlueCEStateTotalCPUs".into(), total.to_string()),
                        ("GlueSAStateAvailableSpace".into(), rng.gen_range(1_000_000..90_000_000u64).to_string()),
                    ],
                });
            }
            for (desc, check, kind) in services {
                block(
                    &mut cfg,
                    "service",
                    &[
                        ("host_name", name.clone()),
                        ("service_description", desc.into()),
                        ("check_command", check),
                        ("check_interval", "60".into()),
                        ("retry_interval", "20".into()),
                        ("max_check_attempts", "3".into()),
                        ("contact_groups", "ops".into()),
                        ("vos", service_vos.clone()),
                        ("metric_kind", kind.into()),
                    ],
                );
            }
        }
    }
    block(
        &mut cfg,
        "escalation",
        &[
            ("host_name", "*".into()),
            ("service_description", "*".into()),
            ("first_notification", "3".into()),
            ("contact_groups", "admins".into()),
        ],
    );

    let mut scenario = Scenario { seed, params: *params, agents, events: Vec::new() };
    scenario.validate()?;
    Ok(Generated { scenario, monitor_cfg: cfg })
}

/// Appends `count` random failure and recovery events within `horizon_s`.
pub fn random_events(scenario: &mut Scenario, count: usize, horizon_s: u64) -> Result<(), SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ 0x5ce4_a810);
    for _ in 0..count {
        let agent = scenario.agents.choose(&mut rng).cloned().expect("generated scenarios have agents");
        let at = rng.gen_range(60..horizon_s.max(61));
        let back = (at + rng.gen_range(120..900)).min(horizon_s.max(at));
        let (fail, restore) = match agent.kind {
            AgentKind::Tcp => (
                Action::KillListener { host: agent.host.clone(), port: agent.port },
                Action::RestoreListener { host: agent.host.clone(), port: agent.port },
            ),
            AgentKind::Metrics => {
                let (name, old) = agent.values.choose(&mut rng).cloned().expect("metric agents have values");
                let spike = match name.as_str() {
                    "cpu_load" => 12.0,
                    "processes" => 1500.0,
                    _ => 99.0,
                };
                (
                    Action::SetMetric { host: agent.host.clone(), name: name.clone(), value: spike },
                    Action::SetMetric { host: agent.host.clone(), name, value: old.parse().unwrap_or(0.0) },
                )
            }
            AgentKind::Gris => {
                let old = agent.values[0].1.clone();
                (
                    Action::SetGrisAttr { host: agent.host.clone(), attr: GRIS_ATTRIBUTE.into(), value: "0".into() },
                    Action::SetGrisAttr { host: agent.host.clone(), attr: GRIS_ATTRIBUTE.into(), value: old },
                )
            }
        };
        scenario.events.push(ScenarioEvent { at_s: at, action: fail });
        scenario.events.push(ScenarioEvent { at_s: back, action: restore });
    }
    scenario.validate()
}
