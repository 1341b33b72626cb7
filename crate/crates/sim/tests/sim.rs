use std::sync::Arc;
use std::time::Duration;

use gridwatch_core::monitor::MonitorOptions;
use gridwatch_core::plugin::{check_gris, check_tcp, Thresholds};
use gridwatch_core::{load_str, StatusCode, Timestamp};
use gridwatch_sim::{
    generate, parse_scenario, pick_base_port, random_events, Action, AgentKind, Agents, GenParams, Generated,
    Probe, SimError, Simulation, World, GRIS_ATTRIBUTE,
};

fn params(sites: usize, hosts: usize) -> GenParams {
    GenParams { sites, hosts_per_site: hosts, ..GenParams::default() }
}

#[test]
fn seed_42_five_by_three() {
    let g = generate(42, &params(5, 3)).unwrap();
    let model = load_str(&g.monitor_cfg).unwrap();
    let routers: Vec<_> = model.hosts.values().filter(|h| h.host_name.contains("router")).collect();
    let hosts: Vec<_> = model.hosts.values().filter(|h| !h.host_name.contains("router")).collect();
    assert_eq!(hosts.len(), 15);
    assert_eq!(routers.len(), 5);
    assert!(model.services.len() >= 30, "{}", model.services.len());
    assert_eq!(model.sites.len(), 5);
    for h in &hosts {
        assert_eq!(h.parents.len(), 1);
        let parent = &model.hosts[&h.parents[0]];
        assert!(parent.host_name.contains("router"));
        assert_eq!(parent.site, h.site);
    }
    for r in routers {
        assert!(r.parents.is_empty());
    }
}

#[test]
fn generation_is_byte_identical() {
    let a = generate(7, &params(4, 2)).unwrap();
    let b = generate(7, &params(4, 2)).unwrap();
    assert_eq!(a.monitor_cfg, b.monitor_cfg);
    assert_eq!(a.scenario_cfg(), b.scenario_cfg());
    assert_ne!(a.monitor_cfg, generate(8, &params(4, 2)).unwrap().monitor_cfg);

    let dir = tempfile::tempdir().unwrap();
    a.write_to(dir.path()).unwrap();
    let (model, scenario) = gridwatch_sim::load_dir(dir.path()).unwrap();
    assert_eq!(scenario, a.scenario);
    assert_eq!(model.hosts.len(), 4 * 3);
}

#[test]
fn invalid_params() {
    for p in [params(0, 3), params(3, 0), GenParams { router_depth: 0, ..params(1, 1) }, GenParams { base_port: 65500, ..params(5, 5) }] {
        assert!(matches!(generate(1, &p), Err(SimError::InvalidParams(_))), "{p:?}");
    }
}

#[test]
fn router_chain_depth() {
    let g = generate(3, &GenParams { router_depth: 3, ..params(2, 2) }).unwrap();
    let model = load_str(&g.monitor_cfg).unwrap();
    assert_eq!(model.hosts[&Generated::router_name(0, 3)].parents, vec![Generated::router_name(0, 2)]);
    assert_eq!(model.hosts[&Generated::host_name(1, 1)].parents, vec![Generated::router_name(1, 3)]);
}

#[test]
fn scenario_round_trip_with_events() {
    let mut g = generate(11, &params(3, 2)).unwrap();
    random_events(&mut g.scenario, 10, 3600).unwrap();
    g.scenario.events.push(gridwatch_sim::ScenarioEvent {
        at_s: 3000,
        action: Action::DegradeLatency { host: Generated::host_name(0, 0), ms: 250 },
    });
    g.scenario.validate().unwrap();
    let text = g.scenario_cfg();
    assert_eq!(parse_scenario(&text).unwrap(), g.scenario);
    assert!(g.scenario.events.windows(2).all(|w| w[0].at_s <= w[1].at_s));
}

#[test]
fn dangling_event_rejected() {
    let g = generate(11, &params(1, 1)).unwrap();
    let text = g.scenario_cfg() + "define event{\n at 5\n action kill_listener\n host_name nowhere\n port 1\n}\n";
    assert!(matches!(parse_scenario(&text), Err(SimError::InvalidScenario(_))));
    let text = g.scenario_cfg() + "define event{\n at 5\n action explode\n host_name s01-h01\n}\n";
    assert!(matches!(parse_scenario(&text), Err(SimError::InvalidScenario(_))));
}

#[test]
fn router_down_hides_children() {
    let g = generate(5, &params(2, 3)).unwrap();
    let model = load_str(&g.monitor_cfg).unwrap();
    let mut w = World::new(&g.scenario, &model);
    let router = Generated::router_name(0, 1);
    let rport = g.scenario.agents.iter().find(|a| a.host == router).unwrap().port;
    w.apply(&Action::KillListener { host: router.clone(), port: rport }).unwrap();
    assert_eq!(w.probe(rport), Probe::Refused);
    for a in &g.scenario.agents {
        let child = a.host.starts_with("s01-h");
        if child {
            assert_eq!(w.probe(a.port), Probe::TimedOut, "{}", a.host);
        } else if a.host.starts_with("s02") {
            assert!(matches!(w.probe(a.port), Probe::Open { .. }));
        }
    }
    w.apply(&Action::RestoreListener { host: router, port: rport }).unwrap();
    assert!(w.ports().iter().all(|(_, _, open)| *open));
}

fn live(sites: usize, hosts: usize) -> (Generated, Agents) {
    for _ in 0..5 {
        let count = GenParams { base_port: 1, ..params(sites, hosts) }.listener_count();
        let base = pick_base_port(count).expect("free ports");
        let g = generate(42, &GenParams { base_port: base, ..params(sites, hosts) }).unwrap();
        let model = load_str(&g.monitor_cfg).unwrap();
        match Agents::spawn(World::new(&g.scenario, &model).into_shared()) {
            Ok(a) => return (g, a),
            Err(SimError::PortInUse(_)) => continue,
            Err(e) => panic!("{e}"),
        }
    }
    panic!("no free port range");
}

fn wait_for(mut f: impl FnMut() -> bool) -> bool {
    for _ in 0..200 {
        if f() {
            return true;
        }
        std::thread::sleep(Duration::from_millis(10));
    }
    false
}

#[test]
fn kill_listener_seen_by_check_tcp() {
    let (g, agents) = live(1, 1);
    let router = Generated::router_name(0, 1);
    let port = g.scenario.agents.iter().find(|a| a.host == router).unwrap().port;
    let t = Duration::from_millis(500);
    assert_eq!(check_tcp("127.0.0.1", port, t).status, StatusCode::Ok);
    agents.apply(&Action::KillListener { host: router.clone(), port }).unwrap();
    assert!(wait_for(|| check_tcp("127.0.0.1", port, t).status == StatusCode::Critical));
    // the host behind it goes dark too
    let child_port = g.scenario.agent_of_kind(&Generated::host_name(0, 0), AgentKind::Tcp).unwrap().port;
    assert!(wait_for(|| check_tcp("127.0.0.1", child_port, t).status == StatusCode::Critical));
    agents.apply(&Action::RestoreListener { host: router, port }).unwrap();
    assert!(wait_for(|| check_tcp("127.0.0.1", port, t).status == StatusCode::Ok));
    agents.shutdown();
}

#[test]
fn gris_attribute_drives_check_gris() {
    let (g, agents) = live(1, 1);
    let host = Generated::host_name(0, 0);
    let port = g.scenario.agent_of_kind(&host, AgentKind::Gris).unwrap().port;
    let th = Thresholds::parse("5:", "1:", false).unwrap();
    let t = Duration::from_millis(500);
    agents.apply(&Action::SetGrisAttr { host: host.clone(), attr: GRIS_ATTRIBUTE.into(), value: "12".into() }).unwrap();
    let out = check_gris("127.0.0.1", port, GRIS_ATTRIBUTE, &th, t);
    assert_eq!(out.status, StatusCode::Ok, "{}", out.summary);
    assert_eq!(out.perfdata[0].label, "gluecestatefreecpus");
    assert_eq!(out.perfdata[0].value, 12.0);
    agents.apply(&Action::SetGrisAttr { host: host.clone(), attr: GRIS_ATTRIBUTE.into(), value: "0".into() }).unwrap();
    assert_eq!(check_gris("127.0.0.1", port, GRIS_ATTRIBUTE, &th, t).status, StatusCode::Critical);
    agents.apply(&Action::SetGrisAttr { host, attr: GRIS_ATTRIBUTE.into(), value: "3".into() }).unwrap();
    assert_eq!(check_gris("127.0.0.1", port, GRIS_ATTRIBUTE, &th, t).status, StatusCode::Warning);
}

#[test]
fn port_in_use_reported() {
    let (g, _agents) = live(1, 1);
    let model = load_str(&g.monitor_cfg).unwrap();
    let again = Agents::spawn(World::new(&g.scenario, &model).into_shared());
    assert!(matches!(again, Err(SimError::PortInUse(_))));
}

fn virtual_run(g: &Generated, secs: u64) -> Simulation {
    let model = Arc::new(load_str(&g.monitor_cfg).unwrap());
    let mut sim = Simulation::new(model, &g.scenario, MonitorOptions::default(), Timestamp::from_secs(1_000_000)).unwrap();
    sim.advance_secs(secs);
    sim
}

#[test]
fn quiet_scenario_stays_ok() {
    let g = generate(42, &params(5, 3)).unwrap();
    let sim = virtual_run(&g, 600);
    let m = sim.monitor();
    assert!(m.services().values().all(|s| s.current_status == StatusCode::Ok && s.last_check.is_some()));
    assert!(m.hosts().values().all(|h| h.current_status == gridwatch_core::HostReachability::Up));
    assert!(m.log().memory_lines().is_empty());
}

#[test]
fn same_scenario_same_notification_log() {
    let mut g = generate(9, &params(3, 3)).unwrap();
    random_events(&mut g.scenario, 12, 3000).unwrap();
    let a = virtual_run(&g, 3600);
    let b = virtual_run(&g, 3600);
    assert!(!a.monitor().log().memory_lines().is_empty());
    assert_eq!(a.monitor().log().memory_lines(), b.monitor().log().memory_lines());
    assert_eq!(a.event_log(), b.event_log());
    assert_eq!(a.applied_events().len(), g.scenario.events.len());
}

#[test]
fn router_storm_single_notification() {
    use gridwatch_core::state::{NotificationReason, StateType};
    use gridwatch_core::HostReachability;
    let mut g = generate(42, &params(10, 5)).unwrap();
    let router = Generated::router_name(3, 1);
    let port = g.scenario.agents.iter().find(|a| a.host == router).unwrap().port;
    g.scenario.events.push(gridwatch_sim::ScenarioEvent { at_s: 300, action: Action::KillListener { host: router.clone(), port } });
    let mut sim = virtual_run(&g, 300);
    sim.advance_secs(120);
    let m = sim.monitor();
    let down: Vec<_> = m.hosts().values().filter(|h| h.current_status == HostReachability::Down).collect();
    let unreach: Vec<_> = m.hosts().values().filter(|h| h.current_status == HostReachability::Unreachable).collect();
    assert_eq!(down.len(), 1);
    assert_eq!(down[0].target.host_name(), router);
    assert_eq!(down[0].state_type, StateType::Hard);
    assert_eq!(unreach.len(), 5, "{unreach:#?}");
    assert!(unreach.iter().all(|h| h.target.host_name().starts_with("s04-h")));
    let problems: Vec<_> = m.history().iter().filter(|n| n.reason == NotificationReason::Problem).collect();
    assert_eq!(problems.len(), 1, "{:#?}", m.history());
    assert_eq!(problems[0].target.host_name(), router);
    assert_eq!(m.log().memory_lines().len(), 1);
}
