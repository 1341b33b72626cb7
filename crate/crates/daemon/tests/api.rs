mod common;

use std::time::Duration;

use common::*;
use gridwatch_daemon::{Role, TokenTable};
use gridwatch_sim::{Action, AgentKind, Generated};

#[test]
fn token_file_parsing() {
    let t = TokenTable::parse("# comment\nabc\tviewer\nop1\toperator\n\nroot\tadmin\n").unwrap();
    assert_eq!(t.len(), 3);
    assert_eq!(t.authorize(Some("Bearer op1")), Some(Role::Operator));
    assert_eq!(t.authorize(Some("Bearer nope")), None);
    assert_eq!(t.authorize(Some("op1")), None);
    assert_eq!(t.authorize(None), None);
    assert!(Role::Viewer < Role::Operator && Role::Operator < Role::Admin);
    for bad in ["abc viewer\n", "abc\tsuperuser\n", "\tviewer\n", "a\tviewer\na\tadmin\n"] {
        assert!(TokenTable::parse(bad).is_err(), "{bad:?}");
    }
}

#[test]
fn endpoints_and_roles() {
    let h = LiveHarness::start(3, 2, 60.0);
    let sites = h.generated.scenario.params.sites;

    // authentication
    assert_eq!(h.get("/api/map", None).0, 401);
    assert_eq!(h.get("/api/map", Some("wrong")).0, 401);
    let (code, map) = h.get("/api/map", Some(VIEWER));
    assert_eq!(code, 200);
    assert_eq!(map.as_array().unwrap().len(), sites);
    for site in map.as_array().unwrap() {
        for field in ["site_name", "latitude", "longitude", "vos", "worst_status", "dot_color", "counts", "any_acknowledged", "any_downtime"] {
            assert!(site.get(field).is_some(), "{field} missing in {site}");
        }
    }

    // filters
    assert_eq!(h.get("/api/map?vo=&metric=", Some(VIEWER)).0, 200);
    assert_eq!(h.get("/api/map?vo=nosuchvo", Some(VIEWER)).0, 404);
    assert_eq!(h.get("/api/map?metric=bogus", Some(VIEWER)).0, 400);
    let (code, cpu) = h.get("/api/map?metric=cpu", Some(VIEWER));
    assert_eq!(code, 200);
    for s in cpu.as_array().unwrap() {
        let c = &s["counts"];
        let total: u64 = ["OK", "WARNING", "UNKNOWN", "CRITICAL"].iter().map(|k| c[k].as_u64().unwrap()).sum();
        assert_eq!(total, 2, "one cpu service per host: {s}");
    }

    // site detail
    let (code, site) = h.get(&format!("/api/site/{}", Generated::site_name(0)), Some(VIEWER));
    assert_eq!(code, 200);
    assert_eq!(site["hosts"].as_array().unwrap().len(), 3);
    assert_eq!(site["site_name"], Generated::site_name(0));
    assert_eq!(h.get("/api/site/NOWHERE", Some(VIEWER)).0, 404);

    // listings
    let (code, hosts) = h.get("/api/status/hosts", Some(VIEWER));
    assert_eq!(code, 200);
    assert_eq!(hosts["hosts"].as_array().unwrap().len(), 9);
    let (code, services) = h.get("/api/status/services", Some(VIEWER));
    assert_eq!(code, 200);
    assert_eq!(services["services"].as_array().unwrap().len(), 3 * (2 * 5 + 1));

    // command authorization and validation
    let ok_line = format!("[1] FORCE_CHECK;{}", Generated::host_name(0, 0));
    assert_eq!(h.post("/api/command", None, &ok_line).0, 401);
    assert_eq!(h.post("/api/command", Some(VIEWER), &ok_line).0, 403);
    assert_eq!(h.post("/api/command", Some(OPERATOR), &ok_line).0, 202);
    assert_eq!(h.post("/api/command", Some(OPERATOR), "[1] DISABLE_NOTIFICATIONS").0, 403);
    assert_eq!(h.post("/api/command", Some(ADMIN), "[1] DISABLE_NOTIFICATIONS").0, 202);
    assert_eq!(h.post("/api/command", Some(ADMIN), "[1] ENABLE_NOTIFICATIONS").0, 202);
    assert_eq!(h.post("/api/command", Some(OPERATOR), "[1] FROB;x").0, 400);
    assert_eq!(h.post("/api/command", Some(OPERATOR), "not a command").0, 400);
    assert_eq!(h.post("/api/command", Some(OPERATOR), "[1] FORCE_CHECK;ghost").0, 404);
    assert_eq!(h.post("/api/command", Some(OPERATOR), "[1] CANCEL_DOWNTIME;999").0, 404);
    let host = Generated::host_name(0, 1);
    let ack_ok_service = format!("[1] ACKNOWLEDGE_SVC_PROBLEM;{host};cpu;alice;looking");
    assert_eq!(h.post("/api/command", Some(OPERATOR), &ack_ok_service).0, 409);
    let bad_window = format!("[1] SCHEDULE_DOWNTIME;{host};cpu;200;100;alice;x");
    assert!(matches!(h.post("/api/command", Some(OPERATOR), &bad_window).0, 400));

    h.shutdown();
}

#[test]
fn ack_on_hard_critical_shows_in_listing() {
    let h = LiveHarness::start(2, 2, 60.0);
    let host = Generated::host_name(1, 0);
    let port = h.generated.scenario.agent_of_kind(&host, AgentKind::Tcp).unwrap().port;
    h.agents.apply(&Action::KillListener { host: host.clone(), port }).unwrap();
    let hard_critical = |h: &LiveHarness| {
        let (_, s) = h.get("/api/status/services", Some(VIEWER));
        find(&s["services"], "host_name", &host)
            .iter()
            .any(|v| v["service_description"] == "gatekeeper" && v["status"] == "CRITICAL" && v["state_type"] == "HARD")
    };
    assert!(h.wait_until(Duration::from_secs(15), hard_critical), "service never went HARD CRITICAL");

    let ack = format!("[1] ACKNOWLEDGE_SVC_PROBLEM;{host};gatekeeper;alice;on it");
    assert_eq!(h.post("/api/command", Some(OPERATOR), &ack).0, 202);
    let (_, s) = h.get("/api/status/services", Some(VIEWER));
    let svc = find(&s["services"], "host_name", &host)
        .into_iter()
        .find(|v| v["service_description"] == "gatekeeper")
        .unwrap()
        .clone();
    assert_eq!(svc["acknowledged"], true);
    let (_, site) = h.get(&format!("/api/site/{}", Generated::site_name(1)), Some(VIEWER));
    assert_eq!(site["any_acknowledged"], true);
    assert_eq!(site["dot_color"], "red");

    let (code, notes) = h.get("/api/notifications?limit=5", Some(VIEWER));
    assert_eq!(code, 200);
    assert!(notes.as_array().unwrap().len() <= 5);
    h.shutdown();
}

#[test]
fn mutating_route_is_fail_closed() {
    let h = LiveHarness::start(1, 1, 60.0);
    let lines = [
        "[1] ENABLE_NOTIFICATIONS".to_string(),
        "[1] DISABLE_NOTIFICATIONS".to_string(),
        format!("[1] FORCE_CHECK;{}", Generated::host_name(0, 0)),
        format!("[1] ACKNOWLEDGE_HOST_PROBLEM;{};a;b", Generated::host_name(0, 0)),
        "garbage".to_string(),
        String::new(),
    ];
    for line in &lines {
        for token in [None, Some(VIEWER), Some("Bearer-less"), Some("")] {
            let code = h.post("/api/command", token, line).0;
            assert!(code == 401 || code == 403, "{line:?} with {token:?} gave {code}");
        }
    }
    h.shutdown();
}

#[test]
fn history_endpoint_serves_series() {
    let h = LiveHarness::start(1, 1, 120.0);
    let host = Generated::host_name(0, 0);
    let path = format!("/api/history/{host}/cpu/cpu_load?res=0");
    // base step 10s, finest archive one row per step: a few virtual minutes yields rows
    assert!(h.wait_until(Duration::from_secs(15), |h| {
        let (code, v) = h.get(&path, Some(VIEWER));
        code == 200 && v["points"].as_array().is_some_and(|p| p.iter().any(|x| x["v"].is_number()))
    }));
    let (_, v) = h.get(&path, Some(VIEWER));
    assert_eq!(v["label"], "cpu_load");
    assert_eq!(h.get(&format!("/api/history/{host}/cpu/nolabel"), Some(VIEWER)).0, 404);
    assert_eq!(h.get(&format!("/api/history/{host}/cpu/cpu_load?start=10&end=5"), Some(VIEWER)).0, 400);
    h.shutdown();
}

#[test]
fn cors_preflight_allowed() {
    let h = LiveHarness::start(1, 1, 60.0);
    let resp = h
        .client
        .request(reqwest::Method::OPTIONS, format!("{}/api/map", h.base))
        .header("Origin", "http://console.example")
        .header("Access-Control-Request-Method", "GET")
        .header("Access-Control-Request-Headers", "authorization")
        .send()
        .unwrap();
    assert!(resp.status().is_success());
    assert!(resp.headers().contains_key("access-control-allow-origin"));
    h.shutdown();
}

proptest::proptest! {
    #[test]
    fn unknown_credentials_never_authorize(header in proptest::option::of(".{0,40}")) {
        let t = tokens();
        let expected = header
            .as_deref()
            .and_then(|h| h.strip_prefix("Bearer "))
            .and_then(|tok| [(VIEWER, Role::Viewer), (OPERATOR, Role::Operator), (ADMIN, Role::Admin)]
                .into_iter()
                .find(|(k, _)| *k == tok)
                .map(|(_, r)| r));
        proptest::prop_assert_eq!(t.authorize(header.as_deref()), expected);
    }
}
