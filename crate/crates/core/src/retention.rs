//! Retention file: engine state in `section { key=value }` blocks with a
//! trailing CRC32 line.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use thiserror::Error;

use crate::config::Model;
use crate::notifier::{NotificationRecord, TransportResult};
use crate::scheduler::{CheckKind, ScheduledCheck};
use crate::state::{Downtime, HostState, MonitorState, NotificationReason, ServiceState, StateType};
use crate::status::Target;
use crate::time::Timestamp;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RetentionError {
    #[error("retention I/O failure: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt retention snapshot: {0}")]
    CorruptSnapshot(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetentionSnapshot {
    pub format_version: u32,
    pub saved_at: Timestamp,
    pub hosts: Vec<HostState>,
    pub services: Vec<ServiceState>,
    pub downtimes: Vec<Downtime>,
    pub next_downtime_id: u64,
    pub notifications_enabled: bool,
    /// Most recent notification records, oldest first.
    pub notifications: Vec<NotificationRecord>,
    pub queue: Vec<ScheduledCheck>,
    pub in_flight: Vec<ScheduledCheck>,
    pub rng: Option<RngState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSnapshot {
    pub snapshot: RetentionSnapshot,
    /// States whose target no longer exists in the model.
    pub dropped: usize,
}

fn escape(v: &str) -> String {
    let mut out = String::with_capacity(v.len());
    for c in v.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(v: &str) -> String {
    let mut out = String::with_capacity(v.len());
    let mut chars = v.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

struct Section {
    name: &'static str,
    fields: Vec<(&'static str, String)>,
}

impl Section {
    fn new(name: &'static str) -> Self {
        Section {
            name,
            fields: Vec::new(),
        }
    }

    fn kv(mut self, key: &'static str, value: impl ToString) -> Self {
        self.fields.push((key, value.to_string()));
        self
    }

    fn target(self, t: &Target) -> Self {
        let s = self.kv("host_name", t.host_name());
        match t.service_name() {
            Some(svc) => s.kv("service_description", svc),
            None => s,
        }
    }

    fn render(&self, out: &mut String) {
        let _ = writeln!(out, "{} {{", self.name);
        for (k, v) in &self.fields {
            let _ = writeln!(out, "{k}={}", escape(v));
        }
        out.push_str("}\n");
    }
}

fn opt_ts(t: Option<Timestamp>) -> String {
    t.map(|t| t.millis().to_string()).unwrap_or_default()
}

fn state_section<S: ToString>(name: &'static str, s: &MonitorState<S>) -> Section {
    Section::new(name)
        .target(&s.target)
        .kv("current_status", s.current_status.to_string())
        .kv("last_hard_status", s.last_hard_status.to_string())
        .kv("state_type", s.state_type)
        .kv("attempt", s.attempt)
        .kv("last_check", opt_ts(s.last_check))
        .kv("last_state_change", opt_ts(s.last_state_change))
        .kv("notification_number", s.notification_number)
        .kv("acknowledged", s.acknowledged as u8)
        .kv("last_notification_at", opt_ts(s.last_notification_at))
        .kv("notified_contacts", s.notified_contacts.join(","))
        .kv("last_output", &s.last_output)
}

fn check_section(name: &'static str, c: &ScheduledCheck) -> Section {
    Section::new(name)
        .target(&c.target)
        .kv("due_at", c.due_at.millis())
        .kv("kind", c.kind.as_str())
}

/// Renders `snap` in the retention text format, checksum line included.
pub fn render_retention(snap: &RetentionSnapshot) -> String {
    let mut sections = Vec::new();
    let mut info = Section::new("info")
        .kv("format_version", snap.format_version)
        .kv("saved_at", snap.saved_at.millis())
        .kv("next_downtime_id", snap.next_downtime_id)
        .kv("notifications_enabled", snap.notifications_enabled as u8);
    if let Some(r) = &snap.rng {
        let seed: String = r.seed.iter().map(|b| format!("{b:02x}")).collect();
        info = info
            .kv("rng_seed", seed)
            .kv("rng_stream", r.stream)
            .kv("rng_word_pos", r.word_pos);
    }
    sections.push(info);
    sections.extend(snap.hosts.iter().map(|h| state_section("host", h)));
    sections.extend(snap.services.iter().map(|s| state_section("service", s)));
    sections.extend(snap.downtimes.iter().map(|d| {
        Section::new("downtime")
            .kv("id", d.id)
            .target(&d.target)
            .kv("start_at", d.start_at.millis())
            .kv("end_at", d.end_at.millis())
            .kv("author", &d.author)
            .kv("comment", &d.comment)
    }));
    sections.extend(snap.notifications.iter().map(|n| {
        Section::new("notification")
            .target(&n.target)
            .kv("reason", n.reason)
            .kv("notification_number", n.notification_number)
            .kv("contacts", n.contacts.join(","))
            .kv("sent_at", n.sent_at.millis())
            .kv("transport_result", &n.transport_result)
    }));
    sections.extend(snap.queue.iter().map(|c| check_section("scheduled", c)));
    sections.extend(snap.in_flight.iter().map(|c| check_section("inflight", c)));

    let mut out = String::from("# gridwatch retention\n");
    for s in &sections {
        s.render(&mut out);
    }
    let crc = crc32fast::hash(out.as_bytes());
    let _ = writeln!(out, "crc32={crc:08x}");
    out
}

type Fields = IndexMap<String, String>;

fn corrupt(msg: impl Into<String>) -> RetentionError {
    RetentionError::CorruptSnapshot(msg.into())
}

fn field<'a>(f: &'a Fields, key: &str) -> Result<&'a str, RetentionError> {
    f.get(key)
        .map(String::as_str)
        .ok_or_else(|| corrupt(format!("missing {key}")))
}

fn num<T: FromStr>(f: &Fields, key: &str) -> Result<T, RetentionError> {
    let v = field(f, key)?;
    v.parse().map_err(|_| corrupt(format!("bad {key} {v:?}")))
}

fn ts(f: &Fields, key: &str) -> Result<Timestamp, RetentionError> {
    num::<i64>(f, key).map(Timestamp)
}

fn opt_ts_field(f: &Fields, key: &str) -> Result<Option<Timestamp>, RetentionError> {
    match field(f, key)? {
        "" => Ok(None),
        _ => ts(f, key).map(Some),
    }
}

fn list(f: &Fields, key: &str) -> Result<Vec<String>, RetentionError> {
    let v = field(f, key)?;
    Ok(if v.is_empty() {
        Vec::new()
    } else {
        v.split(',').map(str::to_string).collect()
    })
}

fn target(f: &Fields) -> Result<Target, RetentionError> {
    let host = field(f, "host_name")?;
    Ok(match f.get("service_description") {
        Some(s) => Target::service(host, s.as_str()),
        None => Target::host(host),
    })
}

fn flag(f: &Fields, key: &str) -> Result<bool, RetentionError> {
    match field(f, key)? {
        "0" => Ok(false),
        "1" => Ok(true),
        v => Err(corrupt(format!("bad {key} {v:?}"))),
    }
}

fn state<S: FromStr>(f: &Fields) -> Result<MonitorState<S>, RetentionError> {
    let parse = |key: &str| -> Result<S, RetentionError> {
        let v = field(f, key)?;
        v.parse().map_err(|_| corrupt(format!("bad {key} {v:?}")))
    };
    Ok(MonitorState {
        target: target(f)?,
        current_status: parse("current_status")?,
        last_hard_status: parse("last_hard_status")?,
        state_type: match field(f, "state_type")? {
            "SOFT" => StateType::Soft,
            "HARD" => StateType::Hard,
            v => return Err(corrupt(format!("bad state_type {v:?}"))),
        },
        attempt: num(f, "attempt")?,
        last_check: opt_ts_field(f, "last_check")?,
        last_state_change: opt_ts_field(f, "last_state_change")?,
        notification_number: num(f, "notification_number")?,
        acknowledged: flag(f, "acknowledged")?,
        last_notification_at: opt_ts_field(f, "last_notification_at")?,
        notified_contacts: list(f, "notified_contacts")?,
        last_output: field(f, "last_output")?.to_string(),
    })
}

fn check(f: &Fields) -> Result<ScheduledCheck, RetentionError> {
    Ok(ScheduledCheck {
        target: target(f)?,
        due_at: ts(f, "due_at")?,
        kind: match field(f, "kind")? {
            "normal" => CheckKind::Normal,
            "retry" => CheckKind::Retry,
            "forced" => CheckKind::Forced,
            v => return Err(corrupt(format!("bad kind {v:?}"))),
        },
    })
}

fn transport_result(v: &str) -> Result<TransportResult, RetentionError> {
    if v == "ok" {
        return Ok(TransportResult::Ok);
    }
    v.strip_prefix("failed(")
        .and_then(|r| r.strip_suffix(')'))
        .map(|r| TransportResult::Failed(r.to_string()))
        .ok_or_else(|| corrupt(format!("bad transport_result {v:?}")))
}

fn rng_state(f: &Fields) -> Result<Option<RngState>, RetentionError> {
    let Some(hex) = f.get("rng_seed") else { return Ok(None) };
    if hex.len() != 64 {
        return Err(corrupt("bad rng_seed"));
    }
    let mut seed = [0u8; 32];
    for (i, b) in seed.iter_mut().enumerate() {
        *b = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).map_err(|_| corrupt("bad rng_seed"))?;
    }
    Ok(Some(RngState {
        seed,
        stream: num(f, "rng_stream")?,
        word_pos: num(f, "rng_word_pos")?,
    }))
}

/// Verifies the checksum and parses a retention document.
pub fn parse_retention(text: &str) -> Result<RetentionSnapshot, RetentionError> {
    let body_end = text
        .strip_suffix('\n')
        .and_then(|t| t.rfind('\n'))
        .map(|i| i + 1)
        .ok_or_else(|| corrupt("missing checksum"))?;
    let (body, trailer) = text.split_at(body_end);
    if !trailer.starts_with("crc32=") {
        return Err(corrupt("missing checksum"));
    }
    if trailer != format!("crc32={:08x}\n", crc32fast::hash(body.as_bytes())) {
        return Err(corrupt("checksum mismatch"));
    }

    let mut snap = RetentionSnapshot {
        format_version: 0,
        saved_at: Timestamp(0),
        hosts: Vec::new(),
        services: Vec::new(),
        downtimes: Vec::new(),
        next_downtime_id: 1,
        notifications_enabled: true,
        notifications: Vec::new(),
        queue: Vec::new(),
        in_flight: Vec::new(),
        rng: None,
    };
    let mut seen_info = false;
    let mut open: Option<(String, Fields)> = None;
    for (i, line) in body.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        match &mut open {
            None => {
                let name = line
                    .strip_suffix(" {")
                    .ok_or_else(|| corrupt(format!("line {}: expected section", i + 1)))?;
                open = Some((name.to_string(), Fields::new()));
            }
            Some((_, fields)) if line != "}" => {
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| corrupt(format!("line {}: expected key=value", i + 1)))?;
                fields.insert(k.to_string(), unescape(v));
            }
            Some(_) => {
                let (name, f) = open.take().expect("matched Some");
                match name.as_str() {
                    "info" => {
                        seen_info = true;
                        snap.format_version = num(&f, "format_version")?;
                        if snap.format_version != FORMAT_VERSION {
                            return Err(corrupt(format!("unsupported format_version {}", snap.format_version)));
                        }
                        snap.saved_at = ts(&f, "saved_at")?;
                        snap.next_downtime_id = num(&f, "next_downtime_id")?;
                        snap.notifications_enabled = flag(&f, "notifications_enabled")?;
                        snap.rng = rng_state(&f)?;
                    }
                    "host" => snap.hosts.push(state(&f)?),
                    "service" => snap.services.push(state(&f)?),
                    "downtime" => snap.downtimes.push(
                        Downtime::new(
                            num(&f, "id")?,
                            target(&f)?,
                            ts(&f, "start_at")?,
                            ts(&f, "end_at")?,
                            field(&f, "author")?,
                            field(&f, "comment")?,
                        )
                        .map_err(|e| corrupt(e.to_string()))?,
                    ),
                    "notification" => snap.notifications.push(NotificationRecord {
                        target: target(&f)?,
                        reason: match field(&f, "reason")? {
                            "problem" => NotificationReason::Problem,
                            "recovery" => NotificationReason::Recovery,
                            v => return Err(corrupt(format!("bad reason {v:?}"))),
                        },
                        notification_number: num(&f, "notification_number")?,
                        contacts: list(&f, "contacts")?,
                        sent_at: ts(&f, "sent_at")?,
                        transport_result: transport_result(field(&f, "transport_result")?)?,
                    }),
                    "scheduled" => snap.queue.push(check(&f)?),
                    "inflight" => snap.in_flight.push(check(&f)?),
                    other => return Err(corrupt(format!("unknown section {other:?}"))),
                }
            }
        }
    }
    if open.is_some() {
        return Err(corrupt("unterminated section"));
    }
    if !seen_info {
        return Err(corrupt("missing info section"));
    }
    Ok(snap)
}

/// Writes atomically: a sibling temp file is synced, then renamed over `path`.
pub fn write_retention(snap: &RetentionSnapshot, path: impl AsRef<Path>) -> Result<(), RetentionError> {
    let path = path.as_ref();
    let mut tmp_name = path.as_os_str().to_owned();
    tmp_name.push(".tmp");
    let tmp = Path::new(&tmp_name);
    {
        let mut f = File::create(tmp)?;
        f.write_all(render_retention(snap).as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

/// Reads and validates a retention file, dropping state for targets that
/// no longer exist in `model`.
pub fn read_retention(path: impl AsRef<Path>, model: &Model) -> Result<LoadedSnapshot, RetentionError> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        io::ErrorKind::InvalidData => corrupt("not UTF-8"),
        _ => RetentionError::Io(e),
    })?;
    let mut snapshot = parse_retention(&text)?;
    let before = snapshot.hosts.len() + snapshot.services.len();
    snapshot.hosts.retain(|s| model.contains(&s.target));
    snapshot.services.retain(|s| model.contains(&s.target));
    let dropped = before - snapshot.hosts.len() - snapshot.services.len();
    snapshot.downtimes.retain(|d| model.contains(&d.target));
    snapshot.queue.retain(|c| model.contains(&c.target));
    snapshot.in_flight.retain(|c| model.contains(&c.target));
    if dropped > 0 {
        log::warn!("dropped {dropped} retained states for targets no longer configured");
    }
    Ok(LoadedSnapshot { snapshot, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::load_str;
    use crate::status::{HostReachability, StatusCode};

    fn sample() -> RetentionSnapshot {
        let mut svc = ServiceState::new(Target::service("ce01", "CPU"));
        svc.current_status = StatusCode::Critical;
        svc.last_hard_status = StatusCode::Critical;
        svc.notification_number = 2;
        svc.last_notification_at = Some(Timestamp(5000));
        svc.notified_contacts = vec!["alice".into(), "bob".into()];
        svc.last_output = "load=9\\n; weird\nsecond".into();
        let mut host = HostState::new(Target::host("ce01"));
        host.current_status = HostReachability::Unreachable;
        host.state_type = StateType::Soft;
        host.last_check = Some(Timestamp(1234));
        RetentionSnapshot {
            format_version: FORMAT_VERSION,
            saved_at: Timestamp(99_000),
            hosts: vec![host],
            services: vec![svc, ServiceState::new(Target::service("ce01", "Disk"))],
            downtimes: vec![Downtime::new(3, Target::host("ce01"), Timestamp(0), Timestamp(10), "a", "b=c").unwrap()],
            next_downtime_id: 4,
            notifications_enabled: false,
            notifications: vec![NotificationRecord {
                target: Target::service("ce01", "CPU"),
                reason: NotificationReason::Problem,
                notification_number: 2,
                contacts: vec!["alice".into()],
                sent_at: Timestamp(5000),
                transport_result: TransportResult::Failed("exit 1".into()),
            }],
            queue: vec![ScheduledCheck {
                target: Target::service("ce01", "Disk"),
                due_at: Timestamp(60_000),
                kind: CheckKind::Retry,
            }],
            in_flight: vec![],
            rng: Some(RngState {
                seed: [7; 32],
                stream: 0,
                word_pos: 1234,
            }),
        }
    }

    fn model(with_disk: bool) -> Model {
        let mut t = String::from(
            "define host{\n host_name ce01\n address a\n}\n\
             define service{\n host_name ce01\n service_description CPU\n check_command check_tcp!1\n}\n",
        );
        if with_disk {
            t.push_str("define service{\n host_name ce01\n service_description Disk\n check_command check_tcp!1\n}\n");
        }
        load_str(&t).unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("retention.dat");
        write_retention(&sample(), &path).unwrap();
        let loaded = read_retention(&path, &model(true)).unwrap();
        assert_eq!(loaded.dropped, 0);
        assert_eq!(loaded.snapshot, sample());
    }

    #[test]
    fn removed_service_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("retention.dat");
        write_retention(&sample(), &path).unwrap();
        let loaded = read_retention(&path, &model(false)).unwrap();
        assert_eq!(loaded.dropped, 1);
        assert_eq!(loaded.snapshot.services.len(), 1);
        assert!(loaded.snapshot.queue.is_empty());
    }

    #[test]
    fn every_byte_corruption_detected() {
        let text = render_retention(&sample());
        let bytes = text.as_bytes();
        for i in 0..bytes.len() {
            let mut b = bytes.to_vec();
            b[i] ^= 0x01;
            let Ok(s) = String::from_utf8(b) else { continue };
            assert!(parse_retention(&s).is_err(), "flip at {i} undetected");
        }
    }

    #[test]
    fn escaping() {
        for v in ["", "a\\b", "x\ny", "\\n", "trailing\\"] {
            assert_eq!(unescape(&escape(v)), v);
        }
    }
}
