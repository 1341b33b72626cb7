//! Notification filtering, escalation-based contact selection, delivery
//! through notification commands, and the append-only notification log.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use crate::config::{CommandRef, EscalationDef, Model};
use crate::plugin::{expand, run_argv, ExecOutcome};
use crate::state::{MonitorState, NotificationReason};
use crate::status::Target;
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "lowercase")]
pub enum TransportResult {
    Ok,
    Failed(String),
}

impl TransportResult {
    pub fn is_ok(&self) -> bool {
        matches!(self, TransportResult::Ok)
    }
}

impl fmt::Display for TransportResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransportResult::Ok => f.write_str("ok"),
            TransportResult::Failed(why) => write!(f, "failed({why})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotificationRecord {
    pub target: Target,
    pub reason: NotificationReason,
    pub notification_number: u32,
    pub contacts: Vec<String>,
    pub sent_at: Timestamp,
    /// `Ok` when every contact was reached, else the first failure.
    pub transport_result: TransportResult,
}

/// Whether a notification should go out now.
///
/// `state` is the HARD state the notification is about; for a recovery pass
/// the state as it stood at the end of the problem episode. A
/// `notification_interval_s` of 0 means "notify once per episode".
pub fn should_send<S>(
    state: &MonitorState<S>,
    reason: NotificationReason,
    suppressed: bool,
    now: Timestamp,
    notification_interval_s: u64,
) -> bool {
    if suppressed {
        return false;
    }
    match reason {
        NotificationReason::Recovery => state.notification_number > 0,
        NotificationReason::Problem => match state.last_notification_at {
            _ if state.notification_number == 0 => true,
            None => true,
            Some(_) if notification_interval_s == 0 => false,
            Some(last) => now.seconds_since(last) >= notification_interval_s as f64,
        },
    }
}

/// Escalations whose scope and notification window cover `number`.
pub fn matching_escalations<'a>(
    target: &'a Target,
    number: u32,
    escalations: &'a [EscalationDef],
) -> impl Iterator<Item = &'a EscalationDef> + 'a {
    escalations
        .iter()
        .filter(move |e| e.matches(target) && e.covers(number))
}

/// Contact groups for notification `number`: the union over matching
/// escalations, or `default_groups` when none match.
pub fn select_groups(
    target: &Target,
    number: u32,
    escalations: &[EscalationDef],
    default_groups: &[String],
) -> Vec<String> {
    let mut groups: IndexSet<String> = IndexSet::new();
    for e in matching_escalations(target, number, escalations) {
        groups.extend(e.contact_groups.iter().cloned());
    }
    if groups.is_empty() {
        groups.extend(default_groups.iter().cloned());
    }
    groups.into_iter().collect()
}

/// Enabled contacts reached for notification `number`, deduplicated, in
/// group-then-member order.
pub fn select_contacts(
    target: &Target,
    number: u32,
    escalations: &[EscalationDef],
    default_groups: &[String],
    model: &Model,
) -> Vec<String> {
    let mut contacts: IndexSet<String> = IndexSet::new();
    for g in select_groups(target, number, escalations, default_groups) {
        let Some(group) = model.contact_groups.get(&g) else { continue };
        for m in &group.members {
            if model.contacts.get(m).is_some_and(|c| c.enabled) {
                contacts.insert(m.clone());
            }
        }
    }
    contacts.into_iter().collect()
}

/// Re-notification interval after notification `number`: the smallest
/// override among matching escalations, else `default_s`.
pub fn effective_interval(
    target: &Target,
    number: u32,
    escalations: &[EscalationDef],
    default_s: u64,
) -> u64 {
    matching_escalations(target, number, escalations)
        .filter_map(|e| e.notification_interval_s)
        .min()
        .unwrap_or(default_s)
}

/// Values for the notification command macros.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NotificationMacros {
    pub contact_name: String,
    pub host_name: String,
    pub service_desc: String,
    pub state: String,
    pub output: String,
    pub notification_number: u32,
    pub notification_type: NotificationReason,
}

impl NotificationMacros {
    fn expand(&self, template: &str, args: &[String]) -> String {
        let number = self.notification_number.to_string();
        let kind = self.notification_type.as_str().to_ascii_uppercase();
        let mut pairs: Vec<(String, &str)> = vec![
            ("CONTACTNAME".into(), &self.contact_name),
            ("HOSTNAME".into(), &self.host_name),
            ("SERVICEDESC".into(), &self.service_desc),
            ("SERVICESTATE".into(), &self.state),
            ("OUTPUT".into(), &self.output),
            ("NOTIFICATIONNUMBER".into(), &number),
            ("NOTIFICATIONTYPE".into(), &kind),
        ];
        for (i, a) in args.iter().enumerate().take(9) {
            pairs.push((format!("ARG{}", i + 1), a));
        }
        let pairs: Vec<(&str, &str)> = pairs.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        expand(template, &pairs)
    }
}

/// Delivers one notification to one contact.
pub trait Transport: Send + Sync {
    fn deliver(&self, argv: &[String]) -> TransportResult;
}

/// Runs the contact's notification command as a child process.
#[derive(Debug, Clone)]
pub struct ExecTransport {
    pub timeout: Duration,
}

impl Default for ExecTransport {
    fn default() -> Self {
        ExecTransport {
            timeout: Duration::from_secs(30),
        }
    }
}

impl Transport for ExecTransport {
    fn deliver(&self, argv: &[String]) -> TransportResult {
        match run_argv(argv, self.timeout) {
            ExecOutcome::Exited { code: Some(0), .. } => TransportResult::Ok,
            ExecOutcome::Exited { code: Some(c), .. } => TransportResult::Failed(format!("exit {c}")),
            ExecOutcome::Exited { code: None, .. } => TransportResult::Failed("killed by signal".into()),
            ExecOutcome::TimedOut => TransportResult::Failed("timed out".into()),
            ExecOutcome::SpawnFailed(e) => TransportResult::Failed(e),
        }
    }
}

/// Append-only notification log, one tab-separated line per delivery attempt.
#[derive(Debug)]
pub struct NotificationLog {
    file: Option<(PathBuf, File)>,
    memory: Vec<String>,
}

impl NotificationLog {
    pub fn in_memory() -> Self {
        NotificationLog {
            file: None,
            memory: Vec::new(),
        }
    }

    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(NotificationLog {
            file: Some((path, file)),
            memory: Vec::new(),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn append(&mut self, line: &str) -> io::Result<()> {
        match &mut self.file {
            Some((_, f)) => {
                f.write_all(line.as_bytes())?;
                f.write_all(b"\n")?;
                f.flush()
            }
            None => {
                self.memory.push(line.to_string());
                Ok(())
            }
        }
    }

    /// Lines of an in-memory log (empty for file-backed logs).
    pub fn memory_lines(&self) -> &[String] {
        &self.memory
    }
}

fn clean(field: &str) -> String {
    field.replace(['\t', '\n', '\r'], " ")
}

/// `ISO8601<TAB>target<TAB>reason<TAB>number<TAB>contact<TAB>result`
pub fn log_line(
    sent_at: Timestamp,
    target: &Target,
    reason: NotificationReason,
    number: u32,
    contact: &str,
    result: &TransportResult,
) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}",
        sent_at.to_iso8601(),
        clean(&target.to_string()),
        reason,
        number,
        clean(contact),
        clean(&result.to_string())
    )
}

/// Sends `record` to one contact through its notification command (or only
/// logs it for log-only contacts) and writes the log line regardless of
/// the outcome.
pub fn dispatch(
    record: &NotificationRecord,
    contact: &str,
    command: Option<(&str, &CommandRef)>,
    macros: &NotificationMacros,
    transport: &dyn Transport,
    log: &mut NotificationLog,
) -> TransportResult {
    let result = match command {
        None => TransportResult::Ok,
        Some((command_line, cref)) => match shlex::split(command_line) {
            Some(argv) if !argv.is_empty() => {
                let argv: Vec<String> = argv.iter().map(|a| macros.expand(a, &cref.args)).collect();
                transport.deliver(&argv)
            }
            _ => TransportResult::Failed("invalid notification command".into()),
        },
    };
    let line = log_line(
        record.sent_at,
        &record.target,
        record.reason,
        record.notification_number,
        contact,
        &result,
    );
    if let Err(e) = log.append(&line) {
        log::error!("cannot write notification log: {e}");
    }
    result
}
