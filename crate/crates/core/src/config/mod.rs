//! Object configuration: block grammar, typed definitions and the linked model.

mod link;
mod parse;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::status::Target;

pub use link::{link_and_validate, ValidationError};
pub use parse::{
    parse_blocks, parse_objects, parse_objects_in, ObjectBlock, ParseError, RawBlock,
    SourceLocation,
};

pub const DEFAULT_CHECK_INTERVAL_S: u64 = 60;
pub const DEFAULT_RETRY_INTERVAL_S: u64 = 15;
pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;
pub const DEFAULT_NOTIFICATION_INTERVAL_S: u64 = 3600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Host,
    Service,
    Command,
    Contact,
    ContactGroup,
    Escalation,
    Site,
    Vo,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; 8] = [
        ObjectKind::Host,
        ObjectKind::Service,
        ObjectKind::Command,
        ObjectKind::Contact,
        ObjectKind::ContactGroup,
        ObjectKind::Escalation,
        ObjectKind::Site,
        ObjectKind::Vo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectKind::Host => "host",
            ObjectKind::Service => "service",
            ObjectKind::Command => "command",
            ObjectKind::Contact => "contact",
            ObjectKind::ContactGroup => "contactgroup",
            ObjectKind::Escalation => "escalation",
            ObjectKind::Site => "site",
            ObjectKind::Vo => "vo",
        }
    }
}

impl fmt::Display for ObjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObjectKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ObjectKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown object kind {s:?}"))
    }
}

/// Kind of resource a service measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Cpu,
    Disk,
    Mem,
    Processes,
    NetworkService,
    GridService,
    InfoService,
    Other,
}

impl MetricKind {
    pub const ALL: [MetricKind; 8] = [
        MetricKind::Cpu,
        MetricKind::Disk,
        MetricKind::Mem,
        MetricKind::Processes,
        MetricKind::NetworkService,
        MetricKind::GridService,
        MetricKind::InfoService,
        MetricKind::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Cpu => "cpu",
            MetricKind::Disk => "disk",
            MetricKind::Mem => "mem",
            MetricKind::Processes => "processes",
            MetricKind::NetworkService => "network_service",
            MetricKind::GridService => "grid_service",
            MetricKind::InfoService => "info_service",
            MetricKind::Other => "other",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown metric kind {s:?}"))
    }
}

/// A command name plus its `!`-separated arguments, e.g. `check_cpu!80!90`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandRef {
    pub name: String,
    pub args: Vec<String>,
}

impl CommandRef {
    pub fn parse(text: &str) -> CommandRef {
        let mut parts = text.split('!');
        let name = parts.next().unwrap_or("").trim().to_string();
        CommandRef {
            name,
            args: parts.map(str::to_string).collect(),
        }
    }
}

impl fmt::Display for CommandRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        for a in &self.args {
            write!(f, "!{a}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HostDef {
    pub host_name: String,
    pub alias: Option<String>,
    pub address: String,
    pub parents: Vec<String>,
    pub site: Option<String>,
    pub check_command: Option<CommandRef>,
    pub check_interval_s: u64,
    pub retry_interval_s: u64,
    pub max_attempts: u32,
    pub notify: bool,
    pub contact_groups: Vec<String>,
    pub notification_interval_s: u64,
    pub event_handler: Option<CommandRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServiceDef {
    pub host_name: String,
    pub description: String,
    pub check_command: CommandRef,
    pub check_interval_s: u64,
    pub retry_interval_s: u64,
    pub max_attempts: u32,
    pub contact_groups: Vec<String>,
    pub vos: Vec<String>,
    pub metric_kind: MetricKind,
    pub notify: bool,
    pub notification_interval_s: u64,
    pub event_handler: Option<CommandRef>,
}

impl ServiceDef {
    pub fn target(&self) -> Target {
        Target::service(&self.host_name, &self.description)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CommandDef {
    pub name: String,
    pub command_line: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContactDef {
    pub name: String,
    pub alias: Option<String>,
    /// `None` means the contact is only written to the notification log.
    pub notify_command: Option<CommandRef>,
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContactGroupDef {
    pub name: String,
    pub alias: Option<String>,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EscalationDef {
    /// Host name or `*`.
    pub host_pattern: String,
    /// `None` scopes the escalation to host notifications; `*` matches any service.
    pub service_pattern: Option<String>,
    pub first_notification: u32,
    /// 0 = unbounded.
    pub last_notification: u32,
    pub contact_groups: Vec<String>,
    pub notification_interval_s: Option<u64>,
}

impl EscalationDef {
    pub fn matches(&self, target: &Target) -> bool {
        let host_ok = self.host_pattern == "*" || self.host_pattern == target.host_name();
        let scope_ok = match (&self.service_pattern, target.service_name()) {
            (None, None) => true,
            (Some(p), Some(s)) => p == "*" || p == s,
            _ => false,
        };
        host_ok && scope_ok
    }

    pub fn covers(&self, notification_number: u32) -> bool {
        notification_number >= self.first_notification
            && (self.last_notification == 0 || notification_number <= self.last_notification)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteDef {
    pub site_name: String,
    pub alias: Option<String>,
    pub latitude: f64,
    pub longitude: f64,
    pub vos: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VoDef {
    pub vo_name: String,
    pub alias: Option<String>,
}

pub type ServiceKey = (String, String);

/// Linked, validated configuration. All lists keep definition order.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Model {
    pub hosts: IndexMap<String, HostDef>,
    #[serde(serialize_with = "services_as_list")]
    pub services: IndexMap<ServiceKey, ServiceDef>,
    pub commands: IndexMap<String, CommandDef>,
    pub contacts: IndexMap<String, ContactDef>,
    pub contact_groups: IndexMap<String, ContactGroupDef>,
    pub escalations: Vec<EscalationDef>,
    pub sites: IndexMap<String, SiteDef>,
    pub vos: IndexMap<String, VoDef>,
}

fn services_as_list<S: serde::Serializer>(
    services: &IndexMap<ServiceKey, ServiceDef>,
    s: S,
) -> Result<S::Ok, S::Error> {
    s.collect_seq(services.values())
}

impl Model {
    pub fn service(&self, host: &str, description: &str) -> Option<&ServiceDef> {
        self.services
            .get(&(host.to_string(), description.to_string()))
    }

    pub fn contains(&self, target: &Target) -> bool {
        match target {
            Target::Host { host } => self.hosts.contains_key(host),
            Target::Service { host, service } => self.service(host, service).is_some(),
        }
    }

    pub fn services_on<'a>(&'a self, host: &'a str) -> impl Iterator<Item = &'a ServiceDef> + 'a {
        self.services.values().filter(move |s| s.host_name == host)
    }

    pub fn hosts_in_site<'a>(&'a self, site: &'a str) -> impl Iterator<Item = &'a HostDef> + 'a {
        self.hosts
            .values()
            .filter(move |h| h.site.as_deref() == Some(site))
    }

    /// Contact-group names notified for `target` when no escalation applies.
    pub fn default_groups(&self, target: &Target) -> &[String] {
        match target {
            Target::Host { host } => self
                .hosts
                .get(host)
                .map(|h| h.contact_groups.as_slice())
                .unwrap_or(&[]),
            Target::Service { host, service } => self
                .service(host, service)
                .map(|s| s.contact_groups.as_slice())
                .unwrap_or(&[]),
        }
    }

    pub fn max_attempts(&self, target: &Target) -> Option<u32> {
        match target {
            Target::Host { host } => self.hosts.get(host).map(|h| h.max_attempts),
            Target::Service { host, service } => self.service(host, service).map(|s| s.max_attempts),
        }
    }

    /// (check_interval_s, retry_interval_s)
    pub fn intervals(&self, target: &Target) -> Option<(u64, u64)> {
        match target {
            Target::Host { host } => self
                .hosts
                .get(host)
                .map(|h| (h.check_interval_s, h.retry_interval_s)),
            Target::Service { host, service } => self
                .service(host, service)
                .map(|s| (s.check_interval_s, s.retry_interval_s)),
        }
    }

    pub fn notification_interval(&self, target: &Target) -> Option<u64> {
        match target {
            Target::Host { host } => self.hosts.get(host).map(|h| h.notification_interval_s),
            Target::Service { host, service } => self
                .service(host, service)
                .map(|s| s.notification_interval_s),
        }
    }

    pub fn notifications_enabled_for(&self, target: &Target) -> bool {
        match target {
            Target::Host { host } => self.hosts.get(host).is_some_and(|h| h.notify),
            Target::Service { host, service } => {
                self.service(host, service).is_some_and(|s| s.notify)
            }
        }
    }

    /// Every checkable target in definition order: hosts with a check
    /// command first, then services.
    pub fn check_targets(&self) -> Vec<Target> {
        self.hosts
            .values()
            .filter(|h| h.check_command.is_some())
            .map(|h| Target::host(&h.host_name))
            .chain(self.services.values().map(ServiceDef::target))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Reads every `.cfg` file in the given files or directories (directories are
/// scanned non-recursively in name order), then links the combined blocks.
pub fn load_paths<P: AsRef<Path>>(paths: &[P]) -> Result<Model, ConfigError> {
    let mut files = Vec::new();
    for p in paths {
        let p = p.as_ref();
        if p.is_dir() {
            let entries = std::fs::read_dir(p).map_err(|source| ConfigError::Io {
                path: p.to_path_buf(),
                source,
            })?;
            let mut found: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "cfg"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.to_path_buf());
        }
    }

    let mut blocks = Vec::new();
    for f in &files {
        let text = std::fs::read_to_string(f).map_err(|source| ConfigError::Io {
            path: f.clone(),
            source,
        })?;
        blocks.extend(parse_objects_in(&text, &f.display().to_string())?);
    }
    Ok(link_and_validate(&blocks)?)
}

/// Parses and links a single configuration text.
pub fn load_str(text: &str) -> Result<Model, ConfigError> {
    Ok(link_and_validate(&parse_objects(text)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bang_separated_arguments() {
        let blocks = parse_objects(
            "define service{\n host_name ce01\n service_description CPU\n check_command check_cpu!80!90\n}",
        )
        .unwrap();
        let cmd = CommandRef::parse(blocks[0].get("check_command").unwrap());
        assert_eq!(cmd.name, "check_cpu");
        assert_eq!(cmd.args, ["80", "90"]);
        assert_eq!(cmd.to_string(), "check_cpu!80!90");
    }

    #[test]
    fn escalation_scope() {
        let host_only = EscalationDef {
            host_pattern: "ce01".into(),
            service_pattern: None,
            first_notification: 1,
            last_notification: 0,
            contact_groups: vec![],
            notification_interval_s: None,
        };
        assert!(host_only.matches(&Target::host("ce01")));
        assert!(!host_only.matches(&Target::service("ce01", "CPU")));

        let any_service = EscalationDef {
            host_pattern: "*".into(),
            service_pattern: Some("*".into()),
            ..host_only.clone()
        };
        assert!(any_service.matches(&Target::service("x", "y")));
        assert!(!any_service.matches(&Target::host("x")));
    }

    #[test]
    fn escalation_window() {
        let e = EscalationDef {
            host_pattern: "*".into(),
            service_pattern: None,
            first_notification: 3,
            last_notification: 5,
            contact_groups: vec![],
            notification_interval_s: None,
        };
        assert!(!e.covers(2));
        assert!(e.covers(3) && e.covers(5));
        assert!(!e.covers(6));
        let open = EscalationDef {
            last_notification: 0,
            ..e
        };
        assert!(open.covers(1000));
    }
}
