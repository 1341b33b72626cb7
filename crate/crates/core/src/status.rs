use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::plugin::PerfDatum;
use crate::time::Timestamp;

/// Service status, ordered by severity: `OK < WARNING < UNKNOWN < CRITICAL`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StatusCode {
    Ok,
    Warning,
    Unknown,
    Critical,
}

impl StatusCode {
    pub const ALL: [StatusCode; 4] = [
        StatusCode::Ok,
        StatusCode::Warning,
        StatusCode::Unknown,
        StatusCode::Critical,
    ];

    /// Plugin exit code for this status.
    pub fn exit_code(self) -> i32 {
        match self {
            StatusCode::Ok => 0,
            StatusCode::Warning => 1,
            StatusCode::Critical => 2,
            StatusCode::Unknown => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StatusCode::Ok => "OK",
            StatusCode::Warning => "WARNING",
            StatusCode::Unknown => "UNKNOWN",
            StatusCode::Critical => "CRITICAL",
        }
    }

    pub fn worst(self, other: StatusCode) -> StatusCode {
        self.max(other)
    }
}

impl fmt::Display for StatusCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StatusCode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "OK" => Ok(StatusCode::Ok),
            "WARNING" => Ok(StatusCode::Warning),
            "UNKNOWN" => Ok(StatusCode::Unknown),
            "CRITICAL" => Ok(StatusCode::Critical),
            _ => Err(format!("unknown status {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum HostReachability {
    Up,
    Down,
    Unreachable,
}

impl HostReachability {
    pub fn as_str(self) -> &'static str {
        match self {
            HostReachability::Up => "UP",
            HostReachability::Down => "DOWN",
            HostReachability::Unreachable => "UNREACHABLE",
        }
    }
}

impl fmt::Display for HostReachability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HostReachability {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "UP" => Ok(HostReachability::Up),
            "DOWN" => Ok(HostReachability::Down),
            "UNREACHABLE" => Ok(HostReachability::Unreachable),
            _ => Err(format!("unknown host state {s:?}")),
        }
    }
}

/// What a check, state record, downtime or notification is about.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Target {
    Host { host: String },
    Service { host: String, service: String },
}

impl Target {
    pub fn host(name: impl Into<String>) -> Self {
        Target::Host { host: name.into() }
    }

    pub fn service(host: impl Into<String>, service: impl Into<String>) -> Self {
        Target::Service {
            host: host.into(),
            service: service.into(),
        }
    }

    pub fn host_name(&self) -> &str {
        match self {
            Target::Host { host } | Target::Service { host, .. } => host,
        }
    }

    pub fn service_name(&self) -> Option<&str> {
        match self {
            Target::Host { .. } => None,
            Target::Service { service, .. } => Some(service),
        }
    }

    pub fn is_host(&self) -> bool {
        matches!(self, Target::Host { .. })
    }

    fn sort_key(&self) -> (&str, Option<&str>) {
        (self.host_name(), self.service_name())
    }
}

// Hosts sort before their own services; otherwise (host, service) lexicographic.
impl Ord for Target {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl PartialOrd for Target {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Host { host } => f.write_str(host),
            Target::Service { host, service } => write!(f, "{host}/{service}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Active,
    Passive,
}

/// Outcome of one check execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub target: Target,
    pub status: StatusCode,
    pub summary: String,
    pub perfdata: Vec<PerfDatum>,
    pub started_at: Timestamp,
    pub finished_at: Timestamp,
    pub origin: Origin,
}

impl CheckResult {
    /// Builds a result, flattening the summary to one line and clamping
    /// `finished_at` so it never precedes `started_at`.
    pub fn new(
        target: Target,
        status: StatusCode,
        summary: &str,
        perfdata: Vec<PerfDatum>,
        started_at: Timestamp,
        finished_at: Timestamp,
        origin: Origin,
    ) -> Self {
        CheckResult {
            target,
            status,
            summary: single_line(summary),
            perfdata,
            started_at,
            finished_at: finished_at.max(started_at),
            origin,
        }
    }
}

pub(crate) fn single_line(s: &str) -> String {
    s.lines().next().unwrap_or("").trim_end().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn severity_order() {
        use StatusCode::*;
        assert!(Ok < Warning && Warning < Unknown && Unknown < Critical);
        assert_eq!(Warning.worst(Unknown), Unknown);
        assert_eq!(Critical.worst(Ok), Critical);
    }

    #[test]
    fn target_ordering_is_host_then_service() {
        let mut v = vec![
            Target::service("b", "x"),
            Target::service("a", "z"),
            Target::host("b"),
            Target::service("a", "y"),
        ];
        v.sort();
        let shown: Vec<_> = v.iter().map(|t| t.to_string()).collect();
        assert_eq!(shown, ["a/y", "a/z", "b", "b/x"]);
    }

    #[test]
    fn summary_is_single_line() {
        let r = CheckResult::new(
            Target::host("h"),
            StatusCode::Ok,
            "first\nsecond",
            vec![],
            Timestamp(10),
            Timestamp(5),
            Origin::Active,
        );
        assert_eq!(r.summary, "first");
        assert_eq!(r.finished_at, Timestamp(10));
    }
}
