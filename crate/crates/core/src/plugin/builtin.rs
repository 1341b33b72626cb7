//! Checks implemented in-process: TCP connect, DNS lookup, the LDIF
//! information-service probe and the metrics agent probe.

use std::io::{self, Read};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use super::{parse_ldif, CheckOutput, PerfDatum};
use crate::status::StatusCode;
use crate::Range;

pub const BUILTIN_CHECKS: [&str; 4] = ["check_tcp", "check_dns", "check_gris", "check_agent"];

pub fn is_builtin_check(name: &str) -> bool {
    BUILTIN_CHECKS.contains(&name)
}

fn resolve(address: &str, port: u16) -> io::Result<SocketAddr> {
    (address, port)
        .to_socket_addrs()?
        .next()
        .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, "no address"))
}

fn connect(address: &str, port: u16, timeout: Duration) -> io::Result<TcpStream> {
    TcpStream::connect_timeout(&resolve(address, port)?, timeout)
}

fn connect_error(e: &io::Error) -> String {
    match e.kind() {
        io::ErrorKind::ConnectionRefused => "connection refused".into(),
        io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock => "connection timed out".into(),
        _ => e.to_string(),
    }
}

pub fn check_tcp(address: &str, port: u16, timeout: Duration) -> CheckOutput {
    let started = Instant::now();
    match connect(address, port, timeout) {
        Ok(_) => {
            let secs = started.elapsed().as_secs_f64();
            let mut out = CheckOutput::new(
                StatusCode::Ok,
                &format!("TCP OK - {secs:.3} second response time on {address} port {port}"),
            );
            out.perfdata.push(PerfDatum::new("time", secs).with_uom("s"));
            out
        }
        Err(e) => CheckOutput::new(
            StatusCode::Critical,
            &format!("TCP CRITICAL - {} ({address}:{port})", connect_error(&e)),
        ),
    }
}

pub fn check_dns(name: &str, expected: Option<&str>) -> CheckOutput {
    let started = Instant::now();
    let addrs: Vec<String> = match (name, 0).to_socket_addrs() {
        Ok(it) => it.map(|a| a.ip().to_string()).collect(),
        Err(e) => {
            return CheckOutput::new(
                StatusCode::Critical,
                &format!("DNS CRITICAL - cannot resolve {name}: {e}"),
            )
        }
    };
    let secs = started.elapsed().as_secs_f64();
    if addrs.is_empty() {
        return CheckOutput::new(StatusCode::Critical, &format!("DNS CRITICAL - {name} has no address"));
    }
    if let Some(want) = expected {
        if !addrs.iter().any(|a| a == want) {
            return CheckOutput::new(
                StatusCode::Critical,
                &format!("DNS CRITICAL - {name} resolves to {}, expected {want}", addrs.join(",")),
            );
        }
    }
    let mut out = CheckOutput::new(
        StatusCode::Ok,
        &format!("DNS OK - {name} resolves to {}", addrs.join(",")),
    );
    out.perfdata.push(PerfDatum::new("time", secs).with_uom("s"));
    out
}

/// Connects, reads until the server closes, and returns the text.
fn fetch_document(address: &str, port: u16, timeout: Duration) -> io::Result<String> {
    let stream = connect(address, port, timeout)?;
    stream.set_read_timeout(Some(timeout))?;
    let mut buf = Vec::new();
    stream.take(4 * 1024 * 1024).read_to_end(&mut buf)?;
    String::from_utf8(buf).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

/// Parsed warning/critical thresholds for the attribute probes.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Thresholds {
    pub warn: Option<Range>,
    pub crit: Option<Range>,
}

impl Thresholds {
    /// Empty text means "no threshold". With `higher_is_better`, a bare
    /// number `N` means "alert below N" (`N:`) instead of "alert outside [0, N]".
    pub fn parse(warn: &str, crit: &str, higher_is_better: bool) -> Result<Self, String> {
        let one = |text: &str| -> Result<Option<Range>, String> {
            let text = text.trim();
            if text.is_empty() {
                return Ok(None);
            }
            let bare = !text.contains(':');
            let text = if higher_is_better && bare {
                format!("{text}:")
            } else {
                text.to_string()
            };
            Range::parse(&text).map(Some).map_err(|e| e.to_string())
        };
        Ok(Thresholds {
            warn: one(warn)?,
            crit: one(crit)?,
        })
    }

    /// Critical range is evaluated first, then warning.
    pub fn status(&self, value: f64) -> StatusCode {
        if self.crit.is_some_and(|r| r.alerts(value)) {
            StatusCode::Critical
        } else if self.warn.is_some_and(|r| r.alerts(value)) {
            StatusCode::Warning
        } else {
            StatusCode::Ok
        }
    }

    fn datum(&self, label: &str, value: f64) -> PerfDatum {
        PerfDatum {
            warn: self.warn,
            crit: self.crit,
            ..PerfDatum::new(label, value)
        }
    }
}

fn threshold_result(prefix: &str, label: &str, value: f64, thresholds: &Thresholds) -> CheckOutput {
    let status = thresholds.status(value);
    let mut out = CheckOutput::new(status, &format!("{prefix} {status} - {label}={value}"));
    out.perfdata.push(thresholds.datum(label, value));
    out
}

/// Evaluates an LDIF document: the first numeric value of `attribute`
/// across entries, against the thresholds.
pub fn evaluate_gris(document: &str, attribute: &str, thresholds: &Thresholds) -> CheckOutput {
    let entries = match parse_ldif(document) {
        Ok(e) => e,
        Err(e) => return CheckOutput::new(StatusCode::Unknown, &format!("GRIS UNKNOWN - {e}")),
    };
    let label = attribute.to_ascii_lowercase();
    let value = entries
        .iter()
        .flat_map(|e| e.values(&label))
        .find_map(|v| v.trim().parse::<f64>().ok().filter(|x| x.is_finite()));
    match value {
        Some(v) => threshold_result("GRIS", &label, v, thresholds),
        None => CheckOutput::new(
            StatusCode::Unknown,
            &format!("GRIS UNKNOWN - attribute {label} not published"),
        ),
    }
}

pub fn check_gris(
    address: &str,
    port: u16,
    attribute: &str,
    thresholds: &Thresholds,
    timeout: Duration,
) -> CheckOutput {
    match fetch_document(address, port, timeout) {
        Ok(doc) => evaluate_gris(&doc, attribute, thresholds),
        Err(e) if e.kind() == io::ErrorKind::InvalidData => {
            CheckOutput::new(StatusCode::Unknown, &format!("GRIS UNKNOWN - {e}"))
        }
        Err(e) => CheckOutput::new(
            StatusCode::Critical,
            &format!("GRIS CRITICAL - {} ({address}:{port})", connect_error(&e)),
        ),
    }
}

/// Evaluates a metrics-agent document of `name value` lines.
pub fn evaluate_agent(document: &str, metric: &str, thresholds: &Thresholds) -> CheckOutput {
    let mut found = None;
    for line in document.lines() {
        let mut parts = line.split_whitespace();
        if parts.next() == Some(metric) {
            found = parts.next().map(|v| v.parse::<f64>());
            break;
        }
    }
    match found {
        Some(Ok(v)) if v.is_finite() => threshold_result("AGENT", metric, v, thresholds),
        Some(_) => CheckOutput::new(
            StatusCode::Unknown,
            &format!("AGENT UNKNOWN - metric {metric} is not a number"),
        ),
        None => CheckOutput::new(
            StatusCode::Unknown,
            &format!("AGENT UNKNOWN - metric {metric} not reported"),
        ),
    }
}

pub fn check_agent(
    address: &str,
    port: u16,
    metric: &str,
    thresholds: &Thresholds,
    timeout: Duration,
) -> CheckOutput {
    match fetch_document(address, port, timeout) {
        Ok(doc) => evaluate_agent(&doc, metric, thresholds),
        Err(e) if e.kind() == io::ErrorKind::InvalidData => {
            CheckOutput::new(StatusCode::Unknown, &format!("AGENT UNKNOWN - {e}"))
        }
        Err(e) => CheckOutput::new(
            StatusCode::Critical,
            &format!("AGENT CRITICAL - {} ({address}:{port})", connect_error(&e)),
        ),
    }
}

/// A built-in check with its `!`-separated arguments decoded.
///
/// Argument layouts:
/// - `check_tcp!PORT`
/// - `check_dns[!NAME[!EXPECTED]]` (NAME defaults to the host address)
/// - `check_gris!PORT!ATTRIBUTE!WARN!CRIT[!higher]`
/// - `check_agent!PORT!METRIC!WARN!CRIT`
#[derive(Debug, Clone, PartialEq)]
pub enum BuiltinCheck {
    Tcp {
        port: u16,
    },
    Dns {
        name: Option<String>,
        expected: Option<String>,
    },
    Gris {
        port: u16,
        attribute: String,
        thresholds: Thresholds,
    },
    Agent {
        port: u16,
        metric: String,
        thresholds: Thresholds,
    },
}

impl BuiltinCheck {
    pub fn parse(name: &str, args: &[String]) -> Result<Self, String> {
        let arg = |i: usize| args.get(i).map(|s| s.trim()).unwrap_or("");
        let port = |i: usize| -> Result<u16, String> {
            arg(i)
                .parse()
                .map_err(|_| format!("{name}: bad port {:?}", arg(i)))
        };
        let non_empty = |s: &str| (!s.is_empty()).then(|| s.to_string());
        match name {
            "check_tcp" => Ok(BuiltinCheck::Tcp { port: port(0)? }),
            "check_dns" => Ok(BuiltinCheck::Dns {
                name: non_empty(arg(0)),
                expected: non_empty(arg(1)),
            }),
            "check_gris" => {
                let attribute = non_empty(arg(1)).ok_or("check_gris: missing attribute")?;
                let higher = matches!(arg(4), "higher" | "1");
                Ok(BuiltinCheck::Gris {
                    port: port(0)?,
                    attribute,
                    thresholds: Thresholds::parse(arg(2), arg(3), higher)?,
                })
            }
            "check_agent" => {
                let metric = non_empty(arg(1)).ok_or("check_agent: missing metric")?;
                Ok(BuiltinCheck::Agent {
                    port: port(0)?,
                    metric,
                    thresholds: Thresholds::parse(arg(2), arg(3), false)?,
                })
            }
            other => Err(format!("{other} is not a built-in check")),
        }
    }

    pub fn run(&self, address: &str, timeout: Duration) -> CheckOutput {
        match self {
            BuiltinCheck::Tcp { port } => check_tcp(address, *port, timeout),
            BuiltinCheck::Dns { name, expected } => {
                check_dns(name.as_deref().unwrap_or(address), expected.as_deref())
            }
            BuiltinCheck::Gris {
                port,
                attribute,
                thresholds,
            } => check_gris(address, *port, attribute, thresholds, timeout),
            BuiltinCheck::Agent {
                port,
                metric,
                thresholds,
            } => check_agent(address, *port, metric, thresholds, timeout),
        }
    }
}
