//! External command grammar: `[unix_ts] VERB;arg1;arg2;...`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::status::{StatusCode, Target};
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommandParseError {
    #[error("unknown verb {0:?}")]
    UnknownVerb(String),
    #[error("{verb} takes {expected} arguments, got {got}")]
    BadArity {
        verb: Verb,
        expected: &'static str,
        got: usize,
    },
    #[error("bad timestamp {0:?}")]
    BadTimestamp(String),
    #[error("malformed command line: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verb {
    AcknowledgeSvcProblem,
    AcknowledgeHostProblem,
    RemoveAcknowledgement,
    ScheduleDowntime,
    CancelDowntime,
    EnableNotifications,
    DisableNotifications,
    ForceCheck,
    ProcessServiceCheckResult,
}

impl Verb {
    pub const ALL: [Verb; 9] = [
        Verb::AcknowledgeSvcProblem,
        Verb::AcknowledgeHostProblem,
        Verb::RemoveAcknowledgement,
        Verb::ScheduleDowntime,
        Verb::CancelDowntime,
        Verb::EnableNotifications,
        Verb::DisableNotifications,
        Verb::ForceCheck,
        Verb::ProcessServiceCheckResult,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Verb::AcknowledgeSvcProblem => "ACKNOWLEDGE_SVC_PROBLEM",
            Verb::AcknowledgeHostProblem => "ACKNOWLEDGE_HOST_PROBLEM",
            Verb::RemoveAcknowledgement => "REMOVE_ACKNOWLEDGEMENT",
            Verb::ScheduleDowntime => "SCHEDULE_DOWNTIME",
            Verb::CancelDowntime => "CANCEL_DOWNTIME",
            Verb::EnableNotifications => "ENABLE_NOTIFICATIONS",
            Verb::DisableNotifications => "DISABLE_NOTIFICATIONS",
            Verb::ForceCheck => "FORCE_CHECK",
            Verb::ProcessServiceCheckResult => "PROCESS_SERVICE_CHECK_RESULT",
        }
    }

    /// Toggles the global notification gate.
    pub fn is_global(self) -> bool {
        matches!(self, Verb::EnableNotifications | Verb::DisableNotifications)
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verb {
    type Err = CommandParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Verb::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| CommandParseError::UnknownVerb(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verb", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CommandKind {
    Acknowledge {
        target: Target,
        author: String,
        comment: String,
    },
    RemoveAcknowledgement {
        target: Target,
    },
    ScheduleDowntime {
        target: Target,
        start_at: Timestamp,
        end_at: Timestamp,
        author: String,
        comment: String,
    },
    CancelDowntime {
        id: u64,
    },
    EnableNotifications,
    DisableNotifications,
    ForceCheck {
        target: Target,
    },
    ProcessServiceCheckResult {
        target: Target,
        return_code: i32,
        output: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalCommand {
    pub issued_at: Timestamp,
    pub verb: Verb,
    pub kind: CommandKind,
}

fn target(host: &str, service: Option<&str>) -> Target {
    match service {
        Some(s) if !s.is_empty() => Target::service(host, s),
        _ => Target::host(host),
    }
}

fn unix_ts(s: &str) -> Result<Timestamp, CommandParseError> {
    s.trim()
        .parse::<i64>()
        .map(Timestamp::from_secs)
        .map_err(|_| CommandParseError::BadTimestamp(s.to_string()))
}

/// Parses one command line. The last argument of a verb with free text
/// keeps any further `;` characters.
pub fn parse_external_command(line: &str) -> Result<ExternalCommand, CommandParseError> {
    let line = line.trim();
    let rest = line
        .strip_prefix('[')
        .ok_or_else(|| CommandParseError::Malformed("missing [timestamp]".into()))?;
    let (ts, body) = rest
        .split_once(']')
        .ok_or_else(|| CommandParseError::Malformed("unterminated [timestamp]".into()))?;
    let issued_at = unix_ts(ts)?;
    let body = body.trim_start();
    let (verb_text, args_text) = match body.split_once(';') {
        Some((v, a)) => (v, Some(a)),
        None => (body, None),
    };
    let verb: Verb = verb_text.trim().parse()?;

    let (min, max, expected) = match verb {
        Verb::AcknowledgeSvcProblem => (4, 4, "4"),
        Verb::AcknowledgeHostProblem => (3, 3, "3"),
        Verb::RemoveAcknowledgement => (1, 2, "1 or 2"),
        Verb::ScheduleDowntime => (6, 6, "6"),
        Verb::CancelDowntime => (1, 1, "1"),
        Verb::EnableNotifications | Verb::DisableNotifications => (0, 0, "0"),
        Verb::ForceCheck => (1, 2, "1 or 2"),
        Verb::ProcessServiceCheckResult => (4, 4, "4"),
    };
    let free_text = matches!(
        verb,
        Verb::AcknowledgeSvcProblem
            | Verb::AcknowledgeHostProblem
            | Verb::ScheduleDowntime
            | Verb::ProcessServiceCheckResult
    );
    let args: Vec<&str> = match args_text {
        None => Vec::new(),
        Some(a) if free_text => a.splitn(max, ';').collect(),
        Some(a) => a.split(';').collect(),
    };
    if args.len() < min || args.len() > max {
        return Err(CommandParseError::BadArity {
            verb,
            expected,
            got: args.len(),
        });
    }

    let kind = match verb {
        Verb::AcknowledgeSvcProblem => CommandKind::Acknowledge {
            target: Target::service(args[0], args[1]),
            author: args[2].into(),
            comment: args[3].into(),
        },
        Verb::AcknowledgeHostProblem => CommandKind::Acknowledge {
            target: Target::host(args[0]),
            author: args[1].into(),
            comment: args[2].into(),
        },
        Verb::RemoveAcknowledgement => CommandKind::RemoveAcknowledgement {
            target: target(args[0], args.get(1).copied()),
        },
        Verb::ScheduleDowntime => CommandKind::ScheduleDowntime {
            target: target(args[0], Some(args[1])),
            start_at: unix_ts(args[2])?,
            end_at: unix_ts(args[3])?,
            author: args[4].into(),
            comment: args[5].into(),
        },
        Verb::CancelDowntime => CommandKind::CancelDowntime {
            id: args[0]
                .trim()
                .parse()
                .map_err(|_| CommandParseError::Malformed(format!("bad downtime id {:?}", args[0])))?,
        },
        Verb::EnableNotifications => CommandKind::EnableNotifications,
        Verb::DisableNotifications => CommandKind::DisableNotifications,
        Verb::ForceCheck => CommandKind::ForceCheck {
            target: target(args[0], args.get(1).copied()),
        },
        Verb::ProcessServiceCheckResult => CommandKind::ProcessServiceCheckResult {
            target: Target::service(args[0], args[1]),
            return_code: args[2]
                .trim()
                .parse()
                .map_err(|_| CommandParseError::Malformed(format!("bad return code {:?}", args[2])))?,
            output: args[3].into(),
        },
    };
    Ok(ExternalCommand {
        issued_at,
        verb,
        kind,
    })
}

impl CommandKind {
    pub fn verb(&self) -> Verb {
        match self {
            CommandKind::Acknowledge { target, .. } if target.service_name().is_some() => Verb::AcknowledgeSvcProblem,
            CommandKind::Acknowledge { .. } => Verb::AcknowledgeHostProblem,
            CommandKind::RemoveAcknowledgement { .. } => Verb::RemoveAcknowledgement,
            CommandKind::ScheduleDowntime { .. } => Verb::ScheduleDowntime,
            CommandKind::CancelDowntime { .. } => Verb::CancelDowntime,
            CommandKind::EnableNotifications => Verb::EnableNotifications,
            CommandKind::DisableNotifications => Verb::DisableNotifications,
            CommandKind::ForceCheck { .. } => Verb::ForceCheck,
            CommandKind::ProcessServiceCheckResult { .. } => Verb::ProcessServiceCheckResult,
        }
    }
}

impl ExternalCommand {
    pub fn new(issued_at: Timestamp, kind: CommandKind) -> Self {
        ExternalCommand { issued_at, verb: kind.verb(), kind }
    }

    /// Renders the command back into its line form.
    pub fn to_line(&self) -> String {
        let svc = |t: &Target| t.service_name().unwrap_or("").to_string();
        let args: Vec<String> = match &self.kind {
            CommandKind::Acknowledge {
                target,
                author,
                comment,
            } => match target.service_name() {
                Some(s) => vec![target.host_name().into(), s.into(), author.clone(), comment.clone()],
                None => vec![target.host_name().into(), author.clone(), comment.clone()],
            },
            CommandKind::RemoveAcknowledgement { target } | CommandKind::ForceCheck { target } => {
                match target.service_name() {
                    Some(s) => vec![target.host_name().into(), s.into()],
                    None => vec![target.host_name().into()],
                }
            }
            CommandKind::ScheduleDowntime {
                target,
                start_at,
                end_at,
                author,
                comment,
            } => vec![
                target.host_name().into(),
                svc(target),
                start_at.secs().to_string(),
                end_at.secs().to_string(),
                author.clone(),
                comment.clone(),
            ],
            CommandKind::CancelDowntime { id } => vec![id.to_string()],
            CommandKind::EnableNotifications | CommandKind::DisableNotifications => vec![],
            CommandKind::ProcessServiceCheckResult {
                target,
                return_code,
                output,
            } => vec![
                target.host_name().into(),
                svc(target),
                return_code.to_string(),
                output.clone(),
            ],
        };
        let mut line = format!("[{}] {}", self.issued_at.secs(), self.verb);
        for a in args {
            line.push(';');
            line.push_str(&a);
        }
        line
    }
}

/// Status for a passive result's return code.
pub fn passive_status(code: i32) -> StatusCode {
    crate::plugin::map_exit_code(code)
}
