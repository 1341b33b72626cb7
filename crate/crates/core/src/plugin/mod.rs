//! Plugin protocol, performance data, threshold ranges and built-in checks.

mod builtin;
mod exec;
mod ldif;
mod perfdata;
mod range;

use std::time::Duration;

use crate::status::StatusCode;

pub use builtin::{
    check_agent, check_dns, check_gris, check_tcp, evaluate_agent, evaluate_gris,
    is_builtin_check, BuiltinCheck, Thresholds, BUILTIN_CHECKS,
};
pub use exec::{expand, format_secs, run_argv, run_plugin, substitute_macros, ExecOutcome};
pub use ldif::{parse_ldif, LdifEntry, LdifError};
pub use perfdata::{parse_plugin_output, render_plugin_output, PerfDatum, PluginOutput};
pub use range::{eval_range, MalformedRange, ThresholdRange};

/// 0→OK, 1→WARNING, 2→CRITICAL, anything else→UNKNOWN.
pub fn map_exit_code(code: i32) -> StatusCode {
    match code {
        0 => StatusCode::Ok,
        1 => StatusCode::Warning,
        2 => StatusCode::Critical,
        _ => StatusCode::Unknown,
    }
}

/// Status, summary and perfdata of one check execution, before it is
/// attached to a target and timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutput {
    pub status: StatusCode,
    pub summary: String,
    pub perfdata: Vec<PerfDatum>,
}

impl CheckOutput {
    pub fn new(status: StatusCode, summary: &str) -> Self {
        CheckOutput {
            status,
            summary: crate::status::single_line(summary),
            perfdata: Vec::new(),
        }
    }

    pub fn timed_out(after: Duration) -> Self {
        CheckOutput::new(
            StatusCode::Critical,
            &format!("check timed out after {}s", format_secs(after)),
        )
    }
}
