use std::io::Read;
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use super::{map_exit_code, parse_plugin_output, CheckOutput};
use crate::status::StatusCode;

/// Expands `$HOSTADDRESS$` and `$ARG1$`..`$ARG9$`.
pub fn substitute_macros(template: &str, host_address: &str, args: &[String]) -> String {
    let mut out = template.replace("$HOSTADDRESS$", host_address);
    for n in 1..=9 {
        let value = args.get(n - 1).map(String::as_str).unwrap_or("");
        out = out.replace(&format!("$ARG{n}$"), value);
    }
    out
}

/// Replaces every `$NAME$` from `pairs` in `template`.
pub fn expand(template: &str, pairs: &[(&str, &str)]) -> String {
    pairs.iter().fold(template.to_string(), |acc, (name, value)| {
        acc.replace(&format!("${name}$"), value)
    })
}

pub fn format_secs(d: Duration) -> String {
    let s = d.as_secs_f64();
    if s.fract() == 0.0 {
        format!("{}", s as u64)
    } else {
        format!("{s}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExecOutcome {
    /// `None` when the process died from a signal.
    Exited { code: Option<i32>, stdout: String },
    TimedOut,
    SpawnFailed(String),
}

/// Runs `argv` directly (no shell), capturing stdout and enforcing `timeout`.
pub fn run_argv(argv: &[String], timeout: Duration) -> ExecOutcome {
    let Some((program, args)) = argv.split_first() else {
        return ExecOutcome::SpawnFailed("empty command line".into());
    };
    let mut child = match Command::new(program)
        .args(args)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
    {
        Ok(c) => c,
        Err(e) => return ExecOutcome::SpawnFailed(format!("{program}: {e}")),
    };

    let mut stdout = child.stdout.take().expect("stdout is piped");
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout.by_ref().take(64 * 1024).read_to_end(&mut buf);
        let _ = tx.send(buf);
    });

    let deadline = Instant::now() + timeout;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                return ExecOutcome::TimedOut;
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(2)),
            Err(e) => return ExecOutcome::SpawnFailed(e.to_string()),
        }
    };
    // A grandchild may still hold the pipe open; don't wait on it forever.
    let buf = rx.recv_timeout(Duration::from_millis(500)).unwrap_or_default();
    ExecOutcome::Exited {
        code: status.code(),
        stdout: String::from_utf8_lossy(&buf).into_owned(),
    }
}

/// Executes an external plugin. `command_line` has its macros substituted
/// already and is split into argv with shell-style quoting, without a shell.
pub fn run_plugin(command_line: &str, timeout: Duration) -> CheckOutput {
    let Some(argv) = shlex::split(command_line).filter(|a| !a.is_empty()) else {
        return CheckOutput::new(
            StatusCode::Unknown,
            &format!("invalid command line {command_line:?}"),
        );
    };
    match run_argv(&argv, timeout) {
        ExecOutcome::Exited { code, stdout } => {
            let first = stdout.lines().next().unwrap_or("");
            let parsed = parse_plugin_output(first);
            CheckOutput {
                status: map_exit_code(code.unwrap_or(-1)),
                summary: parsed.summary,
                perfdata: parsed.perfdata,
            }
        }
        ExecOutcome::TimedOut => CheckOutput::timed_out(timeout),
        ExecOutcome::SpawnFailed(e) => {
            CheckOutput::new(StatusCode::Unknown, &format!("failed to execute plugin: {e}"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn macros() {
        let args = vec!["80".to_string(), "90".to_string()];
        assert_eq!(
            substitute_macros("check -H $HOSTADDRESS$ -w $ARG1$ -c $ARG2$ $ARG3$", "10.0.0.1", &args),
            "check -H 10.0.0.1 -w 80 -c 90 "
        );
    }

    #[test]
    fn plugin_ok_output() {
        let out = run_plugin("/bin/sh -c 'echo \"CPU OK - load 0.3\"; exit 0'", Duration::from_secs(5));
        assert_eq!(out.status, StatusCode::Ok);
        assert_eq!(out.summary, "CPU OK - load 0.3");
        assert!(out.perfdata.is_empty());
    }

    #[test]
    fn plugin_exit_codes_and_perfdata() {
        let out = run_plugin(
            "/bin/sh -c 'echo \"DISK WARNING | disk=85%;80;90\"; echo more; exit 1'",
            Duration::from_secs(5),
        );
        assert_eq!(out.status, StatusCode::Warning);
        assert_eq!(out.summary, "DISK WARNING");
        assert_eq!(out.perfdata.len(), 1);
        let out = run_plugin("/bin/sh -c 'exit 7'", Duration::from_secs(5));
        assert_eq!(out.status, StatusCode::Unknown);
    }

    #[test]
    fn plugin_timeout() {
        let started = Instant::now();
        let out = run_plugin("/bin/sleep 10", Duration::from_secs(1));
        assert_eq!(out.status, StatusCode::Critical);
        assert_eq!(out.summary, "check timed out after 1s");
        assert!(started.elapsed() < Duration::from_secs(5));
    }

    #[test]
    fn plugin_missing_binary() {
        let out = run_plugin("/nonexistent/check_nothing -x", Duration::from_secs(1));
        assert_eq!(out.status, StatusCode::Unknown);
        assert!(out.summary.contains("failed to execute"), "{}", out.summary);
    }

    #[test]
    fn secs_formatting() {
        assert_eq!(format_secs(Duration::from_secs(10)), "10");
        assert_eq!(format_secs(Duration::from_millis(1500)), "1.5");
    }
}
