//! External command pipe: a FIFO, or a regular file that is tailed.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use gridwatch_core::parse_external_command;

use crate::engine::{CommandSender, SubmitError};

fn is_fifo(path: &Path) -> bool {
    #[cfg(unix)]
    {
        use std::os::unix::fs::FileTypeExt;
        std::fs::metadata(path).is_ok_and(|m| m.file_type().is_fifo())
    }
    #[cfg(not(unix))]
    {
        let _ = path;
        false
    }
}

fn handle(line: &str, sender: &CommandSender) -> bool {
    let line = line.trim();
    if line.is_empty() {
        return true;
    }
    match parse_external_command(line) {
        Ok(cmd) => match sender.submit_blocking(cmd) {
            Ok(()) => log::info!("command accepted: {line}"),
            Err(SubmitError::Stopped) => return false,
            Err(e) => log::warn!("command rejected: {line}: {e}"),
        },
        Err(e) => log::warn!("malformed command {line:?}: {e}"),
    }
    true
}

/// Reads command lines from `path` until the monitor stops. A missing path
/// is created as a regular file; only lines appended after startup count.
pub fn spawn_command_pipe(path: PathBuf, sender: CommandSender) -> std::io::Result<JoinHandle<()>> {
    if !path.exists() {
        File::create(&path)?;
    }
    let fifo = is_fifo(&path);
    let mut tail = None;
    if !fifo {
        let mut f = OpenOptions::new().read(true).open(&path)?;
        f.seek(SeekFrom::End(0))?;
        tail = Some(BufReader::new(f));
    }
    thread::Builder::new().name("command-pipe".into()).spawn(move || {
        if let Some(mut reader) = tail {
            // a line without its newline yet is a partial write: keep it and read on
            let mut pending = String::new();
            loop {
                match reader.read_line(&mut pending) {
                    Ok(0) => thread::sleep(Duration::from_millis(100)),
                    Ok(_) if pending.ends_with('\n') => {
                        if !handle(&pending, &sender) {
                            return;
                        }
                        pending.clear();
                    }
                    Ok(_) => {}
                    Err(e) => {
                        log::error!("reading command file: {e}");
                        return;
                    }
                }
            }
        }
        loop {
            // a FIFO reaches EOF whenever the last writer closes; reopen
            let Ok(f) = File::open(&path) else { return };
            for l in BufReader::new(f).lines() {
                match l {
                    Ok(l) => {
                        if !handle(&l, &sender) {
                            return;
                        }
                    }
                    Err(_) => break,
                }
            }
        }
    })
}
