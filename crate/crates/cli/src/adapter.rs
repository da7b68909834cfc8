//! External-simulator adapter: one subprocess per design row, file-based
//! I/O only. The command template receives `{in}` (a one-row CSV of the
//! input point, native units) and `{out}` (the path where the simulator must
//! write a `.fld` map).

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use crate::CliError;

pub struct ExternalModelAdapter {
    pub command: String,
    pub timeout: Option<Duration>,
    pub retries: u32,
}

impl ExternalModelAdapter {
    pub fn new(command: String, timeout_secs: Option<u64>, retries: u32) -> Result<Self, CliError> {
        if !command.contains("{in}") || !command.contains("{out}") {
            return Err(CliError::config(
                "external command must contain both {in} and {out} placeholders",
            ));
        }
        Ok(ExternalModelAdapter {
            command,
            timeout: timeout_secs.map(Duration::from_secs),
            retries,
        })
    }

    /// Run the simulator for one design row. The input CSV must already
    /// exist; on success the output path contains the simulator's map.
    pub fn run_row(&self, input: &Path, output: &Path) -> Result<(), CliError> {
        let cmd = self
            .command
            .replace("{in}", &input.display().to_string())
            .replace("{out}", &output.display().to_string());
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.run_once(&cmd) {
                Ok(()) if output.exists() => return Ok(()),
                Ok(()) => {
                    if attempt > self.retries {
                        return Err(CliError::stage(format!(
                            "external model succeeded but wrote no output: {cmd}"
                        )));
                    }
                }
                Err(e) => {
                    if attempt > self.retries {
                        return Err(e);
                    }
                    log::warn!("external model attempt {attempt} failed; retrying");
                }
            }
        }
    }

    fn run_once(&self, cmd: &str) -> Result<(), CliError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(cmd)
            .stdin(Stdio::null())
            .spawn()
            .map_err(|e| CliError::stage(format!("cannot spawn {cmd:?}: {e}")))?;
        let start = Instant::now();
        loop {
            match child.try_wait() {
                Ok(Some(status)) => {
                    if status.success() {
                        return Ok(());
                    }
                    return Err(CliError::stage(format!(
                        "external model exited with {status}: {cmd}"
                    )));
                }
                Ok(None) => {
                    if let Some(limit) = self.timeout {
                        if start.elapsed() > limit {
                            let _ = child.kill();
                            let _ = child.wait();
                            return Err(CliError::stage(format!(
                                "external model timed out after {limit:?}: {cmd}"
                            )));
                        }
                    }
                    std::thread::sleep(Duration::from_millis(10));
                }
                Err(e) => return Err(CliError::stage(format!("wait failed: {e}"))),
            }
        }
    }
}

/// Write the one-row input CSV the adapter contract specifies.
pub fn write_row_csv(dir: &Path, row_index: usize, x: &[f64]) -> Result<PathBuf, CliError> {
    let header: Vec<String> = (1..=x.len()).map(|j| format!("x{j}")).collect();
    let values: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
    let path = dir.join(format!("row_{row_index:04}.csv"));
    std::fs::write(&path, format!("{}\n{}\n", header.join(","), values.join(",")))
        .map_err(|e| CliError::stage(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}
