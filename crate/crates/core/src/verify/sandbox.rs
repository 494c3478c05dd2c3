//! Subprocess execution with a scrubbed environment, captured output and a
//! hard timeout that kills the whole process group.

use std::collections::BTreeMap;
use std::io::{self, Read};
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::command::CommandLine;

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("sandbox setup failed: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvironmentSpec {
    /// Variables copied from the parent environment when set there.
    pub pass_through: Vec<String>,
    pub set: BTreeMap<String, String>,
    /// Bytes of stdout and stderr kept, counted from the end.
    pub output_cap_bytes: usize,
    /// Address-space limit applied to the child, if any.
    pub memory_limit_bytes: Option<u64>,
}

impl Default for EnvironmentSpec {
    fn default() -> Self {
        let pass = [
            "PATH", "HOME", "LANG", "LC_ALL", "TMPDIR", "HF_HOME", "HF_TOKEN",
            "HF_DATASETS_CACHE", "CUDA_VISIBLE_DEVICES",
        ];
        Self {
            pass_through: pass.iter().map(|s| s.to_string()).collect(),
            set: BTreeMap::from([("PYTHONUNBUFFERED".to_string(), "1".to_string())]),
            output_cap_bytes: 1 << 20,
            memory_limit_bytes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    /// `-1` when the process was ended by a signal.
    pub exit_code: i32,
    pub stdout: String,
    pub stderr: String,
    pub wall_time: f64,
    pub timed_out: bool,
}

impl ExecutionResult {
    pub fn success(&self) -> bool {
        self.exit_code == 0 && !self.timed_out
    }
}

fn tail_string(bytes: &[u8], cap: usize) -> String {
    let start = bytes.len().saturating_sub(cap);
    String::from_utf8_lossy(&bytes[start..]).into_owned()
}

fn drain<R: Read + Send + 'static>(mut reader: R, cap: usize) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut buf = [0u8; 8192];
        loop {
            match reader.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    kept.extend_from_slice(&buf[..n]);
                    if kept.len() > 2 * cap.max(1) {
                        kept.drain(..kept.len() - cap);
                    }
                }
            }
        }
        kept
    })
}

fn kill_group(child: &Child) {
    // the child leads its own process group, so this reaches grandchildren
    unsafe {
        libc::killpg(child.id() as libc::pid_t, libc::SIGKILL);
    }
}

/// Rewrites absolute mentions of `workspace` as relative paths, so text fed
/// back to a model does not depend on where the workspace lives.
pub fn relativize(text: &str, workspace: &Path) -> String {
    let mut forms = vec![workspace.display().to_string()];
    if let Ok(c) = workspace.canonicalize() {
        forms.push(c.display().to_string());
    }
    forms.sort_by_key(|f| std::cmp::Reverse(f.len()));
    forms.dedup();
    let mut out = text.to_string();
    for f in forms.iter().filter(|f| f.len() > 1) {
        out = out.replace(&format!("{f}/"), "").replace(f.as_str(), ".");
    }
    out
}

pub fn run_sandboxed(
    cmd: &CommandLine,
    workspace: &Path,
    timeout: Duration,
    env: &EnvironmentSpec,
) -> Result<ExecutionResult, SandboxError> {
    if !workspace.is_dir() {
        return Err(SandboxError::Setup(format!(
            "workspace {} does not exist",
            workspace.display()
        )));
    }
    if timeout.is_zero() {
        return Err(SandboxError::Setup("timeout must be positive".into()));
    }
    let mut command = Command::new(&cmd.program);
    command
        .args(&cmd.args)
        .current_dir(workspace)
        .env_clear()
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    for key in &env.pass_through {
        if let Ok(v) = std::env::var(key) {
            command.env(key, v);
        }
    }
    command.envs(&env.set);
    let memory = env.memory_limit_bytes;
    unsafe {
        command.pre_exec(move || {
            let no_core = libc::rlimit {
                rlim_cur: 0,
                rlim_max: 0,
            };
            libc::setrlimit(libc::RLIMIT_CORE, &no_core);
            if let Some(bytes) = memory {
                let lim = libc::rlimit {
                    rlim_cur: bytes as libc::rlim_t,
                    rlim_max: bytes as libc::rlim_t,
                };
                if libc::setrlimit(libc::RLIMIT_AS, &lim) != 0 {
                    return Err(io::Error::last_os_error());
                }
            }
            Ok(())
        });
    }

    let started = Instant::now();
    let mut child = command.spawn().map_err(|e| {
        SandboxError::Setup(format!("cannot start `{}`: {e}", cmd.program))
    })?;
    let out = drain(child.stdout.take().expect("piped"), env.output_cap_bytes);
    let err = drain(child.stderr.take().expect("piped"), env.output_cap_bytes);

    let mut timed_out = false;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if started.elapsed() >= timeout => {
                timed_out = true;
                kill_group(&child);
                break child
                    .wait()
                    .map_err(|e| SandboxError::Setup(e.to_string()))?;
            }
            Ok(None) => thread::sleep(Duration::from_millis(5)),
            Err(e) => return Err(SandboxError::Setup(e.to_string())),
        }
    };
    // stray background processes would otherwise hold the pipes open
    kill_group(&child);
    let wall_time = started.elapsed().as_secs_f64();
    let stdout = out.join().unwrap_or_default();
    let stderr = err.join().unwrap_or_default();
    Ok(ExecutionResult {
        exit_code: status.code().unwrap_or(-1),
        stdout: tail_string(&stdout, env.output_cap_bytes),
        stderr: tail_string(&stderr, env.output_cap_bytes),
        wall_time,
        timed_out,
    })
}
