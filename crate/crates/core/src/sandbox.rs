//! Compiling and running snippets under a pinned subject toolchain.
//!
//! Each job gets a fresh temp directory with a `rust-toolchain.toml` naming
//! the toolchain, so the rustup proxy selects it. Builds and runs are killed
//! when they exceed their time limits.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::OnceLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use crate::model::VersionId;

#[derive(Debug, thiserror::Error)]
pub enum SandboxError {
    #[error("sandbox unavailable: {0}")]
    SandboxUnavailable(String),
    #[error("sandbox I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrateType {
    Bin,
    Lib,
}

#[derive(Debug, Clone)]
pub struct Job<'a> {
    pub source: &'a str,
    pub version: VersionId,
    pub crate_type: CrateType,
    /// Run the binary after a successful build (ignored for libraries).
    pub run: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecResult {
    pub compiled: bool,
    pub compile_timed_out: bool,
    pub compiler_output: String,
    pub ran: bool,
    pub run_timed_out: bool,
    pub exit_success: bool,
    pub stdout: String,
    /// Toolchain the job actually used.
    pub toolchain: String,
}

pub trait Sandbox: Send + Sync {
    fn execute(&self, job: &Job<'_>) -> Result<ExecResult, SandboxError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SandboxConfig {
    pub compile_timeout_secs: u64,
    pub run_timeout_secs: u64,
    /// Toolchain to use when the pinned one is not installed; `None` makes a
    /// missing toolchain an error.
    pub fallback_toolchain: Option<String>,
    /// Run the test binary in a fresh network namespace via `unshare`.
    pub isolate_network: bool,
    pub rustc: String,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        Self {
            compile_timeout_secs: 30,
            run_timeout_secs: 10,
            fallback_toolchain: None,
            isolate_network: false,
            rustc: "rustc".into(),
        }
    }
}

pub struct RustcSandbox {
    config: SandboxConfig,
    installed: OnceLock<Vec<String>>,
}

const KEPT_ENV: [&str; 4] = ["PATH", "HOME", "RUSTUP_HOME", "CARGO_HOME"];

impl RustcSandbox {
    pub fn new(config: SandboxConfig) -> Self {
        Self { config, installed: OnceLock::new() }
    }

    /// Toolchain names reported by `rustup toolchain list`, without the host
    /// triple suffix.
    pub fn installed_toolchains(&self) -> &[String] {
        self.installed.get_or_init(|| {
            let Ok(out) = Command::new("rustup").args(["toolchain", "list"]).output() else {
                return Vec::new();
            };
            String::from_utf8_lossy(&out.stdout)
                .lines()
                .filter_map(|l| l.split_whitespace().next())
                .map(strip_host_triple)
                .collect()
        })
    }

    /// The toolchain a job for `version` runs under.
    pub fn resolve_toolchain(&self, version: VersionId) -> Result<String, SandboxError> {
        let pinned = version.to_string();
        let installed = self.installed_toolchains();
        if installed.contains(&pinned) {
            return Ok(pinned);
        }
        match &self.config.fallback_toolchain {
            Some(fb) if installed.iter().any(|t| t == fb) => Ok(fb.clone()),
            Some(fb) => Err(SandboxError::SandboxUnavailable(format!("neither {pinned} nor fallback {fb} installed"))),
            None => Err(SandboxError::SandboxUnavailable(format!("toolchain {pinned} not installed"))),
        }
    }

    fn command(&self, program: &Path, dir: &Path, isolate: bool) -> Command {
        let mut cmd = if isolate {
            let mut c = Command::new("unshare");
            c.args(["--user", "--map-root-user", "--net", "--"]).arg(program);
            c
        } else {
            Command::new(program)
        };
        cmd.current_dir(dir).env_clear().stdin(Stdio::null()).stdout(Stdio::piped()).stderr(Stdio::piped());
        for key in KEPT_ENV {
            if let Ok(v) = std::env::var(key) {
                cmd.env(key, v);
            }
        }
        cmd.env("RUSTUP_AUTO_INSTALL", "0");
        cmd
    }
}

fn strip_host_triple(name: &str) -> String {
    // "1.77.0-x86_64-unknown-linux-gnu" -> "1.77.0"
    match name.find("-x86_64-").or_else(|| name.find("-aarch64-")).or_else(|| name.find("-i686-")) {
        Some(pos) => name[..pos].to_string(),
        None => name.to_string(),
    }
}

struct Finished {
    timed_out: bool,
    success: bool,
    stdout: String,
    stderr: String,
}

fn run_with_timeout(mut cmd: Command, limit: Duration) -> Result<Finished, SandboxError> {
    let mut child = cmd.spawn()?;
    // drain pipes on threads so a chatty child cannot block on a full pipe
    let mut out_pipe = child.stdout.take().expect("piped");
    let mut err_pipe = child.stderr.take().expect("piped");
    let out_reader = std::thread::spawn(move || {
        let mut s = Vec::new();
        let _ = out_pipe.read_to_end(&mut s);
        s
    });
    let err_reader = std::thread::spawn(move || {
        let mut s = Vec::new();
        let _ = err_pipe.read_to_end(&mut s);
        s
    });
    let status = child.wait_timeout(limit)?;
    let (timed_out, success) = match status {
        Some(st) => (false, st.success()),
        None => {
            let _ = child.kill();
            let _ = child.wait();
            (true, false)
        }
    };
    let stdout = String::from_utf8_lossy(&out_reader.join().unwrap_or_default()).into_owned();
    let stderr = String::from_utf8_lossy(&err_reader.join().unwrap_or_default()).into_owned();
    Ok(Finished { timed_out, success, stdout, stderr })
}

impl Sandbox for RustcSandbox {
    fn execute(&self, job: &Job<'_>) -> Result<ExecResult, SandboxError> {
        let toolchain = self.resolve_toolchain(job.version)?;
        let dir = tempfile::tempdir()?;
        fs::write(dir.path().join("rust-toolchain.toml"), format!("[toolchain]\nchannel = \"{toolchain}\"\n"))?;
        fs::write(dir.path().join("main.rs"), job.source)?;

        let mut build = self.command(Path::new(&self.config.rustc), dir.path(), false);
        build.args(["--edition", "2021", "--crate-name", "evo_job", "-o"]);
        let artifact: PathBuf = dir.path().join("evo_job");
        build.arg(&artifact);
        if job.crate_type == CrateType::Lib {
            build.args(["--crate-type", "lib"]);
        }
        build.arg("main.rs");
        let built = run_with_timeout(build, Duration::from_secs(self.config.compile_timeout_secs))?;

        let mut result = ExecResult {
            compiled: built.success,
            compile_timed_out: built.timed_out,
            compiler_output: built.stderr,
            toolchain,
            ..ExecResult::default()
        };
        if built.success && job.run && job.crate_type == CrateType::Bin {
            let run = self.command(&artifact, dir.path(), self.config.isolate_network);
            let finished = run_with_timeout(run, Duration::from_secs(self.config.run_timeout_secs))?;
            result.ran = true;
            result.run_timed_out = finished.timed_out;
            result.exit_success = finished.success;
            result.stdout = finished.stdout;
        }
        Ok(result)
    }
}
