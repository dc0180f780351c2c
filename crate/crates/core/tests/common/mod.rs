#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use evoforge::cli::config::{Config, LoadedConfig, CONFIG_FILE};
use evoforge::synth::{write_staging, PlantingManifest, StagingLayout, SynthSpec};
use tempfile::TempDir;

pub struct Fixture {
    pub dir: TempDir,
    pub manifest: PlantingManifest,
}

impl Fixture {
    pub fn new(events_per_kind: usize) -> Self {
        Self::with_config(events_per_kind, |_| {})
    }

    pub fn with_config(events_per_kind: usize, edit: impl FnOnce(&mut Config)) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec::new(events_per_kind);
        let manifest = write_staging(dir.path(), &spec).unwrap();
        let mut config = Config::for_staging(&StagingLayout::default(), spec.from, spec.to);
        edit(&mut config);
        config.write(&dir.path().join(CONFIG_FILE)).unwrap();
        Self { dir, manifest }
    }

    pub fn config_path(&self) -> PathBuf {
        self.dir.path().join(CONFIG_FILE)
    }

    pub fn config(&self) -> LoadedConfig {
        LoadedConfig::load(&self.config_path()).unwrap()
    }

    pub fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    pub fn read_out(&self, name: &str) -> Vec<u8> {
        std::fs::read(self.out().join(name)).unwrap()
    }

    /// Runs the binary with `--config` pointing at this fixture.
    pub fn cli(&self, args: &[&str]) -> CliRun {
        let mut full = vec!["--config".to_string(), self.config_path().display().to_string()];
        full.extend(args.iter().map(|s| s.to_string()));
        run_cli(&full)
    }
}

pub struct CliRun {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn run_cli<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> CliRun {
    let out = Command::new(env!("CARGO_BIN_EXE_evoforge")).args(args).output().unwrap();
    CliRun {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// True when `rustc` runs on this machine.
pub fn rustc_available() -> bool {
    Command::new("rustc").arg("--version").output().is_ok_and(|o| o.status.success())
}

pub fn fixtures_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures"))
}
