//! Output directory handling and run manifests.
//!
//! `manifest.json` holds only what determines the results (subcommand,
//! resolved configuration, seed, version, output files), so identical runs
//! produce identical bytes. Wall-clock timings and the worker count go to
//! the `run_env.json` sidecar.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;

pub const MANIFEST: &str = "manifest.json";
pub const RUN_ENV: &str = "run_env.json";

#[derive(Serialize)]
pub struct OutputEntry {
    pub file: String,
    pub bytes: usize,
}

#[derive(Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub config: serde_json::Value,
    pub master_seed: Option<u64>,
    pub passed: bool,
    pub outputs: Vec<OutputEntry>,
}

#[derive(Serialize)]
struct RunEnv {
    workers: usize,
    available_parallelism: usize,
    wall_clock_seconds: f64,
    phases: BTreeMap<String, f64>,
}

pub struct Run {
    dir: PathBuf,
    subcommand: String,
    config: serde_json::Value,
    master_seed: Option<u64>,
    outputs: Vec<OutputEntry>,
    workers: usize,
    started: Instant,
    phases: BTreeMap<String, f64>,
}

/// Writes through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    std::fs::write(&tmp, bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("cannot move {} into place", tmp.display()))?;
    Ok(())
}

impl Run {
    pub fn start(dir: &Path, subcommand: &str, config: serde_json::Value, master_seed: Option<u64>, workers: usize) -> anyhow::Result<Run> {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Run {
            dir: dir.to_path_buf(),
            subcommand: subcommand.to_string(),
            config,
            master_seed,
            outputs: Vec::new(),
            workers,
            started: Instant::now(),
            phases: BTreeMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Records the seconds elapsed since the start under `name`.
    pub fn mark(&mut self, name: &str) {
        self.phases.insert(name.to_string(), self.started.elapsed().as_secs_f64());
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        write_atomic(&path, bytes)?;
        self.outputs.push(OutputEntry { file: name.to_string(), bytes: bytes.len() });
        Ok(())
    }

    /// Registers a file already written under the output directory.
    pub fn register(&mut self, path: &Path) -> anyhow::Result<()> {
        let bytes = std::fs::metadata(path)?.len() as usize;
        let name = path.strip_prefix(&self.dir).unwrap_or(path).to_string_lossy().replace('\\', "/");
        self.outputs.push(OutputEntry { file: name, bytes });
        Ok(())
    }

    pub fn finish(self, passed: bool) -> anyhow::Result<()> {
        let manifest = RunManifest {
            tool: "updown",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: self.subcommand,
            config: self.config,
            master_seed: self.master_seed,
            passed,
            outputs: self.outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_atomic(&self.dir.join(MANIFEST), text.as_bytes())?;
        let env = RunEnv {
            workers: self.workers,
            available_parallelism: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            phases: self.phases,
        };
        let mut text = serde_json::to_string_pretty(&env)?;
        text.push('\n');
        write_atomic(&self.dir.join(RUN_ENV), text.as_bytes())?;
        Ok(())
    }
}
