use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};

/// What a subcommand ran and what it wrote.
#[derive(Debug)]
pub struct RunManifest {
    pub command: Vec<String>,
    /// Path of the configuration snapshot, when the command has one.
    pub config: Option<PathBuf>,
    pub seeds: Vec<(String, u64)>,
    /// Extra `key = value` records, e.g. the ablation switches.
    pub records: Vec<(String, String)>,
    pub artifacts: Vec<PathBuf>,
    started: Instant,
}

impl RunManifest {
    pub fn start() -> Self {
        Self {
            command: std::env::args().collect(),
            config: None,
            seeds: Vec::new(),
            records: Vec::new(),
            artifacts: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.seeds.push((name.to_string(), seed));
    }

    pub fn record(&mut self, key: &str, value: impl ToString) {
        self.records.push((key.to_string(), value.to_string()));
    }

    pub fn artifact(&mut self, path: impl Into<PathBuf>) {
        self.artifacts.push(path.into());
    }

    /// Writes the manifest to `path`. Fails if a listed artifact is
    /// missing.
    pub fn write(&self, path: &Path) -> Result<()> {
        for a in self.artifacts.iter().chain(&self.config) {
            if !a.exists() {
                bail!("artifact {} was not written", a.display());
            }
        }
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command.join(" "));
        let _ = writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "wall_clock_s = {:.3}", self.started.elapsed().as_secs_f64());
        if let Some(c) = &self.config {
            let _ = writeln!(s, "config = {}", c.display());
        }
        for (k, v) in &self.records {
            let _ = writeln!(s, "{k} = {v}");
        }
        s.push_str("\n[seeds]\n");
        for (k, v) in &self.seeds {
            let _ = writeln!(s, "{k} = {v}");
        }
        s.push_str("\n[artifacts]\n");
        for (i, a) in self.artifacts.iter().enumerate() {
            let _ = writeln!(s, "{i} = {}", a.display());
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        fs::write(path, s).with_context(|| format!("writing {}", path.display()))
    }
}
