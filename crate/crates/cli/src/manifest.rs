//! One manifest per run, written next to the primary output as
//! `<output>.manifest.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct OutputDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub format_version: u32,
    pub command: String,
    pub argv: Vec<String>,
    pub version: String,
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    pub workers: usize,
    pub started_unix_seconds: u64,
    pub wall_clock_seconds: f64,
    /// Environment interactions spent by the run, by category.
    pub steps: BTreeMap<String, u64>,
    pub outputs: Vec<OutputDigest>,
}

pub fn version_string() -> String {
    match option_env!("CHRONOGEM_GIT_DESCRIBE") {
        Some(d) => format!("{} ({d})", env!("CARGO_PKG_VERSION")),
        None => env!("CARGO_PKG_VERSION").to_string(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects what a command did; outputs are digested as they are written.
pub struct Run {
    command: String,
    argv: Vec<String>,
    workers: usize,
    started: Instant,
    started_unix: u64,
    config: Value,
    seeds: BTreeMap<String, u64>,
    steps: BTreeMap<String, u64>,
    outputs: Vec<OutputDigest>,
    primary: Option<PathBuf>,
}

impl Run {
    pub fn new(command: &str, argv: Vec<String>, workers: usize) -> Self {
        Run {
            command: command.to_string(),
            argv,
            workers,
            started: Instant::now(),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            config: Value::Null,
            seeds: BTreeMap::new(),
            steps: BTreeMap::new(),
            outputs: Vec::new(),
            primary: None,
        }
    }

    pub fn config(&mut self, settings: &impl Serialize) -> anyhow::Result<()> {
        self.config = serde_json::to_value(settings)?;
        Ok(())
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value);
    }

    pub fn steps(&mut self, name: &str, value: u64) {
        self.steps.insert(name.to_string(), value);
    }

    /// Writes one output file. The first one written names the manifest.
    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, bytes)
            .map_err(|e| anyhow::Error::new(e).context(format!("writing {}", path.display())))?;
        self.outputs.push(OutputDigest {
            path: path.display().to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        if self.primary.is_none() {
            self.primary = Some(path.to_path_buf());
        }
        Ok(())
    }

    pub fn write_json(&mut self, path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(path, text.as_bytes())
    }

    pub fn manifest_path(primary: &Path) -> PathBuf {
        let mut s = primary.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }

    /// Writes the manifest and returns its path.
    pub fn finish(self) -> anyhow::Result<PathBuf> {
        let primary = self
            .primary
            .clone()
            .ok_or_else(|| anyhow::anyhow!("command '{}' produced no output", self.command))?;
        let path = Self::manifest_path(&primary);
        let manifest = Manifest {
            format_version: chronogem_core::FORMAT_VERSION,
            command: self.command,
            argv: self.argv,
            version: version_string(),
            config: self.config,
            seeds: self.seeds,
            workers: self.workers,
            started_unix_seconds: self.started_unix,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            steps: self.steps,
            outputs: self.outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_abc() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_sits_next_to_the_first_output() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = Run::new("grid", vec!["chronogem".into()], 1);
        run.write(&dir.path().join("a.pgm"), b"P2\n").unwrap();
        run.write(&dir.path().join("b.csv"), b"1\n").unwrap();
        let m = run.finish().unwrap();
        assert_eq!(m, dir.path().join("a.pgm.manifest.json"));
        let v: Value = serde_json::from_str(&std::fs::read_to_string(&m).unwrap()).unwrap();
        assert_eq!(v["outputs"].as_array().unwrap().len(), 2);
        assert_eq!(v["outputs"][0]["sha256"], sha256_hex(b"P2\n"));
    }
}
