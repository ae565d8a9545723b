//! One `run_manifest.json` per command invocation.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sljp::checkpoint::sha256_file;
use sljp::{Error, Result};

pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    /// Resolved configuration, overrides applied.
    pub config: Option<String>,
    pub seed: Option<u64>,
    /// Input path → sha256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    /// Phase name → seconds.
    pub timings: BTreeMap<String, f64>,
    #[serde(skip)]
    clock: Option<Instant>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_owned(),
            args: std::env::args().skip(1).collect(),
            config: None,
            seed: None,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            timings: BTreeMap::new(),
            clock: Some(Instant::now()),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let hash = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), hash);
        Ok(())
    }

    /// Hashes every regular file directly inside `dir`.
    pub fn input_dir(&mut self, dir: &Path) -> Result<()> {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::read(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for f in files {
            self.input(&f)?;
        }
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Records the time since the previous lap (or since creation).
    pub fn lap(&mut self, phase: &str) {
        let now = Instant::now();
        if let Some(start) = self.clock.replace(now) {
            self.timings
                .insert(phase.to_owned(), (now - start).as_secs_f64());
        }
    }

    pub fn write(&mut self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        self.output(&path);
        let text = serde_json::to_string_pretty(self).expect("manifest serialises");
        fs::write(&path, text + "\n").map_err(|e| Error::write(&path, e))?;
        Ok(path)
    }
}
