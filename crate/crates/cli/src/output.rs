//! Staged, atomic output files and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Settings;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub run_id: String,
    pub exact: bool,
    pub seed: Option<u64>,
    pub started: String,
    pub finished: String,
    pub config: std::collections::BTreeMap<String, String>,
    pub outputs: Vec<OutputEntry>,
}

/// Files are collected in memory and only written once the whole run has
/// succeeded, so a failing run leaves no partial results behind.
pub struct OutputSet {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl OutputSet {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        OutputSet {
            dir: dir.into(),
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, name: &str, contents: Vec<u8>) {
        self.files.push((name.to_string(), contents));
    }

    /// Writes every file and then `manifest.json`, each via temp file and rename.
    pub fn commit(self, command: &str, settings: &Settings, exact: bool, seed: Option<u64>, started: String) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        let mut staged = Vec::new();
        for (name, contents) in &self.files {
            let target = self.dir.join(name);
            staged.push((stage(&target, contents)?, target));
        }
        for (tmp, target) in &staged {
            fs::rename(tmp, target).with_context(|| format!("renaming into {}", target.display()))?;
        }
        let outputs = self
            .files
            .iter()
            .map(|(name, contents)| OutputEntry {
                path: self.dir.join(name).display().to_string(),
                sha256: sha256_hex(contents),
                bytes: contents.len(),
            })
            .collect();
        let manifest = Manifest {
            tool: "qregret",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            run_id: settings.run_id(command),
            exact,
            seed,
            started,
            finished: timestamp(),
            config: settings.map().clone(),
            outputs,
        };
        let mut json = serde_json::to_vec_pretty(&manifest)?;
        json.push(b'\n');
        let target = self.dir.join("manifest.json");
        let tmp = stage(&target, &json)?;
        fs::rename(&tmp, &target).with_context(|| format!("renaming into {}", target.display()))?;
        Ok(target)
    }
}

fn stage(target: &Path, contents: &[u8]) -> Result<PathBuf> {
    let name = target.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = target.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(contents)?;
    f.sync_all()?;
    Ok(tmp)
}

pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
