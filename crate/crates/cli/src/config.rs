//! Effective settings: command-line flags over a `key=value` file over
//! per-command defaults.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

pub const KEYS: &[&str] = &[
    "alpha",
    "q0",
    "y0-choice",
    "design",
    "n-grid",
    "w-grid",
    "sample-size",
    "replications",
    "seed",
    "xi",
    "r",
    "rules",
    "exact",
    "threads",
    "out",
    "mc",
    "epsilon",
    "n0",
    "n1",
    "p",
    "covariates",
    "fx",
    "trials",
    "max-n",
];

/// Keys that do not change results and are left out of the run id.
const PRESENTATION_KEYS: &[&str] = &["threads", "out"];

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Parses `key=value` lines; blank lines and `#` comments are skipped.
    pub fn parse_file_text(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("config line {}: expected key=value", i + 1);
            };
            let key = key.trim();
            check_key(key).with_context(|| format!("config line {}", i + 1))?;
            if values.insert(key.to_string(), value.trim().to_string()).is_some() {
                bail!("config line {}: duplicate key `{key}`", i + 1);
            }
        }
        Ok(Settings { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse_file_text(&text)
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, String)>) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (k, v) in pairs {
            check_key(k)?;
            values.insert(k.to_string(), v);
        }
        Ok(Settings { values })
    }

    /// Entries of `self` win over entries of `lower`.
    pub fn over(mut self, lower: &Settings) -> Settings {
        for (k, v) in &lower.values {
            self.values.entry(k.clone()).or_insert_with(|| v.clone());
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).with_context(|| format!("missing setting `{key}`"))
    }

    pub fn parse<T>(&self, key: &str) -> Result<T>
    where
        T: std::str::FromStr,
        T::Err: std::fmt::Display,
    {
        let raw = self.require(key)?;
        raw.trim()
            .parse()
            .map_err(|e| anyhow::anyhow!("setting `{key}` = `{raw}`: {e}"))
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key).map(str::trim) {
            None | Some("false") | Some("0") | Some("no") => Ok(false),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some(other) => bail!("setting `{key}` = `{other}`: expected true or false"),
        }
    }

    /// Comma-separated list; empty items are rejected.
    pub fn list(&self, key: &str) -> Result<Vec<String>> {
        let items: Vec<String> = self.require(key)?.split(',').map(|s| s.trim().to_string()).collect();
        if items.iter().any(String::is_empty) {
            bail!("setting `{key}` has an empty list item");
        }
        Ok(items)
    }

    pub fn map(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// Hex prefix of the SHA-256 of the result-relevant settings.
    pub fn run_id(&self, command: &str) -> String {
        let mut canonical = format!("command={command}\n");
        for (k, v) in &self.values {
            if !PRESENTATION_KEYS.contains(&k.as_str()) {
                canonical.push_str(&format!("{k}={v}\n"));
            }
        }
        crate::output::sha256_hex(canonical.as_bytes())[..16].to_string()
    }
}

fn check_key(key: &str) -> Result<()> {
    if KEYS.contains(&key) {
        Ok(())
    } else {
        bail!("unknown setting `{key}`")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        let defaults = Settings::from_pairs([("alpha", "0.1".into()), ("seed", "1".into()), ("r", "0".into())]).unwrap();
        let file = Settings::parse_file_text("alpha = 0.5\nseed=2 # comment\n").unwrap();
        let flags = Settings::from_pairs([("alpha", "0.9".into())]).unwrap();
        let eff = flags.over(&file.over(&defaults));
        assert_eq!(eff.get("alpha"), Some("0.9"));
        assert_eq!(eff.get("seed"), Some("2"));
        assert_eq!(eff.get("r"), Some("0"));
    }

    #[test]
    fn bad_files_are_rejected() {
        assert!(Settings::parse_file_text("alpha 0.5").is_err());
        assert!(Settings::parse_file_text("colour=red").is_err());
        assert!(Settings::parse_file_text("seed=1\nseed=2").is_err());
    }

    #[test]
    fn run_id_ignores_threads_and_out() {
        let a = Settings::from_pairs([("seed", "1".into()), ("threads", "2".into())]).unwrap();
        let b = Settings::from_pairs([("seed", "1".into()), ("out", "x".into())]).unwrap();
        let c = Settings::from_pairs([("seed", "2".into())]).unwrap();
        assert_eq!(a.run_id("table1"), b.run_id("table1"));
        assert_ne!(a.run_id("table1"), c.run_id("table1"));
        assert_ne!(a.run_id("table1"), a.run_id("table2"));
    }
}
