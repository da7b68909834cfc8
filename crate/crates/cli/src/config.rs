//! Flat key-value pipeline configuration with `[section]` headers.
//!
//! ```text
//! [run]
//! stages = design eval fit validate sobol plot
//! seed = 42
//! out = runs/campbell
//! ```
//!
//! `#` starts a comment. Values are bare strings; typed accessors parse on
//! demand. `resolved()` renders the canonical snapshot that every run emits
//! next to its outputs.

use std::collections::BTreeMap;
use std::path::Path;

use crate::CliError;

#[derive(Debug, Clone, Default)]
pub struct PipelineConfig {
    /// section -> key -> value, sorted for a stable snapshot
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::from("run");
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| CliError::config(format!("line {}: unclosed section", lineno + 1)))?;
                current = name.trim().to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::config(format!("line {}: expected key = value", lineno + 1))
            })?;
            sections
                .entry(current.clone())
                .or_default()
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(PipelineConfig { sections })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .map(|s| s.as_str())
    }

    pub fn require(&self, section: &str, key: &str) -> Result<&str, CliError> {
        self.get(section, key)
            .ok_or_else(|| CliError::config(format!("missing [{section}] {key}")))
    }

    pub fn get_parsed<T: std::str::FromStr>(
        &self,
        section: &str,
        key: &str,
    ) -> Result<Option<T>, CliError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| {
                CliError::config(format!("[{section}] {key} = {v:?} does not parse"))
            }),
        }
    }

    pub fn get_or<T: std::str::FromStr>(
        &self,
        section: &str,
        key: &str,
        default: T,
    ) -> Result<T, CliError> {
        Ok(self.get_parsed(section, key)?.unwrap_or(default))
    }

    pub fn get_bool(&self, section: &str, key: &str, default: bool) -> Result<bool, CliError> {
        match self.get(section, key) {
            None => Ok(default),
            Some("true") | Some("1") | Some("yes") | Some("on") => Ok(true),
            Some("false") | Some("0") | Some("no") | Some("off") => Ok(false),
            Some(v) => Err(CliError::config(format!(
                "[{section}] {key} = {v:?} is not a boolean"
            ))),
        }
    }

    /// Canonical rendering: sorted sections and keys, one `key = value` per
    /// line. Reruns with identical settings produce identical snapshots.
    pub fn resolved(&self) -> String {
        let mut out = String::new();
        for (name, entries) in &self.sections {
            out.push_str(&format!("[{name}]\n"));
            for (k, v) in entries {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }

    /// Canonical rendering of one section only (used for per-stage resume
    /// snapshots).
    pub fn resolved_section(&self, section: &str) -> String {
        let mut out = String::new();
        if let Some(entries) = self.sections.get(section) {
            out.push_str(&format!("[{section}]\n"));
            for (k, v) in entries {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let cfg = PipelineConfig::parse(
            "# pipeline\n[run]\nseed = 7   # root\nstages = design eval\n\n[fit]\nk = 30\n",
        )
        .unwrap();
        assert_eq!(cfg.get("run", "seed"), Some("7"));
        assert_eq!(cfg.get("fit", "k"), Some("30"));
        assert_eq!(cfg.get_or::<u64>("run", "seed", 0).unwrap(), 7);
        assert!(cfg.get("fit", "missing").is_none());
    }

    #[test]
    fn resolved_snapshot_is_canonical() {
        let a = PipelineConfig::parse("[b]\nz = 1\na = 2\n[a]\nk = 3\n").unwrap();
        let b = PipelineConfig::parse("[a]\nk = 3\n[b]\na = 2\nz = 1\n").unwrap();
        assert_eq!(a.resolved(), b.resolved());
    }

    #[test]
    fn bad_lines_are_config_errors() {
        assert!(PipelineConfig::parse("[run\nseed = 1").is_err());
        assert!(PipelineConfig::parse("[run]\njust a line").is_err());
        let cfg = PipelineConfig::parse("[run]\nseed = x").unwrap();
        assert!(cfg.get_parsed::<u64>("run", "seed").is_err());
    }
}
