//! File-based discovery: `registry.txt`, one `network_id<TAB>host:port`
//! per line. Repeated network ids list redundant relays in preference order.
//! Blank lines and `#` comments are ignored.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("network {0:?} is not registered")]
    Unregistered(String),
    #[error("registry line {line}: {reason}")]
    Malformed { line: usize, reason: &'static str },
    #[error("registry io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Entries = BTreeMap<String, Vec<String>>;

pub fn parse_registry(text: &str) -> Result<Entries, RegistryError> {
    let mut entries = Entries::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let (network, addr) = line
            .split_once('\t')
            .ok_or(RegistryError::Malformed { line: i + 1, reason: "expected network_id<TAB>host:port" })?;
        let (network, addr) = (network.trim(), addr.trim());
        if network.is_empty() || addr.rsplit_once(':').is_none_or(|(h, p)| h.is_empty() || p.parse::<u16>().is_err()) {
            return Err(RegistryError::Malformed { line: i + 1, reason: "bad network id or address" });
        }
        entries.entry(network.to_string()).or_default().push(addr.to_string());
    }
    Ok(entries)
}

pub fn render_registry<'a>(entries: impl IntoIterator<Item = (&'a str, &'a str)>) -> String {
    entries.into_iter().map(|(n, a)| format!("{n}\t{a}\n")).collect()
}

/// Writes via a temp file and rename so readers never see a partial file.
pub fn write_registry_file<'a>(path: &Path, entries: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<(), RegistryError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, render_registry(entries))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

type Stamp = crate::codec::Digest;

#[derive(Debug)]
struct Loaded {
    stamp: Option<Stamp>,
    entries: Arc<Entries>,
    generation: u64,
}

/// Watched registry file. Lookups re-read the file and swap in a fresh
/// table when its contents changed.
#[derive(Debug)]
pub struct DiscoveryRegistry {
    path: PathBuf,
    loaded: RwLock<Loaded>,
}

fn stamp_of(path: &Path) -> Option<Stamp> {
    std::fs::read(path).ok().map(|b| crate::codec::sha256(&b))
}

impl DiscoveryRegistry {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, RegistryError> {
        let path = path.into();
        let reg = Self { path, loaded: RwLock::new(Loaded { stamp: None, entries: Arc::default(), generation: 0 }) };
        reg.reload()?;
        Ok(reg)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Unconditional reload. A missing file reads as an empty registry.
    pub fn reload(&self) -> Result<(), RegistryError> {
        let (stamp, entries) = match std::fs::read(&self.path) {
            Ok(bytes) => {
                let text = String::from_utf8(bytes).map_err(|_| RegistryError::Malformed { line: 0, reason: "not utf-8" })?;
                (Some(crate::codec::sha256(text.as_bytes())), parse_registry(&text)?)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => (None, Entries::new()),
            Err(e) => return Err(e.into()),
        };
        let mut loaded = self.loaded.write().expect("registry lock poisoned");
        loaded.stamp = stamp;
        loaded.entries = Arc::new(entries);
        loaded.generation += 1;
        Ok(())
    }

    fn refresh(&self) {
        let current = stamp_of(&self.path);
        let stale = self.loaded.read().expect("registry lock poisoned").stamp != current;
        if stale {
            // A malformed rewrite keeps the previous table.
            let _ = self.reload();
        }
    }

    /// Bumped on every reload; lets callers drop state tied to old entries.
    pub fn generation(&self) -> u64 {
        self.refresh();
        self.loaded.read().expect("registry lock poisoned").generation
    }

    pub fn lookup(&self, network_id: &str) -> Result<Vec<String>, RegistryError> {
        self.refresh();
        self.loaded
            .read()
            .expect("registry lock poisoned")
            .entries
            .get(network_id)
            .cloned()
            .ok_or_else(|| RegistryError::Unregistered(network_id.to_string()))
    }

    pub fn snapshot(&self) -> Arc<Entries> {
        self.refresh();
        Arc::clone(&self.loaded.read().expect("registry lock poisoned").entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lines_comments_and_redundancy() {
        let e = parse_registry("# relays\ntrade-lens\t127.0.0.1:9001\n\ntrade-lens\t127.0.0.1:9002\nwe-trade\tlocalhost:9100\n").unwrap();
        assert_eq!(e["trade-lens"], vec!["127.0.0.1:9001", "127.0.0.1:9002"]);
        assert_eq!(e["we-trade"], vec!["localhost:9100"]);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(parse_registry("trade-lens 127.0.0.1:9001\n").is_err());
        assert!(parse_registry("trade-lens\t127.0.0.1\n").is_err());
        assert!(parse_registry("\t127.0.0.1:1\n").is_err());
    }

    #[test]
    fn unregistered_lookup_fails_and_reload_picks_up_changes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("registry.txt");
        let reg = DiscoveryRegistry::open(&path).unwrap();
        assert!(matches!(reg.lookup("trade-lens"), Err(RegistryError::Unregistered(_))));

        write_registry_file(&path, [("trade-lens", "127.0.0.1:9001")]).unwrap();
        assert_eq!(reg.lookup("trade-lens").unwrap(), vec!["127.0.0.1:9001"]);
        let gen = reg.generation();

        write_registry_file(&path, [("trade-lens", "127.0.0.1:9001"), ("trade-lens", "127.0.0.1:9002")]).unwrap();
        assert_eq!(reg.lookup("trade-lens").unwrap().len(), 2);
        assert!(reg.generation() > gen);

        // Broken rewrite: previous table stays in service.
        std::fs::write(&path, "garbage line without tab and much longer than before\n").unwrap();
        assert_eq!(reg.lookup("trade-lens").unwrap().len(), 2);
    }
}
