use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gamspline::data_io::write_atomic;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

/// One command's record in `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub tool_version: String,
    pub settings: serde_json::Value,
    /// Output files relative to the output directory, sorted.
    pub outputs: Vec<String>,
}

/// Collects the files a command writes so they can be listed in the
/// manifest.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

pub fn to_pretty_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(gamspline::Error::from)?;
    s.push('\n');
    Ok(s)
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| gamspline::Error::io(root, e))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| gamspline::Error::io(parent, e))?;
        }
        write_atomic(&p, bytes)?;
        self.record(&p);
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        self.write(name, to_pretty_json(value)?.as_bytes())
    }

    /// Note a file written by someone else.
    pub fn record(&mut self, path: &Path) {
        let rel = path.strip_prefix(&self.root).unwrap_or(path);
        self.written.push(rel.to_string_lossy().replace('\\', "/"));
    }

    /// Insert or replace `command`'s entry in the manifest.
    pub fn finish<S: Serialize>(mut self, command: &str, settings: &S) -> Result<(), CliError> {
        let path = self.path(MANIFEST);
        let mut manifest: BTreeMap<String, ManifestEntry> = match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map_err(gamspline::Error::from)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(gamspline::Error::io(&path, e).into()),
        };
        self.written.sort();
        self.written.dedup();
        manifest.insert(
            command.to_string(),
            ManifestEntry {
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                settings: serde_json::to_value(settings).map_err(gamspline::Error::from)?,
                outputs: self.written,
            },
        );
        write_atomic(&path, to_pretty_json(&manifest)?.as_bytes())?;
        Ok(())
    }
}
