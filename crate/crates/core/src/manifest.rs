//! Dataset manifests: one `path<TAB>label_index` per line. Relative paths
//! resolve against the manifest's directory.

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("manifest is empty")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: usize,
}

pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>, ManifestError> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let (path, label) = raw
            .split_once('\t')
            .ok_or_else(|| ManifestError::Parse { line: i + 1, msg: "expected path<TAB>label".into() })?;
        let label = label
            .trim()
            .parse()
            .map_err(|_| ManifestError::Parse { line: i + 1, msg: format!("bad label {label:?}") })?;
        let path = Path::new(path);
        let path = if path.is_absolute() { path.to_path_buf() } else { base.join(path) };
        entries.push(ManifestEntry { path, label });
    }
    if entries.is_empty() {
        return Err(ManifestError::Empty);
    }
    Ok(entries)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, ManifestError> {
    let text = std::fs::read_to_string(path)?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
}

pub fn format_manifest(entries: &[(String, usize)]) -> String {
    entries.iter().map(|(p, l)| format!("{p}\t{l}\n")).collect()
}
