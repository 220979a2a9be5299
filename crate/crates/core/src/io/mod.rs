//! File formats: detections as JSON Lines, tracks as MOTChallenge CSV, run
//! configuration as flat `key = value` text, and report tables.

pub mod config;
pub mod detections;
pub mod mot;
pub mod report;

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `contents`, creating parent directories as needed.
pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}
