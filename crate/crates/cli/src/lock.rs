//! Advisory lock guarding the manifest against concurrent mutation.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;

use crate::error::{CliError, Result};

pub struct ManifestLock {
    path: PathBuf,
}

impl ManifestLock {
    /// Creates `<manifest>.lock` exclusively; an existing lock means another
    /// command holds the manifest.
    pub fn acquire(manifest_path: &std::path::Path) -> Result<Self> {
        let path = manifest_path.with_extension("ndjson.lock");
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Data(format!(
                "manifest is locked by another command ({}); remove the file if stale",
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for ManifestLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_acquire_fails_until_release() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("manifest.ndjson");
        let lock = ManifestLock::acquire(&manifest).unwrap();
        assert!(ManifestLock::acquire(&manifest).is_err());
        drop(lock);
        ManifestLock::acquire(&manifest).unwrap();
    }
}
