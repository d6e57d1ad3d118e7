//! Output directories that appear only once complete.

use std::path::{Path, PathBuf};

use crate::failure::Failure;

/// A staging directory next to the destination, renamed into place by
/// [`StagedDir::commit`] and deleted if dropped uncommitted.
#[derive(Debug)]
pub struct StagedDir {
    staging: PathBuf,
    dest: PathBuf,
    committed: bool,
}

impl StagedDir {
    pub fn create(dest: &Path) -> Result<Self, Failure> {
        let name = dest
            .file_name()
            .ok_or_else(|| Failure::config(format!("output path {} has no final component", dest.display())))?;
        let parent = match dest.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        std::fs::create_dir_all(&parent).map_err(|e| Failure::io(&parent, e))?;
        let mut staged = name.to_os_string();
        staged.push(format!(".partial-{}", std::process::id()));
        let staging = parent.join(staged);
        if staging.exists() {
            std::fs::remove_dir_all(&staging).map_err(|e| Failure::io(&staging, e))?;
        }
        std::fs::create_dir(&staging).map_err(|e| Failure::io(&staging, e))?;
        Ok(Self {
            staging,
            dest: dest.to_path_buf(),
            committed: false,
        })
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.staging.join(file)
    }

    pub fn write(&self, file: &str, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
        let path = self.path(file);
        std::fs::write(&path, bytes).map_err(|e| Failure::io(&path, e))
    }

    /// Replaces any existing destination with the staged contents.
    pub fn commit(mut self) -> Result<PathBuf, Failure> {
        if self.dest.exists() {
            std::fs::remove_dir_all(&self.dest).map_err(|e| Failure::io(&self.dest, e))?;
        }
        std::fs::rename(&self.staging, &self.dest).map_err(|e| Failure::io(&self.dest, e))?;
        self.committed = true;
        Ok(self.dest.clone())
    }
}

impl Drop for StagedDir {
    fn drop(&mut self) {
        if !self.committed {
            let _ = std::fs::remove_dir_all(&self.staging);
        }
    }
}
