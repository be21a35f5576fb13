//! Output directories that appear all at once.
//!
//! Work happens in a hidden sibling directory which is renamed onto the
//! requested path when the command succeeds. A failed run leaves the
//! staging directory in place so its contents can be inspected.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::exit::UsageError;

pub struct StagedDir {
    staging: PathBuf,
    target: PathBuf,
}

impl StagedDir {
    /// Refuses to overwrite a non-empty directory.
    pub fn create(target: &Path) -> Result<Self> {
        if target.exists() {
            let empty = target.is_dir()
                && fs::read_dir(target)
                    .with_context(|| format!("reading {}", target.display()))?
                    .next()
                    .is_none();
            if !empty {
                bail!(UsageError(format!(
                    "output path {} already exists and is not empty",
                    target.display()
                )));
            }
        }
        let name = target
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into());
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).with_context(|| format!("creating {}", parent.display()))?;
        let staging = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging).with_context(|| format!("clearing {}", staging.display()))?;
        }
        fs::create_dir(&staging).with_context(|| format!("creating {}", staging.display()))?;
        Ok(StagedDir {
            staging,
            target: target.to_path_buf(),
        })
    }

    pub fn join(&self, name: &str) -> PathBuf {
        self.staging.join(name)
    }

    /// Moves the staging directory onto the requested path.
    pub fn commit(self) -> Result<PathBuf> {
        if self.target.is_dir() {
            fs::remove_dir(&self.target).with_context(|| format!("replacing {}", self.target.display()))?;
        }
        fs::rename(&self.staging, &self.target)
            .with_context(|| format!("moving {} to {}", self.staging.display(), self.target.display()))?;
        Ok(self.target)
    }
}
