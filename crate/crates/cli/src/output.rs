//! Outputs are staged in memory and only written once a command has fully
//! succeeded. Each file goes to a temporary sibling and is renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, relative: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((relative.into(), bytes));
    }

    pub fn add_text(&mut self, relative: impl Into<PathBuf>, text: String) {
        self.add(relative, text.into_bytes());
    }

    pub fn add_json<T: Serialize>(&mut self, relative: impl Into<PathBuf>, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(relative, bytes);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    /// Write every staged file under `dir`: all temporaries first, then all
    /// renames, so a failure while writing leaves no final-named file behind.
    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        let mut staged = Vec::with_capacity(self.files.len());
        let cleanup = |staged: &[(PathBuf, PathBuf)]| {
            for (tmp, _) in staged {
                let _ = std::fs::remove_file(tmp);
            }
        };
        for (rel, bytes) in &self.files {
            let target = dir.join(rel);
            let parent = target.parent().unwrap_or(dir).to_path_buf();
            let result = std::fs::create_dir_all(&parent).map_err(CliError::io(&parent)).and_then(|_| {
                let name = target.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                let tmp = parent.join(format!(".{name}.tmp-{}", std::process::id()));
                let mut f = std::fs::File::create(&tmp).map_err(CliError::io(&tmp))?;
                f.write_all(bytes).and_then(|_| f.sync_all()).map_err(CliError::io(&tmp))?;
                Ok(tmp)
            });
            match result {
                Ok(tmp) => staged.push((tmp, target)),
                Err(e) => {
                    cleanup(&staged);
                    return Err(e);
                }
            }
        }
        let mut written = Vec::with_capacity(staged.len());
        for (tmp, target) in &staged {
            std::fs::rename(tmp, target).map_err(CliError::io(target))?;
            written.push(target.clone());
        }
        Ok(written)
    }
}
