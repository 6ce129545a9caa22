//! Output files are written beside their destination and renamed into
//! place only once a command has produced all of them.

use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

pub struct Staging {
    dir: PathBuf,
    pending: Vec<(PathBuf, PathBuf)>,
    committed: bool,
}

impl Staging {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| {
            CliError::Usage(format!(
                "cannot create output directory {}: {e}",
                dir.display()
            ))
        })?;
        Ok(Staging {
            dir: dir.to_path_buf(),
            pending: Vec::new(),
            committed: false,
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let tmp = self.dir.join(format!(".{name}.partial"));
        fs::write(&tmp, bytes)
            .map_err(|e| CliError::Compute(format!("writing {}: {e}", tmp.display())))?;
        self.pending.push((tmp, self.dir.join(name)));
        Ok(())
    }

    /// Moves every staged file into place and returns the final paths.
    pub fn commit(mut self) -> Result<Vec<PathBuf>, CliError> {
        let mut done = Vec::new();
        for (tmp, dest) in &self.pending {
            fs::rename(tmp, dest)
                .map_err(|e| CliError::Compute(format!("renaming to {}: {e}", dest.display())))?;
            done.push(dest.clone());
        }
        self.committed = true;
        Ok(done)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            for (tmp, _) in &self.pending {
                let _ = fs::remove_file(tmp);
            }
        }
    }
}
