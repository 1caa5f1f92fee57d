//! Results are written to a hidden sibling directory and renamed into place
//! only once the command succeeds, so a failed run never leaves a half-written
//! output directory behind.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub struct Staged {
    target: PathBuf,
    stage: PathBuf,
    replace: bool,
}

fn is_empty_dir(path: &Path) -> io::Result<bool> {
    Ok(fs::read_dir(path)?.next().is_none())
}

impl Staged {
    /// Refuses a non-empty existing `target` unless `force` is set.
    pub fn begin(target: &Path, force: bool) -> Result<Self, String> {
        let name =
            target.file_name().ok_or_else(|| format!("output path {} has no directory name", target.display()))?;
        let replace = match fs::metadata(target) {
            Ok(meta) if !meta.is_dir() => {
                return Err(format!("output path {} exists and is not a directory", target.display()))
            }
            Ok(_) => {
                let empty = is_empty_dir(target).map_err(|e| format!("{}: {e}", target.display()))?;
                if !empty && !force {
                    return Err(format!(
                        "output directory {} is not empty; pass --force to replace it",
                        target.display()
                    ));
                }
                true
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => false,
            Err(e) => return Err(format!("{}: {e}", target.display())),
        };
        let parent = target.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(parent).map_err(|e| format!("{}: {e}", parent.display()))?;
        let stage = parent.join(format!(".{}.partial", name.to_string_lossy()));
        if stage.exists() {
            // Left over from a killed run.
            fs::remove_dir_all(&stage).map_err(|e| format!("{}: {e}", stage.display()))?;
        }
        fs::create_dir(&stage).map_err(|e| format!("{}: {e}", stage.display()))?;
        Ok(Self { target: target.to_path_buf(), stage, replace })
    }

    pub fn dir(&self) -> &Path {
        &self.stage
    }

    pub fn commit(self) -> Result<PathBuf, String> {
        if self.replace {
            fs::remove_dir_all(&self.target).map_err(|e| format!("{}: {e}", self.target.display()))?;
        }
        fs::rename(&self.stage, &self.target)
            .map_err(|e| format!("moving {} to {}: {e}", self.stage.display(), self.target.display()))?;
        Ok(self.target)
    }

    pub fn abort(self) {
        if let Err(e) = fs::remove_dir_all(&self.stage) {
            tracing::warn!(path = %self.stage.display(), error = %e, "could not remove partial output");
        }
    }
}
