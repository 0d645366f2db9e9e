//! Atomic output files and the on-disk solution cache.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::Failure;

/// Trims trailing newlines and appends exactly one.
pub fn single_newline(mut text: String) -> String {
    while text.ends_with('\n') {
        text.pop();
    }
    text.push('\n');
    text
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::input(format!("{}: {e}", path.display()))
}

/// Writes through a temporary file in the same directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), Failure> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(io_failure(path, e));
    }
    Ok(())
}

pub struct Cache {
    dir: Option<PathBuf>,
}

impl Cache {
    pub fn new(dir: PathBuf, enabled: bool) -> Self {
        Self {
            dir: enabled.then_some(dir),
        }
    }

    /// Returns the cached text for `kind` under `key`, computing and storing
    /// it on a miss. Unreadable entries count as misses.
    pub fn get_or_compute<F>(&self, kind: &str, key: &str, compute: F) -> Result<String, Failure>
    where
        F: FnOnce() -> Result<String, Failure>,
    {
        let Some(dir) = &self.dir else { return compute() };
        let mut hasher = Sha256::new();
        hasher.update(env!("CARGO_PKG_VERSION").as_bytes());
        hasher.update([0]);
        hasher.update(kind.as_bytes());
        hasher.update([0]);
        hasher.update(key.as_bytes());
        let path = dir.join(format!("{kind}-{}", &hex::encode(hasher.finalize())[..16]));
        if let Ok(text) = fs::read_to_string(&path) {
            return Ok(text);
        }
        let text = compute()?;
        write_atomic(&path, &text)?;
        Ok(text)
    }
}
