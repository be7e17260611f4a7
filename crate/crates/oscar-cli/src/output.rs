//! Output-file plumbing: provenance headers and atomic writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Run identity stamped at the top of every output file.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub command: &'static str,
    pub config_hash: u64,
}

impl Provenance {
    pub fn header(&self) -> String {
        format!(
            "# oscar {}\n# command: {}\n# config: fnv1a:{:016x}\n",
            env!("CARGO_PKG_VERSION"),
            self.command,
            self.config_hash
        )
    }
}

/// Write a file atomically: the content lands under a temporary name in the
/// same directory and is renamed into place once complete.
pub fn write_atomic(path: &Path, content: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let tmp = tmp_name(path);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(content)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn tmp_name(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Compose a provenance-stamped file body from a CSV writer closure.
pub fn stamped<F>(prov: &Provenance, body: F) -> std::io::Result<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut buf = prov.header().into_bytes();
    body(&mut buf)?;
    Ok(buf)
}
