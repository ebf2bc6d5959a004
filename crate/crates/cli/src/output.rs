//! Output directories and the run manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use egan_core::Error;
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.txt";

/// A fresh directory that only this run writes into.
pub struct OutDir {
    root: PathBuf,
}

fn io(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

impl OutDir {
    /// Creates `root`, refusing one that already holds files.
    pub fn create(root: &Path) -> Result<Self, Error> {
        if root.exists() {
            let mut entries = fs::read_dir(root).map_err(|e| io(root, e))?;
            if entries.next().is_some() {
                return Err(Error::Usage(format!(
                    "output directory {} is not empty; choose a new --out",
                    root.display()
                )));
            }
        }
        fs::create_dir_all(root).map_err(|e| io(root, e))?;
        Ok(OutDir { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf, Error> {
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        }
        fs::write(&path, contents).map_err(|e| io(&path, e))?;
        Ok(path)
    }

    pub fn create_file(&self, name: &str) -> Result<BufWriter<File>, Error> {
        let path = self.path(name);
        File::create(&path).map(BufWriter::new).map_err(|e| io(&path, e))
    }

    /// Every file below the root except the manifest, sorted, with its SHA-256.
    pub fn checksums(&self) -> Result<Vec<(String, String)>, Error> {
        let mut out = Vec::new();
        let mut pending = vec![self.root.clone()];
        while let Some(dir) = pending.pop() {
            for entry in fs::read_dir(&dir).map_err(|e| io(&dir, e))? {
                let path = entry.map_err(|e| io(&dir, e))?.path();
                if path.is_dir() {
                    pending.push(path);
                    continue;
                }
                let rel = path.strip_prefix(&self.root).expect("below root");
                let rel = rel.to_string_lossy().replace('\\', "/");
                if rel == MANIFEST {
                    continue;
                }
                let bytes = fs::read(&path).map_err(|e| io(&path, e))?;
                out.push((rel, format!("{:x}", Sha256::digest(&bytes))));
            }
        }
        out.sort();
        Ok(out)
    }
}

/// What a manifest records besides the artifact checksums.
pub struct RunRecord<'a> {
    pub command: &'a str,
    pub arguments: &'a [String],
    pub seed: u64,
    pub status: &'a str,
    pub config: &'a str,
}

/// Writes `manifest.txt`: the invocation, the resolved configuration and a
/// checksum per artifact.
pub fn write_manifest(out: &OutDir, record: &RunRecord) -> Result<PathBuf, Error> {
    let mut text = String::new();
    text.push_str("egan-manifest 1\n");
    text.push_str(&format!("version {}\n", env!("CARGO_PKG_VERSION")));
    text.push_str(&format!("command {}\n", record.command));
    text.push_str(&format!("arguments {}\n", record.arguments.join(" ")));
    text.push_str(&format!("seed {}\n", record.seed));
    text.push_str(&format!("status {}\n", record.status));
    text.push_str("config\n");
    for line in record.config.lines() {
        text.push_str(&format!("    {line}\n"));
    }
    text.push_str("artifacts\n");
    for (name, sum) in out.checksums()? {
        text.push_str(&format!("    {sum}  {name}\n"));
    }
    let path = out.path(MANIFEST);
    let mut f = File::create(&path).map_err(|e| io(&path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| io(&path, e))?;
    Ok(path)
}
