//! Output directory handling: atomic artifact writes and the run manifest.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Everything needed to re-run a command and check its outputs.
/// Contains no timestamps, so identical runs give identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub toolkit_version: String,
    pub subcommand: String,
    /// Arguments after the program name, without `--out-dir`.
    pub argv: Vec<String>,
    pub seed: u64,
    pub jobs: usize,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn digest(path: String, bytes: &[u8]) -> FileDigest {
    FileDigest {
        path,
        sha256: sha256_hex(bytes),
        bytes: bytes.len() as u64,
    }
}

/// Writes through a temp file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .map_err(|e| e.error)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub struct Run {
    out_dir: PathBuf,
    manifest: Manifest,
    echo: bool,
}

impl Run {
    pub fn new(out_dir: &Path, subcommand: &str, argv: Vec<String>, seed: u64, jobs: usize) -> Result<Self> {
        std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        Ok(Self {
            out_dir: out_dir.to_path_buf(),
            manifest: Manifest {
                toolkit_version: fincorpus::TOOLKIT_VERSION.to_string(),
                subcommand: subcommand.to_string(),
                argv,
                seed,
                jobs,
                inputs: Vec::new(),
                outputs: Vec::new(),
            },
            echo: true,
        })
    }

    /// Stops [`Run::write_table`] from echoing to stdout.
    pub fn quiet(mut self, quiet: bool) -> Self {
        self.echo = !quiet;
        self
    }

    /// Reads an input file and records its digest.
    pub fn read_input(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.manifest.inputs.push(digest(path.display().to_string(), &bytes));
        Ok(bytes)
    }

    pub fn read_input_string(&mut self, path: &Path) -> Result<String> {
        let bytes = self.read_input(path)?;
        String::from_utf8(bytes).with_context(|| format!("{} is not valid UTF-8", path.display()))
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let bytes = bytes.as_ref();
        write_atomic(&self.out_dir.join(name), bytes)?;
        self.manifest.outputs.push(digest(name.to_string(), bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    /// Writes a human-readable table artifact and echoes it to stdout.
    pub fn write_table(&mut self, name: &str, text: &str) -> Result<()> {
        if self.echo {
            print!("{text}");
        }
        self.write(name, text)
    }

    pub fn finish(self) -> Result<Manifest> {
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        write_atomic(&self.out_dir.join(MANIFEST_NAME), text.as_bytes())?;
        Ok(self.manifest)
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not a manifest", path.display()))
}
