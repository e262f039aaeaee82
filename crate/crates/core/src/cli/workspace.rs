//! Output directory handling: atomic writes confined to the output root,
//! rollback of a failed command's outputs, and content-hash stamps that let
//! an unchanged rerun skip its work.

use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;

const STAMP_DIR: &str = ".stamps";

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Accumulates everything a command's outputs depend on.
pub struct InputHash {
    hasher: Sha256,
}

impl InputHash {
    pub fn new(command: &str) -> Self {
        let mut h = InputHash { hasher: Sha256::new() };
        h.fact("command", command);
        h
    }

    /// Adds a labelled value. Lengths are included so fields cannot run together.
    pub fn fact(&mut self, label: &str, value: &str) {
        for part in [label.as_bytes(), value.as_bytes()] {
            self.hasher.update((part.len() as u64).to_le_bytes());
            self.hasher.update(part);
        }
    }

    /// Adds a required input file's contents and returns them.
    pub fn file(&mut self, path: &Path) -> Result<String, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read input {}: {e}", path.display())))?;
        self.fact(&path.display().to_string(), &text);
        Ok(text)
    }

    fn finish(self) -> String {
        hex::encode(self.hasher.finalize())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Stamp {
    inputs: String,
    outputs: BTreeMap<String, String>,
    summary: serde_json::Value,
}

/// One command's view of the output directory. Files written through it are
/// removed again if the command does not reach [`Workspace::commit`].
pub struct Workspace {
    root: PathBuf,
    tracked: Vec<String>,
    written: Vec<PathBuf>,
    committed: bool,
}

/// Rejects absolute paths and `..` so nothing lands outside the root.
fn check_relative(rel: &str) -> Result<(), CliError> {
    let p = Path::new(rel);
    if p.components().all(|c| matches!(c, Component::Normal(_))) && !rel.is_empty() {
        Ok(())
    } else {
        Err(CliError::Config(format!("output path {rel:?} escapes the output directory")))
    }
}

impl Workspace {
    pub fn open(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)
            .map_err(|e| CliError::Input(format!("cannot create output directory {}: {e}", root.display())))?;
        Ok(Workspace { root: root.to_path_buf(), tracked: Vec::new(), written: Vec::new(), committed: false })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn write_file(&mut self, rel: &str, contents: &[u8]) -> Result<(), CliError> {
        check_relative(rel)?;
        let dest = self.root.join(rel);
        let io = |e: std::io::Error| CliError::Input(format!("cannot write {}: {e}", dest.display()));
        if let Some(parent) = dest.parent() {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let name = dest.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let tmp = dest.with_file_name(format!(".{name}.tmp"));
        std::fs::write(&tmp, contents).map_err(io)?;
        self.written.push(dest.clone());
        if let Err(e) = std::fs::rename(&tmp, &dest) {
            let _ = std::fs::remove_file(&tmp);
            return Err(io(e));
        }
        Ok(())
    }

    /// Writes an output whose hash goes into this command's stamp.
    pub fn write(&mut self, rel: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        self.write_file(rel, contents.as_ref())?;
        self.tracked.push(rel.to_string());
        Ok(())
    }

    /// Writes a file shared between commands (the results ledger), which is
    /// not part of any stamp.
    pub fn write_shared(&mut self, rel: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        self.write_file(rel, contents.as_ref())
    }

    fn stamp_path(&self, name: &str) -> PathBuf {
        self.root.join(STAMP_DIR).join(format!("{name}.json"))
    }

    /// The stored summary when `name` already ran on exactly these inputs and
    /// its outputs are untouched.
    pub fn fresh(&self, name: &str, inputs: &InputHash) -> Option<serde_json::Value> {
        let text = std::fs::read_to_string(self.stamp_path(name)).ok()?;
        let stamp: Stamp = serde_json::from_str(&text).ok()?;
        let current = InputHash { hasher: inputs.hasher.clone() }.finish();
        if stamp.inputs != current {
            return None;
        }
        for (rel, hash) in &stamp.outputs {
            let bytes = std::fs::read(self.root.join(rel)).ok()?;
            if &sha256_hex(&bytes) != hash {
                return None;
            }
        }
        Some(stamp.summary)
    }

    /// Records the stamp and keeps every file written so far.
    pub fn commit(mut self, name: &str, inputs: InputHash, summary: &serde_json::Value) -> Result<(), CliError> {
        let mut outputs = BTreeMap::new();
        for rel in &self.tracked {
            let bytes = std::fs::read(self.root.join(rel))
                .map_err(|e| CliError::Invariant(format!("output {rel} vanished: {e}")))?;
            outputs.insert(rel.clone(), sha256_hex(&bytes));
        }
        let stamp = Stamp { inputs: inputs.finish(), outputs, summary: summary.clone() };
        let text = serde_json::to_string_pretty(&stamp).map_err(|e| CliError::Invariant(e.to_string()))?;
        self.write_file(&format!("{STAMP_DIR}/{name}.json"), text.as_bytes())?;
        self.committed = true;
        Ok(())
    }
}

impl Drop for Workspace {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = std::fs::remove_file(p);
            }
        }
    }
}
