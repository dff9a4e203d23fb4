use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::UserError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one command run, stored in its output directory. `args` holds
/// every resolved option so the run can be repeated from the manifest alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: serde_json::Value,
    pub config_hash: String,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Content hash over the outputs, in the style of a git tree id.
    pub revision: String,
    pub tool_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn config_hash(command: &str, args: &serde_json::Value) -> String {
    let text = format!("{command}\n{args}");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// An output directory claimed for one run.
pub struct RunDir {
    pub dir: PathBuf,
    command: String,
    args: serde_json::Value,
    inputs: Vec<PathBuf>,
    started: u64,
}

impl RunDir {
    /// Claims `dir`. A directory that already holds a manifest is refused
    /// unless `overwrite` is set, in which case it is emptied first. A
    /// non-empty directory without a manifest is never touched.
    pub fn claim(
        dir: &Path,
        command: &str,
        args: serde_json::Value,
        inputs: Vec<PathBuf>,
        overwrite: bool,
    ) -> anyhow::Result<RunDir> {
        let manifest = dir.join(MANIFEST_FILE);
        if manifest.exists() {
            if !overwrite {
                let previous = read_manifest(dir)
                    .map(|m| if m.config_hash == config_hash(command, &args) { " with identical inputs" } else { "" })
                    .unwrap_or("");
                return Err(UserError::new(format!(
                    "{} already holds a {command} run{previous}; pass --overwrite to replace it",
                    dir.display()
                ))
                .into());
            }
            fs::remove_dir_all(dir)?;
        } else if dir.read_dir().is_ok_and(|mut d| d.next().is_some()) {
            return Err(UserError::new(format!(
                "{} is not empty and has no run manifest; refusing to write into it",
                dir.display()
            ))
            .into());
        }
        fs::create_dir_all(dir)?;
        Ok(RunDir { dir: dir.to_path_buf(), command: command.into(), args, inputs, started: now() })
    }

    /// Writes the manifest listing every file below the directory.
    pub fn finish(self) -> anyhow::Result<RunManifest> {
        let mut outputs = Vec::new();
        collect_files(&self.dir, &self.dir, &mut outputs)?;
        outputs.sort();
        let mut tree = Sha256::new();
        for rel in &outputs {
            let bytes = fs::read(self.dir.join(rel))?;
            tree.update(rel.to_string_lossy().as_bytes());
            tree.update([0]);
            tree.update(Sha256::digest(&bytes));
        }
        let manifest = RunManifest {
            config_hash: config_hash(&self.command, &self.args),
            command: self.command,
            args: self.args,
            inputs: self.inputs,
            outputs,
            revision: hex::encode(tree.finalize())[..12].to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: self.started,
            finished_unix: now(),
        };
        fs::write(self.dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if path.file_name().is_some_and(|n| n != MANIFEST_FILE) {
            out.push(path.strip_prefix(root).expect("below root").to_path_buf());
        }
    }
    Ok(())
}

pub fn read_manifest(dir: &Path) -> anyhow::Result<RunManifest> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    Ok(serde_json::from_str(&text)?)
}
