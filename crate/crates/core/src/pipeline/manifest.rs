use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const RUN_MANIFEST: &str = "run_manifest.json";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Record of one stage run, stored as `run_manifest.json` in the stage
/// directory. Paths are relative: inputs to the output root, outputs to the
/// stage directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub tool_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    #[serde(default)]
    pub failures: Vec<String>,
    pub wall_time_s: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    Ok(sha256_hex(&bytes))
}

/// Hash of a serializable value's JSON form.
pub fn hash_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(value)?))
}

/// Every regular file under `dir`, as sorted `/`-separated relative paths.
pub fn list_files(dir: &Path) -> Result<Vec<String>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            let path = entry.path();
            if entry.file_type()?.is_dir() {
                walk(root, &path, out)?;
            } else {
                let rel = path.strip_prefix(root).unwrap();
                out.push(rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    if dir.is_dir() {
        walk(dir, dir, &mut out)?;
    }
    out.sort();
    Ok(out)
}

/// Hashes of the files in `dir` other than its run manifest, keyed by path
/// relative to `base`.
fn hash_tree(dir: &Path, base: &Path) -> Result<BTreeMap<String, String>> {
    let prefix = dir.strip_prefix(base).unwrap_or(dir);
    let mut map = BTreeMap::new();
    for rel in list_files(dir)? {
        if rel == RUN_MANIFEST {
            continue;
        }
        let key = if prefix.as_os_str().is_empty() {
            rel.clone()
        } else {
            format!("{}/{rel}", prefix.to_string_lossy())
        };
        map.insert(key, hash_file(&dir.join(&rel))?);
    }
    Ok(map)
}

pub fn read_run_manifest(stage_dir: &Path) -> Result<RunManifest> {
    let path = stage_dir.join(RUN_MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.clone()),
        _ => Error::Io(e),
    })?;
    Ok(serde_json::from_str(&text)?)
}

/// A stage about to run: its directory, configuration hash and inputs.
pub struct Stage {
    pub name: &'static str,
    pub root: PathBuf,
    pub dir: PathBuf,
    pub seed: u64,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
}

pub enum StageStatus {
    Cached(RunManifest),
    Ran(RunManifest),
}

impl StageStatus {
    pub fn manifest(&self) -> &RunManifest {
        match self {
            StageStatus::Cached(m) | StageStatus::Ran(m) => m,
        }
    }

    pub fn cached(&self) -> bool {
        matches!(self, StageStatus::Cached(_))
    }
}

impl Stage {
    /// `inputs` are upstream stage directory names under `root`; each must
    /// hold a completed run.
    pub fn new<C: Serialize>(name: &'static str, root: &Path, seed: u64, config: &C, inputs: &[&str]) -> Result<Self> {
        let mut hashes = BTreeMap::new();
        for up in inputs {
            let dir = root.join(up);
            read_run_manifest(&dir)?;
            hashes.extend(hash_tree(&dir, root)?);
        }
        Ok(Self {
            name,
            root: root.to_path_buf(),
            dir: root.join(name),
            seed,
            config_hash: hash_json(&(name, seed, TOOL_VERSION, config))?,
            inputs: hashes,
        })
    }

    /// The existing manifest when configuration, inputs and every recorded
    /// output still match.
    pub fn cached(&self) -> Option<RunManifest> {
        let m = read_run_manifest(&self.dir).ok()?;
        if m.config_hash != self.config_hash || m.inputs != self.inputs {
            return None;
        }
        let now = hash_tree(&self.dir, &self.dir).ok()?;
        (now == m.outputs).then_some(m)
    }

    /// Runs `body` unless cached. Without `keep`, the stage directory is
    /// emptied first. `body` returns a list of non-fatal failures.
    pub fn run(self, keep: bool, body: impl FnOnce(&Path) -> Result<Vec<String>>) -> Result<StageStatus> {
        if let Some(m) = self.cached() {
            eprintln!("[{}] up to date", self.name);
            return Ok(StageStatus::Cached(m));
        }
        if !keep && self.dir.exists() {
            fs::remove_dir_all(&self.dir)?;
        }
        fs::create_dir_all(&self.dir)?;
        let _ = fs::remove_file(self.dir.join(RUN_MANIFEST));
        eprintln!("[{}] running", self.name);
        let t0 = Instant::now();
        let failures = body(&self.dir)?;
        let manifest = RunManifest {
            stage: self.name.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            seed: self.seed,
            config_hash: self.config_hash,
            inputs: self.inputs,
            outputs: hash_tree(&self.dir, &self.dir)?,
            failures,
            wall_time_s: t0.elapsed().as_secs_f64(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.dir.join(RUN_MANIFEST), text)?;
        eprintln!("[{}] done in {:.1} s", self.name, manifest.wall_time_s);
        Ok(StageStatus::Ran(manifest))
    }
}
