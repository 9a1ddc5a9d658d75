//! Output directory bookkeeping: every artifact a command writes is
//! checksummed into `manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use superdrift::io::write_vector_field;
use superdrift::{NoiseSeed, VectorField};

use crate::failure::Failure;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the run directory.
    pub path: String,
    pub sha256: String,
    /// Same bytes on every rerun of the same config.
    pub deterministic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the normalized config, after command-line overrides.
    pub config_hash: String,
    pub tool_version: String,
    pub seeds: BTreeMap<String, NoiseSeed>,
    pub stages: Vec<Stage>,
    pub artifacts: Vec<Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Core(superdrift::Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// A run directory being filled by one command.
pub struct Run {
    pub dir: PathBuf,
    command: String,
    config_hash: String,
    seeds: BTreeMap<String, NoiseSeed>,
    stages: Vec<Stage>,
    artifacts: Vec<Artifact>,
}

impl Run {
    pub fn create(dir: &Path, command: &str, config_text: &str) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        Ok(Run {
            dir: dir.to_path_buf(),
            command: command.into(),
            config_hash: sha256_hex(config_text.as_bytes()),
            seeds: BTreeMap::new(),
            stages: Vec::new(),
            artifacts: Vec::new(),
        })
    }

    pub fn seed(&mut self, name: &str, seed: NoiseSeed) -> NoiseSeed {
        self.seeds.insert(name.into(), seed);
        seed
    }

    /// Runs `f` and records its wall-clock time.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T, Failure>) -> Result<T, Failure> {
        let start = Instant::now();
        let out = f();
        self.stages.push(Stage {
            name: name.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    fn register(&mut self, path: &Path, deterministic: bool) -> Result<(), Failure> {
        let rel = path.strip_prefix(&self.dir).unwrap_or(path);
        self.artifacts.push(Artifact {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256: sha256_file(path)?,
            deterministic,
        });
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str, deterministic: bool) -> Result<PathBuf, Failure> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| io_failure(&path, e))?;
        self.register(&path, deterministic)?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, Failure> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Config(e.to_string()))?;
        self.write_text(name, &(text + "\n"), true)
    }

    pub fn write_field(&mut self, name: &str, v: &VectorField, label: &str) -> Result<(), Failure> {
        for p in write_vector_field(&self.dir.join(name), v, label)? {
            self.register(&p, true)?;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<RunManifest, Failure> {
        let manifest = RunManifest {
            command: self.command,
            config_hash: self.config_hash,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seeds: self.seeds,
            stages: self.stages,
            artifacts: self.artifacts,
        };
        let path = self.dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Config(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| io_failure(&path, e))?;
        Ok(manifest)
    }
}

/// Reads a manifest and confirms every listed artifact still matches its
/// checksum.
pub fn load_verified(dir: &Path) -> Result<RunManifest, Failure> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| io_failure(&path, e))?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .map_err(|e| Failure::Core(superdrift::Error::Format(format!("corrupt manifest {}: {e}", path.display()))))?;
    for a in &manifest.artifacts {
        let file = dir.join(&a.path);
        let actual = sha256_file(&file).map_err(|_| {
            Failure::Core(superdrift::Error::Format(format!("checksum error: {} is missing", file.display())))
        })?;
        if actual != a.sha256 {
            return Err(Failure::Core(superdrift::Error::Format(format!(
                "checksum error: {} does not match its manifest entry",
                file.display()
            ))));
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = Run::create(dir.path(), "test", "x = 1").unwrap();
        run.write_text("a.txt", "hello", true).unwrap();
        run.finish().unwrap();
        let m = load_verified(dir.path()).unwrap();
        assert_eq!(m.artifacts.len(), 1);
        fs::write(dir.path().join("a.txt"), "hellO").unwrap();
        let err = load_verified(dir.path()).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
    }
}
