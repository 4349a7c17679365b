use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RunConfig;
use crate::error::{Error, Result};
use crate::jsonfile;

pub const MANIFEST: &str = "manifest.json";

/// An upstream artifact: where it was read from and what it hashed to.
///
/// `path` is relative to the directory holding the manifest whenever the two
/// share an ancestor, so a whole run directory can be moved or copied.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRef {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub config: RunConfig,
    pub inputs: BTreeMap<String, InputRef>,
    /// File name (relative to the manifest) to SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub summary: serde_json::Value,
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Hash of a stage directory: SHA-256 over `name NUL hash LF` for every
/// regular file in name order, ignoring the manifest and the config copy.
pub fn dir_hash(dir: &Path) -> Result<String> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let is_file = entry
            .file_type()
            .map_err(|e| Error::io(entry.path(), e))?
            .is_file();
        let name = entry.file_name().to_string_lossy().into_owned();
        if is_file && name != MANIFEST && name != super::CONFIG {
            names.push(name);
        }
    }
    names.sort();
    let mut h = Sha256::new();
    for name in names {
        h.update(name.as_bytes());
        h.update([0]);
        h.update(file_hash(&dir.join(&name))?.as_bytes());
        h.update([b'\n']);
    }
    Ok(hex::encode(h.finalize()))
}

pub(crate) fn artifact_hash(path: &Path) -> Result<String> {
    if path.is_dir() {
        dir_hash(path)
    } else {
        file_hash(path)
    }
}

impl Manifest {
    pub(crate) fn new(stage: &str, config: &RunConfig) -> Self {
        Manifest {
            stage: stage.to_string(),
            config: config.clone(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            summary: serde_json::Value::Null,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        jsonfile::read(path)
    }

    /// Hashes `path` and records it under `name`, relative to `base` (the
    /// directory the manifest will live in).
    pub(crate) fn add_input(&mut self, name: &str, path: &Path, base: &Path) -> Result<()> {
        let sha256 = artifact_hash(path)?;
        self.inputs.insert(
            name.to_string(),
            InputRef {
                path: relative_to(path, base)?,
                sha256,
            },
        );
        Ok(())
    }

    pub(crate) fn add_output(&mut self, dir: &Path, name: &str) -> Result<()> {
        self.outputs
            .insert(name.to_string(), file_hash(&dir.join(name))?);
        Ok(())
    }

    /// Resolves input `name` against the manifest directory and checks that
    /// it still hashes to the recorded value.
    pub fn checked_input(&self, name: &str, base: &Path) -> Result<PathBuf> {
        let input = self.inputs.get(name).ok_or_else(|| {
            Error::Corrupt(format!("{} manifest has no input {name:?}", self.stage))
        })?;
        let path = base.join(&input.path);
        check_hash(name, &path, &input.sha256, artifact_hash(&path))?;
        Ok(path)
    }

    /// Checks that output `name` in `dir` still hashes to the recorded value.
    pub fn checked_output(&self, name: &str, dir: &Path) -> Result<PathBuf> {
        let expected = self.outputs.get(name).ok_or_else(|| {
            Error::Corrupt(format!("{} manifest has no output {name:?}", self.stage))
        })?;
        let path = dir.join(name);
        check_hash(name, &path, expected, file_hash(&path))?;
        Ok(path)
    }
}

fn check_hash(name: &str, path: &Path, expected: &str, found: Result<String>) -> Result<()> {
    let found = match found {
        Ok(h) => h,
        Err(Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::NotFound => {
            "missing".to_string()
        }
        Err(e) => return Err(e),
    };
    if found == expected {
        Ok(())
    } else {
        Err(Error::HashMismatch {
            artifact: format!("{name} ({})", path.display()),
            expected: expected.to_string(),
            found,
        })
    }
}

/// `path` expressed relative to `base`, falling back to the absolute path
/// when they share no ancestor.
fn relative_to(path: &Path, base: &Path) -> Result<PathBuf> {
    let path = std::fs::canonicalize(path).map_err(|e| Error::io(path, e))?;
    let base = std::fs::canonicalize(base).map_err(|e| Error::io(base, e))?;
    let p: Vec<Component> = path.components().collect();
    let b: Vec<Component> = base.components().collect();
    let common = p.iter().zip(&b).take_while(|(x, y)| x == y).count();
    if common <= 1 {
        return Ok(path);
    }
    let mut rel = PathBuf::new();
    for _ in common..b.len() {
        rel.push("..");
    }
    for c in &p[common..] {
        rel.push(c);
    }
    Ok(rel)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths() {
        let tmp = tempfile::tempdir().unwrap();
        let a = tmp.path().join("run/models");
        let b = tmp.path().join("run/search");
        std::fs::create_dir_all(&a).unwrap();
        std::fs::create_dir_all(&b).unwrap();
        assert_eq!(relative_to(&a, &b).unwrap(), PathBuf::from("../models"));
        assert_eq!(relative_to(&b, &b).unwrap(), PathBuf::new());
    }

    #[test]
    fn dir_hash_ignores_manifest_and_tracks_content() {
        let tmp = tempfile::tempdir().unwrap();
        let d = tmp.path();
        std::fs::write(d.join("a"), b"1").unwrap();
        let h0 = dir_hash(d).unwrap();
        std::fs::write(d.join(MANIFEST), b"{}").unwrap();
        assert_eq!(dir_hash(d).unwrap(), h0);
        std::fs::write(d.join("a"), b"2").unwrap();
        assert_ne!(dir_hash(d).unwrap(), h0);
    }

    #[test]
    fn mismatch_names_expected_hash() {
        let tmp = tempfile::tempdir().unwrap();
        let d = tmp.path();
        std::fs::write(d.join("x"), b"abc").unwrap();
        let mut m = Manifest::new("test", &RunConfig::default());
        m.add_input("x", &d.join("x"), d).unwrap();
        let expected = m.inputs["x"].sha256.clone();
        assert_eq!(
            expected,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        m.checked_input("x", d).unwrap();
        std::fs::write(d.join("x"), b"abd").unwrap();
        let err = m.checked_input("x", d).unwrap_err().to_string();
        assert!(err.contains(&expected), "{err}");
        std::fs::remove_file(d.join("x")).unwrap();
        let err = m.checked_input("x", d).unwrap_err().to_string();
        assert!(err.contains("missing"), "{err}");
    }
}
