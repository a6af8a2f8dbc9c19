//! Run directories and their manifests.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Hex SHA-256 of a file's bytes.
pub fn digest_file(path: &Path) -> anyhow::Result<InputDigest> {
    let mut file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: hex::encode(hasher.finalize()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub subcommand: String,
    /// Fully resolved configuration of the run.
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub tool_version: String,
    pub seeds: Vec<u64>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(subcommand: &str, config: serde_json::Value, inputs: &[&Path], seeds: Vec<u64>) -> anyhow::Result<Self> {
        Ok(Self {
            subcommand: subcommand.into(),
            config,
            inputs: inputs.iter().map(|p| digest_file(p)).collect::<anyhow::Result<_>>()?,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seeds,
            started_unix: unix_now(),
            finished_unix: 0,
        })
    }

    /// Recomputes every input digest and reports the first mismatch.
    pub fn verify_inputs(&self) -> anyhow::Result<()> {
        for input in &self.inputs {
            let now = digest_file(Path::new(&input.path))?;
            if now.sha256 != input.sha256 {
                bail!("{} changed since the run", input.path);
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    /// Creates a fresh run directory. An existing path is only replaced with
    /// `force`, and only if it is empty or itself a run directory.
    pub fn create(path: &Path, force: bool) -> anyhow::Result<Self> {
        if path.exists() {
            if !force {
                bail!("{} already exists; pass --force to replace it", path.display());
            }
            if !path.is_dir() {
                bail!("{} exists and is not a directory", path.display());
            }
            let empty = fs::read_dir(path)?.next().is_none();
            if !empty && !path.join(MANIFEST).exists() {
                bail!("refusing to replace {}: not a run directory", path.display());
            }
            fs::remove_dir_all(path).with_context(|| format!("removing {}", path.display()))?;
        }
        fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self { path: path.to_path_buf() })
    }

    pub fn open(path: &Path) -> anyhow::Result<Self> {
        if !path.join(MANIFEST).is_file() {
            bail!("{} is not a run directory (no {MANIFEST})", path.display());
        }
        Ok(Self { path: path.to_path_buf() })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write_text(&self, name: &str, text: &str) -> anyhow::Result<()> {
        let p = self.file(name);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> anyhow::Result<()> {
        self.write_text(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    pub fn read_json<T: serde::de::DeserializeOwned>(&self, name: &str) -> anyhow::Result<T> {
        let p = self.file(name);
        let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
    }

    /// Stamps the finish time and writes the manifest. Call last.
    pub fn finish(&self, mut manifest: RunManifest) -> anyhow::Result<RunManifest> {
        manifest.finished_unix = unix_now();
        self.write_json(MANIFEST, &manifest)?;
        Ok(manifest)
    }

    pub fn manifest(&self) -> anyhow::Result<RunManifest> {
        self.read_json(MANIFEST)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_known_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc");
        fs::write(&p, "abc").unwrap();
        assert_eq!(
            digest_file(&p).unwrap().sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn refuses_to_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let run = dir.path().join("run");
        let r = RunDir::create(&run, false).unwrap();
        r.finish(RunManifest::new("train", serde_json::Value::Null, &[], vec![0]).unwrap())
            .unwrap();
        assert!(RunDir::create(&run, false).is_err());
        assert!(RunDir::create(&run, true).is_ok());
        assert!(!run.join(MANIFEST).exists());

        let other = dir.path().join("other");
        fs::create_dir(&other).unwrap();
        fs::write(other.join("notes.txt"), "keep").unwrap();
        assert!(RunDir::create(&other, true).is_err());
        assert!(other.join("notes.txt").exists());
    }

    #[test]
    fn manifest_detects_changed_input() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        fs::write(&input, "one").unwrap();
        let m = RunManifest::new("stats", serde_json::Value::Null, &[&input], vec![]).unwrap();
        m.verify_inputs().unwrap();
        fs::write(&input, "two").unwrap();
        assert!(m.verify_inputs().is_err());
    }
}
