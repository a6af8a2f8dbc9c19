//! Model checkpoints.
//!
//! A checkpoint is one JSON object:
//!
//! ```text
//! {"format":"hcl-checkpoint","version":1,"seed":0,"labels":[...],
//!  "block_dim":256,"params":{"d":513,"h":32,"r":6,"w1":[...],"b1":[...],"w2":[...],"b2":[...]}}
//! ```
//!
//! `w1` is `h×d` and `w2` is `r×h`, both row-major. Floats are written in
//! shortest round-trip form, so loading restores the parameters bit for bit.

use std::path::Path;

use anyhow::{bail, Context};
use hcl_core::model::ModelParams;
use serde::{Deserialize, Serialize};

pub const FORMAT: &str = "hcl-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub labels: Vec<String>,
    /// Size of each of the two feature blocks; `d = 2·block_dim + 1`.
    pub block_dim: usize,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(params: ModelParams, seed: u64, labels: Vec<String>) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            seed,
            labels,
            block_dim: params.d.saturating_sub(1) / 2,
            params,
        }
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let ck: Checkpoint =
            serde_json::from_str(&text).with_context(|| format!("parsing checkpoint {}", path.display()))?;
        if ck.format != FORMAT {
            bail!("{}: not a checkpoint (format `{}`)", path.display(), ck.format);
        }
        if ck.version != VERSION {
            bail!("{}: unsupported checkpoint version {}", path.display(), ck.version);
        }
        ck.params.check_shapes()?;
        if ck.params.r != ck.labels.len() || ck.params.d != 2 * ck.block_dim + 1 {
            bail!("{}: checkpoint header disagrees with parameter shapes", path.display());
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let mut p = ModelParams::zeros(9, 4, 3);
        for (i, v) in p.values_mut().enumerate() {
            *v = (i as f64 * 0.7).sin() / 3.0;
        }
        let ck = Checkpoint::new(p, 3, vec!["a".into(), "b".into(), "c".into()]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }

    #[test]
    fn rejects_wrong_version_and_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        let mut ck = Checkpoint::new(ModelParams::zeros(5, 2, 2), 0, vec!["a".into(), "b".into()]);
        ck.version = 9;
        ck.save(&path).unwrap();
        assert!(Checkpoint::load(&path).is_err());
        ck.version = VERSION;
        ck.labels.pop();
        ck.save(&path).unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
