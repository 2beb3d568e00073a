// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_VERSION: u32 = 1;

/// Seed for one stage: the first eight bytes (little-endian) of
/// `sha256(global_seed as u64 LE || stage name)`.
pub fn stage_seed(global: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update(stage.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> std::io::Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Digest of every file under `dir`, keyed by `/`-separated relative path.
pub fn tree_digests(dir: &Path) -> std::io::Result<BTreeMap<String, String>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> std::io::Result<()> {
        for entry in std::fs::read_dir(dir)? {
            let p = entry?.path();
            if p.is_dir() {
                walk(root, &p, out)?;
            } else {
                let rel = p.strip_prefix(root).expect("under root");
                let key = rel
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/");
                out.insert(key, file_digest(&p)?);
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageRecord {
    pub name: String,
    pub seed: u64,
    /// Digest of the stage's parameters.
    pub params_sha256: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

/// Everything needed to check or repeat a run. Holds no timings, so two runs
/// of one configuration produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub version: u32,
    pub tool_version: String,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub name: String,
    /// `ran` or `reused`.
    pub status: String,
    pub seconds: f64,
}

/// Wall-clock companion to the manifest; varies between runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub stages: Vec<StageTiming>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub train_epoch_seconds: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_seeds_are_independent_of_other_stages() {
        let a = stage_seed(7, "train");
        assert_eq!(a, stage_seed(7, "train"));
        assert_ne!(a, stage_seed(7, "generate"));
        assert_ne!(a, stage_seed(8, "train"));
        let mut h = Sha256::new();
        h.update(7u64.to_le_bytes());
        h.update(b"train");
        assert_eq!(a.to_le_bytes().as_slice(), &h.finalize()[..8]);
    }

    #[test]
    fn tree_digest_keys_are_relative() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("sub")).unwrap();
        std::fs::write(dir.path().join("a.txt"), b"abc").unwrap();
        std::fs::write(dir.path().join("sub/b.txt"), b"").unwrap();
        let d = tree_digests(dir.path()).unwrap();
        assert_eq!(d.keys().collect::<Vec<_>>(), vec!["a.txt", "sub/b.txt"]);
        assert_eq!(
            d["a.txt"],
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(
            d["sub/b.txt"],
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
