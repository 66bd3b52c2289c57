use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::Failure;

/// Record of one command run, written next to its primary output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub started_at: String,
    pub finished_at: String,
    /// sha256 of every input and output file.
    pub checksums: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

pub fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// `<primary>.manifest.json`.
pub fn manifest_path(primary: &Path) -> PathBuf {
    let mut name = primary.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    primary.with_file_name(name)
}

impl RunManifest {
    pub fn write(
        command: &str,
        config: Value,
        seed: Option<u64>,
        inputs: &[PathBuf],
        outputs: &[PathBuf],
        started: DateTime<Utc>,
    ) -> Result<PathBuf, Failure> {
        let mut checksums = BTreeMap::new();
        for p in inputs.iter().chain(outputs) {
            checksums.insert(p.display().to_string(), sha256_file(p)?);
        }
        let manifest = RunManifest {
            command: command.to_string(),
            config,
            seed,
            inputs: inputs.to_vec(),
            outputs: outputs.to_vec(),
            started_at: timestamp(started),
            finished_at: timestamp(Utc::now()),
            checksums,
        };
        let primary = outputs.first().ok_or_else(|| Failure::Data("run produced no outputs".into()))?;
        let path = manifest_path(primary);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_sits_next_to_primary() {
        assert_eq!(manifest_path(Path::new("out/m.ckpt")), Path::new("out/m.ckpt.manifest.json"));
    }

    #[test]
    fn sha_of_known_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc");
        fs::write(&p, "abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
