use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

pub const MANIFEST_NAME: &str = "manifest.json";

/// Record of one command invocation, written before the run starts and
/// rewritten with timings and output hashes when it ends.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub out_dir: String,
    pub master_seed: Option<u64>,
    pub version: &'static str,
    pub started_unix: u64,
    pub wall_clock_secs: Option<f64>,
    /// SHA-256 of the config file bytes.
    pub config_hash: Option<String>,
    pub status: String,
    /// SHA-256 of every output file, keyed by name.
    pub outputs: BTreeMap<String, String>,
    /// SHA-256 over the sorted (name, hash) pairs.
    pub result_hash: Option<String>,
}

impl RunManifest {
    pub fn start(command: &str, config: Option<&Path>, out: &Path, seed: Option<u64>, config_hash: Option<String>) -> Self {
        RunManifest {
            command: command.to_string(),
            config_path: config.map(|p| p.display().to_string()),
            out_dir: out.display().to_string(),
            master_seed: seed,
            version: env!("CARGO_PKG_VERSION"),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            wall_clock_secs: None,
            config_hash,
            status: "running".into(),
            outputs: BTreeMap::new(),
            result_hash: None,
        }
    }

    pub fn finish(&mut self, secs: f64, status: &str, dir: &Path) -> std::io::Result<()> {
        self.wall_clock_secs = Some(secs);
        self.status = status.to_string();
        self.outputs.clear();
        for entry in std::fs::read_dir(dir)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name == MANIFEST_NAME || !entry.file_type()?.is_file() {
                continue;
            }
            let bytes = std::fs::read(entry.path())?;
            self.outputs.insert(name, hex::encode(Sha256::digest(&bytes)));
        }
        let mut h = Sha256::new();
        for (name, digest) in &self.outputs {
            h.update(name.as_bytes());
            h.update([0u8]);
            h.update(digest.as_bytes());
            h.update(*b"\n");
        }
        self.result_hash = Some(hex::encode(h.finalize()));
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(dir.join(MANIFEST_NAME), text)
    }
}
