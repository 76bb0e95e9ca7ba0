//! Provenance stamps embedded in every written artifact.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the canonical JSON form of the effective configuration.
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn of<T: Serialize>(config: &T, seed: u64) -> Self {
        let canonical = serde_json::to_vec(config).expect("configuration serializes");
        Self {
            config_hash: sha256_hex(&canonical),
            seed,
        }
    }

    /// Leading comment line for CSV outputs.
    pub fn csv_comment(&self) -> String {
        format!("# config_hash={} seed={}\n", self.config_hash, self.seed)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
