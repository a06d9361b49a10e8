use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "feml-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned JSON dump of a model. Floats are written in shortest
/// round-trip form and parsed exactly, so `load(save(p)) == p` bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub params: ModelParams,
}

pub fn config_hash(config: &ModelConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("config serialises");
    hex::encode(Sha256::digest(&bytes))
}

impl Checkpoint {
    pub fn new(params: ModelParams, seed: u64) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            seed,
            config_hash: config_hash(&params.config),
            params,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(self)?)
    }

    pub fn from_bytes(raw: &[u8]) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_slice(raw)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unexpected format `{}`", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ck.version)));
        }
        if ck.config_hash != config_hash(&ck.params.config) {
            return Err(Error::Checkpoint("config hash does not match the stored config".into()));
        }
        Ok(ck)
    }
}

pub fn save_checkpoint(params: &ModelParams, seed: u64, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, Checkpoint::new(params.clone(), seed).to_bytes()?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}
