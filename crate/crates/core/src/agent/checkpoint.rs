use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::AgentConfig;
use crate::error::{Error, Result};
use crate::neuralnet::{Adam, QNetwork};
use crate::SeededRng;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Short SHA-256 digest of any serialisable configuration.
pub fn config_hash<T: Serialize>(cfg: &T) -> String {
    let json = serde_json::to_vec(cfg).expect("config serialises");
    hex::encode(&Sha256::digest(&json)[..8])
}

/// Everything needed to resume or evaluate an agent: both networks, the
/// optimiser moments, the random stream, and the step counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub cfg: AgentConfig,
    pub online: QNetwork,
    pub target: QNetwork,
    pub optimizer: Adam,
    pub rng: SeededRng,
    pub steps: usize,
    pub updates: usize,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::IncompatibleCheckpoint(format!("unsupported version {}", ck.version)));
        }
        if ck.config_hash != config_hash(&ck.cfg) {
            return Err(Error::IncompatibleCheckpoint("config hash does not match stored config".into()));
        }
        Ok(ck)
    }

    /// Rejects a checkpoint whose network shape disagrees with `cfg`.
    pub fn check_architecture(&self, cfg: &AgentConfig) -> Result<()> {
        let net = &self.online;
        let mine = (net.input_dim(), net.hidden_dim(), net.actions());
        let want = (cfg.embedding_dim, cfg.hidden_dim, cfg.k);
        if mine != want {
            return Err(Error::IncompatibleCheckpoint(format!(
                "checkpoint has (dim, hidden, k) = {mine:?}, config expects {want:?}"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::Agent;

    #[test]
    fn save_load_is_bit_exact() {
        let cfg = AgentConfig {
            embedding_dim: 4,
            hidden_dim: 5,
            k: 3,
            seed: 17,
            ..AgentConfig::default()
        };
        let agent = Agent::new(cfg.clone()).unwrap();
        let ck = agent.checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ck.json");
        ck.save(&p).unwrap();
        let back = Checkpoint::load(&p).unwrap();
        assert_eq!(back, ck);
        let bits = |c: &Checkpoint| -> Vec<u64> {
            use crate::neuralnet::Parameters;
            c.online.tensors().iter().flat_map(|(_, t)| t.data.iter().map(|v| v.to_bits())).collect()
        };
        assert_eq!(bits(&back), bits(&ck));
        back.check_architecture(&cfg).unwrap();
        let other = AgentConfig { hidden_dim: 6, ..cfg };
        assert!(back.check_architecture(&other).is_err());
    }
}
