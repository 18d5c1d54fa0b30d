use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::environment::Ablation;
use crate::error::{Error, Result};

use super::normalizer::RunningNormalizer;
use super::update::Agent;

pub const CHECKPOINT_VERSION: u32 = 1;

/// JSON checkpoint: every parameter tensor, both Adam states and the
/// observation normaliser. Floats are written in shortest round-trip form
/// and parsed exactly, so save/load is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub agent: Agent,
    pub normalizer: RunningNormalizer,
    pub ablation: Ablation,
    pub total_steps: u64,
    pub updates: u64,
}

#[derive(Deserialize)]
struct Header {
    version: u32,
}

impl Checkpoint {
    pub fn new(agent: Agent, normalizer: RunningNormalizer, ablation: Ablation, total_steps: u64, updates: u64) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            agent,
            normalizer,
            ablation,
            total_steps,
            updates,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let header: Header = serde_json::from_str(text)?;
        if header.version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion {
                found: header.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
