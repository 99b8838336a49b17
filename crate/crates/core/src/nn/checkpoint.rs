use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Mlp;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "dg-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained model plus the payoff and seed that produced it.
///
/// Stored as JSON; `f64` values round-trip exactly. See
/// `docs/checkpoint-format.md` for the layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub payoff: f64,
    pub seed: u64,
    pub model: Mlp,
}

impl Checkpoint {
    pub fn new(model: Mlp, payoff: f64, seed: u64) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            payoff,
            seed,
            model,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format tag `{}`", ckpt.format)));
        }
        if ckpt.version > CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "version {} is newer than supported version {CHECKPOINT_VERSION}",
                ckpt.version
            )));
        }
        ckpt.model.spec.validate()?;
        let expected = ckpt.model.spec.layer_sizes.windows(2);
        if ckpt.model.layers.len() != expected.len() {
            return Err(Error::Checkpoint("layer count does not match the model spec".into()));
        }
        for (layer, w) in ckpt.model.layers.iter().zip(expected) {
            if layer.weight.shape() != [w[1], w[0]] || layer.bias.shape() != [w[1]] {
                return Err(Error::Checkpoint(format!(
                    "layer {:?} does not match spec widths {w:?}",
                    layer.weight.shape()
                )));
            }
        }
        Ok(ckpt)
    }
}
