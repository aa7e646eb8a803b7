//! Pointer graph network step model and its baseline variants.
//!
//! One step maps operation features and the previous latents to a query
//! logit, per-node keep logits and all-pairs pointer logits:
//!
//! ```text
//! z = enc([e | h_prev])
//! h_i = relu(upd([z_i | max_{j -> i} relu(msg([z_i | z_j]))]))
//! keep_i = mask([z_i | h_i])           (keep iff sigmoid > 0.5)
//! score_ij = <query(h_i), key(h_j)>     (pointer = lowest argmax)
//! y = dec([max_i z_i | max_i h_i])
//! ```
//!
//! | variant      | message graph                   | losses                  |
//! |--------------|---------------------------------|-------------------------|
//! | `pgn`        | pointers, symmetrised           | query, pointer, mask    |
//! | `pgn_nm`     | pointers, symmetrised, never kept | query, pointer        |
//! | `pgn_mo`     | pointers, symmetrised           | query, mask             |
//! | `pgn_asym`   | pointers, directed, self-edges  | query, pointer, mask    |
//! | `deepsets`   | self only                       | query                   |
//! | `gnn`        | complete                        | query                   |
//! | `supgnn`     | complete                        | query, pointer, mask    |
//! | `fixed_ptrs` | external pointers, symmetrised  | query                   |

mod checkpoint;
mod model;
mod params;
mod rollout;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint,
    CHECKPOINT_VERSION,
};
pub use model::{
    bind, decode_query, encode, features, mask_decisions, mask_head, pointer_head, pointer_targets,
    pointer_update, process, step_forward, Adjacency, Bound, StepOutput,
};
pub use params::{ModelParams, Slot};
pub use rollout::{rollout, Mode, RolloutStep};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Pgn,
    PgnNm,
    Deepsets,
    Gnn,
    Supgnn,
    PgnMo,
    PgnAsym,
    FixedPtrs,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Pgn,
        Variant::PgnNm,
        Variant::Deepsets,
        Variant::Gnn,
        Variant::Supgnn,
        Variant::PgnMo,
        Variant::PgnAsym,
        Variant::FixedPtrs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Pgn => "pgn",
            Variant::PgnNm => "pgn_nm",
            Variant::Deepsets => "deepsets",
            Variant::Gnn => "gnn",
            Variant::Supgnn => "supgnn",
            Variant::PgnMo => "pgn_mo",
            Variant::PgnAsym => "pgn_asym",
            Variant::FixedPtrs => "fixed_ptrs",
        }
    }

    /// The message graph follows the model's own (or forced) pointers.
    pub fn uses_pointers(self) -> bool {
        matches!(
            self,
            Variant::Pgn | Variant::PgnNm | Variant::PgnMo | Variant::PgnAsym
        )
    }

    pub fn has_pointer_head(self) -> bool {
        self.uses_pointers() || self == Variant::Supgnn
    }

    pub fn has_mask_head(self) -> bool {
        matches!(
            self,
            Variant::Pgn | Variant::PgnMo | Variant::PgnAsym | Variant::Supgnn
        )
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown variant '{s}'")))
    }
}

/// Which nodes the pointer cross-entropy is averaged over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointerLossScope {
    #[default]
    All,
    /// Only nodes whose ground-truth keep bit is 0.
    Modified,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub latent_dim: usize,
    pub input_dim: usize,
    pub query_loss: bool,
    pub pointer_loss: bool,
    pub mask_loss: bool,
    pub symmetrise: bool,
    #[serde(default)]
    pub pointer_loss_scope: PointerLossScope,
}

pub const INPUT_DIM: usize = 2;
pub const DEFAULT_LATENT: usize = 32;

impl ModelConfig {
    pub fn new(variant: Variant) -> Self {
        Self::with_latent(variant, DEFAULT_LATENT)
    }

    pub fn with_latent(variant: Variant, latent_dim: usize) -> Self {
        let (pointer_loss, mask_loss) = match variant {
            Variant::Pgn | Variant::PgnAsym | Variant::Supgnn => (true, true),
            Variant::PgnNm => (true, false),
            Variant::PgnMo => (false, true),
            Variant::Deepsets | Variant::Gnn | Variant::FixedPtrs => (false, false),
        };
        Self {
            variant,
            latent_dim,
            input_dim: INPUT_DIM,
            query_loss: true,
            pointer_loss,
            mask_loss,
            symmetrise: variant != Variant::PgnAsym,
            pointer_loss_scope: PointerLossScope::All,
        }
    }

    /// Checks dimensions and that every toggle matches the variant.
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(invalid("latent_dim must be at least 1"));
        }
        if self.input_dim != INPUT_DIM {
            return Err(invalid(format!("input_dim must be {INPUT_DIM}")));
        }
        let expected = Self {
            pointer_loss_scope: self.pointer_loss_scope,
            ..Self::with_latent(self.variant, self.latent_dim)
        };
        if *self != expected {
            return Err(invalid(format!(
                "loss/structure toggles do not match variant {}",
                self.variant
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
            let json = serde_json::to_string(&v).unwrap();
            assert_eq!(json, format!("\"{v}\""));
        }
        assert!("pgn-x".parse::<Variant>().is_err());
    }

    #[test]
    fn toggles_follow_variant() {
        for v in Variant::ALL {
            ModelConfig::new(v).validate().unwrap();
        }
        let mut c = ModelConfig::new(Variant::Gnn);
        c.pointer_loss = true;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::new(Variant::Pgn);
        c.latent_dim = 0;
        assert!(c.validate().is_err());
        assert!(!ModelConfig::new(Variant::PgnAsym).symmetrise);
        let mut c = ModelConfig::new(Variant::Pgn);
        c.pointer_loss_scope = PointerLossScope::Modified;
        c.validate().unwrap();
    }
}
