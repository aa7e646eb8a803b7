use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::adcore::Tensor;
use crate::error::{invalid, Result};
use crate::tracegen::rng::TraceRng;

/// Index of each parameter tensor inside [`ModelParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    EncW,
    EncB,
    MsgW,
    MsgB,
    UpdW,
    UpdB,
    QueryW,
    QueryB,
    KeyW,
    KeyB,
    MaskW,
    MaskB,
    DecW,
    DecB,
}

impl Slot {
    pub const ALL: [Slot; 14] = [
        Slot::EncW,
        Slot::EncB,
        Slot::MsgW,
        Slot::MsgB,
        Slot::UpdW,
        Slot::UpdB,
        Slot::QueryW,
        Slot::QueryB,
        Slot::KeyW,
        Slot::KeyB,
        Slot::MaskW,
        Slot::MaskB,
        Slot::DecW,
        Slot::DecB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Slot::EncW => "enc_w",
            Slot::EncB => "enc_b",
            Slot::MsgW => "msg_w",
            Slot::MsgB => "msg_b",
            Slot::UpdW => "upd_w",
            Slot::UpdB => "upd_b",
            Slot::QueryW => "query_w",
            Slot::QueryB => "query_b",
            Slot::KeyW => "key_w",
            Slot::KeyB => "key_b",
            Slot::MaskW => "mask_w",
            Slot::MaskB => "mask_b",
            Slot::DecW => "dec_w",
            Slot::DecB => "dec_b",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_bias(self) -> bool {
        self.index() % 2 == 1
    }

    /// `(rows, cols)` for input width `m` and latent width `k`.
    pub fn shape(self, m: usize, k: usize) -> (usize, usize) {
        match self {
            Slot::EncW => (m + k, k),
            Slot::MsgW | Slot::UpdW => (2 * k, k),
            Slot::QueryW | Slot::KeyW => (k, k),
            Slot::MaskW | Slot::DecW => (2 * k, 1),
            Slot::EncB | Slot::MsgB | Slot::UpdB | Slot::QueryB | Slot::KeyB => (1, k),
            Slot::MaskB | Slot::DecB => (1, 1),
        }
    }
}

/// All learnable tensors, indexed by [`Slot`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    tensors: Vec<Tensor>,
}

impl ModelParams {
    /// Uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = TraceRng::new(seed);
        let tensors = Slot::ALL
            .iter()
            .map(|&slot| {
                let (r, c) = slot.shape(config.input_dim, config.latent_dim);
                if slot.is_bias() {
                    return Tensor::zeros(r, c);
                }
                let limit = (6.0 / (r + c) as f64).sqrt();
                let data = (0..r * c)
                    .map(|_| (2.0 * rng.next_f64() - 1.0) * limit)
                    .collect();
                Tensor::from_vec(r, c, data).expect("shape matches")
            })
            .collect();
        Ok(Self { tensors })
    }

    /// Wraps tensors in slot order after checking their shapes.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Tensor>) -> Result<Self> {
        if tensors.len() != Slot::ALL.len() {
            return Err(invalid(format!(
                "expected {} parameter tensors, got {}",
                Slot::ALL.len(),
                tensors.len()
            )));
        }
        for (slot, t) in Slot::ALL.iter().zip(&tensors) {
            let want = slot.shape(config.input_dim, config.latent_dim);
            if t.shape() != want {
                return Err(invalid(format!(
                    "{} has shape {:?}, expected {want:?}",
                    slot.name(),
                    t.shape()
                )));
            }
            if !t.is_finite() {
                return Err(invalid(format!("{} holds non-finite values", slot.name())));
            }
        }
        Ok(Self { tensors })
    }

    pub fn get(&self, slot: Slot) -> &Tensor {
        &self.tensors[slot.index()]
    }

    pub fn get_mut(&mut self, slot: Slot) -> &mut Tensor {
        &mut self.tensors[slot.index()]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn into_tensors(self) -> Vec<Tensor> {
        self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(|t| t.data().len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
