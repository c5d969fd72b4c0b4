use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

/// Shape and switches of the network. Stored in checkpoint metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Feature row width; set from the fitted feature statistics.
    pub d_in: usize,
    pub d_model: usize,
    pub heads: usize,
    pub blocks: usize,
    /// Feed-forward inner width as a multiple of `d_model`.
    pub ffn_mult: usize,
    pub l_h: usize,
    pub l_f: usize,
    /// Number of stored patterns.
    pub l_m: usize,
    /// Dropout on the decoder output at training time.
    pub dropout: f64,
    /// Puts `tanh` inside the pointer score, `vᵀ tanh(W1 e + W2 a)`, instead
    /// of the plain linear form.
    pub pointer_tanh: bool,
    /// Off: the memory read is replaced by zeros.
    pub use_memory: bool,
    /// Off: final probabilities are the intermediate pointer probabilities.
    pub use_mobility: bool,
    /// Minutes per unit of time-head output.
    pub time_scale: f64,
    /// Initial time-head bias in output units.
    pub time_bias: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_in: 0,
            d_model: 64,
            heads: 4,
            blocks: 2,
            ffn_mult: 4,
            l_h: 15,
            l_f: 15,
            l_m: 20,
            dropout: 0.1,
            pointer_tanh: false,
            use_memory: true,
            use_mobility: true,
            time_scale: 1.0,
            time_bias: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.d_model % 2 != 0 {
            return config(format!("d_model must be even and positive, got {}", self.d_model));
        }
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return config(format!("d_model {} is not divisible by {} heads", self.d_model, self.heads));
        }
        for (name, v) in [
            ("d_in", self.d_in),
            ("blocks", self.blocks),
            ("ffn_mult", self.ffn_mult),
            ("l_h", self.l_h),
            ("l_f", self.l_f),
            ("l_m", self.l_m),
        ] {
            if v == 0 {
                return config(format!("{name} must be at least 1"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return config(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.time_scale.is_finite() && self.time_scale > 0.0) || !self.time_bias.is_finite() {
            return config("time_scale must be positive and time_bias finite");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }
}
