use serde::{Deserialize, Serialize};

/// Model dimensions. Defaults are the full-size setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Word and node embedding size; also the GGNN state size.
    pub embed_dim: usize,
    /// Decoder, target-encoder and attention size.
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub hops: usize,
    /// Use one GGNN for both graphs instead of two.
    pub share_encoders: bool,
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 128,
            hidden_dim: 512,
            latent_dim: 128,
            hops: 3,
            share_encoders: false,
            init_std: 0.02,
        }
    }
}

impl ModelConfig {
    /// A small configuration for fast tests.
    pub fn tiny() -> Self {
        Self {
            embed_dim: 8,
            hidden_dim: 12,
            latent_dim: 4,
            hops: 2,
            share_encoders: false,
            init_std: 0.3,
        }
    }

    /// Width of the concatenated graph vectors `[g_e; g_k]`.
    pub fn condition_dim(&self) -> usize {
        2 * self.embed_dim
    }
}
