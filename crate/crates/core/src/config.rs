use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::ContextSampler;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::objectives::{ContrastiveConfig, ContrastiveMode};
use crate::optim::AdamConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub name: String,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let a = AdamConfig::default();
        Self {
            name: "adam".into(),
            learning_rate: a.learning_rate,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
        }
    }
}

/// Every hyperparameter of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub k_per_batch: usize,
    pub m_views: usize,
    pub tau: f64,
    pub lambda: f64,
    pub contrastive_mode: ContrastiveMode,
    pub window_size: usize,
    /// Defaults to `window_size` (disjoint windows) when absent.
    pub stride: Option<usize>,
    pub context_a: f64,
    pub context_b: f64,
    pub n_context_min: usize,
    pub n_context_max: usize,
    pub grid_size: usize,
    pub grid_margin: f64,
    pub encoding_size: usize,
    pub cnn_layers: usize,
    pub cnn_channels: usize,
    pub kernel_width: usize,
    pub decoder_hidden: usize,
    pub clip_norm: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Steps between checkpoints; 0 disables intermediate checkpoints.
    pub checkpoint_every: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let s = ContextSampler::default();
        let m = ModelConfig::default();
        let c = ContrastiveConfig::default();
        Self {
            k_per_batch: 8,
            m_views: 2,
            tau: c.tau,
            lambda: 0.01,
            contrastive_mode: c.mode,
            window_size: 2500,
            stride: None,
            context_a: s.a,
            context_b: s.b,
            n_context_min: s.n_context_min,
            n_context_max: s.n_context_max,
            grid_size: m.grid_size,
            grid_margin: m.grid_margin,
            encoding_size: m.encoding_size,
            cnn_layers: m.cnn_layers,
            cnn_channels: m.cnn_channels,
            kernel_width: m.kernel_width,
            decoder_hidden: m.decoder_hidden,
            clip_norm: 10.0,
            epochs: 10,
            seed: 0,
            checkpoint_every: 0,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn sampler(&self) -> ContextSampler {
        ContextSampler {
            a: self.context_a,
            b: self.context_b,
            n_context_min: self.n_context_min,
            n_context_max: self.n_context_max,
        }
    }

    pub fn contrastive(&self) -> ContrastiveConfig {
        ContrastiveConfig {
            tau: self.tau,
            mode: self.contrastive_mode,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.optimizer.learning_rate,
            beta1: self.optimizer.beta1,
            beta2: self.optimizer.beta2,
            eps: self.optimizer.eps,
        }
    }

    pub fn model_config(&self, channels: usize) -> ModelConfig {
        ModelConfig {
            channels,
            grid_size: self.grid_size,
            grid_margin: self.grid_margin,
            cnn_layers: self.cnn_layers,
            cnn_channels: self.cnn_channels,
            kernel_width: self.kernel_width,
            encoding_size: self.encoding_size,
            decoder_hidden: self.decoder_hidden,
        }
    }

    pub fn stride(&self) -> usize {
        self.stride.unwrap_or(self.window_size)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.k_per_batch < 2 {
            return bad(format!("k_per_batch must be >= 2, got {}", self.k_per_batch));
        }
        if self.m_views < 2 {
            return bad(format!("m_views must be >= 2, got {}", self.m_views));
        }
        if !(self.tau > 0.0) {
            return bad(format!("tau must be > 0, got {}", self.tau));
        }
        if !(self.lambda >= 0.0) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if self.window_size < 2 || self.stride() == 0 {
            return bad("window_size must be >= 2 and stride >= 1".into());
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip_norm must be > 0".into());
        }
        if self.optimizer.name != "adam" {
            return bad(format!("unsupported optimizer `{}`", self.optimizer.name));
        }
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0 && (0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2) && o.eps > 0.0) {
            return bad("invalid optimizer settings".into());
        }
        self.sampler().validate()?;
        self.model_config(1).validate()
    }

    /// Stable 64-bit digest of the serialized configuration.
    pub fn hash(&self) -> u64 {
        let text = toml::to_string(self).expect("config serializes");
        digest_u64(text.as_bytes())
    }
}

/// First eight bytes of SHA-256, little-endian.
pub fn digest_u64(bytes: &[u8]) -> u64 {
    let d = Sha256::digest(bytes);
    let mut b = [0u8; 8];
    b.copy_from_slice(&d[..8]);
    u64::from_le_bytes(b)
}
