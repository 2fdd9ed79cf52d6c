use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradMode {
    #[default]
    Backprop,
    Adjoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Single,
    Double,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Shape of the learned tendency; the state channel count comes from the
/// dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub width: usize,
    pub n_down: usize,
    pub n_blocks: usize,
    pub kernel_size: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { width: 32, n_down: 2, n_blocks: 6, kernel_size: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialMode {
    /// The full state at the start of each window is given.
    #[default]
    Identity,
    /// `g` reads `history_len` observation frames plus `proxy` channels.
    Encoder {
        #[serde(default = "default_encoder_width")]
        width: usize,
        #[serde(default)]
        proxy: Vec<String>,
    },
}

fn default_encoder_width() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Names of the observed channels.
    pub observed: Vec<String>,
    pub network: NetworkConfig,
    pub initial: InitialMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { observed: vec!["h".into()], network: NetworkConfig::default(), initial: InitialMode::Identity }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub adam: AdamConfig,
    pub batch_size: usize,
    /// Observations per training sequence (`l`).
    pub target_len: usize,
    /// Euler substeps per frame interval.
    pub substeps: usize,
    /// Frames between consecutive targets; values above 1 train on a
    /// sub-sampled sequence.
    pub target_stride: usize,
    /// Observation frames fed to an encoder `g`, current frame included.
    pub history_len: usize,
    pub ss_epsilon0: f64,
    pub ss_decay: f64,
    pub epochs: usize,
    /// Iterations per epoch; `None` means one pass worth of windows.
    pub iters_per_epoch: Option<usize>,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    /// Evenly spaced windows in the validation part.
    pub validation_windows: usize,
    pub seed: u64,
    pub grad_mode: GradMode,
    pub precision: Precision,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            adam: AdamConfig::default(),
            batch_size: 8,
            target_len: 6,
            substeps: 3,
            target_stride: 1,
            history_len: 4,
            ss_epsilon0: 1.0,
            ss_decay: 0.99,
            epochs: 20,
            iters_per_epoch: None,
            patience: 5,
            validation_windows: 32,
            seed: 0,
            grad_mode: GradMode::Backprop,
            precision: Precision::Single,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if self.target_len == 0 || self.substeps == 0 || self.target_stride == 0 || self.batch_size == 0 {
            return bad("target_len, substeps, target_stride and batch_size must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.ss_epsilon0) {
            return bad("ss_epsilon0 must lie in [0, 1]");
        }
        if !(self.ss_decay > 0.0 && self.ss_decay <= 1.0) {
            return bad("ss_decay must lie in (0, 1]");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return bad("adam needs betas in [0, 1) and eps > 0");
        }
        Ok(())
    }
}
