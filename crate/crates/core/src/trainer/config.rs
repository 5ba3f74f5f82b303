use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{DvpError, Result};
use crate::losses::{LossConfig, LossKind};

/// Default auto-stop threshold for pixel losses.
pub const L1_STOP_THRESHOLD: f64 = 1e-7;
/// Default auto-stop threshold when the perceptual loss is active.
pub const PERCEPTUAL_STOP_THRESHOLD: f64 = 1e-8;

/// Training hyper-parameters. The batch size is always one frame pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub loss: LossConfig,
    /// Dual-head training with per-pixel confidence routing.
    pub irt: bool,
    /// Distance floor below which the main head keeps a pixel.
    pub delta: f64,
    /// Warm-up iterations on `main_mode_frame` before IRT epochs.
    pub warmup_iterations: usize,
    pub main_mode_frame: usize,
    /// Recompute confidence maps once per epoch instead of every iteration.
    pub confidence_per_epoch: bool,
    pub coarse_to_fine: bool,
    /// Resolution factor of the coarse phase.
    pub coarse_scale: f64,
    /// Fraction of epochs spent in the coarse phase.
    pub coarse_fraction: f64,
    pub init_checkpoint: Option<PathBuf>,
    /// Stop once the loss curve flattens.
    pub auto_stop: bool,
    pub auto_stop_window: usize,
    /// `None` picks a default based on the active loss.
    pub auto_stop_threshold: Option<f64>,
    /// Frames whose main-head outputs are snapshotted after every epoch.
    pub probe_frames: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            epochs: 25,
            loss: LossConfig::l1(),
            irt: false,
            delta: 0.02,
            warmup_iterations: 50,
            main_mode_frame: 0,
            confidence_per_epoch: false,
            coarse_to_fine: false,
            coarse_scale: 0.5,
            coarse_fraction: 0.5,
            init_checkpoint: None,
            auto_stop: false,
            auto_stop_window: 5,
            auto_stop_threshold: None,
            probe_frames: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DvpError::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if !(self.coarse_scale > 0.0 && self.coarse_scale <= 1.0) {
            return bad(format!("coarse scale must be in (0, 1], got {}", self.coarse_scale));
        }
        if !(0.0..=1.0).contains(&self.coarse_fraction) {
            return bad(format!("coarse fraction must be in [0, 1], got {}", self.coarse_fraction));
        }
        if self.auto_stop_window < 2 {
            return bad("auto-stop window must be at least 2".into());
        }
        if let Some(t) = self.auto_stop_threshold {
            if !(t > 0.0) {
                return bad(format!("auto-stop threshold must be positive, got {t}"));
            }
        }
        self.loss.validate()
    }

    pub fn heads(&self) -> usize {
        if self.irt {
            2
        } else {
            1
        }
    }

    /// Number of leading epochs trained at the coarse resolution.
    pub fn coarse_epochs(&self) -> usize {
        if self.coarse_to_fine {
            (self.epochs as f64 * self.coarse_fraction).round() as usize
        } else {
            0
        }
    }

    pub fn stop_threshold(&self, active: LossKind) -> f64 {
        self.auto_stop_threshold.unwrap_or(match active {
            LossKind::Perceptual => PERCEPTUAL_STOP_THRESHOLD,
            _ => L1_STOP_THRESHOLD,
        })
    }
}
