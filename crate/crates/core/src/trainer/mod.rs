//! Single-video consistency training: plain data-term training, the
//! dual-head reweighted variant with main-mode warm-up, coarse-to-fine
//! scheduling and loss-curve auto-stop.

mod config;
mod rules;
mod train;

pub use config::{TrainConfig, L1_STOP_THRESHOLD, PERCEPTUAL_STOP_THRESHOLD};
pub use rules::{auto_stop_check, compute_confidence, compute_confidence_tensor, confident};
pub use train::{
    infer_video, infer_with, probe_indices, spec_for, train_dvp, warmup_main_mode, EpochEvent, Inference,
    IterationEvent, Phase, StopReason, TrainObserver, TrainState,
};
pub(crate) use train::initial_net;

pub use crate::losses::ConfidenceMap;
