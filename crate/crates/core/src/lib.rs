//! Deep video prior: temporally consistent video processing by training a
//! convolutional network on a single video.

pub mod error;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod nn;
pub mod plot;
pub mod propagation;
pub mod synth;
pub mod toy;
pub mod trainer;
pub mod video;

pub use error::{DvpError, Result};
pub use losses::{ConfidenceMap, LossConfig, LossKind};
pub use metrics::{FlowField, FlowSource, MetricReport, OcclusionMask};
pub use network::{ConsistencyNet, NetSpec};
pub use propagation::{PropagationConfig, Task};
pub use trainer::{train_dvp, TrainConfig, TrainState};
pub use video::{Frame, LabelMap, PairedVideo, VideoSequence};
