use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{DvpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    /// Encoder-decoder with concatenated skip connections.
    Unet,
    /// U-net whose conv pairs are residual blocks.
    Resunet,
    /// Encoder-decoder without skip connections.
    Fcn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinalActivation {
    Sigmoid,
    /// Per-head softmax across that head's channels.
    Softmax,
    None,
}

/// Architecture description. Parameter layout is a pure function of this.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSpec {
    pub backbone: Backbone,
    /// Number of 2x downsamplings.
    pub depth: usize,
    pub base_channels: usize,
    pub in_channels: usize,
    pub heads: usize,
    pub out_channels_per_head: usize,
    pub final_activation: FinalActivation,
}

impl Default for NetSpec {
    fn default() -> Self {
        Self {
            backbone: Backbone::Unet,
            depth: 4,
            base_channels: 32,
            in_channels: 3,
            heads: 1,
            out_channels_per_head: 3,
            final_activation: FinalActivation::Sigmoid,
        }
    }
}

impl NetSpec {
    /// Default u-net mapping `in_channels` to `out_channels` images.
    pub fn image(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels_per_head: out_channels,
            ..Self::default()
        }
    }

    pub fn with_heads(mut self, heads: usize) -> Self {
        self.heads = heads;
        self
    }

    pub fn with_width(mut self, depth: usize, base_channels: usize) -> Self {
        self.depth = depth;
        self.base_channels = base_channels;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DvpError::Config(msg));
        if !(1..=2).contains(&self.heads) {
            return bad(format!("heads must be 1 or 2, got {}", self.heads));
        }
        if !(1..=7).contains(&self.depth) {
            return bad(format!("depth must be in 1..=7, got {}", self.depth));
        }
        if self.base_channels == 0 || self.in_channels == 0 || self.out_channels_per_head == 0 {
            return bad("channel counts must be positive".into());
        }
        if self.final_activation == FinalActivation::Softmax && self.out_channels_per_head < 2 {
            return bad("softmax heads need at least 2 channels".into());
        }
        Ok(())
    }

    /// Spatial dims must be multiples of this.
    pub fn multiple(&self) -> usize {
        1 << self.depth
    }

    pub fn output_channels(&self) -> usize {
        self.heads * self.out_channels_per_head
    }

    pub(crate) fn channels_at(&self, level: usize) -> usize {
        self.base_channels << level
    }
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backbone::Unet => "unet",
            Backbone::Resunet => "resunet",
            Backbone::Fcn => "fcn",
        })
    }
}

impl FromStr for Backbone {
    type Err = DvpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unet" => Ok(Backbone::Unet),
            "resunet" => Ok(Backbone::Resunet),
            "fcn" => Ok(Backbone::Fcn),
            other => Err(DvpError::Config(format!("unknown backbone `{other}`"))),
        }
    }
}

impl FromStr for FinalActivation {
    type Err = DvpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(FinalActivation::Sigmoid),
            "softmax" => Ok(FinalActivation::Softmax),
            "none" => Ok(FinalActivation::None),
            other => Err(DvpError::Config(format!("unknown activation `{other}`"))),
        }
    }
}
