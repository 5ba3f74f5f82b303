//! Run configuration: a TOML file with one section per concern, overridden
//! by command-line flags.

use std::path::{Path, PathBuf};

use dvp::metrics::{ChannelReduction, WarpOptions, DEFAULT_ALPHA1, DEFAULT_ALPHA2};
use dvp::propagation::PropagationConfig;
use dvp::toy::ToyConfig;
use dvp::{NetSpec, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::args::RunArgs;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    pub input_dir: Option<PathBuf>,
    pub processed_dir: Option<PathBuf>,
    /// Frames scored by `evaluate`.
    pub output_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// Glob selecting frame files inside each directory.
    pub pattern: String,
    /// Frames per independently trained clip.
    pub window: usize,
    pub jobs: usize,
    /// Reference targets for `propagate`, matched in filename order to
    /// `reference_frames`.
    pub reference_dir: Option<PathBuf>,
    pub reference_frames: Vec<usize>,
    /// Class count of segmentation masks.
    pub classes: usize,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            input_dir: None,
            processed_dir: None,
            output_dir: None,
            out_dir: None,
            pattern: "*.png".into(),
            window: 300,
            jobs: 1,
            reference_dir: None,
            reference_frames: Vec::new(),
            classes: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FlowKind {
    /// No flow: skip warping metrics.
    #[default]
    None,
    /// Static scene.
    Zero,
    /// Precomputed flow files listed in a manifest.
    Manifest,
    /// External program invoked per frame pair.
    Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub flow: FlowKind,
    pub flow_manifest: Option<PathBuf>,
    /// Program and leading arguments; the two frame paths and the output
    /// flow path are appended.
    pub flow_command: Vec<String>,
    pub alpha1: f64,
    pub alpha2: f64,
    pub reduction: ChannelReduction,
    /// Report E_warp and F_data on probe frames after every epoch.
    pub probe: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            flow: FlowKind::None,
            flow_manifest: None,
            flow_command: Vec::new(),
            alpha1: DEFAULT_ALPHA1,
            alpha2: DEFAULT_ALPHA2,
            reduction: ChannelReduction::Sum,
            probe: true,
        }
    }
}

impl MetricsConfig {
    pub fn warp_options(&self) -> WarpOptions {
        WarpOptions {
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            reduction: self.reduction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides the seed of every section when set.
    pub seed: Option<u64>,
    pub io: IoConfig,
    pub net: NetSpec,
    pub train: TrainConfig,
    pub propagate: PropagationConfig,
    pub metrics: MetricsConfig,
    pub toy: ToyConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Loads the optional file and applies the flags on top.
    pub fn resolve(args: &RunArgs) -> Result<Self, CliError> {
        let mut cfg = match &args.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        cfg.apply(args);
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, a: &RunArgs) {
        let io = &mut self.io;
        set(&mut io.input_dir, a.input_dir.clone());
        set(&mut io.processed_dir, a.processed_dir.clone());
        set(&mut io.output_dir, a.output_dir.clone());
        set(&mut io.out_dir, a.out_dir.clone());
        set(&mut io.reference_dir, a.reference_dir.clone());
        if let Some(v) = a.pattern.clone() {
            io.pattern = v;
        }
        if let Some(v) = a.window {
            io.window = v;
        }
        if let Some(v) = a.jobs {
            io.jobs = v;
        }
        if let Some(v) = a.reference_frames.clone() {
            io.reference_frames = v;
        }

        let train = &mut self.train;
        if let Some(v) = a.epochs {
            train.epochs = v;
        }
        if let Some(v) = a.irt() {
            train.irt = v;
        }
        if let Some(v) = a.delta {
            train.delta = v;
            self.toy.delta = v;
        }
        if a.auto_stop {
            train.auto_stop = true;
        }
        if a.coarse_to_fine {
            train.coarse_to_fine = true;
        }
        set(&mut train.init_checkpoint, a.init_checkpoint.clone());
        if let Some(v) = a.learning_rate {
            train.learning_rate = v;
            self.propagate.learning_rate = v;
            self.toy.learning_rate = v;
        }

        if let Some(v) = a.k {
            self.propagate.k = v;
        }
        if let Some(v) = a.task {
            self.propagate.task = v.into();
        }
        if a.no_pppl {
            self.propagate.pppl = false;
        }

        if let Some(v) = a.flow {
            self.metrics.flow = v;
        }
        if let Some(v) = a.flow_manifest.clone() {
            self.metrics.flow_manifest = Some(v);
            if a.flow.is_none() {
                self.metrics.flow = FlowKind::Manifest;
            }
        }

        if let Some(v) = a.seed {
            self.seed = Some(v);
        }
        if let Some(seed) = self.seed {
            self.train.seed = seed;
            self.propagate.seed = seed;
            self.toy.seed = seed;
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.io.jobs == 0 {
            return Err(CliError::Config("jobs must be at least 1".into()));
        }
        if self.io.window < 2 {
            return Err(CliError::Config(format!("window {} must be at least 2", self.io.window)));
        }
        if self.io.classes < 2 {
            return Err(CliError::Config("segmentation needs at least two classes".into()));
        }
        match self.metrics.flow {
            FlowKind::Manifest if self.metrics.flow_manifest.is_none() => {
                return Err(CliError::Config("flow = manifest needs flow_manifest".into()))
            }
            FlowKind::Command if self.metrics.flow_command.is_empty() => {
                return Err(CliError::Config("flow = command needs flow_command".into()))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

fn set<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

/// Reads a required path, naming the flag that provides it.
pub fn require<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    value
        .as_deref()
        .ok_or_else(|| CliError::Config(format!("missing {flag} (flag or config key)")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("[train]\nepochz = 3\n").is_err());
        assert!(RunConfig::parse("bogus = 1\n").is_err());
        assert!(RunConfig::parse("[net]\ndepth = 2\ncolor = 1\n").is_err());
    }

    #[test]
    fn sections_parse() {
        let cfg = RunConfig::parse(
            "seed = 7\n[train]\nepochs = 3\nirt = true\n[net]\ndepth = 2\nbase_channels = 8\n[metrics]\nflow = \"zero\"\n",
        )
        .unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert!(cfg.train.irt);
        assert_eq!(cfg.net.depth, 2);
        assert_eq!(cfg.metrics.flow, FlowKind::Zero);
    }
}
