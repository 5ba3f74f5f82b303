//! Artifact layout, run manifest and flow-source plumbing shared by commands.

use std::fs;
use std::path::{Path, PathBuf};

use dvp::metrics::{CommandFlowSource, FileFlowSource, FlowField, FlowSource, ZeroFlow};
use dvp::Frame;
use serde::Serialize;

use crate::config::{FlowKind, MetricsConfig, RunConfig};
use crate::error::CliError;

/// `<out_dir>/{frames_main, frames_minor, metrics, checkpoints, plots}`.
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn create(root: &Path, with_minor: bool) -> Result<Self, CliError> {
        let layout = Self {
            root: root.to_path_buf(),
        };
        let mut dirs = vec![layout.frames_main(), layout.metrics(), layout.checkpoints(), layout.plots()];
        if with_minor {
            dirs.push(layout.frames_minor());
        }
        for d in dirs {
            fs::create_dir_all(&d).map_err(|e| CliError::io(&format!("creating {}", d.display()), e))?;
        }
        Ok(layout)
    }

    pub fn frames_main(&self) -> PathBuf {
        self.root.join("frames_main")
    }

    pub fn frames_minor(&self) -> PathBuf {
        self.root.join("frames_minor")
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn plots(&self) -> PathBuf {
        self.root.join("plots")
    }

    pub fn write_json(&self, path: &Path, value: &impl Serialize) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).expect("value serializes");
        fs::write(path, text + "\n").map_err(|e| CliError::io(&format!("writing {}", path.display()), e))
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a RunConfig,
}

/// Writes `<out_dir>/run-manifest.json` with the resolved configuration.
pub fn write_manifest(layout: &Layout, command: &str, seed: u64, cfg: &RunConfig) -> Result<(), CliError> {
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        config: cfg,
    };
    layout.write_json(&layout.root.join("run-manifest.json"), &manifest)
}

/// Builds the configured flow source; `scratch` holds frames handed to an
/// external estimator.
pub fn flow_source(metrics: &MetricsConfig, scratch: &Path) -> Result<Option<Box<dyn FlowSource + Send>>, CliError> {
    Ok(match metrics.flow {
        FlowKind::None => None,
        FlowKind::Zero => Some(Box::new(ZeroFlow)),
        FlowKind::Manifest => {
            let path = metrics
                .flow_manifest
                .as_deref()
                .ok_or_else(|| CliError::Config("flow = manifest needs flow_manifest".into()))?;
            Some(Box::new(FileFlowSource::from_manifest(path)?))
        }
        FlowKind::Command => {
            let (program, args) = metrics
                .flow_command
                .split_first()
                .ok_or_else(|| CliError::Config("flow = command needs flow_command".into()))?;
            Some(Box::new(CommandFlowSource::new(program, args.to_vec(), scratch)))
        }
    })
}

/// Shifts clip-local frame indices to whole-video indices.
pub struct Offset<'a> {
    pub inner: &'a mut dyn FlowSource,
    pub start: usize,
}

impl FlowSource for Offset<'_> {
    fn flow_between(&mut self, t: usize, s: usize, frame_t: &Frame, frame_s: &Frame) -> dvp::Result<FlowField> {
        self.inner.flow_between(t + self.start, s + self.start, frame_t, frame_s)
    }
}
