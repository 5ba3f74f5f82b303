//! Providers of optical flow between frames of a sequence.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use super::flow::{read_flow, FlowField};
use crate::error::{DvpError, Result};
use crate::video::io::save_frame;
use crate::video::Frame;

/// Supplies the flow `F_{t->s}`: for each pixel of frame `t`, the offset of
/// the corresponding position in frame `s`.
pub trait FlowSource {
    fn flow_between(&mut self, t: usize, s: usize, frame_t: &Frame, frame_s: &Frame) -> Result<FlowField>;
}

/// Static scenes: every flow is zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroFlow;

impl FlowSource for ZeroFlow {
    fn flow_between(&mut self, _t: usize, _s: usize, frame_t: &Frame, _frame_s: &Frame) -> Result<FlowField> {
        Ok(FlowField::zeros(frame_t.height(), frame_t.width()))
    }
}

/// Scenes whose content moves by `(vx, vy)` pixels per frame.
#[derive(Debug, Clone, Copy)]
pub struct ConstantTranslation {
    pub vx: f64,
    pub vy: f64,
}

impl FlowSource for ConstantTranslation {
    fn flow_between(&mut self, t: usize, s: usize, frame_t: &Frame, _frame_s: &Frame) -> Result<FlowField> {
        let steps = s as f64 - t as f64;
        FlowField::constant(frame_t.height(), frame_t.width(), self.vx * steps, self.vy * steps)
    }
}

/// Precomputed flow files listed in a manifest.
///
/// The manifest is a CSV file with header `t,s,path`; relative paths are
/// resolved against the manifest's directory.
#[derive(Debug, Clone)]
pub struct FileFlowSource {
    entries: HashMap<(usize, usize), PathBuf>,
}

#[derive(serde::Deserialize)]
struct ManifestRow {
    t: usize,
    s: usize,
    path: PathBuf,
}

impl FileFlowSource {
    pub fn from_manifest(manifest: &Path) -> Result<Self> {
        let base = manifest.parent().unwrap_or(Path::new(""));
        let mut reader = csv::Reader::from_path(manifest)
            .map_err(|e| DvpError::Flow(format!("{}: {e}", manifest.display())))?;
        let mut entries = HashMap::new();
        for row in reader.deserialize::<ManifestRow>() {
            let row = row.map_err(|e| DvpError::Flow(format!("{}: {e}", manifest.display())))?;
            entries.insert((row.t, row.s), base.join(row.path));
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl FlowSource for FileFlowSource {
    fn flow_between(&mut self, t: usize, s: usize, frame_t: &Frame, _frame_s: &Frame) -> Result<FlowField> {
        let path = self
            .entries
            .get(&(t, s))
            .ok_or_else(|| DvpError::Flow(format!("flow manifest has no entry for ({t}, {s})")))?;
        let flow = read_flow(path)?;
        if (flow.height(), flow.width()) != (frame_t.height(), frame_t.width()) {
            return Err(DvpError::Flow(format!(
                "{} is {}x{}, frames are {}x{}",
                path.display(),
                flow.height(),
                flow.width(),
                frame_t.height(),
                frame_t.width()
            )));
        }
        Ok(flow)
    }
}

/// Runs an external dense-flow estimator as
/// `program [args..] <frame_t.png> <frame_s.png> <out.flo>` and reads the
/// flow file it writes (DVPF or Middlebury format).
#[derive(Debug, Clone)]
pub struct CommandFlowSource {
    pub program: PathBuf,
    pub args: Vec<String>,
    scratch: PathBuf,
}

impl CommandFlowSource {
    pub fn new(program: impl Into<PathBuf>, args: Vec<String>, scratch: impl Into<PathBuf>) -> Self {
        Self {
            program: program.into(),
            args,
            scratch: scratch.into(),
        }
    }
}

impl FlowSource for CommandFlowSource {
    fn flow_between(&mut self, t: usize, s: usize, frame_t: &Frame, frame_s: &Frame) -> Result<FlowField> {
        std::fs::create_dir_all(&self.scratch).map_err(|e| DvpError::io(&self.scratch, e))?;
        let a = self.scratch.join(format!("flow_{t}_{s}_a.png"));
        let b = self.scratch.join(format!("flow_{t}_{s}_b.png"));
        let out = self.scratch.join(format!("flow_{t}_{s}.flo"));
        save_frame(frame_t, &a)?;
        save_frame(frame_s, &b)?;
        let status = Command::new(&self.program)
            .args(&self.args)
            .arg(&a)
            .arg(&b)
            .arg(&out)
            .status()
            .map_err(|e| DvpError::Flow(format!("cannot run {}: {e}", self.program.display())))?;
        if !status.success() {
            return Err(DvpError::Flow(format!("{} exited with {status}", self.program.display())));
        }
        read_flow(&out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::flow::write_flow;

    #[test]
    fn translation_flow_direction() {
        let f = Frame::filled(8, 8, 1, 0.0);
        let flow = ConstantTranslation { vx: 1.0, vy: 0.0 }.flow_between(3, 2, &f, &f).unwrap();
        // content moved right by one, so frame 3 finds its pixels one to the left in frame 2
        assert_eq!(flow.get(0, 0), (-1.0, 0.0));
    }

    #[test]
    fn manifest_lookup() {
        let dir = tempfile::tempdir().unwrap();
        write_flow(&FlowField::constant(8, 8, 0.5, 0.0).unwrap(), &dir.path().join("a.dvpf")).unwrap();
        std::fs::write(dir.path().join("m.csv"), "t,s,path\n1,0,a.dvpf\n").unwrap();
        let mut src = FileFlowSource::from_manifest(&dir.path().join("m.csv")).unwrap();
        let f = Frame::filled(8, 8, 1, 0.0);
        assert_eq!(src.flow_between(1, 0, &f, &f).unwrap().get(3, 3), (0.5, 0.0));
        assert!(matches!(src.flow_between(0, 1, &f, &f), Err(DvpError::Flow(_))));
    }
}
