use dvp::toy::{run_toy, spread};
use log::info;

use crate::config::{require, RunConfig};
use crate::error::CliError;
use crate::run::{write_manifest, Layout};

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let out_dir = require(&cfg.io.out_dir, "--out-dir")?;
    let irt = cfg.train.irt;
    let layout = Layout::create(out_dir, false)?;
    write_manifest(&layout, "toy", cfg.toy.seed, cfg)?;
    let trajectory = run_toy(&cfg.toy, irt)?;
    let stem = format!(
        "toy_{}_{}",
        if cfg.toy.bimodal { "bimodal" } else { "unimodal" },
        if irt { "irt" } else { "dvp" }
    );
    for path in trajectory.write_artifacts(&layout.plots(), &stem)? {
        if path.extension().is_some_and(|e| e == "csv") {
            let dest = layout.metrics().join(path.file_name().expect("file name"));
            std::fs::rename(&path, &dest).map_err(|e| CliError::io("moving toy CSV", e))?;
            info!("wrote {}", dest.display());
        } else {
            info!("wrote {}", path.display());
        }
    }
    println!("target spread {:.4}", spread(&trajectory.data.targets));
    for snap in &trajectory.snapshots {
        println!("iteration {:>5}  output spread {:.4}", snap.iteration, spread(&snap.main));
    }
    Ok(())
}
