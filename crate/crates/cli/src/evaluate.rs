use dvp::metrics::evaluate;
use dvp::video::io;
use log::info;

use crate::config::{require, FlowKind, RunConfig};
use crate::error::CliError;
use crate::run::{flow_source, write_manifest, Layout};

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let output_dir = require(&cfg.io.output_dir, "--output-dir")?;
    let processed_dir = require(&cfg.io.processed_dir, "--processed-dir")?;
    let out_dir = require(&cfg.io.out_dir, "--out-dir")?;
    if cfg.metrics.flow == FlowKind::None {
        return Err(CliError::Config(
            "evaluate needs a flow source: --flow zero|manifest|command or --flow-manifest".into(),
        ));
    }
    let outputs = io::load_sequence(output_dir, &cfg.io.pattern)?;
    let processed = io::load_sequence(processed_dir, &cfg.io.pattern)?;
    // flows and occlusion come from the original inputs when given
    let inputs = match &cfg.io.input_dir {
        Some(dir) => io::load_sequence(dir, &cfg.io.pattern)?,
        None => outputs.clone(),
    };

    let layout = Layout::create(out_dir, false)?;
    write_manifest(&layout, "evaluate", cfg.seed.unwrap_or(0), cfg)?;
    let mut flows = flow_source(&cfg.metrics, &layout.root.join("scratch"))?.expect("flow kind checked above");
    let report = evaluate(&outputs, &processed, &inputs, flows.as_mut(), &cfg.metrics.warp_options())?;
    report.write_csv(&layout.metrics().join("report.csv"))?;
    report.write_json(&layout.metrics().join("report.json"))?;
    report.write_plots(&layout.plots())?;
    println!("E_warp {:.5}  F_data {:.2} dB", report.e_warp, report.f_data);
    info!("wrote {}", layout.root.display());
    Ok(())
}
