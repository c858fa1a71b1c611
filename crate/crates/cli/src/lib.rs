//! Command-line pipeline over `pfs-core`: stage runners, report tables,
//! SVG figures, the output manifest and the oracle checks.

pub mod association;
pub mod checks;
pub mod config;
pub mod error;
pub mod manifest;
pub mod report;
pub mod stages;
pub mod svg;
pub mod table;

use config::{Overrides, PipelineConfig};
use error::Result;
use stages::Ctx;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Ingest,
    Estimate,
    Calibrate,
    Dynamics,
    Report,
    Validate,
}

/// Load the config (or defaults), apply overrides, validate and run.
pub fn run(stage: Stage, config: Option<&std::path::Path>, overrides: &Overrides) -> Result<()> {
    let mut cfg = match config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    cfg.apply(overrides);
    cfg.validate()?;
    let ctx = Ctx::new(cfg);
    std::fs::create_dir_all(&ctx.out)?;
    match stage {
        Stage::Synth => stages::run_synth(&ctx),
        Stage::Ingest => stages::run_ingest(&ctx),
        Stage::Estimate => stages::run_estimate(&ctx),
        Stage::Calibrate => stages::run_calibrate(&ctx),
        Stage::Dynamics => stages::run_dynamics(&ctx),
        Stage::Report => report::run_report(&ctx),
        Stage::Validate => stages::run_validate(&ctx),
    }
}
