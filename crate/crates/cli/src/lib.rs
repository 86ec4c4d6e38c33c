//! Batch driver for the differential morph-detection experiment.
//!
//! Stages communicate only through files under the experiment directory, so
//! each can be rerun on its own:
//! `synth → decompose → extract → train → fuse-search → eval → report`.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod fusion;
pub mod pairs;
pub mod prepare;
pub mod report;
pub mod train;

use morphdet::evaluation::SummaryRow;
use morphdet::DatasetManifest;
use morphdet_synth::SynthConfig;

pub use artifacts::Artifacts;
pub use config::{Branch, ExperimentConfig, Method, WeightsSpec};
pub use error::{InStage, PipelineError, Result, Stage};
pub use fusion::{eval_stage, fuse_search_stage, MethodWeights};
pub use prepare::{decompose_stage, extract_stage};
pub use report::report_stage;
pub use train::train_stage;

/// Generator settings implied by the experiment config.
pub fn synth_config(cfg: &ExperimentConfig) -> SynthConfig {
    let mut s = SynthConfig::with_size(cfg.synth.subjects, cfg.synth.morphs, cfg.seed);
    s.print_scan = cfg.synth.print_scan;
    s
}

/// Writes the synthetic dataset into the manifest's directory.
pub fn synth_stage(cfg: &ExperimentConfig) -> Result<DatasetManifest> {
    let m = morphdet_synth::emit_dataset(&synth_config(cfg), cfg.data_dir()).in_stage(Stage::Synth)?;
    let written = cfg.data_dir().join("manifest.txt");
    if written != cfg.manifest {
        morphdet::manifest::save_manifest(&m, &cfg.manifest).in_stage(Stage::Synth)?;
    }
    Ok(m)
}

pub fn run_stage(cfg: &ExperimentConfig, stage: Stage) -> Result<()> {
    cfg.validate()?;
    log::info!("stage {stage} ({})", cfg.method);
    match stage {
        Stage::Synth => synth_stage(cfg).map(drop),
        Stage::Decompose => decompose_stage(cfg),
        Stage::Extract => extract_stage(cfg),
        Stage::Train => train_stage(cfg),
        Stage::FuseSearch => fuse_search_stage(cfg).map(drop),
        Stage::Eval => eval_stage(cfg).map(drop),
        Stage::Report => report_stage(cfg).map(drop),
    }
}

/// Every stage after `synth`, in order. Returns the summary rows (cameras
/// 1–4, then fused).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<SummaryRow>> {
    cfg.validate()?;
    for stage in [Stage::Decompose, Stage::Extract, Stage::Train, Stage::FuseSearch] {
        run_stage(cfg, stage)?;
    }
    let rows = eval_stage(cfg)?;
    report_stage(cfg)?;
    Ok(rows)
}
