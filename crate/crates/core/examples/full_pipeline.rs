//! Run every stage from a config file with progress reporting, then run again to show the cache.
//!
//! cargo run --release --example full_pipeline -- [config.json] [out_dir]

use std::path::PathBuf;

use panoscene::pipeline::{Pipeline, PipelineConfig, Stage, StageOutcome};

fn main() -> panoscene::Result<()> {
    let mut args = std::env::args().skip(1);
    let config_path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/smoke.json"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "pipeline_out".into()));

    let config = PipelineConfig::load(&config_path)?;
    {
        let pipeline = Pipeline::new(config.clone(), &out)?.on_progress(|e| {
            if let Some(s) = e.elapsed_s {
                println!("{:>8} {:<8} {s:.2}s", e.stage.name(), e.status);
            }
        });
        pipeline.run_all()?;
    }

    // Nothing changed, so every stage is skipped.
    let pipeline = Pipeline::new(config, &out)?;
    let skipped = Stage::ALL
        .iter()
        .map(|&s| pipeline.run_stage(s))
        .filter(|r| matches!(r, Ok(StageOutcome::Skipped)))
        .count();
    println!("second run skipped {skipped} of {} stages; outputs in {}", Stage::ALL.len(), out.display());
    Ok(())
}
