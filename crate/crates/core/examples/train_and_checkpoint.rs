//! Trains on a small generated dataset, saves the best parameters and scores
//! the validation split from the reloaded checkpoint.

use stage::dataio::synth::{synth_generate, SynthSpec};
use stage::dataio::Dataset;
use stage::model::load_checkpoint;
use stage::training::{evaluate, fit, validation_options, write_history_csv, FitOptions};
use stage::StageConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SynthSpec { train_videos: 16, val_videos: 6, ..SynthSpec::context_benchmark(2) };
    let data = synth_generate(&spec)?;
    let (train, val) = (Dataset::from_records(data.train)?, Dataset::from_records(data.val)?);

    let dir = std::env::temp_dir().join("stage-example-run");
    std::fs::create_dir_all(&dir)?;
    let checkpoint = dir.join("best.ckpt");
    let cfg = StageConfig { max_epochs: 20, ..StageConfig::preset("synthetic")? };
    let result = fit(&cfg, &train, &val, &FitOptions { checkpoint: Some(checkpoint.clone()), time_budget: None })?;
    write_history_csv(dir.join("history.csv"), &result.history)?;
    for h in &result.history {
        println!("epoch {:2}  loss {:.4}  val mAP {:.4}  lr {:e}", h.epoch, h.train_loss, h.val_map, h.lr);
    }

    let params = load_checkpoint(&checkpoint)?;
    let report = evaluate(&params, &val, &validation_options(&params.config))?;
    println!("best epoch {}: {}", result.best_epoch, report.summary());
    println!("outputs in {}", dir.display());
    Ok(())
}
