//! Generates the two-rule benchmark and trains the full model next to the
//! variants without temporal links and without box proximity. The temporal
//! class needs objects from neighbouring clips; the spatial class needs box
//! distances within a clip.

use stage::dataio::synth::{single_clip_bayes_scores, synth_generate, RuleKind, SynthSpec};
use stage::dataio::Dataset;
use stage::evaluation::ranked_average_precision;
use stage::model::Ablation;
use stage::training::{evaluate, fit, validation_options, FitOptions};
use stage::StageConfig;

fn main() -> stage::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let spec = SynthSpec::context_benchmark(seed);
    let data = synth_generate(&spec)?;
    for (class, train, val) in &data.report.positives {
        println!("class {class}: {train} train / {val} val positives");
    }
    for rule in spec.rules_of(RuleKind::TemporalAdjacentObject) {
        let bound = ranked_average_precision(&single_clip_bayes_scores(&spec, rule, &data.val));
        println!("class {}: best AP from a single clip {bound:.3}", rule.class_id);
    }
    let train = Dataset::from_records(data.train)?;
    let val = Dataset::from_records(data.val)?;

    println!("\n{:<14} {:>8} {:>8} {:>8} {:>7}", "variant", "spatial", "temporal", "mAP", "epochs");
    for variant in ["full", "no-temporal", "no-proximity"] {
        let cfg = StageConfig { seed, ablation: Ablation::named(variant)?, ..StageConfig::preset("synthetic")? };
        let result = fit(&cfg, &train, &val, &FitOptions::default())?;
        let report = evaluate(&result.params, &val, &validation_options(&cfg))?;
        println!(
            "{variant:<14} {:>8.3} {:>8.3} {:>8.3} {:>7}",
            report.ap(0).unwrap_or(f64::NAN),
            report.ap(1).unwrap_or(f64::NAN),
            report.map,
            result.history.len()
        );
    }
    Ok(())
}
