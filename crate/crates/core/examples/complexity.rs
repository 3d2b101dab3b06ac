//! Parameter and multiply-accumulate counts of the named presets, with
//! 4 actors and 25 objects per clip.

use stage::model::{count_flops, count_params};
use stage::StageConfig;

fn main() -> stage::Result<()> {
    println!("{:<16} {:>6} {:>12} {:>10} {:>10}", "preset", "d_f", "params", "GMAC", "1 layer");
    for name in ["stage-i3d", "stage-r101", "stage-slowfast", "synthetic"] {
        let cfg = StageConfig::preset(name)?;
        let one = StageConfig { n_layers: 1, ..cfg.clone() };
        println!(
            "{name:<16} {:>6} {:>12} {:>10.4} {:>10.4}",
            cfg.d_f(),
            count_params(&cfg),
            count_flops(&cfg, 4, 25).total() as f64 / 1e9,
            count_flops(&one, 4, 25).total() as f64 / 1e9
        );
    }
    let f = count_flops(&StageConfig::preset("stage-i3d")?, 4, 25);
    println!("\nstage-i3d breakdown: {f:#?}");
    Ok(())
}
