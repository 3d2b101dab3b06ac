use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use super::args::{BoxesArg, Command, EvalArgs, FlopsArgs, GradcheckArgs, LossArg, ModelArgs, SynthArgs, TrainArgs};
use super::manifest::{InputDigest, RunManifest};
use super::CliError;
use crate::dataio::synth::{synth_generate, SynthSpec};
use crate::dataio::{read_dataset, write_clips};
use crate::evaluation::{read_groups, EvalOptions};
use crate::graph::EntityKind;
use crate::model::gradcheck::{gradcheck_suite, GRADCHECK_TOLERANCE};
use crate::model::{count_flops, count_params, load_checkpoint, Ablation, EvalBoxes, LossMode, StageConfig};
use crate::training::{evaluate, fit, write_history_csv, FitOptions, EVAL_IOU};
use crate::Error;

type CmdResult = Result<(), CliError>;

pub(super) fn dispatch(command: Command, out: &mut dyn Write) -> CmdResult {
    match command {
        Command::Train(a) => train(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Gradcheck(a) => gradcheck(a, out),
        Command::Params(a) => params(a, out),
        Command::Flops(a) => flops(a, out),
        Command::Synth(a) => synth(a, out),
    }
}

fn say(out: &mut dyn Write, text: impl AsRef<str>) -> CmdResult {
    writeln!(out, "{}", text.as_ref()).map_err(|e| CliError::Runtime(Error::io("<stdout>", e)))
}

fn require_file(path: &Path) -> CmdResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("input file not found: {}", path.display())))
    }
}

fn ensure_dir(path: &Path) -> CmdResult {
    std::fs::create_dir_all(path).map_err(|e| CliError::Runtime(Error::io(path, e)))
}

fn usage(e: Error) -> CliError {
    CliError::Usage(e.to_string())
}

fn model_config(a: &ModelArgs) -> Result<StageConfig, CliError> {
    let mut cfg = StageConfig::preset(&a.preset).map_err(usage)?;
    if let Some(v) = a.heads {
        cfg.n_heads = v;
    }
    if let Some(v) = a.layers {
        cfg.n_layers = v;
    }
    if let Some(v) = a.actor_width {
        cfg.actor_width = v;
    }
    if let Some(v) = a.object_width {
        cfg.object_width = v;
    }
    if let Some(v) = a.classes {
        cfg.n_classes = v;
    }
    if let Some(name) = &a.ablate {
        cfg.ablation = Ablation::named(name).map_err(usage)?;
    }
    Ok(cfg)
}

fn eval_boxes(kind: Option<BoxesArg>, thresh: Option<f64>, current: EvalBoxes) -> EvalBoxes {
    let current_thresh = match current {
        EvalBoxes::Detected { score_thresh } => score_thresh,
        EvalBoxes::GroundTruth => 0.7,
    };
    match (kind, thresh) {
        (Some(BoxesArg::Gt), _) => EvalBoxes::GroundTruth,
        (Some(BoxesArg::Detected), t) => EvalBoxes::Detected { score_thresh: t.unwrap_or(current_thresh) },
        (None, Some(t)) => EvalBoxes::Detected { score_thresh: t },
        (None, None) => current,
    }
}

fn train(a: TrainArgs, out: &mut dyn Write) -> CmdResult {
    require_file(&a.train)?;
    require_file(&a.val)?;
    let train = read_dataset(&a.train)?;
    let val = read_dataset(&a.val)?;

    let mut cfg = model_config(&a.model)?;
    // feature widths come from the data unless given explicitly
    if a.model.actor_width.is_none() {
        cfg.actor_width = train.feature_width(EntityKind::Actor).unwrap_or(cfg.actor_width);
    }
    if a.model.object_width.is_none() {
        cfg.object_width = train.feature_width(EntityKind::Object).unwrap_or(cfg.object_width);
    }
    macro_rules! set {
        ($field:ident, $value:expr) => {
            if let Some(v) = $value {
                cfg.$field = v;
            }
        };
    }
    set!(window, a.window);
    set!(rf_direct, a.rf);
    set!(lr, a.lr);
    set!(keep, a.keep);
    set!(max_epochs, a.epochs);
    set!(decay_patience, a.decay_patience);
    set!(stop_patience, a.stop_patience);
    set!(batch_windows, a.batch);
    set!(label_iou, a.label_iou);
    set!(min_class_examples, a.min_class_examples);
    if let Some(l) = a.loss {
        cfg.loss = match l {
            LossArg::MultiLabel => LossMode::MultiLabel,
            LossArg::SingleLabel => LossMode::SingleLabel,
        };
    }
    cfg.eval_boxes = eval_boxes(a.eval_boxes, a.score_thresh, cfg.eval_boxes);
    cfg.seed = a.seed;
    cfg.validate().map_err(usage)?;

    ensure_dir(&a.out)?;
    let checkpoint = a.out.join("best.ckpt");
    let history_path = a.out.join("history.csv");
    let opts = FitOptions { checkpoint: Some(checkpoint.clone()), time_budget: a.time_budget.map(Duration::from_secs) };
    let result = fit(&cfg, &train, &val, &opts)?;
    write_history_csv(&history_path, &result.history)?;

    let mut manifest = RunManifest::new("train", serde_json::to_value(&cfg).map_err(Error::from)?, Some(cfg.seed));
    manifest.inputs = vec![InputDigest::of(&a.train)?, InputDigest::of(&a.val)?];
    manifest.outputs = vec![checkpoint.clone(), history_path.clone()];
    manifest.write(&a.out)?;
    say(
        out,
        format!(
            "trained {} epochs{}; best val mAP {:.4} at epoch {}",
            result.history.len(),
            if result.early_stopped { " (early stop)" } else { "" },
            result.best_map,
            result.best_epoch
        ),
    )?;
    say(out, format!("checkpoint {}", checkpoint.display()))?;
    say(out, format!("history {}", history_path.display()))
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> CmdResult {
    require_file(&a.checkpoint)?;
    require_file(&a.data)?;
    if let Some(g) = &a.groups {
        require_file(g)?;
    }
    if let Some(n) = &a.class_names {
        require_file(n)?;
    }
    let mut params = load_checkpoint(&a.checkpoint)?;
    let data = read_dataset(&a.data)?;
    params.config.eval_boxes = eval_boxes(a.eval_boxes, a.score_thresh, params.config.eval_boxes);
    let mut opts = EvalOptions {
        min_class_examples: a.min_class_examples.unwrap_or(params.config.min_class_examples),
        ..EvalOptions::new(EVAL_IOU)
    };
    if let Some(g) = &a.groups {
        opts.groups = Some(read_groups(g)?);
    }
    if let Some(n) = &a.class_names {
        let text = std::fs::read_to_string(n).map_err(|e| Error::io(n, e))?;
        opts.class_names = Some(text.lines().map(str::to_string).collect());
    }
    let report = evaluate(&params, &data, &opts)?;

    ensure_dir(&a.out)?;
    let csv_path = a.out.join("report.csv");
    let json_path = a.out.join("report.json");
    report.write_csv(&csv_path)?;
    let json = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    std::fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;

    let mut manifest = RunManifest::new("eval", serde_json::to_value(&params.config).map_err(Error::from)?, Some(params.config.seed));
    manifest.inputs = [Some(&a.checkpoint), Some(&a.data), a.groups.as_ref(), a.class_names.as_ref()]
        .into_iter()
        .flatten()
        .map(|p| InputDigest::of(p))
        .collect::<Result<_, _>>()?;
    manifest.outputs = vec![csv_path, json_path];
    manifest.write(&a.out)?;
    for g in &report.groups {
        say(out, format!("group {}: {:.4} over {} classes", g.group, g.mean_ap, g.classes.len()))?;
    }
    say(out, report.summary())
}

fn gradcheck(a: GradcheckArgs, out: &mut dyn Write) -> CmdResult {
    let report = gradcheck_suite(a.seed, a.configs)?;
    for (i, c) in report.cases.iter().enumerate() {
        say(out, format!("case {i:2}: {} params, max rel err {:.3e} ({}) [{}]", c.n_params, c.max_rel_error, c.worst_block, c.description))?;
    }
    let verdict = if report.passed { "PASS" } else { "FAIL" };
    say(out, format!("max relative error {:.3e} (tolerance {GRADCHECK_TOLERANCE:e}): {verdict}", report.max_rel_error))?;
    if let Some(dir) = &a.out {
        ensure_dir(dir)?;
        let path = dir.join("gradcheck.json");
        let json = serde_json::to_string_pretty(&report).map_err(Error::from)?;
        std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
        let mut manifest = RunManifest::new("gradcheck", serde_json::json!({ "configs": a.configs }), Some(a.seed));
        manifest.outputs = vec![path];
        manifest.write(dir)?;
    }
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Runtime(Error::Config(format!("gradient check failed: {:.3e}", report.max_rel_error))))
    }
}

fn params(a: ModelArgs, out: &mut dyn Write) -> CmdResult {
    let cfg = model_config(&a)?;
    cfg.validate().map_err(usage)?;
    let n = count_params(&cfg);
    say(out, format!("{}: {n} parameters ({:.2}M)", a.preset, n as f64 / 1e6))
}

fn flops(a: FlopsArgs, out: &mut dyn Write) -> CmdResult {
    let cfg = model_config(&a.model)?;
    cfg.validate().map_err(usage)?;
    let f = count_flops(&cfg, a.actors, a.objects);
    say(out, format!("{} with {} actors and {} objects (multiply-accumulates):", a.model.preset, a.actors, a.objects))?;
    for (name, v) in [
        ("projection", f.projection),
        ("head_projection", f.head_projection),
        ("pair_scores", f.pair_scores),
        ("weighted_sum", f.weighted_sum),
        ("output_map", f.output_map),
        ("classifier", f.classifier),
    ] {
        say(out, format!("  {name:<16}{v:>14}"))?;
    }
    say(out, format!("total {:.4} GFLOPs", f.total() as f64 / 1e9))
}

fn synth(a: SynthArgs, out: &mut dyn Write) -> CmdResult {
    let mut spec = match &a.spec {
        Some(p) => {
            require_file(p)?;
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            SynthSpec::from_toml(&text).map_err(usage)?
        }
        None => SynthSpec::context_benchmark(0),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let generated = synth_generate(&spec)?;
    ensure_dir(&a.out)?;
    let paths: Vec<PathBuf> = ["train.jsonl", "val.jsonl", "spec.toml", "report.json"].iter().map(|f| a.out.join(f)).collect();
    write_clips(&paths[0], &generated.train)?;
    write_clips(&paths[1], &generated.val)?;
    std::fs::write(&paths[2], spec.to_toml()).map_err(|e| Error::io(&paths[2], e))?;
    let report = serde_json::to_string_pretty(&generated.report).map_err(Error::from)?;
    std::fs::write(&paths[3], report + "\n").map_err(|e| Error::io(&paths[3], e))?;

    let mut manifest = RunManifest::new("synth", serde_json::to_value(&spec).map_err(Error::from)?, Some(spec.seed));
    if let Some(p) = &a.spec {
        manifest.inputs.push(InputDigest::of(p)?);
    }
    manifest.outputs = paths.clone();
    manifest.write(&a.out)?;
    for (class, tr, va) in &generated.report.positives {
        say(out, format!("class {class}: {tr} train positives, {va} val positives"))?;
    }
    for w in &generated.report.warnings {
        say(out, format!("warning: {w}"))?;
    }
    say(out, format!("wrote {} train and {} val clips to {}", generated.train.len(), generated.val.len(), a.out.display()))
}
