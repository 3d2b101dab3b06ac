//! Acceptance checks. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits non-zero if any fails.
//! An optional argument selects criteria whose name contains it.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stage::attention::{receptive_field, stage_forward, Adjacency, AttentionKind, ForwardCtx, HeadSettings, LayerParams, Trace};
use stage::dataio::synth::{single_clip_bayes_scores, synth_generate, RuleKind, SynthSpec};
use stage::dataio::{ClipRecord, Dataset};
use stage::evaluation::{average_precision, pooled_average_precision, ranked_average_precision, FrameInstance};
use stage::graph::{interaction_mask, mask_and, multi_clip_adjacency, ClipGeometry, InteractionToggles, INV_DISTANCE_CAP};
use stage::model::gradcheck::gradcheck_suite;
use stage::model::{count_flops, count_params, forward, loss, Ablation, ActorSelection, WindowGraph};
use stage::numcore::{ParamStore, Tape};
use stage::training::{evaluate, fit, training_graphs, validation_options, FitOptions, FitResult, PlateauSchedule};
use stage::{BoxGeometry, EntityKind, Matrix, ParameterSet, StageConfig};

type Outcome = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gradient correctness", gradient_correctness),
        ("receptive field", receptive_field_locality),
        ("parameter count", parameter_count),
        ("flop count", flop_count),
        ("masked softmax", masked_softmax),
        ("permutation equivariance", permutation_equivariance),
        ("ap oracle", ap_oracle),
        ("context dependence", context_dependence),
        ("protocol conformance", protocol_conformance),
        ("block shapes", block_shapes),
    ];
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if filter.as_ref().is_some_and(|f| !name.contains(f.as_str())) {
            continue;
        }
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {:2} {name}: PASS ({detail}; {secs:.1}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:2} {name}: FAIL ({detail}; {secs:.1}s)", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn gradient_correctness() -> Outcome {
    let started = Instant::now();
    let report = gradcheck_suite(1, 24).map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    verdict(
        report.cases.len() >= 20 && report.passed && report.max_rel_error < 1e-4 && secs < 120.0,
        format!("{} configurations, max relative error {:.2e}, {secs:.1}s", report.cases.len(), report.max_rel_error),
    )
}

/// Rows of the center clip after the attention stack.
fn center_rows(params: &ParameterSet, clips: &[ClipRecord], center: usize) -> Vec<f64> {
    let refs: Vec<&ClipRecord> = clips.iter().collect();
    let graph = WindowGraph::build(&refs, &params.config, ActorSelection::Training).unwrap();
    let mut tape = Tape::new();
    let pass = forward(&mut tape, params, &graph, false, &mut rng(0), None).unwrap();
    let h = tape.value(pass.hidden);
    (graph.offsets[center]..graph.offsets[center + 1]).flat_map(|r| h.row(r).to_vec()).collect()
}

fn receptive_field_locality() -> Outcome {
    let fields: Vec<usize> = (1..=3).map(|l| receptive_field(l, 3)).collect();
    let mut ok = fields == [3, 5, 7];
    let mut smallest_inside = f64::INFINITY;
    let mut largest_outside = 0.0f64;
    for layers in 1..=3usize {
        let cfg = StageConfig {
            n_heads: 2,
            n_layers: layers,
            actor_width: 6,
            object_width: 6,
            n_classes: 3,
            window: 9,
            rf_direct: 3,
            keep: 1.0,
            ..StageConfig::default()
        };
        let mut r = rng(10 + layers as u64);
        let clips: Vec<ClipRecord> = (0..9).map(|t| common::random_clip(&mut r, "v", t, (2, 2), (6, 6), 3)).collect();
        let params = ParameterSet::init(&cfg, &mut r).unwrap();
        let base = center_rows(&params, &clips, 4);
        for distance in 1..=4usize {
            for side in [-1i64, 1] {
                let t = (4 + side * distance as i64) as usize;
                let mut moved = clips.clone();
                for e in &mut moved[t].entities {
                    for v in &mut e.feature {
                        *v += r.random_range(-0.5f32..0.5);
                    }
                    let [x1, y1, x2, y2] = e.bbox.coords();
                    e.bbox = BoxGeometry::new(x1 + 0.05, y1, x2 + 0.05, y2).unwrap();
                }
                let after = center_rows(&params, &moved, 4);
                let change = base.iter().zip(&after).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if distance > layers {
                    largest_outside = largest_outside.max(change);
                    ok &= change == 0.0;
                } else {
                    smallest_inside = smallest_inside.min(change);
                    ok &= change > 1e-8;
                }
            }
        }
    }
    verdict(
        ok,
        format!("fields {fields:?}; smallest change within reach {smallest_inside:.2e}, largest beyond {largest_outside:e}"),
    )
}

fn parameter_count() -> Outcome {
    let cfg = StageConfig::preset("stage-i3d").unwrap();
    let n = count_params(&cfg);
    let mut r = rng(3);
    let params = ParameterSet::init(&cfg, &mut r).unwrap();
    let clip = common::random_clip(&mut r, "v", 0, (4, 25), (cfg.actor_width, cfg.object_width), cfg.n_classes);
    let graph = WindowGraph::build(&[&clip], &cfg, ActorSelection::Training).unwrap();
    let mut tape = Tape::new();
    let pass = forward(&mut tape, &params, &graph, false, &mut r, None).unwrap();
    let l = loss(&mut tape, pass.logits, &graph.labels, cfg.loss).unwrap();
    let grads = tape.backward(l).unwrap();
    let mut slots = 0usize;
    let mut missing = Vec::new();
    for id in params.store.ids() {
        match grads.get(id) {
            Some(g) if g.shape() == params.store.get(id).shape() => slots += g.len(),
            _ => missing.push(params.store.name(id).to_string()),
        }
    }
    let within = (n as f64 - 6.4e6).abs() <= 0.1 * 6.4e6;
    verdict(
        within && slots == n && params.scalar_count() == n && missing.is_empty(),
        format!("{n} parameters ({:.3}M), {slots} gradient slots, blocks without gradient {missing:?}", n as f64 / 1e6),
    )
}

fn flop_count() -> Outcome {
    let cfg = StageConfig::preset("stage-i3d").unwrap();
    let g = count_flops(&cfg, 4, 25).total() as f64 / 1e9;
    let one_layer = count_flops(&StageConfig { n_layers: 1, ..cfg }, 4, 25).total() as f64 / 1e9;
    verdict(
        (0.11 / 2.0..=0.11 * 2.0).contains(&g),
        format!("{g:.4} G multiply-accumulates with 2 layers ({one_layer:.4} G with 1)"),
    )
}

fn masked_softmax() -> Outcome {
    let ablations = ["full", "no-temporal", "no-actor-actor", "no-object-object", "no-proximity", "transformer", "feature-distance"];
    let mut r = rng(5);
    let (mut rows, mut zeros, mut worst) = (0usize, 0usize, 0.0f64);
    let mut leaked = 0usize;
    for trial in 0..70 {
        let cfg = StageConfig {
            n_heads: 2,
            n_layers: 2,
            actor_width: 5,
            object_width: 7,
            n_classes: 3,
            window: 5,
            rf_direct: 3,
            ablation: Ablation::named(ablations[trial % ablations.len()]).unwrap(),
            ..StageConfig::default()
        };
        let n_clips = r.random_range(1..=5);
        let clips: Vec<ClipRecord> = (0..n_clips)
            .map(|t| {
                let counts = (r.random_range(1..=3), r.random_range(0..=3));
                common::random_clip(&mut r, "v", t as i64, counts, (5, 7), 3)
            })
            .collect();
        let refs: Vec<&ClipRecord> = clips.iter().collect();
        let params = ParameterSet::init(&cfg, &mut r).unwrap();
        let graph = WindowGraph::build(&refs, &cfg, ActorSelection::Training).unwrap();
        let mut trace = Trace::default();
        let mut tape = Tape::new();
        forward(&mut tape, &params, &graph, false, &mut r, Some(&mut trace)).unwrap();
        for &w in &trace.attention {
            let w = tape.value(w);
            for i in 0..w.rows() {
                rows += 1;
                worst = worst.max((w.row(i).iter().sum::<f64>() - 1.0).abs());
                for j in 0..w.cols() {
                    if graph.mask[(i, j)] == 0.0 || (cfg.ablation.proximity && graph.adjacency[(i, j)] == 0.0) {
                        zeros += 1;
                        if w[(i, j)] != 0.0 {
                            leaked += 1;
                        }
                    }
                }
            }
        }
    }
    verdict(
        worst <= 1e-9 && leaked == 0 && zeros > 0,
        format!("{rows} rows, max |sum-1| {worst:.1e}, {zeros} masked weights, {leaked} non-zero"),
    )
}

fn permute(m: &Matrix, p: &[usize], cols_too: bool) -> Matrix {
    Matrix::from_fn(m.rows(), m.cols(), |i, j| m[(p[i], if cols_too { p[j] } else { j })])
}

fn stack_output(layers: &[LayerParams], store: &ParamStore, x: &Matrix, adj: &Matrix, mask: &Matrix, mode: usize) -> Matrix {
    let mut r = rng(0);
    let mut tape = Tape::new();
    let xv = tape.input(x);
    let adjacency = match mode {
        0 => Adjacency::Fixed(adj),
        1 => Adjacency::Off,
        _ => {
            let d = tape.inv_pair_distance(xv, INV_DISTANCE_CAP);
            Adjacency::Computed(tape.hadamard_const(d, mask).unwrap())
        }
    };
    let mut ctx =
        ForwardCtx { adjacency, mask, settings: HeadSettings { leaky_slope: 0.2, keep: 1.0 }, training: false, rng: &mut r, trace: None };
    let out = stage_forward(&mut tape, store, xv, layers, &mut ctx).unwrap();
    tape.value(out).clone()
}

fn permutation_equivariance() -> Outcome {
    let mut r = rng(6);
    let mut worst = 0.0f64;
    let trials = 60;
    for trial in 0..trials {
        let kind = if trial % 2 == 0 { AttentionKind::Graph } else { AttentionKind::Transformer };
        let d = 8;
        let mut store = ParamStore::new();
        let layers: Vec<LayerParams> =
            (0..2).map(|l| LayerParams::init(&mut store, &format!("layer{l}"), kind, d, 2, &mut r)).collect();
        let per_clip: Vec<Vec<BoxGeometry>> = (0..r.random_range(1..=4))
            .map(|_| {
                let actors = r.random_range(1..=3);
                common::random_clip(&mut r, "v", 0, (actors, 0), (1, 1), 1).boxes()
            })
            .collect();
        let geometry: Vec<ClipGeometry> =
            per_clip.iter().enumerate().map(|(t, b)| ClipGeometry { timestamp: t as i64, boxes: b }).collect();
        let multi = multi_clip_adjacency(&geometry, 3).unwrap();
        let n = multi.adjacency.rows();
        let kinds: Vec<EntityKind> =
            (0..n).map(|_| if r.random_bool(0.5) { EntityKind::Actor } else { EntityKind::Object }).collect();
        let toggles = InteractionToggles { actor_actor: r.random_bool(0.5), ..InteractionToggles::default() };
        let mask = mask_and(&multi.tmask, &interaction_mask(&kinds, toggles)).unwrap();
        let x = Matrix::from_fn(n, d, |_, _| r.random_range(-1.0..1.0));
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(&mut r);
        let mode = trial % 3;
        let base = stack_output(&layers, &store, &x, &multi.adjacency, &mask, mode);
        let moved = stack_output(
            &layers,
            &store,
            &permute(&x, &p, false),
            &permute(&multi.adjacency, &p, true),
            &permute(&mask, &p, true),
            mode,
        );
        let expected = permute(&base, &p, false);
        for (a, b) in moved.as_slice().iter().zip(expected.as_slice()) {
            worst = worst.max((a - b).abs());
        }
    }
    verdict(worst <= 1e-6, format!("{trials} random permutations, max deviation {worst:.1e}"))
}

type Coords = [f64; 4];

fn oracle_iou(a: Coords, b: Coords) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let area = |c: Coords| (c[2] - c[0]) * (c[3] - c[1]);
    inter / (area(a) + area(b) - inter)
}

/// Best assignment of ranked detections to ground truth found by enumerating
/// every partial matching: earlier detections take precedence, and a
/// detection prefers any qualifying box to none, then higher IoU, then the
/// lower index.
fn best_matching(dets: &[Coords], gts: &[Coords], thresh: f64) -> Vec<Option<usize>> {
    fn key(m: &[Option<usize>], dets: &[Coords], gts: &[Coords]) -> Vec<(u8, f64, i64)> {
        m.iter()
            .zip(dets)
            .map(|(g, d)| match g {
                Some(g) => (1, oracle_iou(*d, gts[*g]), -(*g as i64)),
                None => (0, 0.0, 0),
            })
            .collect()
    }
    fn walk(i: usize, dets: &[Coords], gts: &[Coords], thresh: f64, used: &mut Vec<bool>, cur: &mut Vec<Option<usize>>, out: &mut Vec<Vec<Option<usize>>>) {
        if i == dets.len() {
            out.push(cur.clone());
            return;
        }
        cur.push(None);
        walk(i + 1, dets, gts, thresh, used, cur, out);
        cur.pop();
        for g in 0..gts.len() {
            if !used[g] && oracle_iou(dets[i], gts[g]) >= thresh {
                used[g] = true;
                cur.push(Some(g));
                walk(i + 1, dets, gts, thresh, used, cur, out);
                cur.pop();
                used[g] = false;
            }
        }
    }
    let mut all = Vec::new();
    walk(0, dets, gts, thresh, &mut vec![false; gts.len()], &mut Vec::new(), &mut all);
    all.into_iter()
        .max_by(|a, b| key(a, dets, gts).partial_cmp(&key(b, dets, gts)).unwrap())
        .unwrap()
}

/// AP from first principles over frames of `(detections with scores, gts)`.
fn oracle_ap(frames: &[(Vec<(Coords, f64)>, Vec<Coords>)], thresh: f64) -> Option<f64> {
    let n_gt: usize = frames.iter().map(|f| f.1.len()).sum();
    let n_det: usize = frames.iter().map(|f| f.0.len()).sum();
    if n_gt == 0 {
        return if n_det > 0 { Some(0.0) } else { None };
    }
    // rank by score; equal scores keep (frame, index) order
    let mut pending: Vec<(usize, usize)> = frames.iter().enumerate().flat_map(|(f, fr)| (0..fr.0.len()).map(move |d| (f, d))).collect();
    let mut ranked = Vec::new();
    while !pending.is_empty() {
        let mut pick = 0;
        for k in 1..pending.len() {
            let (f, d) = pending[k];
            let (bf, bd) = pending[pick];
            if frames[f].0[d].1 > frames[bf].0[bd].1 {
                pick = k;
            }
        }
        ranked.push(pending.remove(pick));
    }
    let mut tp = vec![false; ranked.len()];
    for (f, frame) in frames.iter().enumerate() {
        let idx: Vec<usize> = (0..ranked.len()).filter(|&k| ranked[k].0 == f).collect();
        let boxes: Vec<Coords> = idx.iter().map(|&k| frame.0[ranked[k].1].0).collect();
        for (slot, m) in idx.iter().zip(best_matching(&boxes, &frame.1, thresh)) {
            tp[*slot] = m.is_some();
        }
    }
    let recall: Vec<f64> = (0..tp.len()).map(|k| tp[..=k].iter().filter(|&&t| t).count() as f64 / n_gt as f64).collect();
    let precision: Vec<f64> = (0..tp.len()).map(|k| tp[..=k].iter().filter(|&&t| t).count() as f64 / (k + 1) as f64).collect();
    let mut ap = 0.0;
    let mut prev = 0.0;
    for k in 0..tp.len() {
        // best precision at any recall at least this high
        let p = (0..tp.len()).filter(|&j| recall[j] >= recall[k]).map(|j| precision[j]).fold(0.0, f64::max);
        ap += (recall[k] - prev) * p;
        prev = recall[k];
    }
    Some(ap)
}

fn ap_oracle() -> Outcome {
    let b = |c: Coords| BoxGeometry::new(c[0], c[1], c[2], c[3]).unwrap();
    let gt = [0.1, 0.1, 0.4, 0.4];
    let hand_one = average_precision(&[(b(gt), 0.9)], &[b(gt)], 0.5);
    let hand_half = average_precision(&[(b([0.6, 0.6, 0.9, 0.9]), 0.9), (b(gt), 0.8)], &[b(gt)], 0.5);
    let mut ok = hand_one == Some(1.0) && hand_half == Some(0.5);

    let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut r = rng(7);
    let random_box = |r: &mut ChaCha8Rng| {
        let (a, c) = (r.random_range(0..4), r.random_range(0..4));
        let (x1, y1) = (grid[a], grid[c]);
        [x1, y1, grid[r.random_range(a + 1..5)], grid[r.random_range(c + 1..5)]]
    };
    let mut mismatches = 0;
    let instances = 40_000;
    for _ in 0..instances {
        let n_frames = r.random_range(1..=2);
        let mut frames = Vec::new();
        let (mut dets_left, mut gts_left) = (5usize, 3usize);
        for _ in 0..n_frames {
            let nd = r.random_range(0..=dets_left);
            let ng = r.random_range(0..=gts_left);
            dets_left -= nd;
            gts_left -= ng;
            let dets: Vec<(Coords, f64)> = (0..nd).map(|_| (random_box(&mut r), r.random_range(1..=4) as f64 / 4.0)).collect();
            let gts: Vec<Coords> = (0..ng).map(|_| random_box(&mut r)).collect();
            frames.push((dets, gts));
        }
        let thresh = [0.5, 0.25, 1.0][r.random_range(0..3)];
        let instances: Vec<FrameInstance> = frames
            .iter()
            .map(|(d, g)| FrameInstance {
                detections: d.iter().map(|(c, s)| (b(*c), *s)).collect(),
                ground_truth: g.iter().map(|c| b(*c)).collect(),
            })
            .collect();
        if pooled_average_precision(&instances, thresh) != oracle_ap(&frames, thresh) {
            mismatches += 1;
        }
    }
    ok &= mismatches == 0;
    verdict(ok, format!("hand cases {hand_one:?} and {hand_half:?}; {instances} random instances, {mismatches} disagreements"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn context_dependence() -> Outcome {
    const VARIANTS: [&str; 3] = ["full", "no-temporal", "no-proximity"];
    let seeds = [1u64, 2, 3];
    let mut lines = Vec::new();
    let mut runs: Vec<(u64, usize, Result<(FitResult, f64, f64, f64), String>)> = Vec::new();
    let mut bounds = Vec::new();
    std::thread::scope(|s| {
        let mut handles = Vec::new();
        for &seed in &seeds {
            let spec = SynthSpec::context_benchmark(seed);
            let data = synth_generate(&spec).unwrap();
            let temporal: Vec<u32> = spec.rules_of(RuleKind::TemporalAdjacentObject).map(|r| r.class_id).collect();
            let spatial: Vec<u32> = spec.rules_of(RuleKind::SpatialProximity).map(|r| r.class_id).collect();
            for rule in spec.rules_of(RuleKind::TemporalAdjacentObject) {
                bounds.push(ranked_average_precision(&single_clip_bayes_scores(&spec, rule, &data.val)));
            }
            let train = Dataset::from_records(data.train).unwrap();
            let val = Dataset::from_records(data.val).unwrap();
            for (v, variant) in VARIANTS.iter().enumerate() {
                let (train, val, temporal, spatial) = (train.clone(), val.clone(), temporal.clone(), spatial.clone());
                handles.push(s.spawn(move || {
                    let cfg = StageConfig { seed, ablation: Ablation::named(variant).unwrap(), ..StageConfig::preset("synthetic").unwrap() };
                    let started = Instant::now();
                    let result = fit(&cfg, &train, &val, &FitOptions::default()).map_err(|e| e.to_string())?;
                    let secs = started.elapsed().as_secs_f64();
                    let report = evaluate(&result.params, &val, &validation_options(&cfg)).map_err(|e| e.to_string())?;
                    let t = report.mean_over(&temporal).ok_or_else(|| "no temporal classes".to_string())?;
                    let sp = report.mean_over(&spatial).ok_or_else(|| "no spatial classes".to_string())?;
                    Ok::<_, String>((seed, v, (result, t, sp, secs)))
                }));
            }
        }
        for h in handles {
            match h.join().expect("training thread") {
                Ok((seed, v, run)) => runs.push((seed, v, Ok(run))),
                Err(e) => runs.push((0, 0, Err(e))),
            }
        }
    });
    if let Some((_, _, Err(e))) = runs.iter().find(|r| r.2.is_err()) {
        return Err(e.clone());
    }
    let pick = |v: usize, temporal: bool| {
        median(
            runs.iter()
                .filter(|r| r.1 == v)
                .map(|r| {
                    let run = r.2.as_ref().unwrap();
                    if temporal {
                        run.1
                    } else {
                        run.2
                    }
                })
                .collect(),
        )
    };
    let slowest = runs.iter().map(|r| r.2.as_ref().unwrap().3).fold(0.0, f64::max);
    for seed in seeds {
        let mut parts = Vec::new();
        for (v, name) in VARIANTS.iter().enumerate() {
            let run = runs.iter().find(|r| r.0 == seed && r.1 == v).unwrap().2.as_ref().unwrap();
            parts.push(format!("{name} {:.3}/{:.3}", run.1, run.2));
        }
        lines.push(format!("seed {seed}: {}", parts.join(", ")));
    }
    let (full_t, no_t) = (pick(0, true), pick(1, true));
    let (full_s, no_p) = (pick(0, false), pick(2, false));
    let bound = bounds.iter().cloned().fold(0.0, f64::max);
    verdict(
        full_t - no_t >= 0.15 && no_p < full_s && slowest <= 600.0,
        format!(
            "temporal median full {full_t:.3} vs no-temporal {no_t:.3}; spatial median full {full_s:.3} vs no-proximity {no_p:.3}; \
             single-clip bound {bound:.3}; slowest run {slowest:.1}s; temporal/spatial per run: {}",
            lines.join("; ")
        ),
    )
}

fn protocol_conformance() -> Outcome {
    let mut notes = Vec::new();
    // plateau rule on a flat metric
    let lr0 = 6.25e-5;
    let mut s = PlateauSchedule::new(lr0, 10, 15);
    s.observe(0.3);
    let lrs: Vec<f64> = (0..14)
        .map(|_| {
            let lr = s.lr;
            s.observe(0.3);
            lr
        })
        .collect();
    let mut ok = lrs[..10].iter().all(|&l| l == lr0) && lrs[10..].iter().all(|&l| l == lr0 / 10.0);
    notes.push(format!("flat metric: lr {lr0:e} for epochs 1-10, {:e} from epoch 11", lrs[10]));

    // real runs: decays are exact tenths and runs repeat bit for bit
    let (train, val) = common::tiny_data(4);
    let cfg = StageConfig { max_epochs: 12, decay_patience: 1, stop_patience: 100, seed: 9, ..StageConfig::preset("synthetic").unwrap() };
    let a = fit(&cfg, &train, &val, &FitOptions::default()).map_err(|e| e.to_string())?;
    let b = fit(&cfg, &train, &val, &FitOptions::default()).map_err(|e| e.to_string())?;
    let bits = |r: &FitResult| -> Vec<[u64; 3]> {
        r.history.iter().map(|h| [h.train_loss.to_bits(), h.val_map.to_bits(), h.lr.to_bits()]).collect()
    };
    let identical = bits(&a) == bits(&b) && a.params.store.flatten() == b.params.store.flatten();
    let mut decays = 0;
    for w in a.history.windows(2) {
        if w[1].lr != w[0].lr {
            decays += 1;
            ok &= w[1].lr == w[0].lr / 10.0;
        }
    }
    ok &= identical && decays > 0;
    notes.push(format!("{} epochs, {decays} decays, repeat run identical: {identical}", a.history.len()));

    // graph inputs are the stored features plus box geometry, unchanged
    let graphs = training_graphs(&train, &cfg).map_err(|e| e.to_string())?;
    let lookup: std::collections::HashMap<(String, i64), &ClipRecord> =
        train.clips().map(|c| ((c.video_id.clone(), c.timestamp), c)).collect();
    let mut compared = 0usize;
    let mut altered = 0usize;
    for g in &graphs {
        for (rows, features) in [(&g.actor_rows, &g.actor_features), (&g.object_rows, &g.object_features)] {
            for (k, &row) in rows.iter().enumerate() {
                let src = &g.sources[row];
                let e = &lookup[&(src.video_id.clone(), src.timestamp)].entities[src.entity];
                let mut expected: Vec<f64> = e.feature.iter().map(|&v| v as f64).collect();
                expected.extend(e.bbox.geometry_features());
                compared += 1;
                if features.row(k) != expected.as_slice() || g.boxes[row] != e.bbox {
                    altered += 1;
                }
            }
        }
    }
    let src_dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("src");
    let hits = augmentation_identifiers(&src_dir);
    ok &= altered == 0 && compared > 0 && hits.is_empty();
    notes.push(format!("{compared} entity rows match the file, {altered} altered; augmentation identifiers in code: {hits:?}"));
    verdict(ok, notes.join("; "))
}

/// Code (not comments) mentioning flips, crops, jitter or augmentation.
fn augmentation_identifiers(dir: &std::path::Path) -> Vec<String> {
    let mut hits = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            hits.extend(augmentation_identifiers(&path));
        } else if path.extension().is_some_and(|e| e == "rs") {
            let text = std::fs::read_to_string(&path).unwrap();
            for (i, line) in text.lines().enumerate() {
                let code = line.split("//").next().unwrap_or("").to_lowercase();
                if ["augment", "flip", "crop", "jitter"].iter().any(|w| code.contains(w)) {
                    hits.push(format!("{}:{}", path.display(), i + 1));
                }
            }
        }
    }
    hits
}

fn block_shapes() -> Outcome {
    // widths chosen so that d_f is 1024: actors 1020 raw + 4 geometry, objects projected
    let mut notes = Vec::new();
    let mut ok = true;
    for (actor_width, d_f) in [(1020usize, 1024usize), (1024, 1028)] {
        let cfg = StageConfig { n_heads: 4, n_layers: 1, actor_width, object_width: 2048, n_classes: 80, ..StageConfig::default() };
        let mut r = rng(8);
        let params = ParameterSet::init(&cfg, &mut r).unwrap();
        let (a, o) = (4usize, 25usize);
        let n = a + o;
        let clip = common::random_clip(&mut r, "v", 0, (a, o), (actor_width, 2048), 80);
        let graph = WindowGraph::build(&[&clip], &cfg, ActorSelection::Training).unwrap();
        let mut trace = Trace::default();
        let mut tape = Tape::new();
        forward(&mut tape, &params, &graph, false, &mut r, Some(&mut trace)).unwrap();
        let shapes = |block: &str| -> Vec<(Vec<usize>, Vec<usize>)> {
            trace.shapes.iter().filter(|s| s.block == block).map(|s| (s.input.clone(), s.output.clone())).collect()
        };
        let d_h = d_f / 4;
        let expect = [
            ("head_projection", vec![(vec![n, d_f], vec![n, d_h]); 4]),
            ("pair_scorer", vec![(vec![n, n, 2 * d_h], vec![n, n]); 4]),
            ("output_projection", vec![(vec![n, d_f], vec![n, d_f])]),
            ("layer_norm", vec![(vec![n, d_f], vec![n, d_f])]),
            ("classifier", vec![(vec![a, d_f], vec![a, 80])]),
        ];
        for (block, want) in expect {
            let got = shapes(block);
            if got != want {
                ok = false;
                notes.push(format!("d_f {d_f} {block}: got {got:?}"));
            }
        }
        notes.push(format!("d_f {d_f}: N×{d_f}→N×{d_h} (×4), N×N×{}→N×N (×4), N×{d_f}→N×{d_f}, A×{d_f}→A×80", 2 * d_h));
    }
    ok &= StageConfig::preset("stage-i3d").unwrap().d_f() == 1028;
    verdict(ok, notes.join("; "))
}
