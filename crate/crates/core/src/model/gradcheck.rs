//! Finite-difference verification of the full model loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::config::{Ablation, LossMode, StageConfig};
use super::forward::{forward, loss};
use super::params::ParameterSet;
use super::window::{ActorSelection, WindowGraph};
use crate::attention::AttentionKind;
use crate::dataio::{ClipRecord, EntityDetection};
use crate::graph::{BoxGeometry, EntityKind};
use crate::numcore::{finite_diff_grad, relative_error, Tape};
use crate::Result;

pub const GRADCHECK_STEP: f64 = 1e-5;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Denominator floor of the relative error, so that gradients that are zero
/// up to rounding compare on an absolute scale.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckCase {
    pub description: String,
    pub n_params: usize,
    pub max_rel_error: f64,
    /// Parameter block holding the worst coordinate.
    pub worst_block: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub cases: Vec<GradcheckCase>,
    pub max_rel_error: f64,
    pub passed: bool,
}

/// Loss of `params` on `graph` with dropout disabled.
pub fn loss_value(params: &ParameterSet, graph: &WindowGraph) -> Result<f64> {
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let pass = forward(&mut tape, params, graph, false, &mut rng, None)?;
    let l = loss(&mut tape, pass.logits, &graph.labels, params.config.loss)?;
    Ok(tape.value(l)[(0, 0)])
}

/// Analytic gradient flattened in parameter declaration order.
pub fn analytic_gradient(params: &ParameterSet, graph: &WindowGraph) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let pass = forward(&mut tape, params, graph, false, &mut rng, None)?;
    let l = loss(&mut tape, pass.logits, &graph.labels, params.config.loss)?;
    let dense = tape.backward(l)?.dense(&params.store);
    Ok(dense.iter().flat_map(|m| m.as_slice().iter().copied()).collect())
}

/// Compares analytic and central-difference gradients on every coordinate.
pub fn check_case(params: &ParameterSet, graph: &WindowGraph) -> Result<(f64, String)> {
    let analytic = analytic_gradient(params, graph)?;
    let theta = params.store.flatten();
    let mut probe = params.clone();
    let numeric = finite_diff_grad(
        |t| {
            probe.store.assign_flat(t);
            loss_value(&probe, graph).map_err(|e| crate::numcore::NumError::NonFinite { what: e.to_string() })
        },
        &theta,
        GRADCHECK_STEP,
    )?;
    let mut worst = (0.0, 0usize);
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let r = relative_error(*a, *n, GRADCHECK_FLOOR);
        if r > worst.0 {
            worst = (r, i);
        }
    }
    let mut at = worst.1;
    let mut block = String::new();
    for b in params.store.blocks() {
        if at < b.value.len() {
            block = b.name.clone();
            break;
        }
        at -= b.value.len();
    }
    Ok((worst.0, block))
}

/// A random small configuration and window: feature widths keep `d_f ≤ 32`,
/// at most 2 heads, 2 layers, 3 clips and 4 entities per clip, keep = 1.
pub fn random_case<R: Rng + ?Sized>(rng: &mut R) -> Result<(ParameterSet, WindowGraph, String)> {
    let actor_width = rng.random_range(2..=28);
    let object_width = rng.random_range(2..=28);
    let mut ablation = Ablation::default();
    match rng.random_range(0..5) {
        1 => ablation.proximity = false,
        2 => ablation.temporal = false,
        3 => ablation.attention = AttentionKind::Transformer,
        4 => ablation.actor_actor = false,
        _ => {}
    }
    let config = StageConfig {
        n_heads: rng.random_range(1..=2),
        n_layers: rng.random_range(1..=2),
        actor_width,
        object_width,
        n_classes: rng.random_range(1..=4),
        keep: 1.0,
        loss: if rng.random_bool(0.7) { LossMode::MultiLabel } else { LossMode::SingleLabel },
        ablation,
        ..StageConfig::default()
    };
    let n_clips = rng.random_range(1..=3);
    let mut clips = Vec::with_capacity(n_clips);
    for t in 0..n_clips {
        let n = rng.random_range(1..=4);
        let entities = (0..n)
            .map(|k| {
                let actor = k == 0 || rng.random_bool(0.5);
                let (x, y) = (rng.random_range(0.0..0.7), rng.random_range(0.0..0.7));
                let (w, h) = (rng.random_range(0.05..0.3), rng.random_range(0.05..0.3));
                let width = if actor { config.actor_width } else { config.object_width };
                EntityDetection {
                    kind: if actor { EntityKind::Actor } else { EntityKind::Object },
                    bbox: BoxGeometry::new(x, y, x + w, y + h).expect("inside the unit square"),
                    score: 1.0,
                    feature: (0..width).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
                    labels: actor.then(|| {
                        let c = rng.random_range(0..config.n_classes as u32);
                        if config.loss == LossMode::MultiLabel && rng.random_bool(0.3) { vec![] } else { vec![c] }
                    }),
                }
            })
            .collect();
        clips.push(ClipRecord { video_id: "g".into(), timestamp: t as i64, entities });
    }
    let refs: Vec<&ClipRecord> = clips.iter().collect();
    let graph = WindowGraph::build(&refs, &config, ActorSelection::Training)?;
    let mut params = ParameterSet::init(&config, rng)?;
    // move biases and norm parameters off their special initial values
    for b in params.store.blocks_mut() {
        for v in b.value.as_mut_slice() {
            *v += 0.1 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let description = format!(
        "heads={} layers={} d_f={} clips={} entities={} classes={} loss={:?} ablation={:?}",
        config.n_heads,
        config.n_layers,
        config.d_f(),
        n_clips,
        graph.len(),
        config.n_classes,
        config.loss,
        ablation_name(&config.ablation)
    );
    Ok((params, graph, description))
}

fn ablation_name(a: &Ablation) -> &'static str {
    Ablation::NAMES.iter().copied().find(|n| Ablation::named(n).is_ok_and(|x| x == *a)).unwrap_or("custom")
}

/// Runs `n_cases` random cases derived from `seed`.
pub fn gradcheck_suite(seed: u64, n_cases: usize) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(n_cases);
    for _ in 0..n_cases {
        let (params, graph, description) = random_case(&mut rng)?;
        let (max_rel_error, worst_block) = check_case(&params, &graph)?;
        cases.push(GradcheckCase { description, n_params: params.scalar_count(), max_rel_error, worst_block });
    }
    let max_rel_error = cases.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    Ok(GradcheckReport { seed, cases, max_rel_error, passed: max_rel_error < GRADCHECK_TOLERANCE })
}
