use rand::Rng;

use super::config::{AdjacencyKind, LossMode};
use super::params::ParameterSet;
use super::window::WindowGraph;
use crate::attention::{stage_forward, Adjacency, ForwardCtx, HeadSettings, Trace};
use crate::graph::{EntityKind, INV_DISTANCE_CAP};
use crate::numcore::{ops, Matrix, Tape, Var};
use crate::{Error, Result};

/// Builds the `N × d_f` input: geometry-extended features of each kind, the
/// wider kind projected to `d_f`, rows restored to graph order.
pub fn assemble_entity_features<'p>(
    tape: &mut Tape<'p>,
    params: &'p ParameterSet,
    graph: &'p WindowGraph,
    mut trace: Option<&mut Trace>,
) -> Result<Var> {
    let mut parts = Vec::with_capacity(2);
    for (kind, features, rows) in [
        (EntityKind::Actor, &graph.actor_features, &graph.actor_rows),
        (EntityKind::Object, &graph.object_features, &graph.object_rows),
    ] {
        if rows.is_empty() {
            continue;
        }
        let mut x = tape.input(features);
        if let Some((projected, affine)) = &params.projection {
            if *projected == kind {
                x = affine.apply(tape, &params.store, x)?;
                if let Some(t) = trace.as_deref_mut() {
                    t.shape("input_projection", None, None, &[rows.len(), features.cols()], &[rows.len(), tape.shape(x).1]);
                }
            }
        }
        parts.push((x, rows.clone()));
    }
    Ok(tape.scatter_rows(parts, graph.len())?)
}

pub struct ForwardPass {
    /// Output of the attention stack, one row per entity.
    pub hidden: Var,
    /// One row per actor, aligned with `graph.actor_rows`.
    pub logits: Var,
}

pub fn forward<'p, R: Rng + ?Sized>(
    tape: &mut Tape<'p>,
    params: &'p ParameterSet,
    graph: &'p WindowGraph,
    training: bool,
    rng: &mut R,
    mut trace: Option<&mut Trace>,
) -> Result<ForwardPass> {
    if graph.is_empty() {
        return Err(Error::Config("cannot run the model on an empty window".into()));
    }
    let cfg = &params.config;
    let x = assemble_entity_features(tape, params, graph, trace.as_deref_mut())?;
    let adjacency = match (cfg.ablation.proximity, cfg.ablation.adjacency) {
        (false, _) => Adjacency::Off,
        (true, AdjacencyKind::Box) => Adjacency::Fixed(&graph.adjacency),
        (true, AdjacencyKind::FeatureDistance) => {
            let d = tape.inv_pair_distance(x, INV_DISTANCE_CAP);
            Adjacency::Computed(tape.hadamard_const(d, &graph.mask)?)
        }
    };
    let mut ctx = ForwardCtx {
        adjacency,
        mask: &graph.mask,
        settings: HeadSettings { leaky_slope: cfg.leaky_slope, keep: cfg.keep },
        training,
        rng,
        trace: trace.as_deref_mut(),
    };
    let hidden = stage_forward(tape, &params.store, x, &params.layers, &mut ctx)?;
    let logits = classify_actors(tape, params, hidden, &graph.actor_rows, trace)?;
    Ok(ForwardPass { hidden, logits })
}

/// Applies the classifier to the actor rows only.
pub fn classify_actors<'p>(
    tape: &mut Tape<'p>,
    params: &'p ParameterSet,
    hidden: Var,
    actor_rows: &[usize],
    trace: Option<&mut Trace>,
) -> Result<Var> {
    let actors = tape.select_rows(hidden, actor_rows.to_vec());
    let logits = params.classifier.apply(tape, &params.store, actors)?;
    if let Some(t) = trace {
        let d_f = tape.shape(hidden).1;
        t.shape("classifier", None, None, &[actor_rows.len(), d_f], &[actor_rows.len(), params.config.n_classes]);
    }
    Ok(logits)
}

/// Mean loss over actor rows. Multi-label mode averages sigmoid cross-entropy
/// over classes too; single-label mode uses each labeled actor's first label
/// and skips unlabeled actors.
pub fn loss<'p>(tape: &mut Tape<'p>, logits: Var, labels: &[Vec<u32>], mode: LossMode) -> Result<Var> {
    let (rows, classes) = tape.shape(logits);
    match mode {
        LossMode::MultiLabel => {
            let mut targets = Matrix::zeros(rows, classes);
            for (i, l) in labels.iter().enumerate() {
                for &c in l {
                    if c as usize >= classes {
                        return Err(crate::numcore::NumError::LabelOutOfRange { label: c as usize, classes }.into());
                    }
                    targets[(i, c as usize)] = 1.0;
                }
            }
            Ok(tape.sigmoid_bce(logits, targets)?)
        }
        LossMode::SingleLabel => {
            let keep: Vec<usize> = (0..rows).filter(|&i| !labels[i].is_empty()).collect();
            let targets = keep.iter().map(|&i| labels[i][0] as usize).collect();
            let picked = tape.select_rows(logits, keep);
            Ok(tape.softmax_ce(picked, targets)?)
        }
    }
}

/// Class probabilities for every actor of the window, without dropout.
pub fn predict(params: &ParameterSet, graph: &WindowGraph) -> Result<Matrix> {
    if graph.n_actors() == 0 {
        return Ok(Matrix::zeros(0, params.config.n_classes));
    }
    let mut tape = Tape::new();
    // dropout is inactive, so the generator is never drawn from
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let pass = forward(&mut tape, params, graph, false, &mut rng, None)?;
    let logits = tape.value(pass.logits);
    Ok(match params.config.loss {
        LossMode::MultiLabel => logits.map(ops::sigmoid),
        LossMode::SingleLabel => ops::softmax_rows(logits),
    })
}
