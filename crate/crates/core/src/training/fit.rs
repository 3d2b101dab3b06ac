use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::schedule::PlateauSchedule;
use super::windows::{centered_windows, make_windows};
use crate::dataio::Dataset;
use crate::evaluation::{frame_map, EvalOptions, EvalReport, FramePrediction, FrameTruth};
use crate::model::{forward, loss, predict, save_checkpoint, ActorSelection, ParameterSet, StageConfig, WindowGraph};
use crate::numcore::{ParamStore, Tape};
use crate::{Error, Result};

pub const EVAL_IOU: f64 = 0.5;

/// Builds one graph per training window; windows without actors are dropped.
pub fn training_graphs(dataset: &Dataset, config: &StageConfig) -> Result<Vec<WindowGraph>> {
    make_windows(dataset, config.window, config.window)
        .into_par_iter()
        .map(|w| {
            let clips: Vec<_> = dataset.videos[w.video].clips[w.clips].iter().collect();
            WindowGraph::build(&clips, config, ActorSelection::Training)
        })
        .filter(|g| g.as_ref().map_or(true, |g| g.n_actors() > 0))
        .collect()
}

/// Predicts every keyframe from a window centered on it and keeps the
/// center clip's actors.
pub fn predict_dataset(params: &ParameterSet, dataset: &Dataset) -> Result<Vec<FramePrediction>> {
    let cfg = &params.config;
    centered_windows(dataset, cfg.window)
        .into_par_iter()
        .map(|w| {
            let video = &dataset.videos[w.video];
            let clips: Vec<_> = video.clips[w.clips].iter().collect();
            let graph = WindowGraph::build(&clips, cfg, ActorSelection::Evaluation(cfg.eval_boxes))?;
            let center = &video.clips[w.center];
            let mut boxes = Vec::new();
            let mut scores = Vec::new();
            if graph.n_actors() > 0 {
                let probs = predict(params, &graph)?;
                for (k, &row) in graph.actor_rows.iter().enumerate() {
                    if graph.sources[row].timestamp == center.timestamp {
                        boxes.push(graph.boxes[row]);
                        scores.push(probs.row(k).to_vec());
                    }
                }
            }
            Ok(FramePrediction { video_id: video.id.clone(), timestamp: center.timestamp, boxes, scores })
        })
        .collect()
}

/// Labeled actor boxes of every keyframe.
pub fn ground_truth_frames(dataset: &Dataset) -> Vec<FrameTruth> {
    dataset
        .clips()
        .map(|c| {
            let gt: Vec<_> = c.entities.iter().filter(|e| e.is_ground_truth()).collect();
            FrameTruth {
                video_id: c.video_id.clone(),
                timestamp: c.timestamp,
                boxes: gt.iter().map(|e| e.bbox).collect(),
                labels: gt.iter().map(|e| e.labels.clone().unwrap_or_default()).collect(),
            }
        })
        .collect()
}

pub fn evaluate(params: &ParameterSet, dataset: &Dataset, opts: &EvalOptions) -> Result<EvalReport> {
    let predictions = predict_dataset(params, dataset)?;
    frame_map(&predictions, &ground_truth_frames(dataset), params.config.n_classes, opts)
}

/// Options used for validation during training.
pub fn validation_options(config: &StageConfig) -> EvalOptions {
    EvalOptions { min_class_examples: config.min_class_examples, ..EvalOptions::new(EVAL_IOU) }
}

/// Parameters, optimizer moments, schedule and shuffling state.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub params: ParameterSet,
    pub adam: Adam,
    pub schedule: PlateauSchedule,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(config: &StageConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = ParameterSet::init(config, &mut rng)?;
        let adam = Adam::new(&params.store, config.lr);
        let schedule = PlateauSchedule::new(config.lr, config.decay_patience, config.stop_patience);
        Ok(Self { params, adam, schedule, rng })
    }

    /// One pass over the windows in shuffled order, `batch_windows` windows
    /// per step. Returns the mean minibatch loss.
    pub fn train_epoch(&mut self, graphs: &[WindowGraph]) -> Result<f64> {
        let cfg = self.params.config.clone();
        let mut order: Vec<usize> = (0..graphs.len()).collect();
        order.shuffle(&mut self.rng);
        self.adam.lr = self.schedule.lr;
        let mut total = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks(cfg.batch_windows) {
            let batch: Vec<WindowGraph> = chunk.iter().map(|&i| graphs[i].clone()).collect();
            let joint = WindowGraph::block_diagonal(&batch);
            let (value, grads) = {
                let mut tape = Tape::new();
                let pass = forward(&mut tape, &self.params, &joint, true, &mut self.rng, None)?;
                let l = loss(&mut tape, pass.logits, &joint.labels, cfg.loss)?;
                let value = tape.value(l)[(0, 0)];
                (value, tape.backward(l)?.dense(&self.params.store))
            };
            if !value.is_finite() {
                return Err(Error::Diverged { epoch: 0, loss: value });
            }
            self.adam.apply(&mut self.params.store, &grads)?;
            total += value;
            steps += 1;
        }
        Ok(if steps == 0 { 0.0 } else { total / steps as f64 })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_map: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Default)]
pub struct FitOptions {
    /// Best parameters are written here whenever validation improves.
    pub checkpoint: Option<PathBuf>,
    /// Stop after the epoch that exceeds this wall-clock budget.
    pub time_budget: Option<Duration>,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    /// Parameters of the best validation epoch (epoch 0 is the initialization).
    pub params: ParameterSet,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_map: f64,
    pub early_stopped: bool,
}

pub fn fit(config: &StageConfig, train: &Dataset, val: &Dataset, opts: &FitOptions) -> Result<FitResult> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config("training and validation data must both be non-empty".into()));
    }
    let started = Instant::now();
    let graphs = training_graphs(train, config)?;
    if graphs.is_empty() {
        return Err(Error::Config("no training window contains an actor".into()));
    }
    let eval_opts = validation_options(config);
    let mut state = TrainState::new(config)?;

    let baseline = evaluate(&state.params, val, &eval_opts)?.map;
    state.schedule.observe(baseline);
    let mut best: (usize, f64, ParamStore) = (0, baseline, state.params.store.clone());
    save_best(opts.checkpoint.as_deref(), &state.params)?;

    let mut history = Vec::new();
    let mut early_stopped = false;
    for epoch in 1..=config.max_epochs {
        let lr = state.schedule.lr;
        let train_loss = state.train_epoch(&graphs).map_err(|e| match e {
            Error::Diverged { loss, .. } => Error::Diverged { epoch, loss },
            other => other,
        })?;
        let val_map = evaluate(&state.params, val, &eval_opts)?.map;
        log::info!("epoch {epoch}: loss {train_loss:.5} val mAP {val_map:.4} lr {lr:e}");
        history.push(EpochRecord { epoch, train_loss, val_map, lr });
        let verdict = state.schedule.observe(val_map);
        if verdict.improved {
            best = (epoch, val_map, state.params.store.clone());
            save_best(opts.checkpoint.as_deref(), &state.params)?;
        }
        if verdict.stop {
            early_stopped = true;
            break;
        }
        if opts.time_budget.is_some_and(|b| started.elapsed() > b) {
            log::warn!("time budget exhausted after epoch {epoch}");
            break;
        }
    }
    let mut params = state.params;
    params.store = best.2;
    Ok(FitResult { params, history, best_epoch: best.0, best_map: best.1, early_stopped })
}

fn save_best(path: Option<&Path>, params: &ParameterSet) -> Result<()> {
    match path {
        Some(p) => save_checkpoint(p, params),
        None => Ok(()),
    }
}

/// `epoch,train_loss,val_map,lr`
pub fn write_history_csv(path: impl AsRef<Path>, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    for r in history {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}
