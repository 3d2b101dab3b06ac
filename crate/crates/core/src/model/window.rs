use crate::dataio::ClipRecord;
use crate::graph::{interaction_mask, mask_and, multi_clip_adjacency, BoxGeometry, ClipGeometry, EntityKind};
use crate::numcore::{Matrix, NumError};
use crate::{Error, Result};

use super::config::{EvalBoxes, StageConfig};

/// Which actor boxes enter the graph.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ActorSelection {
    /// Labeled boxes and every detection; detections inherit labels from the
    /// best-overlapping labeled box of their clip.
    Training,
    Evaluation(EvalBoxes),
}

/// Where a graph row came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntityRef {
    pub video_id: String,
    pub timestamp: i64,
    /// Index into the record's `entities`.
    pub entity: usize,
}

/// Entities of consecutive clips assembled into one graph.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowGraph {
    /// Row prefix sums per clip.
    pub offsets: Vec<usize>,
    pub kinds: Vec<EntityKind>,
    pub boxes: Vec<BoxGeometry>,
    pub sources: Vec<EntityRef>,
    /// Raw features with geometry appended, one row per actor.
    pub actor_features: Matrix,
    /// Graph row of each actor feature row.
    pub actor_rows: Vec<usize>,
    pub object_features: Matrix,
    pub object_rows: Vec<usize>,
    /// Proximity adjacency; zero wherever `mask` is zero in time.
    pub adjacency: Matrix,
    /// Temporal mask combined with the interaction mask.
    pub mask: Matrix,
    /// Labels of each actor, aligned with `actor_rows`.
    pub labels: Vec<Vec<u32>>,
}

impl WindowGraph {
    pub fn build(clips: &[&ClipRecord], config: &StageConfig, selection: ActorSelection) -> Result<Self> {
        let mut rows: Vec<(EntityRef, EntityKind, BoxGeometry, Vec<f64>, Vec<u32>)> = Vec::new();
        let mut per_clip: Vec<Vec<BoxGeometry>> = Vec::with_capacity(clips.len());
        for clip in clips {
            let gt: Vec<(BoxGeometry, &[u32])> =
                clip.entities.iter().filter_map(|e| e.labels.as_deref().filter(|_| e.is_ground_truth()).map(|l| (e.bbox, l))).collect();
            let gt_boxes: Vec<BoxGeometry> = gt.iter().map(|g| g.0).collect();
            let gt_labels: Vec<Vec<u32>> = gt.iter().map(|g| g.1.to_vec()).collect();
            let mut boxes = Vec::new();
            for (i, e) in clip.entities.iter().enumerate() {
                let keep = match (e.kind, selection) {
                    (EntityKind::Object, _) => true,
                    (EntityKind::Actor, ActorSelection::Training) => true,
                    (EntityKind::Actor, ActorSelection::Evaluation(EvalBoxes::GroundTruth)) => e.is_ground_truth(),
                    (EntityKind::Actor, ActorSelection::Evaluation(EvalBoxes::Detected { score_thresh })) => {
                        !e.is_ground_truth() && e.score >= score_thresh
                    }
                };
                if !keep {
                    continue;
                }
                let expected = match e.kind {
                    EntityKind::Actor => config.actor_width,
                    EntityKind::Object => config.object_width,
                };
                if e.feature.len() != expected {
                    return Err(Error::Config(format!(
                        "{} feature width {} in video `{}` at {} does not match the configured {expected}",
                        e.kind.as_str(),
                        e.feature.len(),
                        clip.video_id,
                        clip.timestamp
                    )));
                }
                let mut feature: Vec<f64> = e.feature.iter().map(|&v| v as f64).collect();
                feature.extend(e.bbox.geometry_features());
                let labels = match (&e.labels, e.kind) {
                    (_, EntityKind::Object) => Vec::new(),
                    (Some(l), _) => l.clone(),
                    (None, _) => crate::training::assign_labels(&[e.bbox], &gt_boxes, &gt_labels, config.label_iou).remove(0),
                };
                if let Some(&bad) = labels.iter().find(|&&l| l as usize >= config.n_classes) {
                    return Err(NumError::LabelOutOfRange { label: bad as usize, classes: config.n_classes }.into());
                }
                let source = EntityRef { video_id: clip.video_id.clone(), timestamp: clip.timestamp, entity: i };
                boxes.push(e.bbox);
                rows.push((source, e.kind, e.bbox, feature, labels));
            }
            per_clip.push(boxes);
        }
        let geometry: Vec<ClipGeometry> =
            clips.iter().zip(&per_clip).map(|(c, b)| ClipGeometry { timestamp: c.timestamp, boxes: b }).collect();
        let multi = multi_clip_adjacency(&geometry, config.effective_rf())?;
        let kinds: Vec<EntityKind> = rows.iter().map(|r| r.1).collect();
        let mask = mask_and(&multi.tmask, &interaction_mask(&kinds, config.ablation.toggles()))?;

        let gather = |kind: EntityKind, width: usize| {
            let idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].1 == kind).collect();
            let data: Vec<f64> = idx.iter().flat_map(|&i| rows[i].3.iter().copied()).collect();
            (Matrix::from_vec(idx.len(), width, data).expect("rows have the configured width"), idx)
        };
        let (actor_features, actor_rows) = gather(EntityKind::Actor, config.extended_width(EntityKind::Actor));
        let (object_features, object_rows) = gather(EntityKind::Object, config.extended_width(EntityKind::Object));
        let labels = actor_rows.iter().map(|&i| rows[i].4.clone()).collect();
        Ok(Self {
            offsets: multi.offsets,
            kinds,
            boxes: rows.iter().map(|r| r.2).collect(),
            sources: rows.into_iter().map(|r| r.0).collect(),
            actor_features,
            actor_rows,
            object_features,
            object_rows,
            adjacency: multi.adjacency,
            mask,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn n_actors(&self) -> usize {
        self.actor_rows.len()
    }

    pub fn n_clips(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Joins windows into one disconnected graph: adjacency and mask are block
    /// diagonal, so no attention flows between windows.
    pub fn block_diagonal(graphs: &[WindowGraph]) -> WindowGraph {
        let n: usize = graphs.iter().map(|g| g.len()).sum();
        let mut out = WindowGraph {
            offsets: vec![0],
            kinds: Vec::with_capacity(n),
            boxes: Vec::with_capacity(n),
            sources: Vec::with_capacity(n),
            actor_features: Matrix::zeros(0, 0),
            actor_rows: Vec::new(),
            object_features: Matrix::zeros(0, 0),
            object_rows: Vec::new(),
            adjacency: Matrix::zeros(n, n),
            mask: Matrix::zeros(n, n),
            labels: Vec::new(),
        };
        let (mut actor_data, mut object_data) = (Vec::new(), Vec::new());
        let (mut aw, mut ow) = (0, 0);
        let mut base = 0;
        for g in graphs {
            out.offsets.extend(g.offsets[1..].iter().map(|o| o + base));
            out.kinds.extend_from_slice(&g.kinds);
            out.boxes.extend_from_slice(&g.boxes);
            out.sources.extend(g.sources.iter().cloned());
            out.actor_rows.extend(g.actor_rows.iter().map(|r| r + base));
            out.object_rows.extend(g.object_rows.iter().map(|r| r + base));
            out.labels.extend(g.labels.iter().cloned());
            actor_data.extend_from_slice(g.actor_features.as_slice());
            object_data.extend_from_slice(g.object_features.as_slice());
            aw = aw.max(g.actor_features.cols());
            ow = ow.max(g.object_features.cols());
            for i in 0..g.len() {
                for j in 0..g.len() {
                    out.adjacency[(base + i, base + j)] = g.adjacency[(i, j)];
                    out.mask[(base + i, base + j)] = g.mask[(i, j)];
                }
            }
            base += g.len();
        }
        out.actor_features = Matrix::from_vec(out.actor_rows.len(), aw, actor_data).expect("consistent widths");
        out.object_features = Matrix::from_vec(out.object_rows.len(), ow, object_data).expect("consistent widths");
        out
    }
}
