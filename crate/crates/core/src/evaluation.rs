//! Keyframe-level mean average precision.
//!
//! Every `(box, class)` pair of a prediction is an independent detection
//! scored by that class's probability. Detections are pooled over keyframes,
//! visited in descending score order and greedily matched to unmatched
//! ground-truth boxes of the same keyframe. AP is the area under the
//! all-point interpolated precision/recall curve.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::BoxGeometry;
use crate::{Error, Result};

/// IoU on raw `[x1, y1, x2, y2]` coordinates (any scale).
pub fn iou_coords(a: [f64; 4], b: [f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let area = |c: [f64; 4]| (c[2] - c[0]) * (c[3] - c[1]);
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

pub fn iou(a: &BoxGeometry, b: &BoxGeometry) -> f64 {
    iou_coords(a.coords(), b.coords())
}

/// All-point AP of a ranked list of `(score, is_true_positive)` against `n_gt`
/// ground-truth items. Ties keep input order.
pub fn ap_from_ranked(scored: &[(f64, bool)], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[b].0.total_cmp(&scored[a].0));
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(order.len());
    for (rank, &i) in order.iter().enumerate() {
        if scored[i].1 {
            tp += 1;
        }
        points.push((tp as f64 / n_gt as f64, tp as f64 / (rank + 1) as f64));
    }
    // precision envelope from the right
    let mut best = 0.0f64;
    for p in points.iter_mut().rev() {
        best = best.max(p.1);
        p.1 = best;
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in points {
        ap += (r - prev_recall) * p;
        prev_recall = r;
    }
    ap
}

/// AP of plain scores against binary labels (every positive is a ground truth).
pub fn ranked_average_precision(scored: &[(f64, bool)]) -> f64 {
    ap_from_ranked(scored, scored.iter().filter(|s| s.1).count())
}

/// Detections and ground truth of one class on one keyframe.
#[derive(Clone, Debug, Default)]
pub struct FrameInstance {
    pub detections: Vec<(BoxGeometry, f64)>,
    pub ground_truth: Vec<BoxGeometry>,
}

/// Greedy matching pooled over keyframes. Returns `(score, is_tp)` per
/// detection, in descending score order.
pub fn match_detections(frames: &[FrameInstance], thresh: f64) -> Vec<(f64, bool)> {
    let mut dets: Vec<(f64, usize, usize)> =
        frames.iter().enumerate().flat_map(|(f, fr)| fr.detections.iter().enumerate().map(move |(d, (_, s))| (*s, f, d))).collect();
    dets.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut taken: Vec<Vec<bool>> = frames.iter().map(|f| vec![false; f.ground_truth.len()]).collect();
    dets.into_iter()
        .map(|(score, f, d)| {
            let bx = &frames[f].detections[d].0;
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in frames[f].ground_truth.iter().enumerate() {
                if taken[f][g] {
                    continue;
                }
                let o = iou(bx, gt);
                if o >= thresh && best.is_none_or(|(_, b)| o > b) {
                    best = Some((g, o));
                }
            }
            if let Some((g, _)) = best {
                taken[f][g] = true;
            }
            (score, best.is_some())
        })
        .collect()
}

/// AP of one class pooled over keyframes; `None` when there is neither ground
/// truth nor a detection.
pub fn pooled_average_precision(frames: &[FrameInstance], thresh: f64) -> Option<f64> {
    let n_gt: usize = frames.iter().map(|f| f.ground_truth.len()).sum();
    let n_det: usize = frames.iter().map(|f| f.detections.len()).sum();
    if n_gt == 0 {
        return (n_det > 0).then_some(0.0);
    }
    Some(ap_from_ranked(&match_detections(frames, thresh), n_gt))
}

/// AP of one class on one keyframe.
pub fn average_precision(dets: &[(BoxGeometry, f64)], gts: &[BoxGeometry], thresh: f64) -> Option<f64> {
    pooled_average_precision(&[FrameInstance { detections: dets.to_vec(), ground_truth: gts.to_vec() }], thresh)
}

/// Per-class scores for every predicted actor box of one keyframe.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePrediction {
    pub video_id: String,
    pub timestamp: i64,
    pub boxes: Vec<BoxGeometry>,
    /// `scores[i][c]`: probability of class `c` for box `i`.
    pub scores: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameTruth {
    pub video_id: String,
    pub timestamp: i64,
    pub boxes: Vec<BoxGeometry>,
    pub labels: Vec<Vec<u32>>,
}

#[derive(Clone, Debug, Default)]
pub struct EvalOptions {
    pub iou_thresh: f64,
    /// Classes with fewer ground-truth boxes are left out of the mean.
    pub min_class_examples: usize,
    pub class_names: Option<Vec<String>>,
    /// Class id to group name.
    pub groups: Option<BTreeMap<u32, String>>,
}

impl EvalOptions {
    pub fn new(iou_thresh: f64) -> Self {
        Self { iou_thresh, ..Self::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub class_id: u32,
    pub class_name: String,
    pub n_gt: usize,
    pub n_det: usize,
    pub ap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMean {
    pub group: String,
    pub classes: Vec<u32>,
    pub mean_ap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: Vec<ClassAp>,
    pub eligible: Vec<u32>,
    pub map: f64,
    pub groups: Vec<GroupMean>,
}

impl EvalReport {
    pub fn ap(&self, class: u32) -> Option<f64> {
        self.per_class.get(class as usize).and_then(|c| c.ap)
    }

    /// Mean AP over the given classes that are eligible.
    pub fn mean_over(&self, classes: &[u32]) -> Option<f64> {
        let aps: Vec<f64> = classes.iter().filter(|c| self.eligible.contains(c)).filter_map(|&c| self.ap(c)).collect();
        (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64)
    }

    pub fn summary(&self) -> String {
        format!("mAP {:.4} over {} classes", self.map, self.eligible.len())
    }

    /// `class_id,class_name,n_gt,ap`; classes without an AP leave it empty.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record(["class_id", "class_name", "n_gt", "ap"])?;
        for c in &self.per_class {
            let ap = c.ap.map(|a| format!("{a:.6}")).unwrap_or_default();
            w.write_record([c.class_id.to_string(), c.class_name.clone(), c.n_gt.to_string(), ap])?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))
    }
}

/// Reads `class_id,group` rows (header required).
pub fn read_groups(path: impl AsRef<Path>) -> Result<BTreeMap<u32, String>> {
    #[derive(Deserialize)]
    struct Row {
        class_id: u32,
        group: String,
    }
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    })?;
    let mut out = BTreeMap::new();
    for row in r.deserialize() {
        let row: Row = row?;
        out.insert(row.class_id, row.group);
    }
    Ok(out)
}

pub fn frame_map(predictions: &[FramePrediction], truth: &[FrameTruth], n_classes: usize, opts: &EvalOptions) -> Result<EvalReport> {
    if truth.iter().all(|t| t.labels.iter().all(|l| l.is_empty())) {
        return Err(Error::EmptyGroundTruth);
    }
    let mut keys: BTreeMap<(&str, i64), (Option<&FramePrediction>, Option<&FrameTruth>)> = BTreeMap::new();
    for p in predictions {
        keys.entry((p.video_id.as_str(), p.timestamp)).or_default().0 = Some(p);
    }
    for t in truth {
        keys.entry((t.video_id.as_str(), t.timestamp)).or_default().1 = Some(t);
    }
    let frames: Vec<_> = keys.into_values().collect();

    let per_class: Vec<ClassAp> = (0..n_classes)
        .into_par_iter()
        .map(|c| {
            let class = c as u32;
            let instances: Vec<FrameInstance> = frames
                .iter()
                .map(|(p, t)| FrameInstance {
                    detections: p.map(|p| p.boxes.iter().zip(&p.scores).map(|(b, s)| (*b, s[c])).collect()).unwrap_or_default(),
                    ground_truth: t
                        .map(|t| t.boxes.iter().zip(&t.labels).filter(|(_, l)| l.contains(&class)).map(|(b, _)| *b).collect())
                        .unwrap_or_default(),
                })
                .collect();
            let class_name = opts.class_names.as_ref().and_then(|n| n.get(c).cloned()).unwrap_or_else(|| format!("class_{c}"));
            ClassAp {
                class_id: class,
                class_name,
                n_gt: instances.iter().map(|f| f.ground_truth.len()).sum(),
                n_det: instances.iter().map(|f| f.detections.len()).sum(),
                ap: pooled_average_precision(&instances, opts.iou_thresh),
            }
        })
        .collect();

    let eligible: Vec<u32> =
        per_class.iter().filter(|c| c.n_gt > 0 && c.n_gt >= opts.min_class_examples).map(|c| c.class_id).collect();
    let mean = |ids: &[u32]| {
        let aps: Vec<f64> = ids.iter().filter_map(|&c| per_class[c as usize].ap).collect();
        if aps.is_empty() {
            0.0
        } else {
            aps.iter().sum::<f64>() / aps.len() as f64
        }
    };
    let map = mean(&eligible);
    let mut groups = Vec::new();
    if let Some(mapping) = &opts.groups {
        let mut by_group: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
        for (&class, group) in mapping {
            if eligible.contains(&class) {
                by_group.entry(group.as_str()).or_default().push(class);
            }
        }
        for (group, classes) in by_group {
            groups.push(GroupMean { group: group.to_string(), mean_ap: mean(&classes), classes });
        }
    }
    Ok(EvalReport { per_class, eligible, map, groups })
}
